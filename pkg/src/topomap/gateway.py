"""Gateway protocol state machine.

A gateway bridges one topic between the software transport (SMT) and the
hardware transport (HMT).  It keeps exactly one cancellable read request
open against its SMT delegate at all times, forwards whatever that request
returns onto the HMT, and forwards HMT arrivals into main memory followed
by a publication on the SMT side.  Because its own publications loop back
to it on both sides, every inbound message is filtered against the
gateway's own endpoint identity first.

The machine is deliberately small: three resting phases, four transient
phases that a single step passes through, four event kinds.  ``step`` is a
pure function from (state, event) to (state, actions); anything not in the
transition table raises ``GatewayProtocolError``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Phase(enum.Enum):
    AWAIT_BUFFER = "AWAIT_BUFFER"
    POLLING = "POLLING"
    FWD_SMT_TO_HMT = "FWD_SMT_TO_HMT"
    FWD_HMT_TO_MAIN = "FWD_HMT_TO_MAIN"
    CANCELLING = "CANCELLING"
    FLUSH_PENDING = "FLUSH_PENDING"
    PUBLISH_SMT = "PUBLISH_SMT"


RESTING_PHASES = (Phase.AWAIT_BUFFER, Phase.POLLING, Phase.CANCELLING)


@dataclass(frozen=True)
class Message:
    publisher_id: str
    seq: int
    topic: str
    size_bytes: int

    @property
    def message_id(self) -> str:
        return f"{self.publisher_id}/{self.seq}"


# -- events ---------------------------------------------------------------


@dataclass(frozen=True)
class BufferLocation:
    """Shared buffer negotiated; the gateway may start polling."""


@dataclass(frozen=True)
class DelegateResponse:
    """The SMT delegate answered the outstanding read request."""

    message: Message


@dataclass(frozen=True)
class HmtArrival:
    """A message arrived on the hardware transport stream."""

    message: Message


@dataclass(frozen=True)
class CancelResult:
    """The delegate confirmed the cancel; ``message`` is the response that
    was already in flight when the cancel landed, if any."""

    message: Message | None = None


Event = BufferLocation | DelegateResponse | HmtArrival | CancelResult


# -- actions --------------------------------------------------------------


@dataclass(frozen=True)
class RequestSmtMessage:
    """Open a new cancellable read against the SMT delegate."""


@dataclass(frozen=True)
class CancelSmtRequest:
    """Ask the delegate to abort the outstanding read."""


@dataclass(frozen=True)
class TransferToHmt:
    message: Message


@dataclass(frozen=True)
class TransferToMain:
    message: Message


@dataclass(frozen=True)
class PublishSmt:
    message: Message


@dataclass(frozen=True)
class Discard:
    message: Message


Action = RequestSmtMessage | CancelSmtRequest | TransferToHmt | TransferToMain | PublishSmt | Discard


class GatewayProtocolError(RuntimeError):
    """Event not legal in the current phase."""

    def __init__(self, phase: Phase, event: Event):
        self.phase = phase
        self.event = event
        super().__init__(f"event {type(event).__name__} is illegal in phase {phase.value}")


class FilterDecision(enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"


@dataclass(frozen=True)
class GatewayState:
    """Immutable snapshot between steps.

    ``held`` is the HMT message parked while the SMT-side cancel resolves;
    ``outstanding_request`` tracks whether a delegate read is open (or
    being cancelled).
    """

    own_smt_id: str
    own_hmt_id: str
    phase: Phase = Phase.AWAIT_BUFFER
    held: Message | None = None
    outstanding_request: bool = False


def init(own_smt_id: str, own_hmt_id: str) -> tuple[GatewayState, list[Action]]:
    """Fresh gateway; nothing happens until the buffer location arrives."""
    return GatewayState(own_smt_id=own_smt_id, own_hmt_id=own_hmt_id), []


def filter_message(message: Message, side: str, state: GatewayState) -> FilterDecision:
    """Reject the gateway's own publications looping back on either side."""
    if side == "SMT":
        own = state.own_smt_id
    elif side == "HMT":
        own = state.own_hmt_id
    else:
        raise ValueError(f"side must be 'SMT' or 'HMT', got {side!r}")
    if message.publisher_id == own:
        return FilterDecision.REJECT
    return FilterDecision.ACCEPT


def step(state: GatewayState, event: Event) -> tuple[GatewayState, list[Action]]:
    """Apply one event; returns the next resting state and the emitted actions.

    Actions are ordered exactly as the gateway performs them.
    """
    phase = state.phase

    if phase is Phase.AWAIT_BUFFER and isinstance(event, BufferLocation):
        new = _with(state, phase=Phase.POLLING, outstanding_request=True)
        return new, [RequestSmtMessage()]

    if phase is Phase.POLLING and isinstance(event, DelegateResponse):
        m = event.message
        if filter_message(m, "SMT", state) is FilterDecision.ACCEPT:
            # passes through FWD_SMT_TO_HMT and back to POLLING
            return _with(state), [TransferToHmt(m), RequestSmtMessage()]
        return _with(state), [Discard(m), RequestSmtMessage()]

    if phase is Phase.POLLING and isinstance(event, HmtArrival):
        m = event.message
        if filter_message(m, "HMT", state) is FilterDecision.ACCEPT:
            # passes through FWD_HMT_TO_MAIN, then parks m until the cancel resolves
            new = _with(state, phase=Phase.CANCELLING, held=m)
            return new, [TransferToMain(m), CancelSmtRequest()]
        return _with(state), [Discard(m)]

    if phase is Phase.CANCELLING and isinstance(event, CancelResult):
        held = state.held
        if held is None:  # pragma: no cover - unreachable via legal steps
            raise GatewayProtocolError(phase, event)
        new = _with(state, phase=Phase.POLLING, held=None)
        if event.message is None:
            # clean cancel: publish the parked message, reopen the read
            return new, [PublishSmt(held), RequestSmtMessage()]
        m2 = event.message
        if filter_message(m2, "SMT", state) is FilterDecision.ACCEPT:
            # the read raced the cancel; flush its response first
            return new, [TransferToHmt(m2), PublishSmt(held), RequestSmtMessage()]
        return new, [Discard(m2), PublishSmt(held), RequestSmtMessage()]

    raise GatewayProtocolError(phase, event)


def _with(state: GatewayState, **changes) -> GatewayState:
    fields = {
        "own_smt_id": state.own_smt_id,
        "own_hmt_id": state.own_hmt_id,
        "phase": state.phase,
        "held": state.held,
        "outstanding_request": state.outstanding_request,
    }
    fields.update(changes)
    return GatewayState(**fields)


# -- machine-readable transition table ------------------------------------

_EVENT_KIND = {
    BufferLocation: "BUFFER_LOCATION",
    DelegateResponse: "DELEGATE_RESPONSE",
    HmtArrival: "HMT_ARRIVAL",
    CancelResult: "CANCEL_RESULT",
}

_ACTION_KIND = {
    RequestSmtMessage: "REQUEST_SMT_MESSAGE",
    CancelSmtRequest: "CANCEL_SMT_REQUEST",
    TransferToHmt: "TRANSFER_TO_HMT",
    TransferToMain: "TRANSFER_TO_MAIN",
    PublishSmt: "PUBLISH_SMT",
    Discard: "DISCARD",
}


def transition_table() -> dict:
    """The full protocol as data.

    Action arguments: ``"EVENT_MESSAGE"`` is the message carried by the
    triggering event, ``"HELD"`` the parked message, ``null`` no argument.
    ``via`` lists the transient phases a step passes through, in order.
    Guards on message-bearing events name the side filter outcome that
    selects the rule.
    """
    return {
        "initial_phase": Phase.AWAIT_BUFFER.value,
        "phases": [p.value for p in Phase],
        "resting_phases": [p.value for p in RESTING_PHASES],
        "event_kinds": sorted(_EVENT_KIND.values()),
        "action_kinds": sorted(_ACTION_KIND.values()),
        "rules": [
            {
                "phase": "AWAIT_BUFFER",
                "event": "BUFFER_LOCATION",
                "guard": "NONE",
                "actions": [["REQUEST_SMT_MESSAGE", None]],
                "next": "POLLING",
                "via": [],
                "holds": False,
                "outstanding": True,
                "clears_held": False,
            },
            {
                "phase": "POLLING",
                "event": "DELEGATE_RESPONSE",
                "guard": "SMT_ACCEPT",
                "actions": [["TRANSFER_TO_HMT", "EVENT_MESSAGE"], ["REQUEST_SMT_MESSAGE", None]],
                "next": "POLLING",
                "via": ["FWD_SMT_TO_HMT"],
                "holds": False,
                "outstanding": True,
                "clears_held": False,
            },
            {
                "phase": "POLLING",
                "event": "DELEGATE_RESPONSE",
                "guard": "SMT_REJECT",
                "actions": [["DISCARD", "EVENT_MESSAGE"], ["REQUEST_SMT_MESSAGE", None]],
                "next": "POLLING",
                "via": [],
                "holds": False,
                "outstanding": True,
                "clears_held": False,
            },
            {
                "phase": "POLLING",
                "event": "HMT_ARRIVAL",
                "guard": "HMT_ACCEPT",
                "actions": [["TRANSFER_TO_MAIN", "EVENT_MESSAGE"], ["CANCEL_SMT_REQUEST", None]],
                "next": "CANCELLING",
                "via": ["FWD_HMT_TO_MAIN"],
                "holds": True,
                "outstanding": True,
                "clears_held": False,
            },
            {
                "phase": "POLLING",
                "event": "HMT_ARRIVAL",
                "guard": "HMT_REJECT",
                "actions": [["DISCARD", "EVENT_MESSAGE"]],
                "next": "POLLING",
                "via": [],
                "holds": False,
                "outstanding": True,
                "clears_held": False,
            },
            {
                "phase": "CANCELLING",
                "event": "CANCEL_RESULT",
                "guard": "EMPTY",
                "actions": [["PUBLISH_SMT", "HELD"], ["REQUEST_SMT_MESSAGE", None]],
                "next": "POLLING",
                "via": ["PUBLISH_SMT"],
                "holds": False,
                "outstanding": True,
                "clears_held": True,
            },
            {
                "phase": "CANCELLING",
                "event": "CANCEL_RESULT",
                "guard": "MESSAGE_SMT_ACCEPT",
                "actions": [
                    ["TRANSFER_TO_HMT", "EVENT_MESSAGE"],
                    ["PUBLISH_SMT", "HELD"],
                    ["REQUEST_SMT_MESSAGE", None],
                ],
                "next": "POLLING",
                "via": ["FLUSH_PENDING", "PUBLISH_SMT"],
                "holds": False,
                "outstanding": True,
                "clears_held": True,
            },
            {
                "phase": "CANCELLING",
                "event": "CANCEL_RESULT",
                "guard": "MESSAGE_SMT_REJECT",
                "actions": [
                    ["DISCARD", "EVENT_MESSAGE"],
                    ["PUBLISH_SMT", "HELD"],
                    ["REQUEST_SMT_MESSAGE", None],
                ],
                "next": "POLLING",
                "via": ["FLUSH_PENDING", "PUBLISH_SMT"],
                "holds": False,
                "outstanding": True,
                "clears_held": True,
            },
        ],
    }
