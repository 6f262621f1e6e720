"""Discrete-event simulation of mapped computation graphs.

The simulator charges time for four things: control-path calls across the
hardware/software interface (OSIF round trips and delegate publishes, the
only quantities that jitter), payload movement across the shared-memory
interface (MEMIF, a single bandwidth pool shared by all concurrent
transfers), payload streaming on the hardware transport (dedicated
bandwidth per stream), and software-side delivery with an affine latency
in message size.

Conventions baked into the paths:

* A hardware node publishes by writing its result into main memory while
  it computes, so the publish itself costs one OSIF round trip plus one
  delegate publish and moves no payload.
* A software publisher hands the first local reader a loan for free and
  copies serially for every further reader, in lexicographic reader order.
* A hardware subscriber on a software-transport topic pulls its own copy
  through MEMIF after one OSIF round trip; the pull shares the MEMIF pool.
* Hardware-transport subscribers each take delivery with one OSIF round
  trip after the stream arrives; streams do not share bandwidth.
* A gateway's cancellable read needs two OSIF round trips per response
  (readiness detection plus the response itself) where a plain delegate
  read needs one; that is the price of being able to abort it.

Internally time is integer nanoseconds on a heap; all randomness flows
from one seeded generator, so runs are reproducible event for event.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
import random
import statistics
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from . import gateway as gw
from .graph import ComputationGraph, NodeMapping, Placement, parse_document
from .mapping import (
    CommMapping,
    MappingError,
    MappingPolicy,
    TopicImpl,
    map_communication,
)
from .platform_model import PlatformModel

NS_PER_US = 1000


def _us_to_ns(us: float) -> int:
    return int(round(us * NS_PER_US))


def _bytes_ns(nbytes: int, bytes_per_s: float) -> int:
    # exact integer ceiling so repeated runs cannot drift
    bps = int(round(bytes_per_s))
    return (nbytes * 1_000_000_000 + bps - 1) // bps


# -- scenario documents ----------------------------------------------------


@dataclass(frozen=True)
class WorkloadItem:
    publisher: str
    topic: str
    count: int = 1
    period_us: float = 10_000.0
    size_bytes: int | None = None  # None: use the topic's declared size


@dataclass(frozen=True)
class GridSpec:
    """Sweep descriptor for policy comparisons on star topologies."""

    publisher_kind: str  # "hw" | "sw"
    sizes: tuple[int, ...]
    hw_sub_counts: tuple[int, ...]
    sw_sub_count: int = 0
    reps: int = 50
    period_us: float = 200_000.0


@dataclass(frozen=True)
class Scenario:
    graph: ComputationGraph
    node_mapping: NodeMapping
    workload: tuple[WorkloadItem, ...]
    seed: int = 0
    comm_mapping: CommMapping | None = None
    policy: MappingPolicy | None = None
    compute_us: tuple[tuple[str, float], ...] = ()
    jitter_pct: float | None = None  # None: platform default
    grid: GridSpec | None = None

    def resolve_mapping(self, cost_params=None) -> CommMapping:
        if self.comm_mapping is not None:
            return self.comm_mapping
        policy = self.policy if self.policy is not None else MappingPolicy.COST
        mapping, _ = map_communication(self.graph, self.node_mapping, policy, cost_params)
        return mapping


class ScenarioError(ValueError):
    pass


def scenario_from_json(text: str, base_dir) -> Scenario:
    """Parse a scenario document; the graph is a path relative to base_dir."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid scenario JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    if "graph" not in doc:
        raise ScenarioError("scenario: missing required key 'graph'")
    graph_path = Path(base_dir) / doc["graph"]
    with open(graph_path, "r", encoding="utf-8") as fh:
        graph, node_mapping = parse_document(fh.read())
    if node_mapping is None:
        raise ScenarioError(f"graph document {doc['graph']!r} has no node_mapping")

    workload = []
    for i, entry in enumerate(doc.get("workload", [])):
        if "publisher" not in entry or "topic" not in entry:
            raise ScenarioError(f"workload[{i}]: needs 'publisher' and 'topic'")
        workload.append(
            WorkloadItem(
                publisher=entry["publisher"],
                topic=entry["topic"],
                count=int(entry.get("count", 1)),
                period_us=float(entry.get("period_us", 10_000.0)),
                size_bytes=entry.get("size_bytes"),
            )
        )

    comm_mapping = None
    if "comm_mapping" in doc:
        comm_mapping = CommMapping.from_dict(doc["comm_mapping"])
    policy = None
    if "policy" in doc:
        try:
            policy = MappingPolicy(doc["policy"])
        except ValueError:
            raise ScenarioError(f"unknown policy {doc['policy']!r}") from None

    grid = None
    if "grid" in doc:
        g = doc["grid"]
        if g.get("publisher_kind") not in ("hw", "sw"):
            raise ScenarioError("grid.publisher_kind must be 'hw' or 'sw'")
        grid = GridSpec(
            publisher_kind=g["publisher_kind"],
            sizes=tuple(int(s) for s in g["sizes"]),
            hw_sub_counts=tuple(int(n) for n in g["hw_sub_counts"]),
            sw_sub_count=int(g.get("sw_sub_count", 0)),
            reps=int(g.get("reps", 50)),
            period_us=float(g.get("period_us", 200_000.0)),
        )

    return Scenario(
        graph=graph,
        node_mapping=node_mapping,
        workload=tuple(workload),
        seed=int(doc.get("seed", 0)),
        comm_mapping=comm_mapping,
        policy=policy,
        compute_us=tuple(sorted((k, float(v)) for k, v in doc.get("compute_us", {}).items())),
        jitter_pct=doc.get("jitter_pct"),
        grid=grid,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json(fh.read(), path.parent)


# -- star topologies for sweeps --------------------------------------------


def star_graph(
    publisher_kind: str,
    hw_subs: int,
    sw_subs: int,
    size_bytes: int,
    rate_hz: float = 10.0,
) -> tuple[ComputationGraph, NodeMapping]:
    """One publisher, one topic, a row of subscribers."""
    from .graph import TopicSpec

    nodes = ["pub0"]
    placements = {"pub0": Placement.HW if publisher_kind == "hw" else Placement.SW}
    for i in range(hw_subs):
        n = f"hw_sub_{i + 1}"
        nodes.append(n)
        placements[n] = Placement.HW
    for i in range(sw_subs):
        n = f"sw_sub_{i + 1}"
        nodes.append(n)
        placements[n] = Placement.SW
    graph = ComputationGraph(
        nodes=tuple(nodes),
        topics=(TopicSpec("t0", size_bytes, rate_hz),),
        pub_edges=(("pub0", "t0"),),
        sub_edges=tuple(("t0", n) for n in nodes[1:]),
    )
    mapping = NodeMapping(tuple(placements.items()))
    return graph, mapping


def star_scenario(
    publisher_kind: str,
    hw_subs: int,
    sw_subs: int,
    size_bytes: int,
    reps: int,
    period_us: float,
    seed: int,
    policy: MappingPolicy | None = None,
    comm_mapping: CommMapping | None = None,
    jitter_pct: float | None = None,
) -> Scenario:
    graph, node_mapping = star_graph(publisher_kind, hw_subs, sw_subs, size_bytes)
    return Scenario(
        graph=graph,
        node_mapping=node_mapping,
        workload=(WorkloadItem("pub0", "t0", count=reps, period_us=period_us),),
        seed=seed,
        policy=policy,
        comm_mapping=comm_mapping,
        jitter_pct=jitter_pct,
    )


# -- results ---------------------------------------------------------------


@dataclass(frozen=True)
class TraceEvent:
    t_ns: int
    kind: str
    message_id: str
    endpoint: str


@dataclass(frozen=True)
class Delivery:
    topic: str
    subscriber: str
    seq: int
    t_pub_ns: int
    t_deliver_ns: int

    @property
    def latency_us(self) -> float:
        return (self.t_deliver_ns - self.t_pub_ns) / NS_PER_US


@dataclass
class SimResult:
    trace: list[TraceEvent]
    deliveries: list[Delivery]
    memif_segments: list[tuple[int, int, int, float]]  # (t0_ns, t1_ns, flows, bytes)

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for ev in self.trace:
            counts[ev.kind] = counts.get(ev.kind, 0) + 1
        return counts


# -- MEMIF bandwidth pool ---------------------------------------------------


class _MemifPool:
    """Egalitarian bandwidth sharing: n concurrent transfers each get B/n.

    Completion events carry a generation stamp so reschedules invalidate
    stale ones.  Every settled interval is recorded for throughput audits.
    """

    def __init__(self, sim: "_Sim", bytes_per_s: float):
        self._sim = sim
        self._bps = float(bytes_per_s)
        self._flows: dict[int, list] = {}  # id -> [remaining_bytes, callback]
        self._next_id = 0
        self._gen = 0
        self._last_t = 0
        self.segments: list[tuple[int, int, int, float]] = []

    def start(self, nbytes: float, on_done) -> int:
        self._settle()
        fid = self._next_id
        self._next_id += 1
        self._flows[fid] = [float(nbytes), on_done]
        self._reschedule()
        return fid

    def _settle(self):
        now = self._sim.now_ns
        dt = now - self._last_t
        if dt > 0 and self._flows:
            share = self._bps * dt / 1e9 / len(self._flows)
            for entry in self._flows.values():
                entry[0] -= share
            self.segments.append((self._last_t, now, len(self._flows), share * len(self._flows)))
        self._last_t = now

    def _reschedule(self):
        self._gen += 1
        if not self._flows:
            return
        rem_min = min(entry[0] for entry in self._flows.values())
        n = len(self._flows)
        dt_ns = max(0, int(math.ceil(max(rem_min, 0.0) * n * 1e9 / self._bps)))
        gen = self._gen
        self._sim.at(self._sim.now_ns + dt_ns, lambda: self._complete(gen))

    def _complete(self, gen: int):
        if gen != self._gen:
            return
        self._settle()
        finished = sorted(fid for fid, entry in self._flows.items() if entry[0] <= 1e-6)
        callbacks = [self._flows[fid][1] for fid in finished]
        for fid in finished:
            del self._flows[fid]
        self._reschedule()
        for cb in callbacks:
            cb()


# -- gateway actor -----------------------------------------------------------


class _GwDelegate:
    """The gateway's reader on the software transport.

    Holds at most one cancellable read open; a response costs two control
    round trips (readiness detection, then the response itself).
    """

    def __init__(self, sim: "_Sim", actor: "_GwActor"):
        self._sim = sim
        self._actor = actor
        self._open = False
        self._pending: deque[gw.Message] = deque()
        self._inflight: gw.Message | None = None
        self._gen = 0

    def on_message_available(self, message: gw.Message):
        self._pending.append(message)
        self._maybe_start()

    def open_request(self):
        self._open = True
        self._maybe_start()

    def _maybe_start(self):
        if not self._open or self._inflight is not None or not self._pending:
            return
        message = self._pending.popleft()
        self._inflight = message
        self._gen += 1
        gen = self._gen
        dt = self._sim.jit_ns(self._sim.platform.osif_roundtrip_us) + self._sim.jit_ns(
            self._sim.platform.osif_roundtrip_us
        )
        self._sim.at(self._sim.now_ns + dt, lambda: self._response_ready(gen))

    def _response_ready(self, gen: int):
        if gen != self._gen or self._inflight is None:
            return
        message = self._inflight
        self._inflight = None
        self._open = False
        self._actor.post(gw.DelegateResponse(message))

    def begin_cancel(self) -> gw.Message | None:
        """Close the read; returns the response the cancel raced, if any."""
        self._open = False
        self._gen += 1  # invalidates any scheduled response
        raced = self._inflight
        self._inflight = None
        return raced


class _GwActor:
    """Runs one gateway state machine inside the simulation.

    Data events queue FIFO and are only handed to the machine in phases
    that accept them; cancel acknowledgements travel on the control path
    and jump the queue, so a burst of arrivals cannot wedge a pending
    cancel.  Actions run serially, each finishing before the next starts,
    which is what makes gateway timing reproducible.
    """

    _ACCEPTS = {
        gw.Phase.AWAIT_BUFFER: (gw.BufferLocation,),
        gw.Phase.POLLING: (gw.DelegateResponse, gw.HmtArrival),
        gw.Phase.CANCELLING: (gw.CancelResult,),
    }

    def __init__(self, sim: "_Sim", topic: str, hw_subs: tuple[str, ...], sw_subs: tuple[str, ...]):
        self._sim = sim
        self.topic = topic
        self.smt_id = f"gw.{topic}"
        self.hmt_id = f"gw.{topic}.hmt"
        self.hw_subs = hw_subs
        self.sw_subs = sw_subs
        self.state, _ = gw.init(self.smt_id, self.hmt_id)
        self.delegate = _GwDelegate(sim, self)
        self._queue: deque[gw.Event] = deque()
        self._busy = False
        sim.at(0, lambda: self.post(gw.BufferLocation()))

    def post(self, event: gw.Event):
        self._queue.append(event)
        self._drain()

    def post_control(self, event: gw.Event):
        self._queue.appendleft(event)
        self._drain()

    def _drain(self):
        if self._busy or not self._queue:
            return
        accepted = self._ACCEPTS.get(self.state.phase, ())
        if not isinstance(self._queue[0], accepted):
            return  # head waits for a phase change; order is preserved
        event = self._queue.popleft()
        self.state, actions = gw.step(self.state, event)
        self._run_actions(deque(actions))

    def _run_actions(self, actions: deque[gw.Action]):
        if not actions:
            self._busy = False
            self._drain()
            return
        self._busy = True
        action = actions.popleft()
        sim = self._sim
        sim.trace(f"GW_ACTION:{gw._ACTION_KIND[type(action)]}", _action_mid(action), self.smt_id)

        if isinstance(action, gw.RequestSmtMessage):
            self.delegate.open_request()
            self._run_actions(actions)
        elif isinstance(action, gw.CancelSmtRequest):
            raced = self.delegate.begin_cancel()
            dt = sim.jit_ns(sim.platform.osif_roundtrip_us)
            sim.at(sim.now_ns + dt, lambda: self.post_control(gw.CancelResult(raced)))
            self._run_actions(actions)
        elif isinstance(action, gw.Discard):
            self._run_actions(actions)
        elif isinstance(action, gw.TransferToHmt):
            m = action.message
            size = m.size_bytes

            def after_read():
                sim.trace("MEMIF_TRANSFER", m.message_id, self.smt_id)
                stream_dt = _bytes_ns(size, sim.platform.hmt_bandwidth_bytes_per_s)
                sim.at(sim.now_ns + stream_dt, after_stream)

            def after_stream():
                for sub in self.hw_subs:
                    sim.trace("HMT_TRANSFER", m.message_id, sub)
                    dt = sim.jit_ns(sim.platform.osif_roundtrip_us)
                    sim.deliver_at(sim.now_ns + dt, self.topic, sub, m.seq)
                # own transfer loops back through the tap under the gateway's identity
                loop = gw.Message(self.hmt_id, m.seq, m.topic, m.size_bytes)
                self.post(gw.HmtArrival(loop))
                self._run_actions(actions)

            sim.pool.start(sim.jit_bytes(size), after_read)
        elif isinstance(action, gw.TransferToMain):
            m = action.message

            def after_write():
                sim.trace("MEMIF_TRANSFER", m.message_id, self.smt_id)
                self._run_actions(actions)

            sim.pool.start(sim.jit_bytes(m.size_bytes), after_write)
        elif isinstance(action, gw.PublishSmt):
            m = action.message
            dt = sim.jit_ns(sim.platform.delegate_publish_us)

            def after_publish():
                for sub in self.sw_subs:
                    sim.deliver_at(
                        sim.now_ns + sim.sw_delivery_ns(m.size_bytes), self.topic, sub, m.seq
                    )
                # own publication loops back through the delegate
                loop = gw.Message(self.smt_id, m.seq, m.topic, m.size_bytes)
                self.delegate.on_message_available(loop)
                self._run_actions(actions)

            sim.at(sim.now_ns + dt, after_publish)
        else:  # pragma: no cover - action set is closed
            raise AssertionError(f"unknown action {action!r}")


def _action_mid(action: gw.Action) -> str:
    message = getattr(action, "message", None)
    return message.message_id if message is not None else "-"


# -- the engine --------------------------------------------------------------


@dataclass(frozen=True)
class RelaySpec:
    """Chain hop: on delivery of in_topic, compute, then publish out_topic."""

    in_topic: str
    out_topic: str
    compute_us: float


class _Sim:
    def __init__(
        self,
        graph: ComputationGraph,
        node_mapping: NodeMapping,
        comm_mapping: CommMapping,
        platform: PlatformModel,
        seed: int,
        jitter_pct: float | None = None,
        relays: dict[str, RelaySpec] | None = None,
    ):
        self.graph = graph
        self.node_mapping = node_mapping
        self.comm_mapping = comm_mapping
        self.platform = platform
        self._jitter = platform.jitter_pct if jitter_pct is None else jitter_pct
        self._rng = random.Random(seed)
        self._heap: list = []
        self._seq = 0
        self.now_ns = 0
        self.pool = _MemifPool(self, platform.memif_bandwidth_bytes_per_s)
        self._trace: list[TraceEvent] = []
        self._deliveries: list[Delivery] = []
        self._pub_times: dict[tuple[str, int], int] = {}
        self._next_msg_seq: dict[str, int] = {}
        self._relays = relays or {}
        self._validate()
        self._actors: dict[str, _GwActor] = {}
        for topic_id in graph.topic_ids():
            if comm_mapping.impl_of(topic_id) is TopicImpl.GW:
                hw = tuple(n for n in graph.subscribers_of(topic_id) if node_mapping.is_hw(n))
                sw = tuple(n for n in graph.subscribers_of(topic_id) if not node_mapping.is_hw(n))
                self._actors[topic_id] = _GwActor(self, topic_id, hw, sw)

    def _validate(self):
        for topic_id in self.graph.topic_ids():
            impl = self.comm_mapping.impl_of(topic_id)
            endpoints = set(self.graph.publishers_of(topic_id)) | set(
                self.graph.subscribers_of(topic_id)
            )
            placements = {self.node_mapping.placement_of(n) for n in endpoints}
            if impl is TopicImpl.HMT and Placement.SW in placements:
                raise MappingError(f"topic {topic_id!r}: HMT cannot serve software endpoints")
            if impl is TopicImpl.GW and len(placements) < 2:
                raise MappingError(f"topic {topic_id!r}: a gateway only makes sense for mixed endpoints")

    # -- primitives --

    def at(self, t_ns: int, fn):
        heapq.heappush(self._heap, (t_ns, self._seq, fn))
        self._seq += 1

    def jit_ns(self, us: float) -> int:
        factor = 1.0
        if self._jitter > 0:
            factor += self._rng.uniform(-self._jitter, self._jitter)
        return _us_to_ns(us * factor)

    def jit_bytes(self, nbytes: int) -> float:
        """MEMIF arbitration jitter, charged as effective bytes moved.

        Keeps the pool's aggregate throughput exactly at the configured
        bandwidth; dedicated HMT streams carry no such noise.
        """
        factor = 1.0
        if self._jitter > 0:
            factor += self._rng.uniform(-self._jitter, self._jitter)
        return nbytes * factor

    def sw_delivery_ns(self, size_bytes: int) -> int:
        return _us_to_ns(self.platform.sw_dds_latency_us(size_bytes))

    def trace(self, kind: str, message_id: str, endpoint: str):
        self._trace.append(TraceEvent(self.now_ns, kind, message_id, endpoint))

    def deliver_at(self, t_ns: int, topic: str, subscriber: str, seq: int):
        def do():
            self.trace("DELIVER", f"{topic}#{seq}", subscriber)
            self._deliveries.append(
                Delivery(topic, subscriber, seq, self._pub_times[(topic, seq)], self.now_ns)
            )
            relay = self._relays.get(subscriber)
            if relay is not None and relay.in_topic == topic:
                self.at(
                    self.now_ns + _us_to_ns(relay.compute_us),
                    lambda: self.publish(subscriber, relay.out_topic, seq=seq),
                )

        self.at(t_ns, do)

    # -- publishing --

    def publish(self, publisher: str, topic_id: str, size_bytes: int | None = None, seq: int | None = None):
        spec = self.graph.topic(topic_id)
        size = spec.message_size_bytes if size_bytes is None else size_bytes
        if seq is None:
            seq = self._next_msg_seq.get(topic_id, 0)
            self._next_msg_seq[topic_id] = seq + 1
        self._pub_times[(topic_id, seq)] = self.now_ns
        message = gw.Message(publisher, seq, topic_id, size)
        self.trace("PUBLISH", message.message_id, publisher)
        impl = self.comm_mapping.impl_of(topic_id)
        pub_is_hw = self.node_mapping.is_hw(publisher)

        if impl is TopicImpl.SMT:
            if pub_is_hw:
                dt = self.jit_ns(self.platform.osif_roundtrip_us) + self.jit_ns(
                    self.platform.delegate_publish_us
                )
                self.at(self.now_ns + dt, lambda: self._smt_fanout(message, loaned=True))
            else:
                self._smt_fanout(message, loaned=False)
        elif impl is TopicImpl.HMT:
            if not pub_is_hw:
                raise MappingError(f"software node {publisher!r} cannot publish on HMT topic {topic_id!r}")
            dt = self.jit_ns(self.platform.osif_roundtrip_us) + self.jit_ns(
                self.platform.delegate_publish_us
            )
            self.at(self.now_ns + dt, lambda: self._hmt_streams(message, include_tap=False))
        elif impl is TopicImpl.GW:
            if pub_is_hw:
                dt = self.jit_ns(self.platform.osif_roundtrip_us) + self.jit_ns(
                    self.platform.delegate_publish_us
                )
                self.at(self.now_ns + dt, lambda: self._hmt_streams(message, include_tap=True))
            else:
                self._smt_fanout(message, loaned=False)
        else:  # pragma: no cover
            raise AssertionError(impl)

    def _smt_readers(self, topic_id: str) -> list[tuple[str, str]]:
        """(reader_id, kind) on the software side, in reader-id order."""
        impl = self.comm_mapping.impl_of(topic_id)
        readers = []
        for sub in self.graph.subscribers_of(topic_id):
            if self.node_mapping.is_hw(sub):
                if impl is TopicImpl.SMT:
                    readers.append((sub, "delegate"))
                # on a gateway topic hardware subscribers listen on the HMT side
            else:
                readers.append((sub, "sw"))
        if impl is TopicImpl.GW:
            readers.append((self._actors[topic_id].smt_id, "gateway"))
        readers.sort()
        return readers

    def _smt_fanout(self, message: gw.Message, loaned: bool):
        """Hand the message to every software-side reader.

        ``loaned`` fan-out (hardware or gateway publications, already in
        main memory) reaches all readers at once; a software publisher
        copies serially, first reader free.
        """
        topic_id = message.topic
        size = message.size_bytes
        copy_ns = _bytes_ns(size, self.platform.sw_copy_bandwidth_bytes_per_s)
        for i, (reader, kind) in enumerate(self._smt_readers(topic_id)):
            slot_ns = 0 if loaned else i * copy_ns
            t_ready = self.now_ns + slot_ns
            if not loaned and i > 0:
                self.at(t_ready, lambda r=reader, m=message: self.trace("SW_COPY", m.message_id, r))
            if kind == "sw":
                self.deliver_at(t_ready + self.sw_delivery_ns(size), topic_id, reader, message.seq)
            elif kind == "delegate":
                self.at(t_ready, lambda r=reader, m=message: self._delegate_pull(m, r))
            else:  # gateway
                actor = self._actors[topic_id]
                self.at(t_ready, lambda m=message, a=actor: a.delegate.on_message_available(m))

    def _delegate_pull(self, message: gw.Message, subscriber: str):
        """A hardware subscriber's delegate fetches its copy over MEMIF."""
        dt = self.jit_ns(self.platform.osif_roundtrip_us)

        def start_read():
            def done():
                self.trace("MEMIF_TRANSFER", message.message_id, subscriber)
                self.deliver_at(self.now_ns, message.topic, subscriber, message.seq)

            self.pool.start(self.jit_bytes(message.size_bytes), done)

        self.at(self.now_ns + dt, start_read)

    def _hmt_streams(self, message: gw.Message, include_tap: bool):
        """Stream to every hardware subscriber, each on its own channel."""
        topic_id = message.topic
        stream_ns = _bytes_ns(message.size_bytes, self.platform.hmt_bandwidth_bytes_per_s)
        t_arrive = self.now_ns + stream_ns
        for sub in self.graph.subscribers_of(topic_id):
            if not self.node_mapping.is_hw(sub):
                continue

            def arrived(s=sub):
                self.trace("HMT_TRANSFER", message.message_id, s)
                dt = self.jit_ns(self.platform.osif_roundtrip_us)
                self.deliver_at(self.now_ns + dt, topic_id, s, message.seq)

            self.at(t_arrive, arrived)
        if include_tap:
            actor = self._actors[topic_id]

            def tapped():
                self.trace("HMT_TRANSFER", message.message_id, actor.hmt_id)
                actor.post(gw.HmtArrival(message))

            self.at(t_arrive, tapped)

    # -- run loop --

    def run(self, workload: tuple[WorkloadItem, ...]) -> SimResult:
        for item in workload:
            if item.publisher not in self.graph.nodes:
                raise ScenarioError(f"workload publisher {item.publisher!r} is not a graph node")
            if item.publisher not in self.graph.publishers_of(item.topic):
                raise ScenarioError(
                    f"workload: {item.publisher!r} does not publish topic {item.topic!r}"
                )
            for k in range(item.count):
                t = _us_to_ns(item.period_us) * k
                self.at(t, lambda p=item.publisher, tp=item.topic, s=item.size_bytes: self.publish(p, tp, s))
        while self._heap:
            t, _, fn = heapq.heappop(self._heap)
            self.now_ns = t
            fn()
        return SimResult(self._trace, self._deliveries, list(self.pool.segments))


def simulate(
    scenario: Scenario,
    platform: PlatformModel,
    seed: int | None = None,
    relays: dict[str, RelaySpec] | None = None,
) -> SimResult:
    comm_mapping = scenario.resolve_mapping()
    sim = _Sim(
        scenario.graph,
        scenario.node_mapping,
        comm_mapping,
        platform,
        seed=scenario.seed if seed is None else seed,
        jitter_pct=scenario.jitter_pct,
        relays=relays,
    )
    return sim.run(scenario.workload)


# -- trace and stats output --------------------------------------------------

TRACE_HEADER = ("timestamp_us", "kind", "message_id", "endpoint")
STATS_HEADER = ("topic", "subscriber", "count", "mean_us", "stddev_us", "min_us", "max_us")


def trace_to_csv(result: SimResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for ev in result.trace:
        writer.writerow([f"{ev.t_ns / NS_PER_US:.3f}", ev.kind, ev.message_id, ev.endpoint])
    return buf.getvalue()


def compute_stats(result: SimResult) -> list[dict]:
    groups: dict[tuple[str, str], list[float]] = {}
    for d in result.deliveries:
        groups.setdefault((d.topic, d.subscriber), []).append(d.latency_us)
    rows = []
    for (topic, sub), lats in sorted(groups.items()):
        rows.append(
            {
                "topic": topic,
                "subscriber": sub,
                "count": len(lats),
                "mean_us": statistics.fmean(lats),
                "stddev_us": statistics.stdev(lats) if len(lats) > 1 else 0.0,
                "min_us": min(lats),
                "max_us": max(lats),
            }
        )
    return rows


def stats_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_HEADER)
    for r in rows:
        writer.writerow(
            [
                r["topic"],
                r["subscriber"],
                r["count"],
                f"{r['mean_us']:.3f}",
                f"{r['stddev_us']:.3f}",
                f"{r['min_us']:.3f}",
                f"{r['max_us']:.3f}",
            ]
        )
    return buf.getvalue()


# -- policy comparison --------------------------------------------------------


def _fanout_latencies(result: SimResult, topic: str, subs: set[str]) -> list[float]:
    """Per-message time until the last of ``subs`` has the message, in us."""
    per_seq: dict[int, dict[str, float]] = {}
    for d in result.deliveries:
        if d.topic == topic and d.subscriber in subs:
            per_seq.setdefault(d.seq, {})[d.subscriber] = d.latency_us
    out = []
    for seq in sorted(per_seq):
        if set(per_seq[seq]) == subs:
            out.append(max(per_seq[seq].values()))
    return out


def cell_times(
    scenario: Scenario, platform: PlatformModel, policy: MappingPolicy
) -> tuple[float | None, float | None]:
    """(mean hw-side, mean sw-side) fan-out completion times for one cell."""
    run = Scenario(
        graph=scenario.graph,
        node_mapping=scenario.node_mapping,
        workload=scenario.workload,
        seed=scenario.seed,
        policy=policy,
        jitter_pct=scenario.jitter_pct,
    )
    result = simulate(run, platform)
    hw_subs = {n for n in scenario.graph.subscribers_of("t0") if scenario.node_mapping.is_hw(n)}
    sw_subs = {n for n in scenario.graph.subscribers_of("t0") if not scenario.node_mapping.is_hw(n)}
    t_hw = statistics.fmean(_fanout_latencies(result, "t0", hw_subs)) if hw_subs else None
    t_sw = statistics.fmean(_fanout_latencies(result, "t0", sw_subs)) if sw_subs else None
    return t_hw, t_sw


def compare_grid(
    scenario: Scenario,
    platform: PlatformModel,
    policy_a: MappingPolicy,
    policy_b: MappingPolicy,
    seed: int | None = None,
) -> tuple[list[str], list[list]]:
    """Sweep the grid; both policies see identical seeds per cell."""
    grid = scenario.grid
    if grid is None:
        raise ScenarioError("scenario has no grid descriptor")
    base_seed = scenario.seed if seed is None else seed
    header = [
        "publisher_kind",
        "size_bytes",
        "hw_subs",
        f"t_hw_us_{policy_a.value}",
        f"t_sw_us_{policy_a.value}",
        f"t_hw_us_{policy_b.value}",
        f"t_sw_us_{policy_b.value}",
        "speedup_hw",
        "speedup_sw",
    ]
    rows = []
    cell = 0
    for size in grid.sizes:
        for n_hw in grid.hw_sub_counts:
            cell += 1
            cell_scn = star_scenario(
                grid.publisher_kind,
                n_hw,
                grid.sw_sub_count,
                size,
                reps=grid.reps,
                period_us=grid.period_us,
                seed=base_seed + cell,
                jitter_pct=scenario.jitter_pct,
            )
            a_hw, a_sw = cell_times(cell_scn, platform, policy_a)
            b_hw, b_sw = cell_times(cell_scn, platform, policy_b)
            rows.append(
                [
                    grid.publisher_kind,
                    size,
                    n_hw,
                    a_hw,
                    a_sw,
                    b_hw,
                    b_sw,
                    (a_hw / b_hw) if a_hw and b_hw else None,
                    (a_sw / b_sw) if a_sw and b_sw else None,
                ]
            )
    return header, rows


def compare_to_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (f"{v:.3f}" if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


# -- chains -------------------------------------------------------------------


def chain_relays(graph: ComputationGraph, chain: list[str], compute_us: dict[str, float]) -> tuple[dict[str, RelaySpec], str, str]:
    """Relay table for consecutive chain hops; returns (relays, first_topic, last_topic)."""
    if len(chain) < 2:
        raise ScenarioError("chain needs at least two nodes")
    hop_topics = []
    for a, b in zip(chain, chain[1:]):
        shared = [t for t in graph.topic_ids() if a in graph.publishers_of(t) and b in graph.subscribers_of(t)]
        if not shared:
            raise ScenarioError(f"no topic connects {a!r} to {b!r}")
        hop_topics.append(shared[0])
    relays = {}
    for i, node in enumerate(chain[1:-1], start=1):
        relays[node] = RelaySpec(
            in_topic=hop_topics[i - 1],
            out_topic=hop_topics[i],
            compute_us=compute_us.get(node, 0.0),
        )
    return relays, hop_topics[0], hop_topics[-1]


def run_chain_scenario(
    scenario: Scenario, platform: PlatformModel, chain: list[str], seed: int | None = None
) -> tuple[float, float]:
    """End-to-end chain latency over the scenario workload: (mean, stddev) in us."""
    if not chain:
        raise ScenarioError("chain needs at least one node")
    if len(chain) == 1:
        # degenerate chain: source and sink coincide, nothing traverses a topic
        return 0.0, 0.0
    compute = dict(scenario.compute_us)
    relays, first_topic, last_topic = chain_relays(scenario.graph, chain, compute)
    result = simulate(scenario, platform, seed=seed, relays=relays)
    t_pub: dict[int, int] = {}
    t_end: dict[int, int] = {}
    for d in result.deliveries:
        if d.topic == first_topic:
            t_pub.setdefault(d.seq, d.t_pub_ns)
        if d.topic == last_topic and d.subscriber == chain[-1]:
            t_end[d.seq] = d.t_deliver_ns
    lats = [(t_end[s] - t_pub[s]) / NS_PER_US for s in sorted(t_end) if s in t_pub]
    if not lats:
        raise ScenarioError("chain produced no end-to-end deliveries")
    mean = statistics.fmean(lats)
    stddev = statistics.stdev(lats) if len(lats) > 1 else 0.0
    return mean, stddev
