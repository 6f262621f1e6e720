"""Communication mapping: assign each topic a transport implementation.

Topics are classified by where their endpoints run.  A topic whose
publishers and subscribers are all software nodes stays on the software
transport (SMT); all-hardware topics use the hardware transport (HMT);
mixed topics either stay on SMT, with hardware endpoints reached through
per-node delegates, or get a gateway (GW) that bridges the two transports.
Which of the two a mixed topic gets is the policy's call.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, asdict

from .graph import ComputationGraph, NodeMapping, Placement


class MappingError(ValueError):
    """Inconsistent communication mapping for a given graph and placement."""


class TopicClass(enum.Enum):
    ALL_SW = "ALL_SW"
    ALL_HW = "ALL_HW"
    MIXED = "MIXED"


class TopicImpl(enum.Enum):
    SMT = "SMT"
    HMT = "HMT"
    GW = "GW"


class MappingPolicy(enum.Enum):
    # value strings double as the CLI spelling
    COST = "cost"
    ALWAYS_GW_IF_MULTI_HW_SUB = "multi-hw-sub"
    ALWAYS_SMT = "smt"


@dataclass(frozen=True)
class CostModelParams:
    """Per-transfer cost model, all times in microseconds.

    Bandwidths are in bytes per microsecond.  ``sw_dds_intercept_us`` and
    ``sw_dds_us_per_byte`` form the affine latency of a software-side
    delivery; the same leg appears in both estimators and therefore never
    decides between them, but keeping it makes the estimates end-to-end.
    """

    delegate_roundtrip_us: float = 38.0
    gateway_fixed_overhead_us: float = 76.0
    memif_bandwidth_bytes_per_us: float = 1200.0
    hmt_bandwidth_bytes_per_us: float = 4800.0
    sw_dds_intercept_us: float = 10.0
    sw_dds_us_per_byte: float = 0.009

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.hmt_bandwidth_bytes_per_us < self.memif_bandwidth_bytes_per_us:
            raise ValueError("hmt bandwidth must be at least memif bandwidth")

    def sw_dds_latency_us(self, size_bytes: int) -> float:
        return self.sw_dds_intercept_us + self.sw_dds_us_per_byte * size_bytes

    @classmethod
    def from_json(cls, text: str) -> "CostModelParams":
        return cls(**json.loads(text))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def classify_topic(graph: ComputationGraph, node_mapping: NodeMapping, topic_id: str) -> TopicClass:
    """Classify one topic by the placement of its endpoint set.

    A node that both publishes and subscribes counts once.
    """
    endpoints = set(graph.publishers_of(topic_id)) | set(graph.subscribers_of(topic_id))
    if not endpoints:
        raise MappingError(f"topic {topic_id!r} has no endpoints to classify")
    placements = {node_mapping.placement_of(n) for n in endpoints}
    if placements == {Placement.SW}:
        return TopicClass.ALL_SW
    if placements == {Placement.HW}:
        return TopicClass.ALL_HW
    return TopicClass.MIXED


def hw_subscriber_count(graph: ComputationGraph, node_mapping: NodeMapping, topic_id: str) -> int:
    return sum(1 for n in graph.subscribers_of(topic_id) if node_mapping.is_hw(n))


def estimate_smt_cost_us(size_bytes: int, hw_sub_count: int, params: CostModelParams) -> float:
    """Cost of serving a mixed topic over SMT with hardware delegates.

    Each of the ``hw_sub_count`` hardware subscribers pulls its own copy
    across the shared-memory interface.
    """
    if hw_sub_count < 1:
        raise MappingError("SMT-vs-GW estimate is only defined for topics with hardware subscribers")
    return (
        params.delegate_roundtrip_us
        + size_bytes * hw_sub_count / params.memif_bandwidth_bytes_per_us
        + params.sw_dds_latency_us(size_bytes)
    )


def estimate_gw_cost_us(size_bytes: int, hw_sub_count: int, params: CostModelParams) -> float:
    """Cost of serving a mixed topic through a gateway.

    The payload crosses the shared-memory interface once and is then
    streamed on the hardware transport, which fans out to any number of
    hardware subscribers at no extra per-subscriber transfer cost.
    """
    if hw_sub_count < 1:
        raise MappingError("SMT-vs-GW estimate is only defined for topics with hardware subscribers")
    return (
        params.gateway_fixed_overhead_us
        + size_bytes / params.memif_bandwidth_bytes_per_us
        + size_bytes / params.hmt_bandwidth_bytes_per_us
        + params.sw_dds_latency_us(size_bytes)
    )


@dataclass(frozen=True)
class CommMapping:
    assignments: tuple[tuple[str, TopicImpl], ...]

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(sorted(self.assignments)))

    def impl_of(self, topic_id: str) -> TopicImpl:
        for t, impl in self.assignments:
            if t == topic_id:
                return impl
        raise KeyError(topic_id)

    def to_dict(self) -> dict:
        return {t: impl.value for t, impl in self.assignments}

    @classmethod
    def from_dict(cls, d: dict) -> "CommMapping":
        try:
            return cls(tuple((t, TopicImpl(v)) for t, v in d.items()))
        except ValueError as exc:
            raise MappingError(f"bad comm_mapping entry: {exc}") from None


def map_communication(
    graph: ComputationGraph,
    node_mapping: NodeMapping,
    policy: MappingPolicy,
    cost_params: CostModelParams | None = None,
) -> tuple[CommMapping, dict[str, str]]:
    """Assign an implementation to every topic and say why.

    ALL_SW topics always stay on SMT.  ALL_HW topics go to HMT under the
    classifying policies; the ALWAYS_SMT baseline leaves literally every
    topic on the software transport, which is what an unmapped system
    does.  Only MIXED topics genuinely consult the policy.
    """
    node_mapping.validate_against(graph)
    if cost_params is None:
        cost_params = CostModelParams()
    assignments = []
    rationales = {}
    for topic_id in graph.topic_ids():
        cls = classify_topic(graph, node_mapping, topic_id)
        if policy is MappingPolicy.ALWAYS_SMT:
            impl = TopicImpl.SMT
            why = "baseline keeps every topic on the software transport"
        elif cls is TopicClass.ALL_SW:
            impl = TopicImpl.SMT
            why = "all endpoints are software nodes"
        elif cls is TopicClass.ALL_HW:
            impl = TopicImpl.HMT
            why = "all endpoints are hardware nodes"
        elif policy is MappingPolicy.ALWAYS_GW_IF_MULTI_HW_SUB:
            k = hw_subscriber_count(graph, node_mapping, topic_id)
            if k >= 2:
                impl = TopicImpl.GW
                why = f"mixed endpoints with {k} hardware subscribers, gateway amortizes the transfer"
            else:
                impl = TopicImpl.SMT
                why = f"mixed endpoints with {k} hardware subscriber(s), below the gateway threshold"
        elif policy is MappingPolicy.COST:
            size = graph.topic(topic_id).message_size_bytes
            k = hw_subscriber_count(graph, node_mapping, topic_id)
            if k == 0:
                # mixed only through a hardware publisher; nothing to amortize
                impl = TopicImpl.SMT
                why = "no hardware subscribers, a gateway has nothing to amortize"
            else:
                smt = estimate_smt_cost_us(size, k, cost_params)
                gw = estimate_gw_cost_us(size, k, cost_params)
                if gw < smt:
                    impl = TopicImpl.GW
                    why = f"estimated gateway cost {gw:.2f}us beats software transport {smt:.2f}us"
                else:
                    impl = TopicImpl.SMT
                    why = f"estimated software transport cost {smt:.2f}us within gateway cost {gw:.2f}us"
        else:  # pragma: no cover - enum is closed
            raise MappingError(f"unhandled policy {policy!r}")
        assignments.append((topic_id, impl))
        rationales[topic_id] = f"{cls.value}: {why}"
    return CommMapping(tuple(assignments)), rationales


def count_boundary_crossings(
    graph: ComputationGraph, node_mapping: NodeMapping, comm_mapping: CommMapping
) -> int:
    """Number of edges whose traffic crosses the hardware/software boundary.

    SMT lives on the software side, so every edge touching a hardware node
    crosses.  HMT lives on the hardware side and admits no software
    endpoints at all.  A gateway topic is carried on both sides; only its
    software-node edges cross (through the gateway), hardware edges stay
    native.
    """
    total = 0
    for topic_id in graph.topic_ids():
        impl = comm_mapping.impl_of(topic_id)
        edges = [n for n, _ in graph.pub_edges_of(topic_id)]
        edges += [n for _, n in graph.sub_edges_of(topic_id)]
        if impl is TopicImpl.SMT:
            total += sum(1 for n in edges if node_mapping.is_hw(n))
        elif impl is TopicImpl.HMT:
            sw = [n for n in edges if not node_mapping.is_hw(n)]
            if sw:
                raise MappingError(
                    f"topic {topic_id!r} is mapped to HMT but has software endpoints: {sorted(set(sw))}"
                )
        else:  # GW
            total += sum(1 for n in edges if not node_mapping.is_hw(n))
    return total


def classification_mapping(graph: ComputationGraph, node_mapping: NodeMapping) -> CommMapping:
    """Classification alone: ALL_HW topics to HMT, everything else on SMT."""
    return CommMapping(
        tuple(
            (t, TopicImpl.HMT if classify_topic(graph, node_mapping, t) is TopicClass.ALL_HW else TopicImpl.SMT)
            for t in graph.topic_ids()
        )
    )


def mapping_report(
    graph: ComputationGraph,
    node_mapping: NodeMapping,
    comm_mapping: CommMapping,
    rationales: dict[str, str],
) -> dict:
    """Result document for the map command, JSON-serializable."""
    all_smt = CommMapping(tuple((t, TopicImpl.SMT) for t in graph.topic_ids()))
    classified = classification_mapping(graph, node_mapping)
    return {
        "comm_mapping": comm_mapping.to_dict(),
        "rationales": dict(sorted(rationales.items())),
        "boundary_crossings": count_boundary_crossings(graph, node_mapping, comm_mapping),
        "boundary_crossings_baseline_all_smt": count_boundary_crossings(graph, node_mapping, all_smt),
        "boundary_crossings_classified_smt_hmt": count_boundary_crossings(graph, node_mapping, classified),
    }
