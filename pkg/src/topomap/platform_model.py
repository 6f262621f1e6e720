"""Timing parameters of the simulated platform.

One document describes everything the simulator charges time for: the
shared-memory interface bandwidth between main memory and the hardware
region (MEMIF), the hardware transport's streaming bandwidth (HMT), the
per-call cost of the hardware/software control interface (OSIF), the
delegate's publish cost, the affine software-side delivery latency, and
the copy bandwidth of a software publisher fanning a message out to local
readers.

Control-path charges (OSIF round trips and delegate publishes) carry
multiplicative jitter of ``jitter_pct`` when a simulation enables it;
bandwidth terms do not jitter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class PlatformModel:
    memif_bandwidth_bytes_per_s: float = 1.2e9
    hmt_bandwidth_bytes_per_s: float = 1.2e9
    osif_roundtrip_us: float = 30.0
    delegate_publish_us: float = 8.0
    sw_dds_intercept_us: float = 10.0
    sw_dds_us_per_byte: float = 0.009
    sw_copy_bandwidth_bytes_per_s: float = 1.2e9
    jitter_pct: float = 0.05

    def __post_init__(self):
        for name in (
            "memif_bandwidth_bytes_per_s",
            "hmt_bandwidth_bytes_per_s",
            "osif_roundtrip_us",
            "delegate_publish_us",
            "sw_dds_intercept_us",
            "sw_dds_us_per_byte",
            "sw_copy_bandwidth_bytes_per_s",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 <= self.jitter_pct < 1:
            raise ValueError(f"jitter_pct must be in [0, 1), got {self.jitter_pct!r}")
        if self.hmt_bandwidth_bytes_per_s < self.memif_bandwidth_bytes_per_s:
            raise ValueError("hmt bandwidth must be at least memif bandwidth")

    def sw_dds_latency_us(self, size_bytes: int) -> float:
        """Software-side delivery latency for one message of this size."""
        return self.sw_dds_intercept_us + self.sw_dds_us_per_byte * size_bytes

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PlatformModel":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ValueError("platform document must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown platform fields: {unknown}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PlatformModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def cost_params_from_platform(platform: PlatformModel):
    """Derive the mapping-time cost model from simulator timing.

    The delegate round trip is one OSIF round trip plus the delegate
    publish; the gateway's fixed overhead doubles that, covering the
    cancellable-read detour on ingest plus the publish-side round trip.
    """
    from .mapping import CostModelParams

    roundtrip = platform.osif_roundtrip_us + platform.delegate_publish_us
    return CostModelParams(
        delegate_roundtrip_us=roundtrip,
        gateway_fixed_overhead_us=2.0 * roundtrip,
        memif_bandwidth_bytes_per_us=platform.memif_bandwidth_bytes_per_s / 1e6,
        hmt_bandwidth_bytes_per_us=platform.hmt_bandwidth_bytes_per_s / 1e6,
        sw_dds_intercept_us=platform.sw_dds_intercept_us,
        sw_dds_us_per_byte=platform.sw_dds_us_per_byte,
    )
