"""Fit platform timing parameters to measured speedup targets.

A target says: on a star topology with this publisher kind, this message
size and this many hardware subscribers, mapping the topic properly
instead of leaving it on the software transport sped the measured side up
by this factor.  Calibration searches platform parameters so that the
simulator reproduces all targets at once, minimizing the sum of squared
log-ratios between simulated and measured speedups.

The search is a plain coordinate descent in log space: multiplicative
probes per parameter, shrinking the step between sweeps.  It is crude but
needs no gradients and the objective (a handful of short deterministic
simulations) is cheap.  Jitter is disabled while fitting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

from .mapping import MappingPolicy
from .platform_model import PlatformModel
from .simulator import cell_times, star_scenario


class TargetError(ValueError):
    pass


@dataclass(frozen=True)
class SpeedupTarget:
    publisher_kind: str  # "hw" | "sw"
    size_bytes: int
    hw_subs: int
    sw_subs: int
    measure: str  # "hw": hw-side fan-out ratio, "sw": sw-side
    speedup: float

    def __post_init__(self):
        if self.publisher_kind not in ("hw", "sw"):
            raise TargetError(f"publisher_kind must be 'hw' or 'sw', got {self.publisher_kind!r}")
        if self.measure not in ("hw", "sw"):
            raise TargetError(f"measure must be 'hw' or 'sw', got {self.measure!r}")
        if not self.speedup > 0:
            raise TargetError(f"speedup must be positive, got {self.speedup!r}")
        if self.measure == "hw" and self.hw_subs < 1:
            raise TargetError("hw-side target needs at least one hardware subscriber")
        if self.measure == "sw" and self.sw_subs < 1:
            raise TargetError("sw-side target needs at least one software subscriber")


def parse_targets(text: str) -> tuple[list[SpeedupTarget], float]:
    """Targets document: {"threshold": rel_err, "targets": [{...}, ...]}."""
    doc = json.loads(text)
    if not isinstance(doc, dict) or "targets" not in doc:
        raise TargetError("targets document must be an object with a 'targets' list")
    threshold = float(doc.get("threshold", 0.25))
    targets = []
    for i, entry in enumerate(doc["targets"]):
        try:
            targets.append(
                SpeedupTarget(
                    publisher_kind=entry["publisher_kind"],
                    size_bytes=int(entry["size_bytes"]),
                    hw_subs=int(entry["hw_subs"]),
                    sw_subs=int(entry.get("sw_subs", 0)),
                    measure=entry["measure"],
                    speedup=float(entry["speedup"]),
                )
            )
        except KeyError as exc:
            raise TargetError(f"targets[{i}]: missing key {exc.args[0]!r}") from None
    if not targets:
        raise TargetError("targets list is empty")
    return targets, threshold


def load_targets(path) -> tuple[list[SpeedupTarget], float]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_targets(fh.read())


# -- simulation of one target ------------------------------------------------


def simulated_speedup(target: SpeedupTarget, platform: PlatformModel, seed: int = 0) -> float:
    """Deterministic (jitter-free) speedup for one target cell."""
    cell = star_scenario(
        target.publisher_kind,
        target.hw_subs,
        target.sw_subs,
        target.size_bytes,
        reps=1,
        period_us=1.0,
        seed=seed,
        jitter_pct=0.0,
    )
    base_hw, base_sw = cell_times(cell, platform, MappingPolicy.ALWAYS_SMT)
    mapped_hw, mapped_sw = cell_times(cell, platform, MappingPolicy.ALWAYS_GW_IF_MULTI_HW_SUB)
    if target.measure == "hw":
        if base_hw is None or mapped_hw is None:
            raise TargetError("target measures the hw side but the cell has no hardware subscribers")
        return base_hw / mapped_hw
    if base_sw is None or mapped_sw is None:
        raise TargetError("target measures the sw side but the cell has no software subscribers")
    return base_sw / mapped_sw


# -- the optimizer ------------------------------------------------------------

TUNABLE = (
    "osif_roundtrip_us",
    "delegate_publish_us",
    "sw_dds_intercept_us",
    "sw_dds_us_per_byte",
    "sw_copy_bandwidth_bytes_per_s",
    "memif_bandwidth_bytes_per_s",
    "hmt_over_memif",
)


def coordinate_descent(
    objective,
    x0: dict[str, float],
    sweeps: int = 4,
    factor: float = 1.4,
    floor: float = 1.02,
) -> tuple[dict[str, float], float]:
    """Minimize ``objective(x)`` by multiplicative coordinate probes.

    Steps shrink geometrically between sweeps and stop at ``floor``.
    Deterministic given a deterministic objective.
    """
    x = dict(x0)
    best = objective(x)
    step = factor
    for _ in range(sweeps):
        for key in x0:
            improved = True
            while improved:
                improved = False
                for mult in (step, 1.0 / step):
                    trial = dict(x)
                    trial[key] = x[key] * mult
                    value = objective(trial)
                    if value < best - 1e-15:
                        x, best = trial, value
                        improved = True
                        break
        step = max(floor, math.sqrt(step))
        if step <= floor:
            break
    return x, best


def _vector_from_platform(platform: PlatformModel) -> dict[str, float]:
    return {
        "osif_roundtrip_us": platform.osif_roundtrip_us,
        "delegate_publish_us": platform.delegate_publish_us,
        "sw_dds_intercept_us": platform.sw_dds_intercept_us,
        "sw_dds_us_per_byte": platform.sw_dds_us_per_byte,
        "sw_copy_bandwidth_bytes_per_s": platform.sw_copy_bandwidth_bytes_per_s,
        "memif_bandwidth_bytes_per_s": platform.memif_bandwidth_bytes_per_s,
        "hmt_over_memif": platform.hmt_bandwidth_bytes_per_s / platform.memif_bandwidth_bytes_per_s,
    }


def _platform_from_vector(vec: dict[str, float], jitter_pct: float) -> PlatformModel:
    ratio = max(1.0, vec["hmt_over_memif"])  # HMT never slower than MEMIF
    return PlatformModel(
        memif_bandwidth_bytes_per_s=vec["memif_bandwidth_bytes_per_s"],
        hmt_bandwidth_bytes_per_s=vec["memif_bandwidth_bytes_per_s"] * ratio,
        osif_roundtrip_us=vec["osif_roundtrip_us"],
        delegate_publish_us=vec["delegate_publish_us"],
        sw_dds_intercept_us=vec["sw_dds_intercept_us"],
        sw_dds_us_per_byte=vec["sw_dds_us_per_byte"],
        sw_copy_bandwidth_bytes_per_s=vec["sw_copy_bandwidth_bytes_per_s"],
        jitter_pct=jitter_pct,
    )


@dataclass(frozen=True)
class CalibrationResult:
    platform: PlatformModel
    residuals: tuple[dict, ...]
    objective_value: float
    threshold: float
    ok: bool


def calibrate(
    targets: list[SpeedupTarget],
    threshold: float = 0.25,
    platform0: PlatformModel | None = None,
    seed: int = 0,
    sweeps: int = 3,
) -> CalibrationResult:
    """Fit the tunable platform parameters to the targets."""
    start = platform0 if platform0 is not None else PlatformModel()

    def objective(vec: dict[str, float]) -> float:
        try:
            platform = _platform_from_vector(vec, jitter_pct=0.0)
        except ValueError:
            return math.inf
        total = 0.0
        for t in targets:
            sim = simulated_speedup(t, platform, seed=seed)
            if sim <= 0:
                return math.inf
            total += math.log(sim / t.speedup) ** 2
        return total

    best_vec, best_value = coordinate_descent(objective, _vector_from_platform(start), sweeps=sweeps)
    fitted = _platform_from_vector(best_vec, jitter_pct=start.jitter_pct)

    residuals = []
    all_ok = True
    for t in targets:
        sim = simulated_speedup(t, fitted, seed=seed)
        rel = sim / t.speedup - 1.0
        ok = abs(rel) <= threshold
        all_ok = all_ok and ok
        residuals.append(
            {
                "publisher_kind": t.publisher_kind,
                "size_bytes": t.size_bytes,
                "hw_subs": t.hw_subs,
                "sw_subs": t.sw_subs,
                "measure": t.measure,
                "target_speedup": t.speedup,
                "simulated_speedup": sim,
                "rel_error": rel,
                "ok": ok,
            }
        )
    return CalibrationResult(
        platform=fitted,
        residuals=tuple(residuals),
        objective_value=best_value,
        threshold=threshold,
        ok=all_ok,
    )


def result_to_json(result: CalibrationResult) -> str:
    doc = {
        "platform": asdict(result.platform),
        "residuals": list(result.residuals),
        "objective_value": result.objective_value,
        "threshold": result.threshold,
        "ok": result.ok,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
