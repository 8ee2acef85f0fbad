"""Three-objective Pareto dominance, front extraction, mode selection.

Objectives are canonical-minimization internally: quality is maximized,
bitrate and encoding cost are minimized.  Encoding cost is either seconds
of encoding time or 1/fps, so the same dominance routine serves both the
time-oriented and the rate-oriented formulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .solver import ConstraintSet, check_constraints


@dataclass(frozen=True, slots=True)
class ObjectivePoint:
    quality: float  # maximize
    bitrate: float  # minimize
    enc_cost: float  # minimize: seconds, or 1/fps in rate orientation

    def __post_init__(self) -> None:
        for v in (self.quality, self.bitrate, self.enc_cost):
            if not np.isfinite(v):
                raise ValueError("objective values must be finite")

    @classmethod
    def from_enc_rate(cls, quality: float, bitrate: float, enc_rate: float) -> "ObjectivePoint":
        return cls(quality, bitrate, 1.0 / enc_rate)

    @property
    def enc_rate(self) -> float:
        return 1.0 / self.enc_cost


def dominates(a: ObjectivePoint, b: ObjectivePoint) -> bool:
    """a at least as good everywhere and strictly better somewhere."""
    if a.quality < b.quality or a.bitrate > b.bitrate or a.enc_cost > b.enc_cost:
        return False
    return a.quality > b.quality or a.bitrate < b.bitrate or a.enc_cost < b.enc_cost


@dataclass(frozen=True, slots=True)
class ParetoFront:
    entries: tuple[tuple[Any, ObjectivePoint], ...]
    cost_kind: str = "rate"  # "rate" (1/fps) or "time" (seconds)


def pareto_indices(points: Sequence[tuple[Any, ObjectivePoint]]) -> list[int]:
    """Indices of the non-dominated points, ascending.

    Skyline sweep: points are processed by descending quality, so every
    potential dominator of a point has already been accepted when the point
    is examined.
    """
    if not points:
        raise ValueError("empty input: cannot build a Pareto front")
    n = len(points)
    q = np.array([p[1].quality for p in points])
    b = np.array([p[1].bitrate for p in points])
    c = np.array([p[1].enc_cost for p in points])
    order = np.lexsort((c, b, -q))

    fq = np.empty(n)
    fb = np.empty(n)
    fc = np.empty(n)
    m = 0
    keep: list[int] = []
    for idx in order:
        if m:
            dominated = np.any(
                (fb[:m] <= b[idx])
                & (fc[:m] <= c[idx])
                & ((fq[:m] > q[idx]) | (fb[:m] < b[idx]) | (fc[:m] < c[idx]))
            )
            if dominated:
                continue
        fq[m] = q[idx]
        fb[m] = b[idx]
        fc[m] = c[idx]
        m += 1
        keep.append(int(idx))
    keep.sort()
    return keep


def pareto_front(
    points: Sequence[tuple[Any, ObjectivePoint]], *, cost_kind: str = "rate"
) -> ParetoFront:
    """Exactly the non-dominated subset; equal objective vectors coexist."""
    keep = pareto_indices(points)
    return ParetoFront(tuple(points[i] for i in keep), cost_kind=cost_kind)


def _entry_predictions(point: ObjectivePoint, cost_kind: str) -> dict[str, float]:
    pred = {"quality": point.quality, "bits": point.bitrate}
    if cost_kind == "time":
        pred["enc_time"] = point.enc_cost
    else:
        pred["enc_rate"] = point.enc_rate
    return pred


_MODE_KEY: dict[str, Callable[[ObjectivePoint], float]] = {
    "max_quality": lambda p: -p.quality,
    "min_bitrate": lambda p: p.bitrate,
    "max_enc_rate": lambda p: p.enc_cost,
    "min_enc_time": lambda p: p.enc_cost,
}


def select_mode_optimal(
    front: ParetoFront, mode: str, constraints: ConstraintSet
) -> tuple[Any, ObjectivePoint]:
    """Best feasible entry for the mode; least-violation fallback otherwise.

    Feasibility uses the constraint set as given (including its tolerance
    bands; pass a zero-tolerance set for hard bounds).  Ties break toward
    lower bitrate, then lower QP, then input order.
    """
    if not front.entries:
        raise ValueError("empty front")
    if mode not in _MODE_KEY:
        raise ValueError(f"unknown mode {mode!r}")
    objective = _MODE_KEY[mode]

    feasible: list[tuple[int, Any, ObjectivePoint]] = []
    fallback: tuple[float, int] | None = None
    fallback_entry: tuple[Any, ObjectivePoint] | None = None
    for i, (config, point) in enumerate(front.entries):
        satisfied, violations = check_constraints(
            _entry_predictions(point, front.cost_kind), constraints
        )
        if satisfied:
            feasible.append((i, config, point))
        else:
            total = sum(violations.values())
            if fallback is None or (total, i) < fallback:
                fallback = (total, i)
                fallback_entry = (config, point)

    if not feasible:
        assert fallback_entry is not None
        return fallback_entry

    def sort_key(item: tuple[int, Any, ObjectivePoint]):
        i, config, point = item
        qp = getattr(config, "qp", 0)
        return (objective(point), point.bitrate, qp, i)

    _, config, point = min(feasible, key=sort_key)
    return config, point


def front_flags(points: Sequence[tuple[Any, ObjectivePoint]]) -> list[bool]:
    """Per-input marker: True when the point is a member of the front."""
    flags = [False] * len(points)
    for i in pareto_indices(points):
        flags[i] = True
    return flags
