"""Invert fitted forward models for the QP that meets a constraint.

Newton's method on f(q) = ln_poly(q) - ln(target) starting from the codec's
default QP (27 for x265/VP9, 30 for AV1-style codecs), mode-aware integer
rounding, soft-violation checking, and a +/-4 local search when the rounded
solution fails its constraint check.

Constraint bounds pass when the prediction stays within a relative
tolerance band of the bound: by default 10% for bitrate, 10% for encoding
rate, 5% for quality.  The bands absorb forward-model prediction error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .models import RdModel, predict

DEFAULT_NEWTON_START = 27.0
NEWTON_MAX_ITER = 50

MODES = ("max_quality", "min_bitrate", "max_enc_rate", "min_enc_time")

# bound name -> (objective key, kind); "quality" resolves via quality_metric
_BOUND_SPECS = {
    "max_bitrate_kbps": ("bits", "upper"),
    "min_quality": ("quality", "lower"),
    "min_fps": ("enc_rate", "lower"),
    "max_time_s": ("enc_time", "upper"),
}

class SolverError(ValueError):
    pass


class TargetUnreachableError(SolverError):
    """No in-range root; carries the grid boundary closest to the target."""

    def __init__(self, message: str, boundary_qp: float):
        super().__init__(message)
        self.boundary_qp = boundary_qp


@dataclass(frozen=True, slots=True)
class ConstraintSet:
    """A DRASTIC mode plus bounds and soft-violation tolerances."""

    mode: str
    max_bitrate_kbps: float | None = None
    min_quality: float | None = None
    min_fps: float | None = None
    max_time_s: float | None = None
    quality_metric: str = "psnr"  # psnr | vmaf | ssim
    tol_bitrate: float = 0.10
    tol_fps: float = 0.10
    tol_quality: float = 0.05

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise SolverError(f"unknown mode {self.mode!r}")
        if self.quality_metric not in ("psnr", "vmaf", "ssim"):
            raise SolverError(f"unknown quality metric {self.quality_metric!r}")
        for tol in (self.tol_bitrate, self.tol_fps, self.tol_quality):
            if not 0.0 <= tol <= 0.5:
                raise SolverError("tolerances must be within [0, 0.5]")
        if not any(
            v is not None
            for v in (self.max_bitrate_kbps, self.min_quality, self.min_fps, self.max_time_s)
        ):
            raise SolverError("at least one bound must be set")

    def bounds(self) -> dict[str, float]:
        out = {}
        for name in _BOUND_SPECS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    def without_tolerances(self) -> "ConstraintSet":
        return replace(self, tol_bitrate=0.0, tol_fps=0.0, tol_quality=0.0)

    def objective_for(self, bound_name: str) -> str:
        obj = _BOUND_SPECS[bound_name][0]
        return self.quality_metric if obj == "quality" else obj

    def tolerance_for(self, bound_name: str) -> float:
        return {
            "max_bitrate_kbps": self.tol_bitrate,
            "min_quality": self.tol_quality,
            "min_fps": self.tol_fps,
            "max_time_s": self.tol_fps,
        }[bound_name]


def make_mode(mode_name: str, bounds: Mapping[str, float], **tolerances: float) -> ConstraintSet:
    """Validated constraint set for a named mode.

    The optimized objective must not be bounded; the two opposing
    objectives must be (time/rate may be bounded through either min_fps or
    max_time_s).
    """
    cs = ConstraintSet(mode=mode_name, **bounds, **tolerances)
    if mode_name == "max_quality":
        if cs.min_quality is not None:
            raise SolverError("max_quality must not bound quality")
        if cs.max_bitrate_kbps is None or (cs.min_fps is None and cs.max_time_s is None):
            raise SolverError("max_quality requires max_bitrate_kbps and min_fps (or max_time_s)")
    elif mode_name == "min_bitrate":
        if cs.max_bitrate_kbps is not None:
            raise SolverError("min_bitrate must not bound bitrate")
        if cs.min_quality is None or (cs.min_fps is None and cs.max_time_s is None):
            raise SolverError("min_bitrate requires min_quality and min_fps (or max_time_s)")
    else:  # rate/time modes
        if cs.min_fps is not None or cs.max_time_s is not None:
            raise SolverError(f"{mode_name} must not bound encoding rate/time")
        if cs.min_quality is None or cs.max_bitrate_kbps is None:
            raise SolverError(f"{mode_name} requires min_quality and max_bitrate_kbps")
    return cs


def check_constraints(
    predicted: Mapping[str, float], constraints: ConstraintSet
) -> tuple[bool, dict[str, float]]:
    """Tolerance-band check of every bound; violations report overshoot.

    Overshoot is relative to the bound itself (value/bound - 1 for upper
    bounds, 1 - value/bound for lower bounds) and is reported only for
    bounds that fall outside their tolerance band.
    """
    violations: dict[str, float] = {}
    for name, bound in constraints.bounds().items():
        kind = _BOUND_SPECS[name][1]
        key = constraints.objective_for(name)
        if key == constraints.quality_metric and key not in predicted and "quality" in predicted:
            key = "quality"
        if key not in predicted:
            raise SolverError(f"missing prediction for bounded objective {key!r}")
        value = predicted[key]
        tol = constraints.tolerance_for(name)
        if kind == "upper":
            if value > bound * (1.0 + tol):
                violations[name] = value / bound - 1.0
        else:
            if value < bound * (1.0 - tol):
                violations[name] = 1.0 - value / bound
    return (not violations), violations


def newton_solve(
    model: RdModel,
    target: float,
    *,
    start: float = DEFAULT_NEWTON_START,
    max_iter: int = NEWTON_MAX_ITER,
) -> float:
    """QP at which the model predicts ``target``, by Newton iteration.

    Iterates q <- q - f(q)/f'(q) from the configured start until the
    iterate has numerically converged (which subsumes the
    rounded-QP-unchanged stopping rule) or ``max_iter`` is reached.  A zero
    derivative at an iterate is perturbed by +0.5.  When the iteration does
    not land on an in-range root, the polynomial's real roots are examined
    directly; with several in-range roots the one nearest the start is
    returned.  No in-range root raises ``TargetUnreachableError`` carrying
    the nearest boundary QP.
    """
    if model.order < 1:
        raise SolverError("model order must be >= 1")
    if target <= 0.0:
        raise SolverError("target must be positive")
    log_target = math.log(target)

    q = min(max(start, model.qp_min), model.qp_max)
    converged = False
    for _ in range(max_iter):
        f = model.log_value(q) - log_target
        fp = model.log_slope(q)
        if fp == 0.0:
            q += 0.5
            continue
        q_next = q - f / fp
        if abs(q_next - q) < 1e-12 and round(q_next) == round(q):
            q = q_next
            converged = True
            break
        q = q_next

    if converged and model.in_range(q):
        return float(q)

    # Newton left the range or chased an out-of-range root: inspect all roots.
    poly = np.array(model.coefficients, dtype=np.float64)
    poly[0] -= log_target
    roots = np.polynomial.polynomial.polyroots(poly)
    real = [float(r.real) for r in roots if abs(r.imag) < 1e-9]
    in_range = [r for r in real if model.in_range(r)]
    if in_range:
        best = min(in_range, key=lambda r: (abs(r - start), r))
        return float(_polish(model, best, log_target))

    lo, hi = model.qp_min, model.qp_max
    boundary = min((lo, hi), key=lambda b: abs(model.log_value(b) - log_target))
    raise TargetUnreachableError(
        f"target unreachable within QP range [{lo}, {hi}]", boundary_qp=float(boundary)
    )


def _polish(model: RdModel, q: float, log_target: float) -> float:
    for _ in range(8):
        fp = model.log_slope(q)
        if fp == 0.0:
            break
        step = (model.log_value(q) - log_target) / fp
        q -= step
        if abs(step) < 1e-13:
            break
    return q


def round_qp(qp_real: float, mode: str, *, rate_increases_with_qp: bool = True) -> int:
    """Mode-aware integer rounding of a solved QP.

    Maximum-quality rounds toward higher quality (down, since quality falls
    with QP); minimum-bitrate rounds toward lower bitrate (up, since bits
    fall with QP); rate/time modes round toward faster encodes.  Exact
    integers pass through unchanged.
    """
    if mode not in MODES:
        raise SolverError(f"unknown mode {mode!r}")
    nearest = round(qp_real)
    if abs(qp_real - nearest) < 1e-9:
        return int(nearest)
    if mode == "max_quality":
        return int(math.floor(qp_real))
    if mode == "min_bitrate":
        return int(math.ceil(qp_real))
    return int(math.ceil(qp_real) if rate_increases_with_qp else math.floor(qp_real))


@dataclass(frozen=True, slots=True)
class QpSolution:
    qp_real: float
    qp_int: int
    predicted: dict[str, float]
    satisfied: bool
    violations: dict[str, float]
    extrapolated: bool = False


_MODE_SORT = {
    "max_quality": lambda pred, metric: -pred[metric],
    "min_bitrate": lambda pred, metric: pred["bits"],
    "max_enc_rate": lambda pred, metric: -pred["enc_rate"],
    "min_enc_time": lambda pred, metric: -pred["enc_rate"],
}


def predict_objectives(
    models: Mapping[str, RdModel], qp: float, *, segment_frames: int | None = None
) -> dict[str, float]:
    pred = {name: predict(model, qp) for name, model in models.items()}
    if segment_frames is not None and "enc_rate" in pred:
        pred["enc_time"] = segment_frames / pred["enc_rate"]
    return pred


def _evaluate(
    qp: int,
    models: Mapping[str, RdModel],
    constraints: ConstraintSet,
    segment_frames: int | None,
) -> tuple[dict[str, float], bool, dict[str, float]]:
    pred = predict_objectives(models, qp, segment_frames=segment_frames)
    satisfied, violations = check_constraints(pred, constraints)
    return pred, satisfied, violations


def _candidate_sort_key(
    qp: int, pred: Mapping[str, float], constraints: ConstraintSet
) -> tuple[float, float, int]:
    metric = constraints.quality_metric
    return (_MODE_SORT[constraints.mode](pred, metric), pred.get("bits", 0.0), qp)


def local_search(
    center_qp: int,
    models: Mapping[str, RdModel],
    constraints: ConstraintSet,
    *,
    qp_bounds: tuple[int, int],
    radius: int = 4,
    segment_frames: int | None = None,
) -> QpSolution:
    """Evaluate integer QPs in [center-4, center+4] within the grid.

    Constraint-satisfying candidates compete on the mode objective (ties:
    lower bitrate, then lower QP); when none satisfies, the least-violation
    candidate is returned flagged unsatisfied.
    """
    lo = max(center_qp - radius, qp_bounds[0])
    hi = min(center_qp + radius, qp_bounds[1])
    best_ok: tuple[tuple, QpSolution] | None = None
    best_bad: tuple[tuple, QpSolution] | None = None
    for qp in range(lo, hi + 1):
        pred, satisfied, violations = _evaluate(qp, models, constraints, segment_frames)
        sol = QpSolution(float(center_qp), qp, pred, satisfied, violations)
        if satisfied:
            key = _candidate_sort_key(qp, pred, constraints)
            if best_ok is None or key < best_ok[0]:
                best_ok = (key, sol)
        else:
            key = (sum(violations.values()), pred.get("bits", 0.0), qp)
            if best_bad is None or key < best_bad[0]:
                best_bad = (key, sol)
    if best_ok is not None:
        return best_ok[1]
    assert best_bad is not None
    return best_bad[1]


def _bound_holds_everywhere(
    model: RdModel, bound: float, kind: str, lo: float, hi: float
) -> bool:
    """Does the bound hold across the whole QP range (so it never binds)?"""
    points = [lo, hi]
    if model.order == 2 and model.coefficients[2] != 0.0:
        vertex = -model.coefficients[1] / (2.0 * model.coefficients[2])
        if lo < vertex < hi:
            points.append(vertex)
    elif model.order == 3:
        points.extend(np.linspace(lo, hi, 9)[1:-1])
    values = [predict(model, p) for p in points]
    if kind == "upper":
        return max(values) <= bound
    return min(values) >= bound


def solve_constrained(
    models: Mapping[str, RdModel],
    constraints: ConstraintSet,
    *,
    qp_bounds: tuple[int, int],
    start: float = DEFAULT_NEWTON_START,
    segment_frames: int | None = None,
) -> QpSolution:
    """Full pipeline: invert each binding bound, round, check, local-search.

    Candidate QPs come from inverting every bounded objective's model (the
    mode's dominant bound first).  Bounds that hold across the whole range
    contribute no candidate; bounds violated across the whole range
    contribute the least-violating boundary.  The best feasible candidate
    on the mode objective wins; if none is feasible a +/-4 local search
    around the dominant candidate decides.
    """
    dominant = {
        "max_quality": "max_bitrate_kbps",
        "min_bitrate": "min_quality",
        "max_enc_rate": "min_quality",
        "min_enc_time": "min_quality",
    }[constraints.mode]
    bound_names = list(constraints.bounds())
    bound_names.sort(key=lambda nm: (nm != dominant))

    qp_reals: list[float] = []
    for name in bound_names:
        objective = constraints.objective_for(name)
        bound = constraints.bounds()[name]
        kind = _BOUND_SPECS[name][1]
        if name == "max_time_s":
            if segment_frames is None:
                raise SolverError("max_time_s bound needs the segment frame count")
            objective, bound = "enc_rate", segment_frames / bound
            kind = "lower"
        model = models.get(objective)
        if model is None:
            raise SolverError(f"no model for bounded objective {objective!r}")
        try:
            qp_reals.append(newton_solve(model, bound, start=start))
        except TargetUnreachableError as exc:
            if not _bound_holds_everywhere(model, bound, kind, model.qp_min, model.qp_max):
                qp_reals.append(exc.boundary_qp)

    if not qp_reals:
        # every bound slack everywhere: optimize the mode objective freely
        qp_reals.append(start)

    candidates: list[int] = []
    for qr in qp_reals:
        qi = round_qp(qr, constraints.mode)
        qi = min(max(qi, qp_bounds[0]), qp_bounds[1])
        if qi not in candidates:
            candidates.append(qi)

    best: tuple[tuple, QpSolution] | None = None
    for qi in candidates:
        pred, satisfied, violations = _evaluate(qi, models, constraints, segment_frames)
        if satisfied:
            key = _candidate_sort_key(qi, pred, constraints)
            sol = QpSolution(qp_reals[0], qi, pred, True, violations)
            if best is None or key < best[0]:
                best = (key, sol)
    if best is not None:
        return best[1]

    searched = local_search(
        candidates[0],
        models,
        constraints,
        qp_bounds=qp_bounds,
        segment_frames=segment_frames,
    )
    return replace(searched, qp_real=qp_reals[0])
