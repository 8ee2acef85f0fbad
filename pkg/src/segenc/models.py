"""Forward rate-quality-speed models: ln(objective) as a polynomial in QP.

One model is fit per (GOP, filter setting, objective) group.  The natural
log of the measured objective is regressed on {1, QP, ..., QP^order} by
least squares; the order is either fixed or chosen automatically as the
lowest one whose adjusted R^2 reaches 0.9 (order 3 flagged low-confidence
when none does).

QP is centered at the grid midpoint internally to keep the Vandermonde
design well conditioned over QP in [16, 52]; reported coefficients are
re-expanded to the plain uncentered convention, so

    predict(model, qp) == exp(c0 + c1*qp + c2*qp^2 + ...)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

ADJ_R2_THRESHOLD = 0.9

OBJECTIVES = ("psnr", "vmaf", "bits", "enc_rate")


class FitError(ValueError):
    """Samples that cannot produce a valid log-polynomial fit."""


@dataclass(frozen=True, slots=True)
class FitDiagnostics:
    adjusted_r2: float
    residual_max: float
    p_values: tuple[float, ...]


@dataclass(frozen=True, slots=True)
class RdModel:
    """ln(objective) = coefficients[0] + sum_i coefficients[i] * qp**i."""

    coefficients: tuple[float, ...]
    qp_min: float
    qp_max: float
    diagnostics: FitDiagnostics
    objective: str | None = None
    gop: str | None = None
    filters: tuple[tuple[str, bool], ...] | None = None
    low_confidence: bool = False

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    @property
    def adjusted_r2(self) -> float:
        return self.diagnostics.adjusted_r2

    def log_value(self, qp: float) -> float:
        acc = 0.0
        for c in reversed(self.coefficients):
            acc = acc * qp + c
        return acc

    def log_slope(self, qp: float) -> float:
        acc = 0.0
        for i in range(self.order, 0, -1):
            acc = acc * qp + i * self.coefficients[i]
        return acc

    def in_range(self, qp: float) -> bool:
        return self.qp_min - 1e-9 <= qp <= self.qp_max + 1e-9

    def to_record(self) -> dict:
        return {
            "objective": self.objective,
            "gop": self.gop,
            "filters": dict(self.filters) if self.filters is not None else None,
            "order": self.order,
            "coefficients": list(self.coefficients),
            "adjusted_r2": self.adjusted_r2,
            "qp_min": self.qp_min,
            "qp_max": self.qp_max,
            "low_confidence": self.low_confidence,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RdModel":
        filters = rec.get("filters")
        return cls(
            coefficients=tuple(rec["coefficients"]),
            qp_min=rec["qp_min"],
            qp_max=rec["qp_max"],
            diagnostics=FitDiagnostics(rec.get("adjusted_r2", float("nan")), 0.0, ()),
            objective=rec.get("objective"),
            gop=rec.get("gop"),
            filters=tuple(sorted(filters.items())) if filters else None,
            low_confidence=bool(rec.get("low_confidence", False)),
        )


def _shift_coefficients(centered: np.ndarray, mid: float) -> np.ndarray:
    """Re-expand a polynomial in (qp - mid) to plain powers of qp."""
    poly = np.polynomial.Polynomial(centered)
    shifted = poly(np.polynomial.Polynomial([-mid, 1.0]))
    coef = shifted.coef
    if len(coef) < len(centered):
        coef = np.pad(coef, (0, len(centered) - len(coef)))
    return coef


def _prepare(samples: Iterable[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    pairs = list(samples)
    if not pairs:
        raise FitError("degenerate data: no samples")
    qp = np.asarray([p[0] for p in pairs], dtype=np.float64)
    values = np.asarray([p[1] for p in pairs], dtype=np.float64)
    if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise FitError("log undefined: objective values must be positive")
    return qp, values


def fit_log_poly(
    samples: Iterable[tuple[float, float]],
    order: int,
    *,
    objective: str | None = None,
    gop: str | None = None,
    filters: tuple[tuple[str, bool], ...] | None = None,
) -> RdModel:
    """Least-squares fit of ln(value) on {1, QP, ..., QP^order}.

    Requires order in {1, 2, 3}, at least order+1 distinct QP values (the
    minimal case is an exact interpolation), positive values, and a
    non-constant response.
    """
    if order not in (1, 2, 3):
        raise FitError(f"order must be 1, 2 or 3, got {order}")
    qp, values = _prepare(samples)
    y = np.log(values)
    distinct = np.unique(qp)
    if distinct.size < order + 1:
        raise FitError(
            f"rank-deficient design: need at least {order + 1} distinct QPs, got {distinct.size}"
        )
    if np.ptp(y) == 0.0:
        raise FitError("degenerate data: zero response variance")

    mid = (qp.min() + qp.max()) / 2.0
    qc = qp - mid
    design = np.vander(qc, order + 1, increasing=True)
    centered, *_ = np.linalg.lstsq(design, y, rcond=None)
    coeffs = _shift_coefficients(centered, mid)

    fitted = design @ centered
    residuals = y - fitted
    ss_res = float(residuals @ residuals)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    n = qp.size
    dof = n - order - 1
    adjusted = 1.0 - (1.0 - r2) * (n - 1) / dof if dof >= 1 else r2

    p_values = _coefficient_p_values(qp, y, coeffs, ss_res, dof)
    diag = FitDiagnostics(
        adjusted_r2=adjusted,
        residual_max=float(np.max(np.abs(residuals))),
        p_values=p_values,
    )
    return RdModel(
        coefficients=tuple(float(c) for c in coeffs),
        qp_min=float(qp.min()),
        qp_max=float(qp.max()),
        diagnostics=diag,
        objective=objective,
        gop=gop,
        filters=filters,
    )


def _coefficient_p_values(
    qp: np.ndarray, y: np.ndarray, coeffs: np.ndarray, ss_res: float, dof: int
) -> tuple[float, ...]:
    """Two-sided t-test p-values for each coefficient (uncentered basis)."""
    order = len(coeffs) - 1
    design = np.vander(qp, order + 1, increasing=True)
    if dof < 1:
        return tuple(float("nan") for _ in coeffs)
    sigma2 = ss_res / dof
    cov = np.linalg.pinv(design.T @ design) * sigma2
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    out = []
    for c, s in zip(coeffs, se):
        if s == 0.0:
            out.append(0.0 if c != 0.0 else 1.0)
        else:
            t = abs(c) / s
            out.append(float(2.0 * stats.t.sf(t, dof)))
    return tuple(out)


def select_order(
    samples: Iterable[tuple[float, float]],
    *,
    threshold: float = ADJ_R2_THRESHOLD,
    objective: str | None = None,
    gop: str | None = None,
    filters: tuple[tuple[str, bool], ...] | None = None,
) -> RdModel:
    """Lowest order in {1, 2, 3} whose adjusted R^2 reaches the threshold.

    When no order reaches it, the highest feasible order is returned with
    ``low_confidence`` set rather than rejected: fits with adjusted R^2
    slightly below the threshold are still usable in practice.
    """
    pairs = list(samples)
    qp, _ = _prepare(pairs)
    distinct = np.unique(qp).size
    feasible = [o for o in (1, 2, 3) if distinct >= o + 1]
    if not feasible:
        raise FitError("rank-deficient design: need at least 2 distinct QPs")
    last: RdModel | None = None
    for order in feasible:
        model = fit_log_poly(pairs, order, objective=objective, gop=gop, filters=filters)
        if model.adjusted_r2 >= threshold:
            return model
        last = model
    assert last is not None
    return replace(last, low_confidence=True)


def predict(model: RdModel, qp: float) -> float:
    """exp of the fitted log-polynomial at qp."""
    return float(np.exp(model.log_value(qp)))


def predict_flagged(model: RdModel, qp: float) -> tuple[float, bool]:
    """Prediction plus an extrapolation flag when qp leaves the training range."""
    return predict(model, qp), not model.in_range(qp)


def export_models(models: Sequence[RdModel]) -> list[dict]:
    return [m.to_record() for m in models]
