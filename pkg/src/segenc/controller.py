"""Segment-adaptive encoding loop.

The first segment is swept exhaustively over the codec grid; per-GOP,
per-filter forward models are fit from its Pareto front.  Every later
segment costs exactly one real encode: the constrained inverse solve picks
(GOP, filter flags, QP), the segment is encoded once, the outcome is
logged, and the chosen group's models are refreshed with the new sample.

GOP/filter selection (the grouping rule): every fitted group solves the
same constrained problem; the group whose solution achieves the best mode
objective among constraint-satisfying groups wins, ties breaking toward
lower predicted bitrate, then the structurally simpler GOP.  Chosen QPs are
additionally kept within +/-4 of the previous segment's QP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .encoders import Encoder, EncoderError, EncodingConfig, Filters, SegmentMeasurement
from .media import Segment
from .models import RdModel, fit_log_poly, select_order
from .pareto import ObjectivePoint, ParetoFront, pareto_front, select_mode_optimal
from .solver import (
    ConstraintSet,
    QpSolution,
    check_constraints,
    predict_objectives,
    solve_constrained,
)

GroupKey = tuple[str, Filters]  # (gop, filter flags)

FIT_OBJECTIVES = ("psnr", "vmaf", "bits", "enc_rate")


class ControllerError(RuntimeError):
    pass


@dataclass(slots=True)
class DecisionRecord:
    segment_index: int
    config: EncodingConfig
    predicted: dict[str, float]
    measured: SegmentMeasurement | None
    satisfied: bool
    violations: dict[str, float]
    gop_switched: bool = False
    qp_clamped: bool = False
    failed: bool = False

    def to_record(self) -> dict:
        c = self.config
        return {
            "segment": self.segment_index,
            "codec": c.codec,
            "gop": c.gop,
            "gop_type": c.gop_type,
            "qp": c.qp,
            "filters": dict(c.filters),
            "predicted": self.predicted,
            "measured": None
            if self.measured is None
            else {
                "bitrate_kbps": self.measured.bitrate,
                "psnr_db": self.measured.quality_psnr,
                "vmaf": self.measured.quality_vmaf,
                "fps": self.measured.enc_rate,
                "enc_time_s": self.measured.enc_time,
            },
            "satisfied": self.satisfied,
            "violations": self.violations,
            "gop_switched": self.gop_switched,
            "qp_clamped": self.qp_clamped,
            "failed": self.failed,
        }


@dataclass(slots=True)
class ControllerState:
    constraints: ConstraintSet
    models: dict[GroupKey, dict[str, RdModel]] = field(default_factory=dict)
    samples: dict[GroupKey, dict[str, list[tuple[int, float]]]] = field(default_factory=dict)
    history: list[DecisionRecord] = field(default_factory=list)
    front: ParetoFront | None = None
    sweep: list[SegmentMeasurement] = field(default_factory=list)


def _quality_value(m: SegmentMeasurement, metric: str) -> float:
    return m.objective({"psnr": "psnr", "vmaf": "vmaf", "ssim": "ssim"}[metric])


def _objectives_for(measurements: Sequence[SegmentMeasurement]) -> tuple[str, ...]:
    objectives = ["psnr", "bits", "enc_rate"]
    if all(m.quality_vmaf is not None for m in measurements):
        objectives.insert(1, "vmaf")
    if all(m.quality_ssim is not None for m in measurements):
        objectives.append("ssim")
    return tuple(objectives)


def _fit_group(
    samples: Mapping[str, list[tuple[int, float]]],
    gop: str,
    filters: Filters,
    fit_order: int | str,
) -> dict[str, RdModel]:
    fitted = {}
    for objective, pairs in samples.items():
        if fit_order == "auto":
            fitted[objective] = select_order(pairs, objective=objective, gop=gop, filters=filters)
        else:
            fitted[objective] = fit_log_poly(
                pairs, int(fit_order), objective=objective, gop=gop, filters=filters
            )
    return fitted


def bootstrap(
    encoder: Encoder,
    first_segment: Segment,
    constraints: ConstraintSet,
    *,
    fit_order: int | str = 2,
) -> ControllerState:
    """Exhaustive sweep of segment 0, Pareto front, per-group model fits.

    Groups whose Pareto share is too small to fit fall back to all sweep
    samples of that group.  The segment itself is credited with its
    mode-optimal front entry, checked against hard (zero-tolerance) bounds
    since measured values carry no prediction error.
    """
    sweep = [encoder.encode(cfg, first_segment) for cfg in encoder.configs()]
    if not sweep:
        raise ControllerError("insufficient data: empty sweep")
    objectives = _objectives_for(sweep)
    metric = constraints.quality_metric
    if metric not in objectives:
        raise ControllerError(
            f"constraint metric {metric!r} is not measured by this encoder"
        )

    points = [
        (m, ObjectivePoint.from_enc_rate(_quality_value(m, metric), m.bitrate, m.enc_rate))
        for m in sweep
    ]
    front = pareto_front(points, cost_kind="rate")

    by_group_front: dict[GroupKey, list[SegmentMeasurement]] = {}
    for m, _ in front.entries:
        by_group_front.setdefault((m.config.gop, m.config.filters), []).append(m)
    by_group_all: dict[GroupKey, list[SegmentMeasurement]] = {}
    for m in sweep:
        by_group_all.setdefault((m.config.gop, m.config.filters), []).append(m)

    min_order = 2 if fit_order == "auto" else int(fit_order)
    state = ControllerState(constraints=constraints, front=front, sweep=sweep)
    for key, members in by_group_all.items():
        chosen = by_group_front.get(key, [])
        if len({m.config.qp for m in chosen}) < min_order + 1:
            chosen = members
        samples = {
            obj: [(m.config.qp, m.objective(obj)) for m in chosen] for obj in objectives
        }
        try:
            state.models[key] = _fit_group(samples, key[0], key[1], fit_order)
        except ValueError:
            continue
        state.samples[key] = samples
    if not state.models:
        raise ControllerError("insufficient data: no group had enough samples to fit")

    chosen_m, _ = select_mode_optimal(
        front, constraints.mode, constraints.without_tolerances()
    )
    predicted = {
        obj: chosen_m.objective(obj) for obj in objectives
    }
    satisfied, violations = check_constraints(
        {**predicted, "enc_time": chosen_m.enc_time}, constraints
    )
    state.history.append(
        DecisionRecord(
            segment_index=first_segment.index,
            config=chosen_m.config,
            predicted=predicted,
            measured=chosen_m,
            satisfied=satisfied,
            violations=violations,
        )
    )
    return state


def choose_gop_model(
    state: ControllerState,
    constraints: ConstraintSet,
    *,
    grid_bounds: tuple[int, int],
    gop_rank: Callable[[str], int],
    newton_start: float,
    segment_frames: int | None = None,
) -> tuple[GroupKey, dict[str, RdModel], QpSolution]:
    """Solve every fitted group; best feasible mode objective wins.

    Ties break toward lower predicted bitrate, then the simpler GOP (rank
    in the codec's structure list), then the filter flags.  When no group
    satisfies the constraints the least-violation group is returned.
    """
    if not state.models:
        raise ControllerError("no fitted model groups")
    scored: list[tuple[tuple, GroupKey, dict[str, RdModel], QpSolution]] = []
    metric = constraints.quality_metric
    mode_value = {
        "max_quality": lambda p: -p.get(metric, 0.0),
        "min_bitrate": lambda p: p["bits"],
        "max_enc_rate": lambda p: -p["enc_rate"],
        "min_enc_time": lambda p: -p["enc_rate"],
    }[constraints.mode]
    for key in sorted(state.models, key=lambda k: (gop_rank(k[0]), k[1])):
        models = state.models[key]
        try:
            sol = solve_constrained(
                models,
                constraints,
                qp_bounds=grid_bounds,
                start=newton_start,
                segment_frames=segment_frames,
            )
        except ValueError:
            continue
        rank = (
            not sol.satisfied,
            sum(sol.violations.values()) if not sol.satisfied else 0.0,
            mode_value(sol.predicted) if sol.satisfied else 0.0,
            sol.predicted.get("bits", 0.0),
            gop_rank(key[0]),
            key[1],
        )
        scored.append((rank, key, models, sol))
    if not scored:
        raise ControllerError("no group produced a solution")
    scored.sort(key=lambda item: item[0])
    _, key, models, sol = scored[0]
    return key, models, sol


def run_segment_loop(
    encoder: Encoder,
    segments: Sequence[Segment],
    constraints: ConstraintSet,
    *,
    fit_order: int | str = 2,
    refit: str = "always",  # "always" | "on_violation"
    qp_step_limit: int = 4,
    schedule: Callable[[Segment], ConstraintSet] | None = None,
) -> ControllerState:
    """Bootstrap on segment 0, then predict/encode/refresh per segment.

    Each post-bootstrap segment triggers exactly one encode.  Out-of-range
    estimates are clamped to the grid and to +/-``qp_step_limit`` of the
    previous segment's QP.  Encoder failures mark the record failed and the
    loop continues on the prior models.
    """
    if not segments:
        raise ControllerError("no segments to encode")
    if refit not in ("always", "on_violation"):
        raise ControllerError(f"unknown refit policy {refit!r}")

    grid = encoder.grid()
    first_constraints = schedule(segments[0]) if schedule else constraints
    state = bootstrap(encoder, segments[0], first_constraints, fit_order=fit_order)
    prev_qp = state.history[-1].config.qp
    prev_gop = state.history[-1].config.gop

    for segment in segments[1:]:
        current = schedule(segment) if schedule else constraints
        state.constraints = current
        key, models, sol = choose_gop_model(
            state,
            current,
            grid_bounds=grid.qp_bounds,
            gop_rank=grid.gop_rank,
            newton_start=grid.newton_start,
            segment_frames=segment.frame_count,
        )
        gop, filters = key

        qp = sol.qp_int
        clamped = False
        lo = max(grid.qp_bounds[0], prev_qp - qp_step_limit)
        hi = min(grid.qp_bounds[1], prev_qp + qp_step_limit)
        if not lo <= qp <= hi:
            qp = min(max(qp, lo), hi)
            clamped = True
        if clamped:
            predicted = predict_objectives(models, qp, segment_frames=segment.frame_count)
            satisfied, violations = check_constraints(predicted, current)
        else:
            predicted, satisfied, violations = sol.predicted, sol.satisfied, sol.violations

        config = EncodingConfig(
            codec=grid.codec,
            gop=gop,
            qp=qp,
            filters=filters,
            gop_type="closed" if grid.gop_types else None,
            preset=grid.preset,
        )
        record = DecisionRecord(
            segment_index=segment.index,
            config=config,
            predicted=predicted,
            measured=None,
            satisfied=satisfied,
            violations=violations,
            gop_switched=gop != prev_gop,
            qp_clamped=clamped,
        )
        try:
            measurement = encoder.encode(config, segment)
        except EncoderError:
            record.failed = True
            state.history.append(record)
            continue
        record.measured = measurement
        state.history.append(record)
        prev_qp, prev_gop = qp, gop

        measured_values = {
            obj: measurement.objective(obj) for obj in state.samples[key]
        }
        measured_values["enc_time"] = measurement.enc_time
        measured_ok, _ = check_constraints(measured_values, current)
        if refit == "always" or not measured_ok:
            _refresh_group(state, key, measurement, fit_order)
    return state


def _refresh_group(
    state: ControllerState,
    key: GroupKey,
    measurement: SegmentMeasurement,
    fit_order: int | str,
) -> None:
    samples = state.samples.get(key)
    if samples is None:
        return
    for objective, pairs in samples.items():
        pairs.append((measurement.config.qp, measurement.objective(objective)))
    try:
        state.models[key] = _fit_group(samples, key[0], key[1], fit_order)
    except ValueError:
        # keep the previous models when the refreshed fit degenerates
        for pairs in samples.values():
            pairs.pop()


@dataclass(frozen=True, slots=True)
class GainSummary:
    """Overall averages and gains versus a constant-QP baseline."""

    segments: int
    avg_bitrate_kbps: float
    avg_psnr_db: float
    avg_vmaf: float | None
    baseline_qp: int | None = None
    baseline_bitrate_kbps: float | None = None
    baseline_psnr_db: float | None = None
    baseline_vmaf: float | None = None
    bitrate_gain_pct: float | None = None
    delta_psnr_db: float | None = None
    delta_vmaf: float | None = None

    def format(self) -> str:
        lines = [
            f"segments: {self.segments}",
            f"average bitrate: {self.avg_bitrate_kbps:.2f} kbps",
            f"average PSNR:    {self.avg_psnr_db:.3f} dB",
        ]
        if self.avg_vmaf is not None:
            lines.append(f"average VMAF:    {self.avg_vmaf:.2f}")
        if self.bitrate_gain_pct is not None:
            lines += [
                f"baseline: constant QP {self.baseline_qp} "
                f"({self.baseline_bitrate_kbps:.2f} kbps)",
                "Overall Bitrate Gain | Overall PSNR | Overall VMAF",
                f"{self.bitrate_gain_pct:.2f} % | {self.delta_psnr_db:+.3f} dB | "
                + (f"{self.delta_vmaf:+.2f}" if self.delta_vmaf is not None else "-"),
            ]
        return "\n".join(lines)


def _mean(values: Iterable[float]) -> float:
    vals = list(values)
    return sum(vals) / len(vals)


def summarize(
    state: ControllerState,
    *,
    encoder: Encoder | None = None,
    segments: Sequence[Segment] | None = None,
    baseline_bitrate_kbps: float | None = None,
) -> GainSummary:
    """Per-run averages, plus gains versus a constant-QP baseline.

    The baseline QP is the sweep-grid QP (default GOP, filters on) whose
    segment-0 bitrate lands closest to the requested target; the baseline
    then encodes every segment at that constant configuration.
    """
    measured = [r.measured for r in state.history if r.measured is not None]
    if not measured:
        raise ControllerError("no measured segments to summarize")
    avg_bitrate = _mean(m.bitrate for m in measured)
    avg_psnr = _mean(m.quality_psnr for m in measured)
    vmafs = [m.quality_vmaf for m in measured]
    avg_vmaf = _mean(vmafs) if all(v is not None for v in vmafs) else None

    summary = GainSummary(
        segments=len(measured),
        avg_bitrate_kbps=avg_bitrate,
        avg_psnr_db=avg_psnr,
        avg_vmaf=avg_vmaf,
    )
    if baseline_bitrate_kbps is None or encoder is None or segments is None:
        return summary

    grid = encoder.grid()
    default_gop = grid.default_gop
    candidates = [
        m
        for m in state.sweep
        if m.config.gop == default_gop and m.config.filters_on
    ] or state.sweep
    baseline_cfg = min(
        candidates, key=lambda m: abs(m.bitrate - baseline_bitrate_kbps)
    ).config
    base = [encoder.encode(baseline_cfg, seg) for seg in segments]
    base_bitrate = _mean(m.bitrate for m in base)
    base_psnr = _mean(m.quality_psnr for m in base)
    base_vmafs = [m.quality_vmaf for m in base]
    base_vmaf = _mean(base_vmafs) if all(v is not None for v in base_vmafs) else None
    return GainSummary(
        segments=summary.segments,
        avg_bitrate_kbps=avg_bitrate,
        avg_psnr_db=avg_psnr,
        avg_vmaf=avg_vmaf,
        baseline_qp=baseline_cfg.qp,
        baseline_bitrate_kbps=base_bitrate,
        baseline_psnr_db=base_psnr,
        baseline_vmaf=base_vmaf,
        bitrate_gain_pct=100.0 * (base_bitrate - avg_bitrate) / base_bitrate,
        delta_psnr_db=avg_psnr - base_psnr,
        delta_vmaf=(avg_vmaf - base_vmaf)
        if avg_vmaf is not None and base_vmaf is not None
        else None,
    )


def write_decision_log(state: ControllerState, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("#segenc-decisions v1\n")
        for record in state.history:
            fh.write(json.dumps(record.to_record()) + "\n")
