"""Command-line surface: sweep, optimize, classify, bdrate, metrics.

Exit codes: 0 success, 1 usage error, 2 data error, 3 encoder failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import activity, bd, controller, encoders, media, pareto
from .encoders import CodecCommands, EncoderError, ProcessEncoder, SyntheticEncoder
from .solver import ConstraintSet, SolverError, make_mode

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENCODER = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        raise UsageError(message)


def _load_project_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read project config {path}: {exc}") from exc
    for tol in cfg.get("tolerances", {}).values():
        if not 0.0 <= tol <= 0.5:
            raise DataError("tolerances must be within [0, 0.5]")
    return cfg


def _make_encoder(args, cfg: dict):
    if args.codec == "synthetic":
        return SyntheticEncoder()
    commands = cfg.get("codecs", {}).get(args.codec)
    if commands is None:
        raise DataError(
            f"no command templates for codec {args.codec!r}; add them to the project config"
        )
    if args.video is None:
        raise UsageError("--video is required for real codecs")
    video = media.RawVideo.from_file(args.video, args.width, args.height, args.fps)
    return ProcessEncoder(
        args.codec,
        CodecCommands(**commands),
        video,
        threads=cfg.get("workers", 1),
    )


def _segments(args, encoder) -> list[media.Segment]:
    if args.codec == "synthetic" and args.video is None:
        if args.frames is None:
            raise UsageError("synthetic codec needs --frames when no --video is given")
        return media.make_segments(args.frames, args.fps, args.segment_seconds)
    if args.video is None:
        raise UsageError("--video is required")
    video = media.RawVideo.from_file(args.video, args.width, args.height, args.fps)
    return media.split_segments(video, args.segment_seconds)


def _add_video_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--video", help="raw planar YUV 4:2:0 input file")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--fps", type=int, default=50)
    p.add_argument("--frames", type=int, help="frame count for the synthetic codec")
    p.add_argument("--segment-seconds", type=float, default=3.0)
    p.add_argument("--codec", default="synthetic")
    p.add_argument("--config", help="project config JSON with command templates")
    p.add_argument("--workers", type=int, default=1)


def cmd_sweep(args) -> int:
    cfg = _load_project_config(args.config)
    encoder = _make_encoder(args, cfg)
    segments = _segments(args, encoder)
    if args.segment is not None:
        segments = [segments[args.segment]]

    out = Path(args.out)
    done: set[tuple] = set()
    if out.exists():
        done = {encoders.sweep_row_key(rec) for rec in encoders.read_sweep_table(out)}

    failures = 0
    for segment in segments:
        todo = [
            cfg_
            for cfg_ in encoder.configs()
            if (segment.index, cfg_.codec, cfg_.gop, cfg_.gop_type or "-", cfg_.qp,
                cfg_.filters_label()) not in done
        ]
        if not todo:
            continue
        results: list[encoders.SegmentMeasurement | None]
        if args.workers > 1 and args.codec != "synthetic":
            with ThreadPoolExecutor(max_workers=args.workers) as pool:
                futures = [pool.submit(encoder.encode, c, segment) for c in todo]
                results = []
                for future in futures:
                    try:
                        results.append(future.result())
                    except EncoderError as exc:
                        print(f"encode failed: {exc}", file=sys.stderr)
                        results.append(None)
                        failures += 1
        else:
            results = []
            for c in todo:
                try:
                    results.append(encoder.encode(c, segment))
                except EncoderError as exc:
                    print(f"encode failed: {exc}", file=sys.stderr)
                    results.append(None)
                    failures += 1
        rows = [m for m in results if m is not None]
        metric = "vmaf" if all(m.quality_vmaf is not None for m in rows) else "psnr"
        points = [
            (m, pareto.ObjectivePoint.from_enc_rate(m.objective(metric), m.bitrate, m.enc_rate))
            for m in rows
        ]
        flags = pareto.front_flags(points) if points else []
        encoders.write_sweep_table(out, rows, pareto_flags=flags, append=True)
    print(f"sweep table: {out}")
    return EXIT_ENCODER if failures else EXIT_OK


def _constraints_from_args(args) -> ConstraintSet:
    bounds: dict = {}
    if args.max_bitrate_kbps is not None:
        bounds["max_bitrate_kbps"] = args.max_bitrate_kbps
    min_vmaf = args.min_vmaf
    if args.jnd_offset is not None:
        if args.reference_vmaf is None:
            raise UsageError("--jnd-offset needs --reference-vmaf")
        min_vmaf = args.reference_vmaf - args.jnd_offset
    if min_vmaf is not None and args.min_quality_db is not None:
        raise UsageError("give either --min-quality-db or --min-vmaf, not both")
    if min_vmaf is not None:
        bounds["min_quality"] = min_vmaf
        bounds["quality_metric"] = "vmaf"
    elif args.min_quality_db is not None:
        bounds["min_quality"] = args.min_quality_db
        bounds["quality_metric"] = "psnr"
    if args.min_fps is not None:
        bounds["min_fps"] = args.min_fps
    tolerances = {}
    if args.tolerance_bitrate is not None:
        tolerances["tol_bitrate"] = args.tolerance_bitrate
    if args.tolerance_quality is not None:
        tolerances["tol_quality"] = args.tolerance_quality
    try:
        return make_mode(args.mode, bounds, **tolerances)
    except SolverError as exc:
        raise UsageError(str(exc)) from exc


def _schedule_fn(path: str | None):
    if path is None:
        return None
    spec = json.loads(Path(path).read_text())
    regions = []
    for region in spec["regions"]:
        cs = ConstraintSet(**region["constraints"])
        regions.append((int(region["start_frame"]), int(region["end_frame"]), cs))

    def lookup(segment: media.Segment) -> ConstraintSet:
        for start, end, cs in regions:
            if start <= segment.start < end:
                return cs
        return regions[-1][2]

    return lookup


def cmd_optimize(args) -> int:
    cfg = _load_project_config(args.config)
    constraints = _constraints_from_args(args)
    encoder = _make_encoder(args, cfg)
    segments = _segments(args, encoder)
    schedule = _schedule_fn(args.constraint_schedule)

    state = controller.run_segment_loop(
        encoder, segments, constraints, schedule=schedule
    )
    if args.decisions:
        controller.write_decision_log(state, args.decisions)
        print(f"decision log: {args.decisions}")
    baseline = args.baseline_bitrate_kbps
    if baseline is None and constraints.max_bitrate_kbps is not None:
        baseline = constraints.max_bitrate_kbps
    summary = controller.summarize(
        state, encoder=encoder, segments=segments, baseline_bitrate_kbps=baseline
    )
    print(summary.format())
    return EXIT_OK


def cmd_classify(args) -> int:
    mv_frames = activity.read_mv_field(args.mv_file)
    pu_series = activity.read_pu_series(args.pu_file)
    policy = activity.read_policy(args.policy)

    boundaries = activity.detect_activity_change(
        pu_series, args.pu_threshold, window=args.pu_window
    )
    edges = [0] + boundaries + [len(pu_series)]
    rng = np.random.default_rng(0)
    training = activity.synthetic_training(rng)
    if args.training:
        training = _read_training_dir(args.training)

    regions = []
    for start, end in zip(edges, edges[1:]):
        vectors = [
            mv for frame in range(start, end) for mv in mv_frames.get(frame, [])
        ]
        pu_mean = float(np.mean(pu_series[start:end]))
        features = activity.extract_mv_features(vectors, pu_mean)
        label = activity.classify(features, training, k=args.k)
        constraints = activity.apply_policy(label, policy)
        regions.append(
            {
                "start_frame": start,
                "end_frame": end,
                "label": label,
                "constraints": _constraint_dict(constraints),
            }
        )
        print(f"frames [{start}, {end}): {label}")
    out = {"version": 1, "regions": regions}
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2))
        print(f"constraint schedule: {args.out}")
    return EXIT_OK


def _constraint_dict(cs: ConstraintSet) -> dict:
    out = {"mode": cs.mode, "quality_metric": cs.quality_metric}
    for name in ("max_bitrate_kbps", "min_quality", "min_fps", "max_time_s"):
        value = getattr(cs, name)
        if value is not None:
            out[name] = value
    out["tol_bitrate"] = cs.tol_bitrate
    out["tol_fps"] = cs.tol_fps
    out["tol_quality"] = cs.tol_quality
    return out


def _read_training_dir(path: str) -> list[tuple[str, activity.MotionFeatures]]:
    training = []
    for file in sorted(Path(path).glob("*.mv")):
        label = file.stem.split("_")[0]
        if label not in activity.LABELS:
            raise DataError(f"training file {file.name} does not start with a label")
        frames = activity.read_mv_field(file)
        vectors = [mv for mvs in frames.values() for mv in mvs]
        training.append((label, activity.extract_mv_features(vectors)))
    if not training:
        raise DataError(f"no .mv training files under {path}")
    return training


def cmd_bdrate(args) -> int:
    by_codec: dict[str, list[dict]] = {}
    for file in args.files:
        for codec, rows in bd.read_rd_file(file).items():
            by_codec.setdefault(codec, []).extend(rows)
    if len(by_codec) < 2:
        raise DataError("need RD points for at least two codecs")
    curves = bd.curves_from_records(by_codec, axis=args.axis)
    matrix = bd.bd_matrix(curves)
    print(bd.format_bd_matrix(curves, matrix))
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref = media.RawVideo.from_file(args.ref, args.width, args.height, args.fps)
    dist = media.RawVideo.from_file(args.dist, args.width, args.height, args.fps)
    scores = media.psnr_global(ref, dist)
    ssim = media.ssim_mean(ref, dist)
    vmaf = None
    if args.vmaf_log:
        vmaf = media.parse_vmaf_log(Path(args.vmaf_log).read_text()).mean
    report = {
        "psnr_y": scores.psnr_y,
        "psnr_u": scores.psnr_u,
        "psnr_v": scores.psnr_v,
        "psnr611": scores.psnr611,
        "ssim": ssim,
        "vmaf": vmaf,
    }
    if args.json:
        print(json.dumps(report))
    else:
        for key, value in report.items():
            print(f"{key}: {'-' if value is None else f'{value:.6f}'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segenc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="exhaustively encode segments over the codec grid")
    _add_video_args(p)
    p.add_argument("--segment", type=int, help="only this segment index (default: all)")
    p.add_argument("--out", required=True, help="sweep table output (resumable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="run the segment-adaptive encoding loop")
    _add_video_args(p)
    p.add_argument("--mode", required=True,
                   choices=["max_quality", "min_bitrate", "max_enc_rate", "min_enc_time"])
    p.add_argument("--max-bitrate-kbps", type=float)
    p.add_argument("--min-quality-db", type=float)
    p.add_argument("--min-vmaf", type=float)
    p.add_argument("--min-fps", type=float)
    p.add_argument("--reference-vmaf", type=float)
    p.add_argument("--jnd-offset", type=float,
                   help="derive the VMAF bound as reference minus this offset")
    p.add_argument("--tolerance-bitrate", type=float)
    p.add_argument("--tolerance-quality", type=float)
    p.add_argument("--baseline-bitrate-kbps", type=float)
    p.add_argument("--constraint-schedule", help="region schedule JSON from classify")
    p.add_argument("--decisions", help="decision log output path")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("classify", help="label camera activity and emit constraints")
    p.add_argument("--mv-file", required=True)
    p.add_argument("--pu-file", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--training", help="directory of labeled .mv files")
    p.add_argument("--pu-threshold", type=float, default=activity.PU_THRESHOLD)
    p.add_argument("--pu-window", type=int, default=activity.PU_WINDOW)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", help="constraint schedule JSON output")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bdrate", help="pairwise BD bitrate-savings matrix")
    p.add_argument("files", nargs="+")
    p.add_argument("--axis", choices=["psnr611", "vmaf"], default="psnr611")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("metrics", help="PSNR/SSIM between two raw videos")
    p.add_argument("--ref", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--fps", type=int, default=25)
    p.add_argument("--vmaf-log")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, media.MediaError, bd.BdError, activity.ActivityError,
            SolverError, controller.ControllerError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EncoderError as exc:
        print(f"encoder error: {exc}", file=sys.stderr)
        return EXIT_ENCODER


if __name__ == "__main__":
    sys.exit(main())
