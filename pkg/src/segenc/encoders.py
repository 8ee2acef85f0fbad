"""Codec configuration grids, external encoder drivers, synthetic encoder.

Each codec exposes a Cartesian configuration grid (GOP structure x QP x
filter flags, plus open/closed GOP for x265).  Real encoders are driven as
black boxes through shell command templates with ``{input}``, ``{output}``,
``{qp}``, ``{gop}``, ``{keyint}``, ``{width}``, ``{height}``, ``{fps}`` and
``{threads}`` placeholders; bitrate comes from the output payload size and
encoding rate from the encoder's wall-clock time.

The synthetic encoder evaluates a known ground-truth law

    objective(QP) = exp(a + b1*QP + b2*QP^2) + filter_offset

per GOP, giving every downstream stage (Pareto front, model fitting,
inverse solving, the controller loop) a deterministic oracle.
"""

from __future__ import annotations

import itertools
import math
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from . import media
from .coefficients import REFERENCE_MODEL_SETS, ModelSet
from .media import RawVideo, Segment

Filters = tuple[tuple[str, bool], ...]


class EncoderError(RuntimeError):
    """Encoder process failure; carries captured diagnostics."""

    def __init__(self, message: str, *, stdout: str = "", stderr: str = ""):
        super().__init__(message)
        self.stdout = stdout
        self.stderr = stderr


@dataclass(frozen=True, slots=True)
class EncodingConfig:
    """One point in a codec's configuration grid."""

    codec: str
    gop: str
    qp: int
    filters: Filters
    gop_type: str | None = None
    preset: str | None = None

    @property
    def filters_on(self) -> bool:
        return all(v for _, v in self.filters) if self.filters else False

    def filters_label(self) -> str:
        if not self.filters:
            return "-"
        return ",".join(f"{k}={'on' if v else 'off'}" for k, v in self.filters)


def parse_filters_label(label: str) -> Filters:
    if label in ("-", ""):
        return ()
    out = []
    for part in label.split(","):
        k, v = part.split("=")
        out.append((k, v == "on"))
    return tuple(out)


@dataclass(slots=True)
class SegmentMeasurement:
    """Measured objectives for one configuration on one segment."""

    config: EncodingConfig
    segment_index: int
    bitrate: float  # kbps
    quality_psnr: float  # dB
    quality_vmaf: float | None
    enc_rate: float  # fps
    enc_time: float  # seconds
    quality_ssim: float | None = None

    def __post_init__(self) -> None:
        if self.bitrate <= 0:
            raise EncoderError("bitrate must be positive")
        if self.enc_rate <= 0:
            raise EncoderError("encoding rate must be positive")

    def objective(self, name: str) -> float:
        value = {
            "bits": self.bitrate,
            "psnr": self.quality_psnr,
            "vmaf": self.quality_vmaf,
            "ssim": self.quality_ssim,
            "enc_rate": self.enc_rate,
            "enc_time": self.enc_time,
        }[name]
        if value is None:
            raise EncoderError(f"measurement has no {name!r} value")
        return float(value)


@dataclass(frozen=True, slots=True)
class CodecGrid:
    codec: str
    gops: tuple[str, ...]
    qps: tuple[int, ...]
    qp_bounds: tuple[int, int]
    filter_axes: tuple[str, ...]
    joint_filters: bool  # all filter axes toggle together
    gop_types: tuple[str, ...] | None
    default_gop: str
    preset: str | None
    newton_start: float

    def filter_combos(self) -> list[Filters]:
        if not self.filter_axes:
            return [()]
        if self.joint_filters:
            return [tuple((ax, on) for ax in self.filter_axes) for on in (False, True)]
        combos = []
        for values in itertools.product((False, True), repeat=len(self.filter_axes)):
            combos.append(tuple(zip(self.filter_axes, values)))
        return combos

    def gop_rank(self, gop: str) -> int:
        return self.gops.index(gop) if gop in self.gops else len(self.gops)


CODEC_GRIDS: dict[str, CodecGrid] = {
    "x265": CodecGrid(
        codec="x265",
        gops=("ZL", "B2", "B3", "B4", "B6"),
        qps=tuple(range(16, 44, 3)),
        qp_bounds=(16, 45),
        filter_axes=("deblock", "sao"),
        joint_filters=True,
        gop_types=("closed", "open"),
        default_gop="B3",
        preset="ultrafast",
        newton_start=27.0,
    ),
    "vp9": CodecGrid(
        codec="vp9",
        gops=("ALT0", "ALT1", "ALT2", "ALT4", "ALT6"),
        qps=tuple(range(16, 53, 4)),
        qp_bounds=(16, 52),
        filter_axes=("deblock",),
        joint_filters=True,
        gop_types=None,
        default_gop="ALT0",
        preset="rt",
        newton_start=27.0,
    ),
    "svt-av1": CodecGrid(
        codec="svt-av1",
        gops=("HL3ALT0", "HL3ALT2", "HL3ALT8", "HL4ALT0", "HL4ALT2", "HL4ALT8"),
        qps=tuple(range(16, 53, 4)),
        qp_bounds=(16, 52),
        filter_axes=("deblock", "restoration"),
        joint_filters=False,
        gop_types=None,
        default_gop="HL4ALT8",
        preset="m7",
        newton_start=30.0,
    ),
}


def grid_for(codec: str) -> CodecGrid:
    if codec == "synthetic":
        return default_law().grid()
    try:
        return CODEC_GRIDS[codec]
    except KeyError:
        raise EncoderError(f"unknown codec {codec!r}") from None


def _expand_grid(grid: CodecGrid) -> list[EncodingConfig]:
    configs = []
    for gop in grid.gops:
        for qp in grid.qps:
            for gop_type in grid.gop_types or (None,):
                for filters in grid.filter_combos():
                    configs.append(
                        EncodingConfig(
                            codec=grid.codec,
                            gop=gop,
                            qp=qp,
                            filters=filters,
                            gop_type=gop_type,
                            preset=grid.preset,
                        )
                    )
    return configs


def enumerate_configs(codec: str) -> list[EncodingConfig]:
    """Full Cartesian grid for a codec, in (GOP, QP, flags) order.

    x265 yields 200 configurations, svt-av1 240; vp9 defaults to the 100
    enumerable combinations of its grid (customize via CODEC_GRIDS for
    larger factorizations).
    """
    if codec == "x265-extended":
        return extended_x265_configs()
    return _expand_grid(grid_for(codec))


# Preset-based extension of the x265 grid: two profile groups reaching into
# slower presets and deeper GOP pyramids.  No exact total is contractual.
_EXTENDED_GROUPS = (
    (("ultrafast", "superfast", "veryfast", "faster", "fast", "medium", "slow"),
     ("AI", "B2", "B4", "B6", "ZL")),
    (("slower", "veryslow", "placebo"),
     ("AI", "B6", "B8", "B10", "ZL")),
)


def extended_x265_configs() -> list[EncodingConfig]:
    configs = []
    for presets, gops in _EXTENDED_GROUPS:
        for preset in presets:
            for gop in gops:
                for qp in (22, 27, 32, 37, 42):
                    for gop_type in ("closed", "open"):
                        for deblock in (False, True):
                            for sao in (False, True):
                                configs.append(
                                    EncodingConfig(
                                        codec="x265",
                                        gop=gop,
                                        qp=qp,
                                        filters=(("deblock", deblock), ("sao", sao)),
                                        gop_type=gop_type,
                                        preset=preset,
                                    )
                                )
    return configs


class Encoder(Protocol):
    """What the sweep and the controller need from an encoder backend."""

    def grid(self) -> CodecGrid: ...

    def configs(self) -> list[EncodingConfig]: ...

    def encode(self, config: EncodingConfig, segment: Segment) -> SegmentMeasurement: ...


@dataclass(frozen=True)
class SyntheticLaw:
    """Ground-truth rate-quality-speed law for the synthetic codec.

    Per GOP, each objective follows exp(a + b1*QP + b2*QP^2); switching the
    filter flags on adds a fixed per-objective offset.  Bitrate must be
    strictly decreasing and PSNR non-increasing in QP over the grid range,
    which is what the inverse solver relies on.
    """

    coefficients: Mapping[str, ModelSet]  # gop -> objective -> (a, b1, b2)
    filter_offsets: Mapping[str, float] = field(default_factory=dict)
    qps: tuple[int, ...] = tuple(range(16, 44, 3))
    qp_bounds: tuple[int, int] = (16, 45)

    def __post_init__(self) -> None:
        if not self.coefficients:
            raise EncoderError("law needs at least one GOP")
        lo, hi = self.qp_bounds
        for gop, objectives in self.coefficients.items():
            for required in ("psnr", "bits", "enc_rate"):
                if required not in objectives:
                    raise EncoderError(f"law for {gop!r} lacks {required!r}")
            _, b1, b2 = objectives["bits"]
            if b1 + 2 * b2 * lo >= 0 or b1 + 2 * b2 * hi >= 0:
                raise EncoderError(f"bits law for {gop!r} is not strictly decreasing in QP")
            _, p1, p2 = objectives["psnr"]
            if p1 + 2 * p2 * lo > 0 or p1 + 2 * p2 * hi > 0:
                raise EncoderError(f"psnr law for {gop!r} is increasing in QP")

    def gops(self) -> tuple[str, ...]:
        return tuple(self.coefficients)

    def value(self, gop: str, objective: str, qp: float, filters_on: bool = False) -> float:
        try:
            a, b1, b2 = self.coefficients[gop][objective]
        except KeyError:
            raise EncoderError(f"law has no {objective!r} model for GOP {gop!r}") from None
        out = math.exp(a + b1 * qp + b2 * qp * qp)
        if filters_on:
            out += self.filter_offsets.get(objective, 0.0)
        return out

    def grid(self) -> CodecGrid:
        return CodecGrid(
            codec="synthetic",
            gops=self.gops(),
            qps=self.qps,
            qp_bounds=self.qp_bounds,
            filter_axes=("deblock",),
            joint_filters=True,
            gop_types=None,
            default_gop=self.gops()[0],
            preset=None,
            newton_start=27.0,
        )


def default_law() -> SyntheticLaw:
    """Single-GOP law from the x265 B6 reference coefficient set."""
    return SyntheticLaw({"B6": REFERENCE_MODEL_SETS[("x265", "B6", "max_quality")]})


def synth_encode(config: EncodingConfig, law: SyntheticLaw, segment: Segment) -> SegmentMeasurement:
    """Deterministic measurement straight from the law; no processes.

    Note the law is an unbounded fitted form, so synthetic VMAF may slightly
    exceed 100 at low QPs; it is reported unclamped to keep the oracle
    exactly invertible.
    """
    if config.gop not in law.coefficients:
        raise EncoderError(f"unknown GOP {config.gop!r} for synthetic law")
    on = config.filters_on
    enc_rate = law.value(config.gop, "enc_rate", config.qp, on)
    vmaf = None
    if "vmaf" in law.coefficients[config.gop]:
        vmaf = law.value(config.gop, "vmaf", config.qp, on)
    return SegmentMeasurement(
        config=config,
        segment_index=segment.index,
        bitrate=law.value(config.gop, "bits", config.qp, on),
        quality_psnr=law.value(config.gop, "psnr", config.qp, on),
        quality_vmaf=vmaf,
        enc_rate=enc_rate,
        enc_time=segment.frame_count / enc_rate,
    )


class SyntheticEncoder:
    """Encoder backend evaluating a SyntheticLaw; counts encode calls."""

    def __init__(self, law: SyntheticLaw | None = None):
        self.law = law if law is not None else default_law()
        self.encode_calls = 0

    def grid(self) -> CodecGrid:
        return self.law.grid()

    def configs(self) -> list[EncodingConfig]:
        return _expand_grid(self.grid())

    def encode(self, config: EncodingConfig, segment: Segment) -> SegmentMeasurement:
        self.encode_calls += 1
        return synth_encode(config, self.law, segment)


@dataclass(frozen=True, slots=True)
class CodecCommands:
    """Shell templates driving one external codec."""

    encode: str
    decode: str | None = None
    vmaf: str | None = None


class ProcessEncoder:
    """Drives an external encoder binary through command templates.

    Encoding rate is frames over the encoder process's wall-clock seconds
    only; bitrate is 8 * payload bytes / segment duration.  Quality needs a
    decode template (external decoders produce raw YUV which is compared
    with the source).
    """

    def __init__(
        self,
        codec: str,
        commands: CodecCommands,
        video: RawVideo,
        *,
        workdir: str | Path | None = None,
        threads: int = 1,
    ):
        self.codec = codec
        self.commands = commands
        self.video = video
        self.threads = threads
        self._workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="segenc-"))
        self._workdir.mkdir(parents=True, exist_ok=True)

    def grid(self) -> CodecGrid:
        return grid_for(self.codec)

    def configs(self) -> list[EncodingConfig]:
        return enumerate_configs(self.codec)

    def _substitutions(self, config: EncodingConfig, segment: Segment, **paths: str) -> dict:
        subs = {
            "qp": config.qp,
            "gop": config.gop,
            "gop_type": config.gop_type or "",
            "keyint": segment.frame_count,
            "width": self.video.width,
            "height": self.video.height,
            "fps": self.video.fps,
            "threads": self.threads,
            "frames": segment.frame_count,
        }
        subs.update({name: int(on) for name, on in config.filters})
        subs.update(paths)
        return subs

    @staticmethod
    def _run(template: str, subs: Mapping[str, object]) -> tuple[float, str, str]:
        try:
            argv = [part.format_map(subs) for part in shlex.split(template)]
        except KeyError as exc:
            raise EncoderError(f"unknown placeholder {exc} in command template") from None
        started = time.perf_counter()
        proc = subprocess.run(argv, capture_output=True, text=True)
        elapsed = time.perf_counter() - started
        if proc.returncode != 0:
            raise EncoderError(
                f"command failed with exit {proc.returncode}: {' '.join(argv)}",
                stdout=proc.stdout,
                stderr=proc.stderr,
            )
        return elapsed, proc.stdout, proc.stderr

    def encode(self, config: EncodingConfig, segment: Segment) -> SegmentMeasurement:
        if segment.end > self.video.frame_count:
            raise EncoderError("segment out of range for the source video")
        if not self.commands.encode:
            raise EncoderError(f"no encode template registered for codec {self.codec!r}")
        if not self.commands.decode:
            raise EncoderError(f"no decode template registered for codec {self.codec!r}")

        clip = self.video.frames_slice(segment.start, segment.end)
        tag = f"s{segment.index}_{config.gop}_{config.qp}_{config.filters_label()}"
        tag = tag.replace(",", "_").replace("=", "")
        src = self._workdir / f"{tag}.yuv"
        out = self._workdir / f"{tag}.bin"
        dec = self._workdir / f"{tag}.dec.yuv"
        clip.to_file(src)
        try:
            elapsed, _, _ = self._run(
                self.commands.encode,
                self._substitutions(config, segment, input=str(src), output=str(out)),
            )
            if not out.exists() or out.stat().st_size == 0:
                raise EncoderError("encoder produced no output")
            bitrate = 8.0 * out.stat().st_size / segment.duration_s / 1000.0

            self._run(
                self.commands.decode,
                self._substitutions(config, segment, input=str(out), output=str(dec)),
            )
            decoded = RawVideo.from_file(dec, clip.width, clip.height, clip.fps)
            scores = media.psnr_global(clip, decoded)
            ssim = media.ssim_mean(clip, decoded)

            vmaf = None
            if self.commands.vmaf:
                log_path = self._workdir / f"{tag}.vmaf"
                self._run(
                    self.commands.vmaf,
                    self._substitutions(
                        config, segment,
                        reference=str(src), distorted=str(dec), log=str(log_path),
                    ),
                )
                vmaf = media.parse_vmaf_log(log_path.read_text()).mean
        finally:
            src.unlink(missing_ok=True)
            dec.unlink(missing_ok=True)

        return SegmentMeasurement(
            config=config,
            segment_index=segment.index,
            bitrate=bitrate,
            quality_psnr=scores.psnr611,
            quality_vmaf=vmaf,
            enc_rate=segment.frame_count / elapsed if elapsed > 0 else float("inf"),
            enc_time=elapsed,
            quality_ssim=ssim,
        )


SWEEP_HEADER = "#segenc-sweep v1"
SWEEP_COLUMNS = (
    "segment_id", "codec", "gop", "gop_type", "qp", "filters",
    "bitrate_kbps", "psnr_db", "vmaf", "fps", "enc_time_s", "pareto",
)


def measurement_key(m: SegmentMeasurement) -> tuple:
    c = m.config
    return (m.segment_index, c.codec, c.gop, c.gop_type or "-", c.qp, c.filters_label())


def sweep_record(m: SegmentMeasurement, pareto: bool | None = None) -> str:
    c = m.config
    fields = [
        str(m.segment_index), c.codec, c.gop, c.gop_type or "-", str(c.qp),
        c.filters_label(),
        f"{m.bitrate:.6g}", f"{m.quality_psnr:.6g}",
        "-" if m.quality_vmaf is None else f"{m.quality_vmaf:.6g}",
        f"{m.enc_rate:.6g}", f"{m.enc_time:.6g}",
        "-" if pareto is None else ("1" if pareto else "0"),
    ]
    return "\t".join(fields)


def write_sweep_table(
    path: str | Path,
    measurements: Iterable[SegmentMeasurement],
    *,
    pareto_flags: Sequence[bool] | None = None,
    append: bool = False,
) -> None:
    path = Path(path)
    rows = list(measurements)
    flags: Sequence[bool | None]
    flags = pareto_flags if pareto_flags is not None else [None] * len(rows)
    mode = "a" if append and path.exists() else "w"
    with path.open(mode) as fh:
        if mode == "w":
            fh.write(SWEEP_HEADER + "\n")
            fh.write("\t".join(SWEEP_COLUMNS) + "\n")
        for m, flag in zip(rows, flags):
            fh.write(sweep_record(m, flag) + "\n")


def read_sweep_table(path: str | Path) -> list[dict]:
    """Rows as dicts keyed by SWEEP_COLUMNS; tolerant of the older marker-less form."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#segenc-sweep"):
        raise EncoderError(f"{path} is not a sweep table")
    rows = []
    for line in lines[2:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        rec = dict(zip(SWEEP_COLUMNS, parts))
        rec["segment_id"] = int(rec["segment_id"])
        rec["qp"] = int(rec["qp"])
        for key in ("bitrate_kbps", "psnr_db", "fps", "enc_time_s"):
            rec[key] = float(rec[key])
        rec["vmaf"] = None if rec.get("vmaf") in ("-", None) else float(rec["vmaf"])
        rows.append(rec)
    return rows


def sweep_row_key(rec: dict) -> tuple:
    return (
        rec["segment_id"], rec["codec"], rec["gop"],
        rec.get("gop_type", "-") or "-", rec["qp"], rec["filters"],
    )
