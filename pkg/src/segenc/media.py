"""Raw video handling and quality metrics.

Video is planar YUV 4:2:0, 8-bit, headerless; dimensions and frame rate are
supplied externally.  A video is split into fixed-duration segments (default
3 seconds) which are the unit everything downstream operates on.

Quality metrics:

* per-plane PSNR with MSE pooled over all frames of a plane, plus the
  weighted global value ``(6*Y + U + V) / 8``;
* mean luma SSIM over non-overlapping 8x8 windows with the usual
  stabilising constants C1 = (0.01*255)^2, C2 = (0.03*255)^2;
* VMAF is never computed here -- it is ingested from an external scorer's
  log (JSON or key=value text) via :func:`parse_vmaf_log`.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 8
_SSIM_C1 = (0.01 * 255.0) ** 2
_SSIM_C2 = (0.03 * 255.0) ** 2


class MediaError(ValueError):
    """Malformed raw video, mismatched inputs, or unparseable score log."""


@dataclass(frozen=True, slots=True)
class RawVideo:
    """Planar 4:2:0 8-bit video held as one (frames, samples) uint8 array."""

    width: int
    height: int
    fps: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise MediaError("dimensions must be positive")
        if self.width % 2 or self.height % 2:
            raise MediaError("width and height must be even for 4:2:0")
        if not isinstance(self.fps, int) or self.fps <= 0:
            raise MediaError("fps must be a positive integer")
        if self.data.ndim != 2 or self.data.shape[1] != self.frame_size:
            raise MediaError(
                f"frame data must be (n, {self.frame_size}) for "
                f"{self.width}x{self.height} 4:2:0"
            )
        if self.data.dtype != np.uint8:
            raise MediaError("samples must be uint8")

    @property
    def frame_size(self) -> int:
        return self.width * self.height * 3 // 2

    @property
    def frame_count(self) -> int:
        return int(self.data.shape[0])

    def luma(self) -> np.ndarray:
        """All luma planes as a (frames, H, W) view."""
        n, w, h = self.frame_count, self.width, self.height
        return self.data[:, : w * h].reshape(n, h, w)

    def chroma_u(self) -> np.ndarray:
        n, w, h = self.frame_count, self.width, self.height
        start = w * h
        size = (w // 2) * (h // 2)
        return self.data[:, start : start + size].reshape(n, h // 2, w // 2)

    def chroma_v(self) -> np.ndarray:
        n, w, h = self.frame_count, self.width, self.height
        start = w * h + (w // 2) * (h // 2)
        return self.data[:, start:].reshape(n, h // 2, w // 2)

    @classmethod
    def from_file(cls, path: str | Path, width: int, height: int, fps: int) -> "RawVideo":
        raw = np.fromfile(str(path), dtype=np.uint8)
        frame_size = width * height * 3 // 2
        if raw.size == 0:
            raise MediaError("no frames")
        if raw.size % frame_size:
            raise MediaError(
                f"file size {raw.size} is not a multiple of the "
                f"{width}x{height} 4:2:0 frame size {frame_size}"
            )
        return cls(width, height, fps, raw.reshape(-1, frame_size))

    def to_file(self, path: str | Path) -> None:
        self.data.tofile(str(path))

    def frames_slice(self, start: int, stop: int) -> "RawVideo":
        """Sub-video covering frames [start, stop)."""
        if not (0 <= start < stop <= self.frame_count):
            raise MediaError("frame range out of bounds")
        return RawVideo(self.width, self.height, self.fps, self.data[start:stop])


@dataclass(frozen=True, slots=True)
class Segment:
    """Half-open frame range [start, end) plus its wall-clock duration."""

    index: int
    start: int
    end: int
    duration_s: float

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise MediaError("segment range must be non-empty and non-negative")

    @property
    def frame_count(self) -> int:
        return self.end - self.start


def make_segments(frame_count: int, fps: int, segment_seconds: float = 3.0) -> list[Segment]:
    """Partition [0, frame_count) into consecutive fixed-length segments.

    Every full segment spans floor(fps * segment_seconds) frames; remainder
    frames form one final shorter segment.
    """
    if frame_count <= 0:
        raise MediaError("no frames")
    if fps <= 0 or segment_seconds <= 0:
        raise MediaError("fps and segment_seconds must be positive")
    per = int(fps * segment_seconds)
    if per <= 0:
        raise MediaError("segment shorter than one frame")
    segments = []
    start = 0
    while start < frame_count:
        end = min(start + per, frame_count)
        segments.append(Segment(len(segments), start, end, (end - start) / fps))
        start = end
    return segments


def split_segments(video: RawVideo, segment_seconds: float = 3.0) -> list[Segment]:
    """Split a video into fixed-duration segments (remainder tail allowed)."""
    return make_segments(video.frame_count, video.fps, segment_seconds)


def psnr611(psnr_y: float, psnr_u: float, psnr_v: float) -> float:
    """Weighted global PSNR: luma counts six times the two chroma planes."""
    return (6.0 * psnr_y + psnr_u + psnr_v) / 8.0


@dataclass(frozen=True, slots=True)
class QualityScores:
    psnr_y: float
    psnr_u: float
    psnr_v: float
    psnr611: float
    vmaf: float | None = None
    ssim: float | None = None

    def __post_init__(self) -> None:
        if self.vmaf is not None and not (0.0 <= self.vmaf <= 100.0):
            raise MediaError("vmaf must be within [0, 100]")
        if self.ssim is not None and not (-1.0 <= self.ssim <= 1.0 + 1e-12):
            raise MediaError("ssim must be within [-1, 1]")


def _check_match(ref: RawVideo, dist: RawVideo) -> None:
    if (ref.width, ref.height) != (dist.width, dist.height):
        raise MediaError("dimension mismatch between reference and distorted video")
    if ref.frame_count != dist.frame_count:
        raise MediaError("frame count mismatch between reference and distorted video")


def _plane_psnr(ref_plane: np.ndarray, dist_plane: np.ndarray) -> float:
    diff = ref_plane.astype(np.int32) - dist_plane.astype(np.int32)
    mse = np.mean(np.square(diff, dtype=np.int64))
    if mse == 0:
        return PSNR_CAP_DB
    return float(10.0 * math.log10(255.0 * 255.0 / mse))


def psnr_global(ref: RawVideo, dist: RawVideo) -> QualityScores:
    """Per-plane PSNR pooled as MSE over all frames, plus the 6-1-1 average.

    Identical planes report the cap value (100 dB) instead of infinity so
    downstream regression stays finite.
    """
    _check_match(ref, dist)
    y = _plane_psnr(ref.luma(), dist.luma())
    u = _plane_psnr(ref.chroma_u(), dist.chroma_u())
    v = _plane_psnr(ref.chroma_v(), dist.chroma_v())
    return QualityScores(psnr_y=y, psnr_u=u, psnr_v=v, psnr611=psnr611(y, u, v))


def _frame_ssim_windows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """SSIM of every non-overlapping 8x8 window of one luma frame pair."""
    h8 = x.shape[0] - x.shape[0] % SSIM_WINDOW
    w8 = x.shape[1] - x.shape[1] % SSIM_WINDOW
    if h8 == 0 or w8 == 0:
        raise MediaError(f"frame smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    xw = x[:h8, :w8].reshape(h8 // SSIM_WINDOW, SSIM_WINDOW, w8 // SSIM_WINDOW, SSIM_WINDOW)
    yw = y[:h8, :w8].reshape(h8 // SSIM_WINDOW, SSIM_WINDOW, w8 // SSIM_WINDOW, SSIM_WINDOW)
    xf = xw.astype(np.float64)
    yf = yw.astype(np.float64)
    mx = xf.mean(axis=(1, 3))
    my = yf.mean(axis=(1, 3))
    # population moments over the 64 window samples
    vx = (xf * xf).mean(axis=(1, 3)) - mx * mx
    vy = (yf * yf).mean(axis=(1, 3)) - my * my
    cov = (xf * yf).mean(axis=(1, 3)) - mx * my
    num = (2.0 * mx * my + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2)
    return num / den


def ssim_mean(ref: RawVideo, dist: RawVideo) -> float:
    """Mean luma SSIM over all frames, non-overlapping 8x8 windows."""
    _check_match(ref, dist)
    ry = ref.luma()
    dy = dist.luma()
    total = 0.0
    count = 0
    for i in range(ref.frame_count):
        win = _frame_ssim_windows(ry[i], dy[i])
        total += float(win.sum())
        count += win.size
    return total / count


@dataclass(frozen=True, slots=True)
class VmafLog:
    """Parsed external VMAF scorer output."""

    frame_scores: tuple[float, ...]
    mean: float


_KV_RE = re.compile(r"\b(pooled_vmaf|vmaf_mean|vmaf)\s*[=:]\s*([-+0-9.eE]+)")


def _clamp_vmaf(value: float) -> float:
    return min(100.0, max(0.0, float(value)))


def _parse_vmaf_json(obj: dict) -> VmafLog | None:
    frames: list[float] = []
    for rec in obj.get("frames", []) or []:
        metrics = rec.get("metrics", rec)
        if "vmaf" in metrics:
            frames.append(_clamp_vmaf(metrics["vmaf"]))
    pooled = None
    pooled_block = obj.get("pooled_metrics", {}).get("vmaf")
    if isinstance(pooled_block, dict) and "mean" in pooled_block:
        pooled = pooled_block["mean"]
    elif "aggregate" in obj and "VMAF_score" in obj["aggregate"]:
        pooled = obj["aggregate"]["VMAF_score"]
    if pooled is None and not frames:
        return None
    mean = _clamp_vmaf(pooled) if pooled is not None else float(np.mean(frames))
    return VmafLog(tuple(frames), mean)


def parse_vmaf_log(log_text: str) -> VmafLog:
    """Extract per-frame VMAF scores and the pooled mean from a scorer log.

    Accepts the scorer's JSON output or a key=value text form with one
    per-frame record per line and an optional ``pooled_vmaf`` /
    ``vmaf_mean`` line.  When no pooled field is present, the mean is the
    arithmetic mean of the per-frame values.  Scores are clamped to
    [0, 100].
    """
    stripped = log_text.strip()
    if stripped.startswith("{"):
        try:
            parsed = _parse_vmaf_json(json.loads(stripped))
        except json.JSONDecodeError:
            parsed = None
        if parsed is not None:
            return parsed
        raise MediaError("not a VMAF log")

    frames: list[float] = []
    pooled: float | None = None
    for line in stripped.splitlines():
        for key, value in _KV_RE.findall(line):
            if key == "vmaf":
                frames.append(_clamp_vmaf(float(value)))
            else:
                pooled = _clamp_vmaf(float(value))
    if pooled is not None:
        return VmafLog(tuple(frames), pooled)
    if frames:
        return VmafLog(tuple(frames), float(np.mean(frames)))
    raise MediaError("not a VMAF log")
