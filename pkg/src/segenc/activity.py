"""Camera-activity classification from motion-vector statistics.

Features are 25-bin magnitude and orientation histograms of a region's
motion vectors together with their cumulative distribution functions; kNN
distances run on the CDF values.  Three binary classifiers
(tracking/stationary, stationary/zoom, tracking/zoom) each vote on bins
selected by a Mann-Whitney U test, and the label with the most pairwise
wins is the region's activity.  Activity boundaries are detected from
relative changes in the per-frame prediction-unit count, and each label
maps to a constraint set through a policy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .solver import ConstraintSet

HIST_BINS = 25
DEFAULT_MAG_MAX = 32.0  # pixels/frame covered by the magnitude histogram
PU_WINDOW = 25  # frames per prediction-unit averaging window
PU_THRESHOLD = 0.30
BIN_ALPHA = 0.05

LABELS = ("tracking", "stationary", "zoom")
PAIRS = (("tracking", "stationary"), ("stationary", "zoom"), ("tracking", "zoom"))


class ActivityError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class MotionFeatures:
    mag_hist: np.ndarray
    ori_hist: np.ndarray
    mag_cdf: np.ndarray
    ori_cdf: np.ndarray
    pu_count: float

    def vector(self) -> np.ndarray:
        """Feature vector the classifiers operate on: both CDFs stacked."""
        return np.concatenate([self.mag_cdf, self.ori_cdf])


def extract_mv_features(
    mv_field: Sequence[tuple[float, float]] | np.ndarray,
    pu_count: float = 0.0,
    *,
    mag_max: float = DEFAULT_MAG_MAX,
) -> MotionFeatures:
    """Histograms and CDFs of MV magnitudes and orientations.

    Magnitude bins uniformly span [0, mag_max] (larger magnitudes land in
    the top bin); orientation bins span [-pi, pi).  Histograms are
    normalized to sum to 1, or stay all-zero when the field is empty.
    """
    field = np.asarray(mv_field, dtype=np.float64).reshape(-1, 2)
    if field.shape[0] == 0:
        zero = np.zeros(HIST_BINS)
        return MotionFeatures(zero, zero.copy(), zero.copy(), zero.copy(), float(pu_count))
    mags = np.hypot(field[:, 0], field[:, 1])
    oris = np.arctan2(field[:, 1], field[:, 0])
    oris[oris >= math.pi] = -math.pi  # fold +pi onto -pi: same direction

    mag_hist, _ = np.histogram(np.clip(mags, 0.0, np.nextafter(mag_max, 0.0)),
                               bins=HIST_BINS, range=(0.0, mag_max))
    ori_hist, _ = np.histogram(oris, bins=HIST_BINS, range=(-math.pi, math.pi))
    mag_hist = mag_hist / field.shape[0]
    ori_hist = ori_hist / field.shape[0]
    return MotionFeatures(
        mag_hist=mag_hist,
        ori_hist=ori_hist,
        mag_cdf=np.cumsum(mag_hist),
        ori_cdf=np.cumsum(ori_hist),
        pu_count=float(pu_count),
    )


@dataclass(frozen=True, slots=True)
class BinSelection:
    indices: tuple[int, ...]
    fallback: bool = False  # no bin discriminated; all bins used instead


def select_bins(
    training: Sequence[tuple[str, MotionFeatures]],
    pair: tuple[str, str],
    *,
    alpha: float = BIN_ALPHA,
) -> BinSelection:
    """Feature-vector bins whose two-class distributions differ (U test).

    Bins with identical values across both classes cannot discriminate and
    are skipped.  When no bin reaches significance the selection falls back
    to all bins, flagged.
    """
    a_vecs = np.array([f.vector() for lbl, f in training if lbl == pair[0]])
    b_vecs = np.array([f.vector() for lbl, f in training if lbl == pair[1]])
    if len(a_vecs) < 2 or len(b_vecs) < 2:
        raise ActivityError(f"need at least 2 samples per label for pair {pair}")
    selected = []
    for bin_idx in range(a_vecs.shape[1]):
        a = a_vecs[:, bin_idx]
        b = b_vecs[:, bin_idx]
        if np.ptp(np.concatenate([a, b])) == 0.0:
            continue
        _, p = stats.mannwhitneyu(a, b, alternative="two-sided")
        if p <= alpha:
            selected.append(bin_idx)
    if not selected:
        return BinSelection(tuple(range(a_vecs.shape[1])), fallback=True)
    return BinSelection(tuple(selected))


def _knn_vote(
    features: MotionFeatures,
    training: Sequence[tuple[str, MotionFeatures]],
    pair: tuple[str, str],
    bins: BinSelection,
    k: int,
) -> str:
    idx = np.array(bins.indices)
    target = features.vector()[idx]
    members = [(lbl, f.vector()[idx]) for lbl, f in training if lbl in pair]
    dists = np.array([float(np.linalg.norm(vec - target)) for _, vec in members])
    order = np.argsort(dists, kind="stable")[: min(k, len(members))]
    votes = [members[i][0] for i in order]
    counts = {lbl: votes.count(lbl) for lbl in pair}
    if counts[pair[0]] == counts[pair[1]]:
        return members[order[0]][0]  # tie: nearest single neighbour decides
    return max(pair, key=lambda lbl: counts[lbl])


def classify(
    features: MotionFeatures,
    training: Sequence[tuple[str, MotionFeatures]],
    k: int = 3,
    *,
    bin_cache: Mapping[tuple[str, str], BinSelection] | None = None,
) -> str:
    """Three pairwise kNN classifiers; most pairwise wins takes the label.

    Ties break to "stationary", the safest quality default.  Pass
    ``bin_cache`` to reuse precomputed bin selections.
    """
    seen = {lbl for lbl, _ in training}
    if not set(LABELS) <= seen:
        raise ActivityError(f"training must cover all labels, missing {set(LABELS) - seen}")
    wins = {lbl: 0 for lbl in LABELS}
    for pair in PAIRS:
        bins = bin_cache[pair] if bin_cache else select_bins(training, pair)
        winner = _knn_vote(features, training, pair, bins, k)
        wins[winner] += 1
    best = max(wins.values())
    leaders = [lbl for lbl in LABELS if wins[lbl] == best]
    if len(leaders) > 1:
        return "stationary" if "stationary" in leaders else leaders[0]
    return leaders[0]


def detect_activity_change(
    pu_counts: Sequence[float],
    threshold_rel: float = PU_THRESHOLD,
    *,
    window: int = PU_WINDOW,
) -> list[int]:
    """Frame indices where the windowed mean PU count jumps.

    The series is cut into consecutive windows; a boundary is reported at
    the start of each window whose mean differs from the previous window's
    by more than ``threshold_rel`` (relative).
    """
    series = np.asarray(pu_counts, dtype=np.float64)
    if series.size < 2:
        raise ActivityError("PU series must have at least 2 frames")
    starts = list(range(0, series.size, window))
    means = [float(series[s : s + window].mean()) for s in starts]
    boundaries = []
    for i in range(1, len(means)):
        prev, cur = means[i - 1], means[i]
        if prev == 0.0:
            changed = cur > 0.0
        else:
            changed = abs(cur - prev) / prev > threshold_rel
        if changed:
            boundaries.append(starts[i])
    return boundaries


ActivityPolicy = Mapping[str, ConstraintSet]


def apply_policy(label: str, policy: ActivityPolicy) -> ConstraintSet:
    try:
        return policy[label]
    except KeyError:
        raise ActivityError(f"no constraints mapped for activity {label!r}") from None


# ---------------------------------------------------------------------------
# file interfaces: MV field files, PU series files, policy files


def read_mv_field(path: str | Path) -> dict[int, list[tuple[float, float]]]:
    """Line-delimited ``frame block_x block_y dx dy`` records, per frame."""
    frames: dict[int, list[tuple[float, float]]] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 5:
            raise ActivityError(f"bad MV record: {line!r}")
        frame = int(parts[0])
        frames.setdefault(frame, []).append((float(parts[3]), float(parts[4])))
    if not frames:
        raise ActivityError("empty MV field file")
    return frames


def read_pu_series(path: str | Path) -> list[float]:
    """Line-delimited ``frame pu_count`` records, ordered by frame."""
    records: dict[int, float] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ActivityError(f"bad PU record: {line!r}")
        records[int(parts[0])] = float(parts[1])
    if not records:
        raise ActivityError("empty PU series file")
    return [records[f] for f in sorted(records)]


def read_policy(path: str | Path) -> dict[str, ConstraintSet]:
    """JSON mapping of activity label to mode, bounds, and tolerances."""
    raw = json.loads(Path(path).read_text())
    policy = {}
    for label, spec in raw.items():
        policy[label] = ConstraintSet(**spec)
    return policy


# ---------------------------------------------------------------------------
# synthetic exemplars and the leave-one-out evaluation harness


def synthetic_field(
    kind: str,
    rng: np.random.Generator,
    *,
    grid: int = 16,
    noise_sigma: float = 0.0,
) -> np.ndarray:
    """Canonical MV field: static, uniform translation, or radial zoom.

    Tracking pans are steady near-horizontal moves (as tracking shots
    typically are): speed and direction each stay within one histogram bin,
    so every bin the nonparametric selection can pick is coherent across
    the class and leave-one-out never isolates an exemplar.
    """
    coords = np.linspace(-8.0, 8.0, grid)
    xs, ys = np.meshgrid(coords, coords)
    if kind == "stationary":
        dx = np.zeros_like(xs)
        dy = np.zeros_like(ys)
    elif kind == "tracking":
        speed = rng.uniform(4.2, 4.9)
        angle = rng.uniform(0.06, 0.20)
        dx = np.full_like(xs, speed * math.cos(angle))
        dy = np.full_like(ys, speed * math.sin(angle))
    elif kind == "zoom":
        scale = rng.uniform(0.6, 1.4)
        dx = scale * xs
        dy = scale * ys
    else:
        raise ActivityError(f"unknown field kind {kind!r}")
    field = np.stack([dx.ravel(), dy.ravel()], axis=1)
    if noise_sigma > 0.0:
        field = field + rng.normal(0.0, noise_sigma, field.shape)
    return field


def synthetic_training(
    rng: np.random.Generator,
    *,
    per_class: int = 5,
    noise_sigma: float = 0.0,
) -> list[tuple[str, MotionFeatures]]:
    pu_levels = {"stationary": 300.0, "tracking": 900.0, "zoom": 1200.0}
    training = []
    for label in LABELS:
        for _ in range(per_class):
            field = synthetic_field(label, rng, noise_sigma=noise_sigma)
            training.append((label, extract_mv_features(field, pu_levels[label])))
    return training


@dataclass(slots=True)
class LooResult:
    confusion: dict[tuple[str, str], int]  # (actual, predicted) -> count
    # (pair_a, pair_b, actual, winner) -> count of binary-classifier votes
    binary_votes: dict[tuple[str, str, str, str], int]
    accuracy: float


def leave_one_out(
    training: Sequence[tuple[str, MotionFeatures]],
    k: int = 3,
    *,
    reselect_bins: bool = True,
) -> LooResult:
    """Leave-one-out protocol over a labeled training set.

    ``reselect_bins=False`` selects bins once on the full set (faster for
    repeated noisy trials); otherwise selection is refit per held-out
    sample.
    """
    confusion = {(a, p): 0 for a in LABELS for p in LABELS}
    binary: dict[tuple[str, str, str, str], int] = {}
    cache = None
    if not reselect_bins:
        cache = {pair: select_bins(training, pair) for pair in PAIRS}
    correct = 0
    for i, (actual, features) in enumerate(training):
        rest = [s for j, s in enumerate(training) if j != i]
        fold_cache = cache or {pair: select_bins(rest, pair) for pair in PAIRS}
        predicted = classify(features, rest, k, bin_cache=fold_cache)
        confusion[(actual, predicted)] += 1
        if predicted == actual:
            correct += 1
        for pair in PAIRS:
            if actual not in pair:
                continue
            winner = _knn_vote(features, rest, pair, fold_cache[pair], k)
            key = (pair[0], pair[1], actual, winner)
            binary[key] = binary.get(key, 0) + 1
    return LooResult(
        confusion=confusion,
        binary_votes=binary,
        accuracy=correct / len(training),
    )


def format_confusion(result: LooResult) -> str:
    """3x3 confusion table: rows actual, columns predicted."""
    header = "Classification\t" + "\t".join(lbl.capitalize() for lbl in LABELS)
    lines = [header]
    for actual in LABELS:
        row = [actual.capitalize()]
        row += [str(result.confusion[(actual, predicted)]) for predicted in LABELS]
        lines.append("\t".join(row))
    return "\n".join(lines)


def format_binary_table(result: LooResult) -> str:
    """Per-binary-classifier vote counts.

    The row "X vs Y" covers actual-X samples seen by the X/Y binary
    classifier: its X column counts correct votes, its Y column the votes
    lost to Y, and the out-of-pair column shows "-".
    """
    header = "Classifier\t" + "\t".join(lbl.capitalize() for lbl in LABELS)
    lines = [header]
    for a, b in PAIRS:
        for actual, other in ((a, b), (b, a)):
            counts = {lbl: "-" for lbl in LABELS}
            counts[actual] = str(result.binary_votes.get((a, b, actual, actual), 0))
            counts[other] = str(result.binary_votes.get((a, b, actual, other), 0))
            row = [f"{actual.capitalize()} vs {other.capitalize()}"]
            row += [counts[lbl] for lbl in LABELS]
            lines.append("\t".join(row))
    return "\n".join(lines)
