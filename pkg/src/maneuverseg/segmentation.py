"""Energy-maximization segmentation of a normalized yaw-rate signal.

At every stride position a centred window is dilated in fixed steps; each
window is scored by its duration-scaled energy. Dilation stops at the first
maximum of the noise-penalized energy, the best positions over time are kept
as candidate events, overlapping candidates are suppressed, and the surviving
windows have their edges refined at sample resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindow, SignalTooShort
from .preprocess import moving_average
from .telemetry import Segment

# MAD -> standard deviation for Gaussian noise
_MAD_SCALE = 1.4826


CORE_ENERGY_FRACTION = 0.9


@dataclass(frozen=True)
class EmaConfig:
    dilation_step_s: float = 0.25
    min_window_s: float = 1.0
    max_window_s: float = 15.0
    event_energy_threshold: float = 4.0
    nms_iou_threshold: float = 0.5
    time_stride_s: float = 0.5
    # cost per unit energy of adding a sample, in multiples of the noise power
    noise_cost: float = 2.0
    # relative floor on that cost, as a fraction of the peak sample power
    noise_cost_floor: float = 1e-6
    # one-sided fit span (s) used to locate an edge beneath the smoothing blur
    edge_fit_s: float = 0.5
    # refined candidates shorter than this are returned as rejects, not events
    min_event_s: float = 1.5
    # averaging span (s) of the local energy density used to find quiet gaps
    quiet_density_s: float = 0.5
    # a candidate is split at any quiet gap at least this long (s)
    min_quiet_s: float = 1.0
    # candidates whose central 90% of energy fits in less than this (s) are
    # spikes widened by smoothing, not maneuvers, and are returned as rejects
    min_core_s: float = 0.75

    def __post_init__(self):
        if not 0 < self.min_window_s < self.max_window_s:
            raise ValueError("need 0 < min_window_s < max_window_s")
        if self.dilation_step_s <= 0 or self.time_stride_s <= 0:
            raise ValueError("dilation_step_s and time_stride_s must be positive")
        if not 0.0 <= self.nms_iou_threshold <= 1.0:
            raise ValueError("nms_iou_threshold must lie in [0, 1]")
        if self.event_energy_threshold < 0 or self.noise_cost < 0 or self.min_core_s < 0:
            raise ValueError("thresholds must be >= 0")

    def window_lengths_s(self) -> np.ndarray:
        n = int(math.floor((self.max_window_s - self.min_window_s) / self.dilation_step_s + 1e-9))
        return self.min_window_s + self.dilation_step_s * np.arange(n + 1)


@dataclass(frozen=True)
class EnergyProfile:
    center_idx: int
    window_lengths_s: np.ndarray
    energies: np.ndarray

    @property
    def argmax_window_s(self) -> float:
        """Shortest window reaching the maximum energy, up to rounding."""
        top = float(np.max(self.energies))
        first = int(np.flatnonzero(self.energies >= top * (1 - 1e-12))[0])
        return float(self.window_lengths_s[first])


def _window_bounds(center_idx, window_len, n):
    lo = center_idx - window_len // 2
    return max(lo, 0), min(lo + window_len, n)


def window_energy(signal, center_idx: int, window_len: int, sample_rate_hz: float) -> float:
    """Duration-scaled energy ``(s/N) * sum(x**2)`` of a centred window.

    ``N`` counts the samples that fall inside the signal and ``s`` is the time
    they span, so clipped windows are scored on what they actually cover.
    """
    x = np.asarray(signal, dtype=np.float64)
    lo, hi = _window_bounds(center_idx, int(window_len), x.size)
    n_in = hi - lo
    if window_len < 1 or n_in < 1:
        raise EmptyWindow(f"window of {window_len} at {center_idx} has no samples in bounds")
    s = n_in / sample_rate_hz
    return float(s / n_in * np.sum(x[lo:hi] ** 2))


def _window_samples(cfg: EmaConfig, sample_rate_hz: float) -> np.ndarray:
    return np.maximum(1, np.round(cfg.window_lengths_s() * sample_rate_hz).astype(np.int64))


def energy_profile(signal, center_idx: int, cfg: EmaConfig, sample_rate_hz: float) -> EnergyProfile:
    x = np.asarray(signal, dtype=np.float64)
    if not 0 <= center_idx < x.size:
        raise IndexError(f"center {center_idx} outside signal of length {x.size}")
    lengths = _window_samples(cfg, sample_rate_hz)
    energies = np.array([window_energy(x, center_idx, w, sample_rate_hz) for w in lengths])
    return EnergyProfile(int(center_idx), cfg.window_lengths_s(), energies)


def iou(a: Segment, b: Segment) -> float:
    return a.iou(b)


def non_max_suppress(candidates, iou_threshold: float) -> list[Segment]:
    """Greedy NMS: keep the highest-energy segments, dropping any whose IoU with
    an already kept segment reaches ``iou_threshold``. Returns segments sorted by start."""
    order = sorted(candidates, key=lambda s: (-s.peak_energy, s.start_idx, s.end_idx))
    kept: list[Segment] = []
    for cand in order:
        if all(cand.iou(k) < iou_threshold for k in kept):
            kept.append(cand)
    return sorted(kept)


@dataclass(frozen=True)
class _Scored:
    centers: np.ndarray  # stride positions
    lo: np.ndarray  # chosen window start per position
    hi: np.ndarray
    score: np.ndarray  # penalized energy of the chosen window, clipped at 0
    energy: np.ndarray  # plain window energy of the chosen window


def noise_floor(signal) -> tuple[float, float]:
    """Robust (baseline, sigma) of a signal dominated by lane keeping."""
    x = np.asarray(signal, dtype=np.float64)
    base = float(np.median(x))
    sigma = _MAD_SCALE * float(np.median(np.abs(x - base)))
    return base, sigma


def _sample_cost(z, cfg: EmaConfig) -> float:
    _, sigma = noise_floor(z)
    peak = float(np.max(z * z)) if z.size else 0.0
    return max(cfg.noise_cost * sigma * sigma, cfg.noise_cost_floor * peak)


def _score_positions(z, cost, cfg: EmaConfig, sample_rate_hz: float) -> _Scored:
    n = z.size
    csum = np.concatenate(([0.0], np.cumsum(z * z)))
    stride = max(1, int(round(cfg.time_stride_s * sample_rate_hz)))
    centers = np.arange(0, n, stride)
    lengths = _window_samples(cfg, sample_rate_hz)
    lo = np.clip(centers[:, None] - lengths[None, :] // 2, 0, n)
    hi = np.clip(centers[:, None] - lengths[None, :] // 2 + lengths[None, :], 0, n)
    n_in = hi - lo
    energy = (csum[hi] - csum[lo]) / sample_rate_hz
    penalized = energy - cost * n_in / sample_rate_hz
    # dilate until the penalized energy stops increasing
    falling = penalized[:, :-1] >= penalized[:, 1:]
    first = np.where(falling.any(axis=1), falling.argmax(axis=1), lengths.size - 1)
    rows = np.arange(centers.size)
    score = np.maximum(penalized[rows, first], 0.0)
    return _Scored(centers, lo[rows, first], hi[rows, first], score, energy[rows, first])


def _local_maxima(score: np.ndarray) -> np.ndarray:
    # plateaus resolve to their earliest position
    prev = np.concatenate(([-np.inf], score[:-1]))
    nxt = np.concatenate((score[1:], [-np.inf]))
    return (score > prev) & (score >= nxt)


def _best_edge(gain, lo, hi, reverse=False):
    """Index in [lo, hi] maximizing the gain accumulated from the edge to the far side."""
    seg = gain[lo:hi]
    if reverse:
        # end edge e: total = sum(gain[lo:e]) -> maximize prefix sum
        pref = np.concatenate(([0.0], np.cumsum(seg)))
        # ties resolve to the shortest segment
        return lo + int(np.argmax(pref))
    # start edge s: total = sum(gain[s:hi]) -> maximize suffix sum
    suf = np.concatenate((np.cumsum(seg[::-1])[::-1], [0.0]))
    best = np.max(suf)
    return lo + int(np.flatnonzero(suf == best)[-1])


def _blurred_onsets(n_data, offsets, blur_len, power):
    """Rows: ``max(0, i - offset + 0.5) ** power`` seen through the moving average."""
    left = blur_len // 2
    right = blur_len - left - 1
    pad = np.arange(-left, n_data + right)
    raw = np.maximum(0.0, pad[None, :] - offsets[:, None] + 0.5) ** power
    csum = np.concatenate((np.zeros((offsets.size, 1)), np.cumsum(raw, axis=1)), axis=1)
    return (csum[:, blur_len:] - csum[:, :-blur_len]) / blur_len


def _hinge_edge(z, edge, lo, hi, span, blur_len, rising=True):
    """Onset index in ``[lo, hi]`` of the blurred onset curve that best fits the data.

    The onset is modelled as ``g*t + c*t**3`` from the onset on and zero before
    it, which covers the straight start of a sine lobe and its bending toward the
    crest. Fitting the blurred model, rather than thresholding the blurred
    signal, recovers the unblurred onset.
    """
    n = z.size
    a, b = max(edge - span, 0), min(edge + span, n)
    if rising:
        data = z[a:b]
        ks = np.arange(max(lo, a), min(hi, b - 1) + 1)
        offsets = ks - a
    else:
        data = z[a:b][::-1]
        ks = np.arange(max(lo, a + 1), min(hi, b) + 1)
        offsets = b - ks
    if ks.size == 0 or data.size < 3:
        return edge
    scale = float(data.size)
    lin = _blurred_onsets(data.size, offsets, blur_len, 1) / scale
    cub = _blurred_onsets(data.size, offsets, blur_len, 3) / scale**3
    # per-offset 2x2 normal equations
    a11 = np.einsum("ij,ij->i", lin, lin)
    a12 = np.einsum("ij,ij->i", lin, cub)
    a22 = np.einsum("ij,ij->i", cub, cub)
    b1 = lin @ data
    b2 = cub @ data
    det = a11 * a22 - a12 * a12
    ok = det > 1e-12 * np.maximum(a11 * a22, 1e-300)
    with np.errstate(invalid="ignore", divide="ignore"):
        explained = np.where(
            ok,
            (a22 * b1 * b1 - 2 * a12 * b1 * b2 + a11 * b2 * b2) / det,
            np.where(a11 > 0, b1 * b1 / a11, 0.0),
        )
    sse = float(data @ data) - explained
    # ties resolve toward the inside of the segment
    best = np.flatnonzero(sse <= sse.min() + 1e-12 * max(1e-300, abs(float(data @ data))))
    return int(ks[best[-1]] if rising else ks[best[0]])


@dataclass(frozen=True)
class SegmentationResult:
    events: list[Segment]
    rejected: list[Segment]  # refined candidates too short to be maneuvers


def _active_runs(active: np.ndarray, lo: int, hi: int, min_quiet: int):
    """Runs of active samples in [lo, hi), bridging quiet stretches shorter than min_quiet."""
    idx = np.flatnonzero(active[lo:hi]) + lo
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > min_quiet)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks], [idx[-1]])) + 1
    return list(zip(starts.tolist(), ends.tolist()))


def ema_segment(
    signal, cfg: EmaConfig, sample_rate_hz: float, blur_len: int = 1
) -> SegmentationResult:
    """Full segmentation: candidate events plus too-short rejects.

    ``blur_len`` is the moving-average length already applied to ``signal``;
    edge refinement uses it to look through the blur.
    """
    x = np.asarray(signal, dtype=np.float64)
    sr = sample_rate_hz
    min_len = int(math.ceil(cfg.min_window_s * sr - 1e-9))
    if x.size < min_len:
        raise SignalTooShort(f"signal of {x.size} samples is shorter than min_window_s")
    base, _ = noise_floor(x)
    z = x - base
    cost = _sample_cost(z, cfg)
    scored = _score_positions(z, cost, cfg, sr)

    peaks = _local_maxima(scored.score)
    # the trip is mostly lane keeping, so the median power is the noise floor;
    # comparing power rather than energy puts windows of any length on one scale
    durations = (scored.hi - scored.lo) / sr
    power = scored.energy / durations
    floor = cfg.event_energy_threshold * float(np.median(power))
    keep = peaks & (scored.score > 0) & (power >= floor)
    cands = [
        Segment(int(scored.lo[i]), int(scored.hi[i]), float(scored.score[i]))
        for i in np.flatnonzero(keep)
    ]
    kept = non_max_suppress(cands, cfg.nms_iou_threshold)

    # a dilated window may reach across a quiet gap into a neighbouring event;
    # split it wherever the local energy density stays at the noise level
    gain = z * z - cost
    density_len = max(1, int(round(cfg.quiet_density_s * sr)))
    active = moving_average(z * z, min(density_len, z.size)) > cost
    min_quiet = max(1, int(round(cfg.min_quiet_s * sr)))
    span = max(3, int(round(cfg.edge_fit_s * sr)))
    reach = blur_len // 2 + density_len // 2 + span
    csum = np.concatenate(([0.0], np.cumsum(z * z)))
    runs = _active_runs(active, 0, x.size, min_quiet)
    run_starts = np.array([r[0] for r in runs], dtype=np.int64)
    run_ends = np.array([r[1] for r in runs], dtype=np.int64)
    pieces = []
    for seg in kept:
        hit = np.flatnonzero((run_ends > seg.start_idx) & (run_starts < seg.end_idx))
        for a, b in (runs[i] for i in hit):
            mid = (a + b) // 2
            s = _best_edge(gain, max(a - density_len, 0), mid)
            e = _best_edge(gain, mid, min(b + density_len, x.size), reverse=True)
            if e - s < 2:
                continue
            s = _hinge_edge(z, s, s - span, min(s + reach, mid), span + reach, blur_len, True)
            e = _hinge_edge(z, e, max(e - reach, mid), e + span, span + reach, blur_len, False)
            energy = (csum[e] - csum[s]) / sr if e > s else 0.0
            if energy > 0 and energy >= floor * (e - s) / sr:
                pieces.append(Segment(s, e, energy))
    refined = _resolve_overlaps(non_max_suppress(pieces, cfg.nms_iou_threshold))
    min_event = cfg.min_event_s * sr
    min_core = cfg.min_core_s * sr
    zz = z * z
    events, rejected = [], []
    for s in refined:
        long_enough = len(s) >= min_event and core_length(zz[s.start_idx : s.end_idx]) >= min_core
        (events if long_enough else rejected).append(s)
    return SegmentationResult(events, rejected)


def core_length(power: np.ndarray, fraction: float = CORE_ENERGY_FRACTION) -> int:
    """Length of the shortest run of samples holding ``fraction`` of the total power."""
    csum = np.concatenate(([0.0], np.cumsum(power)))
    total = csum[-1]
    if total <= 0:
        return 0
    # for each start i, first end j with csum[j] - csum[i] >= fraction * total
    ends = np.searchsorted(csum, csum[:-1] + fraction * total * (1 - 1e-12), side="left")
    valid = ends <= power.size
    return int(np.min(ends[valid] - np.flatnonzero(valid)))


def _resolve_overlaps(segs: list[Segment]) -> list[Segment]:
    out: list[Segment] = []
    for seg in segs:
        if out and seg.start_idx < out[-1].end_idx:
            prev = out[-1]
            cut = (max(prev.start_idx, seg.start_idx) + min(prev.end_idx, seg.end_idx)) // 2
            cut = min(max(cut, prev.start_idx + 1), seg.end_idx - 1)
            out[-1] = Segment(prev.start_idx, cut, prev.peak_energy)
            seg = Segment(cut, seg.end_idx, seg.peak_energy)
        out.append(seg)
    return out


def detect_events(signal, cfg: EmaConfig, sample_rate_hz: float, blur_len: int = 1) -> list[Segment]:
    return ema_segment(signal, cfg, sample_rate_hz, blur_len).events


def fixed_window_segments(signal_len: int, window_s: float, sample_rate_hz: float) -> list[Segment]:
    """Consecutive non-overlapping windows; a trailing partial window survives
    only if it spans at least half a window."""
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    w = window_s * sample_rate_hz
    n_full = int(math.floor(signal_len / w + 1e-9))
    bounds = [int(round(i * w)) for i in range(n_full + 1)]
    segs = [Segment(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]
    tail = signal_len - bounds[-1]
    if tail > 0 and tail >= w / 2:
        segs.append(Segment(bounds[-1], signal_len))
    return segs


def gaps(signal_len: int, occupied) -> list[Segment]:
    """Complement of the (sorted, non-overlapping) occupied segments within ``[0, signal_len)``."""
    out, pos = [], 0
    for seg in sorted(occupied):
        if seg.start_idx > pos:
            out.append(Segment(pos, seg.start_idx))
        pos = max(pos, seg.end_idx)
    if pos < signal_len:
        out.append(Segment(pos, signal_len))
    return out
