"""Time-tag analytics: histograms, peak integration, correlation estimators,
channel efficiencies and N-fold coincidence rates.

All estimators integrate peak areas in a fixed window (3 ns by default)
and normalize against distant side peaks, with uncertainties propagated
from Poissonian counting statistics.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError
from .model import TAG_DTYPE

DEFAULT_WINDOW_PS = 3000
DEFAULT_SIDE_PEAKS = 10

# metadata string recorded with every indistinguishability estimate
HOM_CORRECTION = "linear two-photon correction: I = (V_raw + g2) / (1 - g2)"


def _timestamps(tags) -> np.ndarray:
    if isinstance(tags, np.ndarray) and tags.dtype == TAG_DTYPE:
        return tags["timestamp_ps"].astype(np.int64)
    return np.asarray(tags, dtype=np.int64)


def _require_sorted(ts, what):
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise DataError(f"{what} must be sorted by timestamp")


@dataclass
class Histogram:
    """Left-closed uniform binning: counts[i] covers
    [origin + i*w, origin + (i+1)*w)."""

    bin_width_ps: int
    origin_ps: int
    counts: np.ndarray
    out_of_range: int = 0

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    def bin_starts(self) -> np.ndarray:
        return self.origin_ps + np.arange(self.n_bins, dtype=np.int64) * self.bin_width_ps

    def span_ps(self):
        return self.origin_ps, self.origin_ps + self.n_bins * self.bin_width_ps


@dataclass
class PeakSet:
    """Integrated areas of non-overlapping windows around peak centers."""

    centers_ps: np.ndarray
    window_ps: int
    areas: np.ndarray


@dataclass
class RateSummary:
    """Measured or predicted n-fold coincidence rate."""

    n: int
    rate_hz: float
    raw_counts: int
    duration_s: float
    poisson_sigma: float

    @classmethod
    def from_counts(cls, n, counts, duration_s):
        return cls(
            n=int(n),
            rate_hz=counts / duration_s,
            raw_counts=int(counts),
            duration_s=float(duration_s),
            poisson_sigma=math.sqrt(counts) / duration_s,
        )

    def to_dict(self):
        return {
            "n": self.n,
            "rate_hz": self.rate_hz,
            "raw_counts": self.raw_counts,
            "duration_s": self.duration_s,
            "poisson_sigma": self.poisson_sigma,
        }


def build_histogram(tags, bin_width_ps, origin_ps, n_bins) -> Histogram:
    """Bin timestamps; tags outside [origin, origin + n_bins*w) are counted
    separately in ``out_of_range``."""
    if bin_width_ps < 1:
        raise ConfigError("bin_width_ps must be >= 1")
    ts = _timestamps(tags)
    idx = (ts - np.int64(origin_ps)) // np.int64(bin_width_ps)
    in_range = (idx >= 0) & (idx < n_bins)
    counts = np.bincount(idx[in_range], minlength=n_bins)
    return Histogram(
        bin_width_ps=int(bin_width_ps),
        origin_ps=int(origin_ps),
        counts=counts.astype(np.int64),
        out_of_range=int(ts.size - in_range.sum()),
    )


def correlate(tags_a, tags_b, max_delay_ps, bin_width_ps, backend=None) -> Histogram:
    """Histogram of t_b - t_a over all pairs with |t_b - t_a| <= max_delay_ps.

    Two-pointer sweep over the sorted streams; equals the all-pairs oracle.
    """
    if bin_width_ps < 1:
        raise ConfigError("bin_width_ps must be >= 1")
    if max_delay_ps < 1:
        raise ConfigError("max_delay_ps must be >= 1")
    ts_a = _timestamps(tags_a)
    ts_b = _timestamps(tags_b)
    _require_sorted(ts_a, "tags_a")
    _require_sorted(ts_b, "tags_b")
    counts = _kernels.correlate_diffs(ts_a, ts_b, max_delay_ps, bin_width_ps, backend=backend)
    return Histogram(
        bin_width_ps=int(bin_width_ps),
        origin_ps=-int(max_delay_ps),
        counts=counts,
        out_of_range=0,
    )


def integrate_peaks(hist: Histogram, centers_ps, window_ps) -> PeakSet:
    """Sum histogram counts in [center - w/2, center + w/2) per center."""
    centers = np.sort(np.asarray(centers_ps, dtype=np.int64))
    if centers.size > 1 and np.any(np.diff(centers) < window_ps):
        raise ConfigError("peak windows overlap")
    lo, hi = hist.span_ps()
    if centers.size and (centers[0] - window_ps // 2 < lo or centers[-1] + window_ps // 2 > hi):
        raise DataError("histogram does not cover all requested peak windows")
    starts = hist.bin_starts()
    areas = np.empty(centers.size, dtype=np.int64)
    for i, c in enumerate(centers):
        sel = (starts >= c - window_ps // 2) & (starts < c + window_ps // 2)
        areas[i] = hist.counts[sel].sum()
    return PeakSet(centers_ps=centers, window_ps=int(window_ps), areas=areas)


def _peak_areas(corr, period_ps, window_ps, side_peaks, exclude_nearest):
    m_first = 1 + exclude_nearest
    m_last = exclude_nearest + side_peaks
    lo, hi = corr.span_ps()
    if -m_last * period_ps - window_ps // 2 < lo or m_last * period_ps + window_ps // 2 > hi:
        raise DataError(
            f"correlation histogram must span at least {2 * m_last + 1} pulse periods "
            f"for {side_peaks} side peaks each side (excluding {exclude_nearest})"
        )
    center = integrate_peaks(corr, [0], window_ps).areas[0]
    orders = np.arange(m_first, m_last + 1, dtype=np.int64)
    centers = np.concatenate([-orders[::-1], orders]) * period_ps
    side = integrate_peaks(corr, centers, window_ps)
    return int(center), side


def g2_zero(corr: Histogram, period_ps, window_ps=DEFAULT_WINDOW_PS, *,
            side_peaks=DEFAULT_SIDE_PEAKS, exclude_nearest=0) -> float:
    """Second-order autocorrelation at zero delay from a pulsed correlation
    histogram: zero-delay peak area over the mean side-peak area."""
    return g2_zero_report(corr, period_ps, window_ps,
                          side_peaks=side_peaks, exclude_nearest=exclude_nearest)["value"]


def g2_zero_report(corr: Histogram, period_ps, window_ps=DEFAULT_WINDOW_PS, *,
                   side_peaks=DEFAULT_SIDE_PEAKS, exclude_nearest=0) -> dict:
    center, side = _peak_areas(corr, period_ps, window_ps, side_peaks, exclude_nearest)
    side_sum = int(side.areas.sum())
    if side_sum == 0:
        raise DataError("all side peaks are empty; g2 undefined")
    side_mean = side_sum / side.areas.size
    value = center / side_mean
    sigma = math.sqrt(max(center, 1)) / side_mean * math.sqrt(1.0 + center / side_sum)
    return {
        "value": value,
        "sigma": sigma,
        "center_area": center,
        "side_mean": side_mean,
        "n_side_peaks": int(side.areas.size),
        "window_ps": int(window_ps),
    }


def hom_indistinguishability(corr: Histogram, g2, period_ps,
                             window_ps=DEFAULT_WINDOW_PS, *,
                             side_peaks=DEFAULT_SIDE_PEAKS, exclude_nearest=1) -> float:
    """Mean wavepacket overlap from a HOM correlation histogram.

    Computes the raw visibility V_raw = 1 - 2 * C0 / side_mean, then
    applies the two-photon correction I = (V_raw + g2) / (1 - g2); the
    result is clipped to [0, 1] (see the report for the clipping flag).
    """
    return hom_report(corr, g2, period_ps, window_ps,
                      side_peaks=side_peaks, exclude_nearest=exclude_nearest)["value"]


def hom_report(corr: Histogram, g2, period_ps, window_ps=DEFAULT_WINDOW_PS, *,
               side_peaks=DEFAULT_SIDE_PEAKS, exclude_nearest=1, g2_sigma=0.0) -> dict:
    if not 0.0 <= g2 < 1.0:
        raise ConfigError("g2 must be in [0, 1)")
    center, side = _peak_areas(corr, period_ps, window_ps, side_peaks, exclude_nearest)
    side_sum = int(side.areas.sum())
    if side_sum == 0:
        raise DataError("all side peaks are empty; HOM visibility undefined")
    side_mean = side_sum / side.areas.size
    v_raw = 1.0 - 2.0 * center / side_mean
    value = (v_raw + g2) / (1.0 - g2)
    clipped = not 0.0 <= value <= 1.0
    sigma_v = (2.0 * math.sqrt(max(center, 1)) / side_mean
               * math.sqrt(1.0 + center / side_sum))
    sigma = math.sqrt(
        (sigma_v / (1.0 - g2)) ** 2
        + ((1.0 + v_raw) / (1.0 - g2) ** 2 * g2_sigma) ** 2
    )
    return {
        "value": float(np.clip(value, 0.0, 1.0)),
        "sigma": sigma,
        "v_raw": v_raw,
        "g2_input": g2,
        "clipped": clipped,
        "correction": HOM_CORRECTION,
        "center_area": center,
        "side_mean": side_mean,
        "window_ps": int(window_ps),
    }


def fold_histogram(tags, cycle_period_ps, bin_width_ps) -> Histogram:
    """Cycle-folded time trace: histogram of timestamps modulo the period."""
    ts = _timestamps(tags) % np.int64(cycle_period_ps)
    n_bins = int(math.ceil(cycle_period_ps / bin_width_ps))
    return build_histogram(ts, bin_width_ps, 0, n_bins)


def folded_window_counts(tags, cycle_period_ps, center_ps, window_ps) -> int:
    """Number of tags whose folded time lies within window/2 of center."""
    ts = _timestamps(tags)
    d = (ts - np.int64(center_ps)) % np.int64(cycle_period_ps)
    half = window_ps // 2
    return int(((d < half) | (d >= cycle_period_ps - half)).sum())


def release_window_filter(tags, cycle_period_ps, center_ps, window_ps):
    """Keep only tags whose folded time lies within window/2 of center."""
    ts = _timestamps(tags)
    d = (ts - np.int64(center_ps)) % np.int64(cycle_period_ps)
    half = window_ps // 2
    keep = (d < half) | (d >= cycle_period_ps - half)
    return tags[keep]


def channel_efficiency(tags_by_channel: dict, monitor_tags, *, cycle_period_ps,
                       pitch_ps, release_phase_ps, n_outputs,
                       window_ps=DEFAULT_WINDOW_PS) -> np.ndarray:
    """Per-channel efficiency: counts in the channel's release window over
    counts in the mapped input time bin (both integrated in ``window_ps``).

    Channel j collects loading bin k = n_outputs + 1 - j, whose input-bin
    window is centered on (k - 1) * pitch within the cycle.
    """
    return channel_efficiency_report(
        tags_by_channel, monitor_tags, cycle_period_ps=cycle_period_ps,
        pitch_ps=pitch_ps, release_phase_ps=release_phase_ps,
        n_outputs=n_outputs, window_ps=window_ps,
    )["etas"]


def channel_efficiency_report(tags_by_channel: dict, monitor_tags, *, cycle_period_ps,
                              pitch_ps, release_phase_ps, n_outputs,
                              window_ps=DEFAULT_WINDOW_PS) -> dict:
    etas = np.zeros(n_outputs)
    sigmas = np.zeros(n_outputs)
    flagged = []
    for j in range(1, n_outputs + 1):
        k = n_outputs + 1 - j
        in_center = (k - 1) * pitch_ps
        c_in = folded_window_counts(monitor_tags, cycle_period_ps, in_center, window_ps)
        if c_in == 0:
            raise DataError(f"empty input reference bin {k} for channel {j}")
        tags = tags_by_channel.get(j)
        c_out = 0
        if tags is not None and len(tags):
            c_out = folded_window_counts(tags, cycle_period_ps, release_phase_ps, window_ps)
        eta = c_out / c_in
        sigma = math.sqrt(max(eta * abs(1.0 - eta), 1.0 / c_in) / c_in)
        etas[j - 1] = eta
        sigmas[j - 1] = sigma
        if eta > 1.0 + 3.0 * sigma:
            flagged.append(j)
    return {"etas": etas, "sigmas": sigmas, "flagged_channels": flagged,
            "window_ps": int(window_ps)}


def nfold_coincidences(streams, window_ps=DEFAULT_WINDOW_PS, *, duration_s,
                       backend=None) -> list[RateSummary]:
    """Greedy earliest-first n-fold coincidence rates for every channel
    prefix {1..n}.

    ``streams`` is a dict {channel: tags} or a sequence ordered 1..N.  An
    n-fold coincidence is one tag on each of the first n channels, all
    pairwise within ``window_ps`` (inclusive); each tag is used at most
    once per fold order.
    """
    if window_ps < 1:
        raise ConfigError("window_ps must be >= 1")
    if duration_s <= 0:
        raise ConfigError("duration_s must be > 0")
    if isinstance(streams, dict):
        ordered = [streams[ch] for ch in sorted(streams)]
    else:
        ordered = list(streams)
    ts = []
    for i, s in enumerate(ordered):
        arr = _timestamps(s)
        _require_sorted(arr, f"channel stream {i + 1}")
        ts.append(arr)
    out = []
    for n in range(1, len(ts) + 1):
        count = _kernels.nfold_count(ts[:n], window_ps, backend=backend)
        out.append(RateSummary.from_counts(n, count, duration_s))
    return out
