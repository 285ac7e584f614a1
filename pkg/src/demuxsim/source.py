"""Monte Carlo model of the pulsed quantum-dot single-photon source.

Per pulse the emitter produces 0, 1 or 2 photons.  The two-photon
probability is the small-g2 inversion p2 = g2 * p_det**2 / 2 so that the
counting-level autocorrelation of the stream equals ``g2_target`` and the
mean detected photons per pulse equals ``p_det`` exactly.

Distinguishability is a mixed-state label model: a photon carries the
common label 0 with probability sqrt(indist), otherwise a globally fresh
label.  Two photons then share a wavepacket with probability ``indist``,
which is the mean-wavepacket-overlap convention used by the analyzers.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import BENCH_CHANNEL_A, BENCH_CHANNEL_B, PhotonEvent, RandomStream, make_tags

PS_PER_SECOND = 1e12


@dataclass(frozen=True)
class EmitterParams:
    """Source parameters at the demultiplexer-input reference point.

    p_det is the end-to-end detected-photon probability per pulse; how it
    splits between source and detector efficiency is left to the user.
    """

    rep_rate_hz: float = 160e6
    p_det: float = 0.214
    g2_target: float = 0.0157
    indist: float = 0.9535
    lifetime_ps: float = 207.4
    rabi_damping: float = 0.0

    def __post_init__(self):
        if self.rep_rate_hz <= 0:
            raise ConfigError("emitter.rep_rate_hz must be > 0")
        if not 0.0 <= self.p_det <= 1.0:
            raise ConfigError("emitter.p_det must be in [0, 1]")
        if not 0.0 <= self.g2_target < 1.0:
            raise ConfigError("emitter.g2_target must be in [0, 1)")
        if not 0.0 <= self.indist <= 1.0:
            raise ConfigError("emitter.indist must be in [0, 1]")
        if self.lifetime_ps <= 0:
            raise ConfigError("emitter.lifetime_ps must be > 0")
        if self.rabi_damping < 0:
            raise ConfigError("emitter.rabi_damping must be >= 0")
        period = PS_PER_SECOND / self.rep_rate_hz
        if abs(period - round(period)) > 1e-6:
            raise ConfigError("emitter.rep_rate_hz must give an integer pulse period in ps")
        if period <= 10.0 * self.lifetime_ps:
            raise ConfigError("pulse separation must exceed 10x the emission lifetime")
        if self.p_two > self.p_det / 10.0 + 1e-15:
            raise ConfigError(
                "two-photon truncation invalid: g2_target * p_det**2 / 2 > p_det / 10"
            )

    @property
    def pulse_period_ps(self) -> int:
        return int(round(PS_PER_SECOND / self.rep_rate_hz))

    @property
    def p_two(self) -> float:
        return self.g2_target * self.p_det**2 / 2.0

    @property
    def p_one(self) -> float:
        return self.p_det - 2.0 * self.p_two


@dataclass
class PhotonStream:
    """Per-photon view of an emission run (arrays sorted by bin_index)."""

    bin_index: np.ndarray   # int64, laser pulse number of each photon
    offset_ps: np.ndarray   # int64, emission delay within the pulse bin
    label: np.ndarray       # int64, 0 = common wavepacket, >0 fresh modes
    n_pulses: int
    pulse_period_ps: int

    @property
    def n_photons(self) -> int:
        return int(self.bin_index.size)

    def entry_times_ps(self) -> np.ndarray:
        return self.bin_index * np.int64(self.pulse_period_ps) + self.offset_ps

    def photons_per_pulse(self) -> np.ndarray:
        return np.bincount(self.bin_index, minlength=self.n_pulses)

    def to_events(self) -> list[PhotonEvent]:
        """Collapse to one PhotonEvent per occupied pulse."""
        events = []
        i = 0
        b = self.bin_index
        while i < b.size:
            j = i + 1
            while j < b.size and b[j] == b[i]:
                j += 1
            n = j - i
            if n > 2:
                raise ConfigError("more than two photons in one bin")
            ev = PhotonEvent(
                bin_index=int(b[i]),
                offset_ps=float(self.offset_ps[i]),
                n_photons=n,
                label=int(self.label[i]),
                offset2_ps=float(self.offset_ps[i + 1]) if n == 2 else 0.0,
                label2=int(self.label[i + 1]) if n == 2 else -1,
            )
            events.append(ev)
            i = j
        return events

    @classmethod
    def from_events(cls, events, n_pulses, pulse_period_ps):
        bins, offs, labs = [], [], []
        for ev in events:
            if ev.n_photons >= 1:
                bins.append(ev.bin_index)
                offs.append(ev.offset_ps)
                labs.append(ev.label)
            if ev.n_photons == 2:
                bins.append(ev.bin_index)
                offs.append(ev.offset2_ps)
                labs.append(ev.label2)
        order = np.argsort(np.asarray(bins, dtype=np.int64), kind="stable")
        return cls(
            bin_index=np.asarray(bins, dtype=np.int64)[order],
            offset_ps=np.asarray(np.rint(offs), dtype=np.int64)[order],
            label=np.asarray(labs, dtype=np.int64)[order],
            n_pulses=int(n_pulses),
            pulse_period_ps=int(pulse_period_ps),
        )


def coerce_stream(events, params: EmitterParams = None, n_pulses=None) -> PhotonStream:
    if isinstance(events, PhotonStream):
        return events
    events = list(events)
    if n_pulses is None:
        n_pulses = (max(ev.bin_index for ev in events) + 1) if events else 0
    if params is None:
        raise ConfigError("params required to coerce a PhotonEvent list")
    return PhotonStream.from_events(events, n_pulses, params.pulse_period_ps)


def rabi_rate(pulse_area, params: EmitterParams):
    """Detected count rate (Hz) vs pump pulse area (units of pi).

    R(a) = p_det * rep_rate * sin(a*pi/2)**2 * exp(-damping * a); the
    maximum sits at a = 1 (pi pulse) for small damping.
    """
    area = np.asarray(pulse_area, dtype=np.float64)
    if np.any(area < 0):
        raise ConfigError("pulse_area must be >= 0")
    r_max = params.p_det * params.rep_rate_hz
    rate = r_max * np.sin(area * math.pi / 2.0) ** 2 * np.exp(-params.rabi_damping * area)
    return float(rate) if np.isscalar(pulse_area) else rate


def sample_emission(params: EmitterParams, n_pulses: int, rng: RandomStream) -> PhotonStream:
    """Draw the photon content of ``n_pulses`` consecutive laser pulses.

    Draw order (fixed for reproducibility): one occupancy uniform per
    pulse, then per-photon exponential offsets, then per-photon label
    uniforms.
    """
    if n_pulses < 0:
        raise ConfigError("n_pulses must be >= 0")
    period = params.pulse_period_ps
    u = rng.uniform(n_pulses)
    n = np.zeros(n_pulses, dtype=np.int64)
    n[u < params.p_two + params.p_one] = 1
    n[u < params.p_two] = 2

    bin_index = np.repeat(np.arange(n_pulses, dtype=np.int64), n)
    m = bin_index.size
    offsets = np.rint(rng.exponential(params.lifetime_ps, m)).astype(np.int64)
    np.clip(offsets, 0, period - 1, out=offsets)

    labels = np.zeros(m, dtype=np.int64)
    fresh = rng.uniform(m) >= math.sqrt(params.indist)
    labels[fresh] = 1 + np.arange(int(fresh.sum()), dtype=np.int64)
    return PhotonStream(bin_index, offsets, labels, int(n_pulses), period)


def hbt_bench(events, params: EmitterParams, rng: RandomStream):
    """Hanbury Brown-Twiss bench: route each photon 50:50 onto two detectors.

    Returns the two sorted tag streams (channels 100 and 101).
    """
    stream = coerce_stream(events, params)
    t = stream.entry_times_ps()
    to_b = rng.uniform(stream.n_photons) < 0.5
    return _split_tags(t, to_b)


def hom_bench(events, params: EmitterParams, rng: RandomStream):
    """Hong-Ou-Mandel bench on consecutive pulse pairs (2k, 2k+1).

    A pair with exactly one photon per pulse bunches when the labels are
    equal (never a coincidence) and splits 50:50 when they differ; any
    other occupancy routes every photon independently.  Both photons of a
    pair are mapped to the common output bin 2k+1; an unpaired trailing
    pulse keeps its own bin.  Returns two sorted tag streams (100, 101).
    """
    stream = coerce_stream(events, params)
    m = stream.n_photons
    bins = stream.bin_index
    period = np.int64(stream.pulse_period_ps)

    out_bin = bins.copy()
    paired = bins < 2 * (stream.n_pulses // 2)
    out_bin[paired] = 2 * (bins[paired] // 2) + 1

    to_b = rng.uniform(m) < 0.5

    counts = stream.photons_per_pulse()
    n_pairs = stream.n_pulses // 2
    if n_pairs:
        even = counts[0 : 2 * n_pairs : 2]
        odd = counts[1 : 2 * n_pairs : 2]
        single_pairs = np.flatnonzero((even == 1) & (odd == 1))
        if single_pairs.size:
            first = np.searchsorted(bins, 2 * single_pairs)
            second = np.searchsorted(bins, 2 * single_pairs + 1)
            same = stream.label[first] == stream.label[second]
            # bunching: the second photon follows the first one's port
            to_b[second[same]] = to_b[first[same]]

    t = out_bin * period + stream.offset_ps
    return _split_tags(t, to_b)


def _split_tags(timestamps, to_b):
    ts_a = np.sort(timestamps[~to_b])
    ts_b = np.sort(timestamps[to_b])
    tags_a = make_tags(np.full(ts_a.size, BENCH_CHANNEL_A, dtype=np.uint32), ts_a)
    tags_b = make_tags(np.full(ts_b.size, BENCH_CHANNEL_B, dtype=np.uint32), ts_b)
    return tags_a, tags_b
