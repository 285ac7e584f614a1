"""Discrete-event model of the single-switch temporal-to-spatial demultiplexer.

A photon entering the loop geometry is evaluated once per delay-line pass
(positions 1..N, one position advance per pass).  At each evaluation it
may be absorbed (per-loop transmission), switched out by the modulator
(trapezoidal probability profile), or leak out through an imperfect
polarizing splitter.  A photon that fails its switch at position N gets
exactly one more pass at position N (the mirror-side double pass) and
then leaves the geometry, which the loss ledger records as an overrun.

This reproduces the three native error classes of the architecture:

1. photons entering while the switch is on reflect directly into output 1;
2. splitter leakage releases photons at wrong times during loading;
3. an imperfect switch releases photons one output/bin late.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError
from .model import RandomStream, make_tags
from .source import PhotonStream

PS_PER_NS = 1000.0


def _ns_to_ps_int(value_ns, name):
    ps = value_ns * PS_PER_NS
    if abs(ps - round(ps)) > 1e-6:
        raise ConfigError(f"{name} must be an integer number of picoseconds, got {value_ns} ns")
    return int(round(ps))


@dataclass(frozen=True)
class EomWaveform:
    """Periodic trapezoidal switch-probability profile of the modulator.

    ``phase_ns`` is the plateau start relative to the release-cycle
    origin.  The full trapezoid must fit inside one period without
    wrapping (ramp start at phase - rise >= 0).
    """

    period_ns: float = 125.0
    on_duration_ns: float = 25.0
    rise_ns: float = 5.0
    fall_ns: float = None
    p_sw_max: float = 0.95
    phase_ns: float = 43.75

    def __post_init__(self):
        if self.fall_ns is None:
            object.__setattr__(self, "fall_ns", self.rise_ns)
        if self.period_ns <= 0:
            raise ConfigError("waveform.period_ns must be > 0")
        for name in ("on_duration_ns", "rise_ns", "fall_ns", "phase_ns"):
            if getattr(self, name) < 0:
                raise ConfigError(f"waveform.{name} must be >= 0")
        if not 0.0 <= self.p_sw_max <= 1.0:
            raise ConfigError("waveform.p_sw_max must be in [0, 1]")
        if self.rise_ns + self.on_duration_ns + self.fall_ns >= self.period_ns:
            raise ConfigError("waveform rise + on + fall must be shorter than the period")
        if self.phase_ns < self.rise_ns:
            raise ConfigError("waveform.phase_ns must be >= rise_ns (no wrap across the origin)")
        if self.phase_ns + self.on_duration_ns + self.fall_ns > self.period_ns:
            raise ConfigError("waveform plateau+fall must end within the period")
        self.period_ps  # validates integrality

    @property
    def period_ps(self) -> int:
        return _ns_to_ps_int(self.period_ns, "waveform.period_ns")

    @property
    def phase_ps(self) -> float:
        return self.phase_ns * PS_PER_NS

    @property
    def rise_ps(self) -> float:
        return self.rise_ns * PS_PER_NS

    @property
    def on_ps(self) -> float:
        return self.on_duration_ns * PS_PER_NS

    @property
    def fall_ps(self) -> float:
        return self.fall_ns * PS_PER_NS


@dataclass(frozen=True)
class DemuxParams:
    """Physical parameters of the routing chain."""

    n_outputs: int = 8
    loop_delay_ns: float = 6.25
    pbs_leak: float = 0.03
    loop_transmission: float = 0.8143
    fixed_transmission: float = 0.9042
    detector_eff: float = 0.85

    def __post_init__(self):
        if self.n_outputs < 1:
            raise ConfigError("demux.n_outputs must be >= 1")
        if self.loop_delay_ns <= 0:
            raise ConfigError("demux.loop_delay_ns must be > 0")
        for name in ("pbs_leak", "loop_transmission", "fixed_transmission", "detector_eff"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"demux.{name} must be in [0, 1]")
        self.loop_delay_ps

    @property
    def loop_delay_ps(self) -> int:
        return _ns_to_ps_int(self.loop_delay_ns, "demux.loop_delay_ns")


def validate_timing(dp: DemuxParams, w: EomWaveform) -> None:
    """Check that the waveform and the loading window are consistent.

    The plateau must not start before the N-th loading bin enters and the
    period must hold an integer number of input bins.
    """
    if w.period_ps % dp.loop_delay_ps != 0:
        raise ConfigError("waveform.period_ns must be an integer multiple of demux.loop_delay_ns")
    last_entry_ps = (dp.n_outputs - 1) * dp.loop_delay_ps
    if w.phase_ps < last_entry_ps - 1e-9:
        raise ConfigError(
            f"waveform.phase_ns plateau starts at {w.phase_ns} ns, before the last "
            f"loading bin enters at {last_entry_ps / PS_PER_NS} ns"
        )


def bins_per_cycle(dp: DemuxParams, w: EomWaveform) -> int:
    return w.period_ps // dp.loop_delay_ps


def eom_switch_prob(t_ns, w: EomWaveform):
    """Switch probability at time(s) t_ns; periodic, in [0, 1]."""
    t_ps = np.atleast_1d(np.asarray(t_ns, dtype=np.float64)) * PS_PER_NS
    p = _kernels.switch_prob_array(
        np.rint(t_ps).astype(np.int64), w.period_ps, w.phase_ps,
        w.rise_ps, w.on_ps, w.fall_ps, w.p_sw_max,
    )
    return float(p[0]) if np.isscalar(t_ns) else p


def bin_to_channel(bin_in_cycle: int, dp: DemuxParams) -> int:
    """Map loading bin k (1..N, earliest first) to its target output.

    The earliest photon loops the most and exits the highest-index
    channel: k -> N + 1 - k.
    """
    k = int(bin_in_cycle)
    if not 1 <= k <= dp.n_outputs:
        raise ConfigError(f"bin_in_cycle must be in 1..{dp.n_outputs}, got {k}")
    return dp.n_outputs + 1 - k


@dataclass
class LossLedger:
    """Per-run photon bookkeeping; tags + losses always equal the input."""

    entered: int
    exited_by_channel: dict
    lost_by_cause: dict

    @property
    def total_exited(self) -> int:
        return sum(self.exited_by_channel.values())

    @property
    def total_lost(self) -> int:
        return sum(self.lost_by_cause.values())

    def assert_conserved(self):
        if self.total_exited + self.total_lost != self.entered:
            raise AssertionError(
                f"photon conservation violated: {self.entered} entered, "
                f"{self.total_exited} exited + {self.total_lost} lost"
            )

    def to_dict(self):
        return {
            "entered": self.entered,
            "exited_by_channel": {str(k): v for k, v in sorted(self.exited_by_channel.items())},
            "lost_by_cause": dict(sorted(self.lost_by_cause.items())),
        }


@dataclass
class RouteResult:
    tags_by_channel: dict
    ledger: LossLedger
    # raw per-photon outcome arrays, kept for analytic cross-checks
    exit_channel: np.ndarray = field(repr=False, default=None)
    exit_k: np.ndarray = field(repr=False, default=None)
    outcome: np.ndarray = field(repr=False, default=None)


def route(stream: PhotonStream, dp: DemuxParams, w: EomWaveform,
          rng: RandomStream, backend=None) -> RouteResult:
    """Propagate a photon stream through the demultiplexer.

    Returns per-channel sorted tag streams (channels 1..N) plus the loss
    ledger.  Every input photon ends either as a tag or as a ledger entry.
    """
    validate_timing(dp, w)
    if stream.pulse_period_ps != dp.loop_delay_ps:
        raise ConfigError(
            f"input bin pitch {stream.pulse_period_ps} ps does not match "
            f"demux.loop_delay {dp.loop_delay_ps} ps"
        )
    entry = stream.entry_times_ps()
    seeds = rng.photon_seeds(stream.n_photons)
    exit_channel, exit_k, outcome = _kernels.route_photons(
        entry, seeds, dp.n_outputs, dp.loop_delay_ps,
        dp.pbs_leak, dp.loop_transmission, dp.fixed_transmission,
        dp.detector_eff, w.period_ps, w.phase_ps, w.rise_ps, w.on_ps,
        w.fall_ps, w.p_sw_max, backend=backend,
    )

    detected = outcome == _kernels.OUTCOME_DETECTED
    exit_time = entry + exit_k.astype(np.int64) * np.int64(dp.loop_delay_ps)
    tags_by_channel = {}
    for ch in range(1, dp.n_outputs + 1):
        mask = detected & (exit_channel == ch)
        ts = np.sort(exit_time[mask])
        tags_by_channel[ch] = make_tags(np.full(ts.size, ch, dtype=np.uint32), ts)

    exited = {ch: int(t.size) for ch, t in tags_by_channel.items()}
    causes = np.bincount(outcome, minlength=5)
    lost = {
        name: int(causes[code])
        for code, name in _kernels.OUTCOME_NAMES.items()
        if code != _kernels.OUTCOME_DETECTED and causes[code]
    }
    ledger = LossLedger(entered=stream.n_photons, exited_by_channel=exited, lost_by_cause=lost)
    ledger.assert_conserved()
    return RouteResult(tags_by_channel, ledger, exit_channel, exit_k, outcome)


@dataclass
class ExitDistribution:
    """Analytic per-photon exit chain for one entry time.

    ``p_exit[k]`` is the probability of leaving the chain at evaluation k
    (before the coupling and detector draws); ``channel[k]`` and
    ``time_ps[k]`` locate that exit.  p_exit.sum() + p_lost_loop +
    p_overrun == 1 up to float rounding.
    """

    channel: np.ndarray
    time_ps: np.ndarray
    p_exit: np.ndarray
    p_lost_loop: float
    p_overrun: float
    detection_factor: float  # fixed_transmission * detector_eff

    def total_probability(self) -> float:
        return float(self.p_exit.sum() + self.p_lost_loop + self.p_overrun)

    def p_detected(self) -> np.ndarray:
        return self.p_exit * self.detection_factor


def exit_distribution(entry_time_ps, dp: DemuxParams, w: EomWaveform) -> ExitDistribution:
    """Exact exit/loss distribution for a photon entering at the given time."""
    n_eval = dp.n_outputs + 1
    t_k = np.int64(entry_time_ps) + np.arange(n_eval, dtype=np.int64) * np.int64(dp.loop_delay_ps)
    p_sw = _kernels.switch_prob_array(
        t_k, w.period_ps, w.phase_ps, w.rise_ps, w.on_ps, w.fall_ps, w.p_sw_max
    )
    channel = np.minimum(1 + np.arange(n_eval), dp.n_outputs)
    p_exit = np.zeros(n_eval)
    inflight = 1.0
    lost_loop = 0.0
    for k in range(n_eval):
        if k >= 1:
            lost_loop += inflight * (1.0 - dp.loop_transmission)
            inflight *= dp.loop_transmission
        step = p_sw[k] + (1.0 - p_sw[k]) * dp.pbs_leak
        p_exit[k] = inflight * step
        inflight -= p_exit[k]
    return ExitDistribution(
        channel=channel,
        time_ps=t_k,
        p_exit=p_exit,
        p_lost_loop=lost_loop,
        p_overrun=inflight,
        detection_factor=dp.fixed_transmission * dp.detector_eff,
    )


def expected_folded_counts(stream: PhotonStream, dp: DemuxParams, w: EomWaveform):
    """Expected detected counts per (channel, cycle slot) for a given stream.

    Conditions on the stream's actual entry times (offsets included), so a
    routed Monte Carlo run can be compared slot by slot at Poisson
    resolution.  Returns an array of shape (n_outputs + 1, bins_per_cycle)
    indexed by channel (row 0 unused) and grid slot within the cycle.
    """
    validate_timing(dp, w)
    nbins = bins_per_cycle(dp, w)
    delay = np.int64(dp.loop_delay_ps)
    entry = stream.entry_times_ps()
    grid = stream.bin_index * delay
    expected = np.zeros((dp.n_outputs + 1, nbins))
    inflight = np.ones(entry.size)
    for k in range(dp.n_outputs + 1):
        if k >= 1:
            inflight *= dp.loop_transmission
        t_k = entry + np.int64(k) * delay
        p_sw = _kernels.switch_prob_array(
            t_k, w.period_ps, w.phase_ps, w.rise_ps, w.on_ps, w.fall_ps, w.p_sw_max
        )
        step = p_sw + (1.0 - p_sw) * dp.pbs_leak
        p_exit = inflight * step
        inflight = inflight - p_exit
        ch = min(1 + k, dp.n_outputs)
        slot = ((grid + np.int64(k) * delay) % np.int64(w.period_ps)) // delay
        np.add.at(expected[ch], slot, p_exit * dp.fixed_transmission * dp.detector_eff)
    return expected
