"""Closed-form prediction layer: channel-efficiency chain, N-fold rates,
parameter sweeps and the Gaussian-beam clear-aperture output budget."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .demux import DemuxParams, EomWaveform
from .errors import ConfigError
from .tagproc import RateSummary

SPEED_OF_LIGHT_MM_PER_NS = 299.792458

# Beam spacing in units of effective beam diameters, calibrated once so a
# 1 ns loop with 1 mm beams packs 16 outputs into a 1-inch clear aperture;
# frozen as the default thereafter.
DEFAULT_SPACING_FACTOR = 1.45


@dataclass(frozen=True)
class ChainModel:
    """Geometric channel-efficiency chain: eta_j = eta1 * r_loop**(j-1)."""

    eta1: float
    r_loop: float
    p_sw_max: float = 0.95
    fixed: float = None  # one-time survival (coupling * detector), eta1 / p_sw_max

    def __post_init__(self):
        if not 0.0 < self.eta1 <= 1.0:
            raise ConfigError("chain.eta1 must be in (0, 1]")
        if not 0.0 < self.r_loop <= 1.0:
            raise ConfigError("chain.r_loop must be in (0, 1]")
        if self.fixed is None:
            object.__setattr__(self, "fixed", self.eta1 / self.p_sw_max)

    def eta(self, j) -> float:
        """Predicted efficiency of output channel j (1-based)."""
        return self.eta1 * self.r_loop ** (np.asarray(j) - 1)

    def etas(self, n) -> np.ndarray:
        return self.eta(np.arange(1, n + 1))


def fit_chain(eta_first, eta_last, n) -> ChainModel:
    """Fit the geometric chain to the first and last channel efficiencies."""
    if n < 2:
        raise ConfigError("chain fit needs n >= 2")
    if not 0.0 < eta_last <= eta_first <= 1.0:
        raise ConfigError("chain fit requires 0 < eta_last <= eta_first <= 1")
    r_loop = (eta_last / eta_first) ** (1.0 / (n - 1))
    return ChainModel(eta1=float(eta_first), r_loop=float(r_loop))


def chain_from_demux(dp: DemuxParams, w: EomWaveform) -> ChainModel:
    """Exact chain implied by the routing parameters (ideal bin alignment)."""
    p_eff = w.p_sw_max + (1.0 - w.p_sw_max) * dp.pbs_leak
    eta1 = p_eff * dp.fixed_transmission * dp.detector_eff
    r_loop = dp.loop_transmission * (1.0 - dp.pbs_leak)
    return ChainModel(eta1=eta1, r_loop=r_loop, p_sw_max=w.p_sw_max,
                      fixed=dp.fixed_transmission * dp.detector_eff)


def demux_from_chain(chain: ChainModel, *, n_outputs=8, loop_delay_ns=6.25,
                     pbs_leak=0.03, detector_eff=0.85) -> DemuxParams:
    """Realize a fitted chain as routing parameters.

    The published chain fixes only eta1 and r_loop; the partition into
    leakage vs bulk loss and switching vs coupling is chosen here and can
    be overridden.
    """
    loop_transmission = chain.r_loop / (1.0 - pbs_leak)
    if loop_transmission > 1.0 + 1e-12:
        raise ConfigError("pbs_leak too large: implied loop_transmission exceeds 1")
    p_eff = chain.p_sw_max + (1.0 - chain.p_sw_max) * pbs_leak
    fixed_transmission = chain.eta1 / (p_eff * detector_eff)
    if fixed_transmission > 1.0 + 1e-12:
        raise ConfigError("detector_eff / p_sw_max too small: implied coupling exceeds 1")
    return DemuxParams(
        n_outputs=n_outputs,
        loop_delay_ns=loop_delay_ns,
        pbs_leak=pbs_leak,
        loop_transmission=min(loop_transmission, 1.0),
        fixed_transmission=min(fixed_transmission, 1.0),
        detector_eff=detector_eff,
    )


def predict_rn(p_det, etas, f_cycle_hz, n, duration_s=1.0) -> RateSummary:
    """Predicted n-fold coincidence rate over the channel prefix {1..n}:
    R_n = f_cycle * prod_i (p_det * eta_i)."""
    etas = np.asarray(etas, dtype=np.float64)
    if n > etas.size:
        raise ConfigError(f"need {n} channel efficiencies, got {etas.size}")
    rate = f_cycle_hz * float(np.prod(p_det * etas[:n]))
    expected = rate * duration_s
    return RateSummary(
        n=int(n),
        rate_hz=rate,
        raw_counts=expected,
        duration_s=float(duration_s),
        poisson_sigma=math.sqrt(expected) / duration_s,
    )


@dataclass(frozen=True)
class GeometryParams:
    """Clear-aperture packing budget of the loop geometry."""

    wavelength_nm: float = 922.2
    waist_mm: float = 0.5
    loop_delay_ns: float = 6.25
    aperture_mm: float = 25.4
    spacing_factor: float = DEFAULT_SPACING_FACTOR

    def __post_init__(self):
        for name in ("wavelength_nm", "waist_mm", "loop_delay_ns"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"geometry.{name} must be > 0")
        if self.aperture_mm < 0:
            raise ConfigError("geometry.aperture_mm must be >= 0")
        if self.spacing_factor < 1.0:
            raise ConfigError("geometry.spacing_factor must be >= 1")


def max_outputs(g: GeometryParams) -> int:
    """Maximum parallel trajectories fitting the clear aperture.

    One loop's optical path sets the propagation distance (the relay
    telescope re-images every pass); beams are spaced by
    ``spacing_factor`` effective diameters.
    """
    path_mm = SPEED_OF_LIGHT_MM_PER_NS * g.loop_delay_ns
    wavelength_mm = g.wavelength_nm * 1e-6
    rayleigh_mm = math.pi * g.waist_mm**2 / wavelength_mm
    w_eff = g.waist_mm * math.sqrt(1.0 + (path_mm / rayleigh_mm) ** 2)
    if w_eff <= 0:
        raise ConfigError("non-positive effective beam radius")
    return int(g.aperture_mm / (g.spacing_factor * 2.0 * w_eff))


# keys a sweep point may set, grouped by the objective that consumes them
_GEOMETRY_KEYS = {"wavelength_nm", "waist_mm", "loop_delay_ns", "aperture_mm",
                  "spacing_factor"}
_RATE_KEYS = {"p_det", "f_cycle_hz", "n_outputs", "eta_first", "eta_last",
              "pbs_leak", "loop_transmission", "fixed_transmission",
              "detector_eff", "p_sw_max", "n"}


def _eval_rate_point(params):
    n = int(params.get("n", params.get("n_outputs", 8)))
    n_outputs = int(params.get("n_outputs", max(n, 8)))
    if "eta_first" in params or "eta_last" in params:
        chain = fit_chain(params["eta_first"], params["eta_last"], n_outputs)
    else:
        p_max = params.get("p_sw_max", 0.95)
        leak = params.get("pbs_leak", 0.0)
        p_eff = p_max + (1.0 - p_max) * leak
        eta1 = p_eff * params.get("fixed_transmission", 1.0) * params.get("detector_eff", 1.0)
        r_loop = params.get("loop_transmission", 1.0) * (1.0 - leak)
        chain = ChainModel(eta1=eta1, r_loop=r_loop, p_sw_max=p_max)
    summary = predict_rn(params["p_det"], chain.etas(n_outputs), params["f_cycle_hz"], n)
    return summary.rate_hz


def _eval_geometry_point(params):
    return float(max_outputs(GeometryParams(**{
        k: v for k, v in params.items() if k in _GEOMETRY_KEYS
    })))


def sweep(base: dict, grid: dict, objective: str) -> list:
    """Exhaustive grid evaluation of a closed-form objective.

    ``objective`` is ``max_outputs`` or ``r<n>`` (e.g. ``r4``).  Returns
    (point, value) rows sorted by value descending, with a lexicographic
    tie-break on the point parameters.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("sweep grid must be non-empty")
    if objective == "max_outputs":
        evaluate = _eval_geometry_point
        allowed = _GEOMETRY_KEYS
    elif objective.startswith("r") and objective[1:].isdigit():
        evaluate = _eval_rate_point
        allowed = _RATE_KEYS
    else:
        raise ConfigError(f"unknown sweep objective {objective!r}")
    for key in grid:
        if key not in allowed:
            raise ConfigError(f"sweep key {key!r} not usable with objective {objective!r}")

    names = sorted(grid)
    rows = []
    for values in itertools.product(*(grid[name] for name in names)):
        point = dict(base)
        point.update(zip(names, values))
        if objective.startswith("r") and objective != "max_outputs":
            point["n"] = int(objective[1:])
        value = evaluate(point)
        rows.append(({name: point[name] for name in names}, value))
    rows.sort(key=lambda row: (-row[1], tuple(row[0][name] for name in names)))
    return rows
