"""Hot numeric kernels: numba ``@njit`` versions with pure-numpy twins.

Set the environment variable ``DEMUXSIM_DISABLE_NUMBA=1`` to force the
numpy fallback path (the default dispatch uses numba when importable).
Both paths are bit-identical: the routing kernel draws its randomness
from a per-photon splitmix64 counter stream with a rigid draw schedule,
so outputs do not depend on the backend or on the thread count.

``benchmarks/bench_kernels.py`` compares the two paths on synthetic
workloads.
"""

import os

import numpy as np

_U = np.uint64
_SM_GAMMA = _U(0x9E3779B97F4A7C15)
_SM_MUL1 = _U(0xBF58476D1CE4E5B9)
_SM_MUL2 = _U(0x94D049BB133111EB)
_INV53 = 2.0 ** -53

# Routing outcome codes (per photon, exactly one applies).
OUTCOME_DETECTED = 0
OUTCOME_LOST_LOOP = 1      # absorbed in a delay loop
OUTCOME_LOST_OVERRUN = 2   # walked off after the final pass at position N
OUTCOME_LOST_COUPLING = 3  # failed the one-time in/out coupling
OUTCOME_LOST_DETECTOR = 4  # not registered by the output detector
OUTCOME_NAMES = {
    OUTCOME_DETECTED: "detected",
    OUTCOME_LOST_LOOP: "loop_loss",
    OUTCOME_LOST_OVERRUN: "overrun",
    OUTCOME_LOST_COUPLING: "coupling_loss",
    OUTCOME_LOST_DETECTOR: "detector_loss",
}

_DISABLED = os.environ.get("DEMUXSIM_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on",
)

NUMBA_ENABLED = False
if not _DISABLED:
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - environment dependent
        NUMBA_ENABLED = False


def switch_prob_array(t_ps, period_ps, phase_ps, rise_ps, on_ps, fall_ps, p_max):
    """Trapezoidal switch probability, vectorized over absolute times (ps).

    Zero off-plateau, linear ramp of ``rise_ps`` up to ``p_max``, plateau
    for ``on_ps`` (endpoints inclusive), then a linear fall; periodic with
    ``period_ps``.  Identical arithmetic to the in-kernel scalar version.
    """
    tm = np.asarray(t_ps, dtype=np.int64) % np.int64(period_ps)
    tm = tm.astype(np.float64)
    p = np.zeros_like(tm)
    ramp_start = phase_ps - rise_ps
    if rise_ps > 0.0:
        m = (tm >= ramp_start) & (tm < phase_ps)
        p[m] = p_max * (tm[m] - ramp_start) / rise_ps
    m = (tm >= phase_ps) & (tm <= phase_ps + on_ps)
    p[m] = p_max
    if fall_ps > 0.0:
        m = (tm > phase_ps + on_ps) & (tm < phase_ps + on_ps + fall_ps)
        p[m] = p_max * (phase_ps + on_ps + fall_ps - tm[m]) / fall_ps
    return p


def _route_photons_numpy(entry_ps, seeds, n_outputs, loop_delay_ps,
                         pbs_leak, loop_transmission, fixed_transmission,
                         detector_eff, period_ps, phase_ps, rise_ps, on_ps,
                         fall_ps, p_max):
    """Vectorized twin of the numba routing kernel (same draw schedule)."""
    n = entry_ps.shape[0]
    states = seeds.copy()
    exit_channel = np.zeros(n, dtype=np.int32)
    exit_k = np.full(n, -1, dtype=np.int32)
    outcome = np.full(n, OUTCOME_LOST_OVERRUN, dtype=np.uint8)
    alive = np.arange(n, dtype=np.int64)

    def draw(idx):
        s = states[idx] + _SM_GAMMA
        states[idx] = s
        z = (s ^ (s >> _U(30))) * _SM_MUL1
        z = (z ^ (z >> _U(27))) * _SM_MUL2
        z = z ^ (z >> _U(31))
        return (z >> _U(11)).astype(np.float64) * _INV53

    for k in range(n_outputs + 1):
        if alive.size == 0:
            break
        u_surv = draw(alive)
        u_sw = draw(alive)
        u_leak = draw(alive)
        if k >= 1:
            lost = u_surv >= loop_transmission
            outcome[alive[lost]] = OUTCOME_LOST_LOOP
            alive = alive[~lost]
            u_sw = u_sw[~lost]
            u_leak = u_leak[~lost]
            if alive.size == 0:
                break
        t_k = entry_ps[alive] + np.int64(k) * np.int64(loop_delay_ps)
        p = switch_prob_array(t_k, period_ps, phase_ps, rise_ps, on_ps, fall_ps, p_max)
        exits = (u_sw < p) | (u_leak < pbs_leak)
        idx = alive[exits]
        if idx.size:
            pos = min(1 + k, n_outputs)
            exit_channel[idx] = pos
            exit_k[idx] = k
            u_fix = draw(idx)
            u_det = draw(idx)
            out = np.where(
                u_fix >= fixed_transmission, OUTCOME_LOST_COUPLING,
                np.where(u_det >= detector_eff, OUTCOME_LOST_DETECTOR, OUTCOME_DETECTED),
            ).astype(np.uint8)
            outcome[idx] = out
        alive = alive[~exits]
    return exit_channel, exit_k, outcome


if NUMBA_ENABLED:
    from numba import njit, prange

    @njit(cache=True, inline="always")
    def _sm64_next(state):
        state = state + _U(0x9E3779B97F4A7C15)
        z = state
        z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
        z = z ^ (z >> _U(31))
        return state, np.float64(z >> _U(11)) * (2.0 ** -53)

    @njit(cache=True, inline="always")
    def _switch_prob_scalar(t_ps, period_ps, phase_ps, rise_ps, on_ps, fall_ps, p_max):
        tm = np.float64(t_ps % period_ps)
        ramp_start = phase_ps - rise_ps
        if rise_ps > 0.0 and ramp_start <= tm < phase_ps:
            return p_max * (tm - ramp_start) / rise_ps
        if phase_ps <= tm <= phase_ps + on_ps:
            return p_max
        if fall_ps > 0.0 and phase_ps + on_ps < tm < phase_ps + on_ps + fall_ps:
            return p_max * (phase_ps + on_ps + fall_ps - tm) / fall_ps
        return 0.0

    @njit(cache=True, parallel=True)
    def _route_photons_numba(entry_ps, seeds, n_outputs, loop_delay_ps,
                             pbs_leak, loop_transmission, fixed_transmission,
                             detector_eff, period_ps, phase_ps, rise_ps, on_ps,
                             fall_ps, p_max):
        n = entry_ps.shape[0]
        exit_channel = np.zeros(n, dtype=np.int32)
        exit_k = np.full(n, -1, dtype=np.int32)
        outcome = np.full(n, OUTCOME_LOST_OVERRUN, dtype=np.uint8)
        for i in prange(n):
            st = seeds[i]
            for k in range(n_outputs + 1):
                st, u_surv = _sm64_next(st)
                st, u_sw = _sm64_next(st)
                st, u_leak = _sm64_next(st)
                if k >= 1 and u_surv >= loop_transmission:
                    outcome[i] = OUTCOME_LOST_LOOP
                    break
                t_k = entry_ps[i] + np.int64(k) * np.int64(loop_delay_ps)
                p = _switch_prob_scalar(t_k, period_ps, phase_ps, rise_ps,
                                        on_ps, fall_ps, p_max)
                if u_sw < p or u_leak < pbs_leak:
                    pos = 1 + k
                    if pos > n_outputs:
                        pos = n_outputs
                    exit_channel[i] = pos
                    exit_k[i] = k
                    st, u_fix = _sm64_next(st)
                    st, u_det = _sm64_next(st)
                    if u_fix >= fixed_transmission:
                        outcome[i] = OUTCOME_LOST_COUPLING
                    elif u_det >= detector_eff:
                        outcome[i] = OUTCOME_LOST_DETECTOR
                    else:
                        outcome[i] = OUTCOME_DETECTED
                    break
        return exit_channel, exit_k, outcome

    @njit(cache=True)
    def _correlate_numba(ts_a, ts_b, max_delay_ps, bin_width_ps):
        n_bins = (2 * max_delay_ps) // bin_width_ps + 1
        counts = np.zeros(n_bins, dtype=np.int64)
        lo = 0
        for i in range(ts_a.shape[0]):
            t = ts_a[i]
            while lo < ts_b.shape[0] and ts_b[lo] < t - max_delay_ps:
                lo += 1
            j = lo
            while j < ts_b.shape[0] and ts_b[j] <= t + max_delay_ps:
                d = ts_b[j] - t
                counts[(d + max_delay_ps) // bin_width_ps] += 1
                j += 1
        return counts

    @njit(cache=True)
    def _nfold_numba(ts_flat, starts, window_ps):
        n_ch = starts.shape[0] - 1
        heads = starts[:-1].copy()
        count = 0
        while True:
            tmin = np.int64(2**62)
            tmax = np.int64(-(2**62))
            argmin = 0
            for c in range(n_ch):
                if heads[c] >= starts[c + 1]:
                    return count
                t = ts_flat[heads[c]]
                if t < tmin:
                    tmin = t
                    argmin = c
                if t > tmax:
                    tmax = t
            if tmax - tmin <= window_ps:
                count += 1
                for c in range(n_ch):
                    heads[c] += 1
            else:
                heads[argmin] += 1


def _correlate_numpy(ts_a, ts_b, max_delay_ps, bin_width_ps, chunk=200_000):
    n_bins = (2 * max_delay_ps) // bin_width_ps + 1
    counts = np.zeros(n_bins, dtype=np.int64)
    lo = np.searchsorted(ts_b, ts_a - max_delay_ps, side="left")
    hi = np.searchsorted(ts_b, ts_a + max_delay_ps, side="right")
    lens = hi - lo
    for c0 in range(0, ts_a.shape[0], chunk):
        c1 = min(c0 + chunk, ts_a.shape[0])
        l = lens[c0:c1]
        total = int(l.sum())
        if total == 0:
            continue
        # flat indices into ts_b for every (a, partner) pair of the chunk
        rep_starts = np.repeat(lo[c0:c1], l)
        offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(l) - l, l)
        d = ts_b[rep_starts + offsets] - np.repeat(ts_a[c0:c1], l)
        counts += np.bincount((d + max_delay_ps) // bin_width_ps, minlength=n_bins)
    return counts


def _nfold_python(ts_flat, starts, window_ps):
    n_ch = starts.shape[0] - 1
    heads = [int(s) for s in starts[:-1]]
    ends = [int(s) for s in starts[1:]]
    ts = ts_flat.tolist()
    count = 0
    while True:
        tmin = tmax = None
        argmin = 0
        for c in range(n_ch):
            if heads[c] >= ends[c]:
                return count
            t = ts[heads[c]]
            if tmin is None or t < tmin:
                tmin = t
                argmin = c
            if tmax is None or t > tmax:
                tmax = t
        if tmax - tmin <= window_ps:
            count += 1
            for c in range(n_ch):
                heads[c] += 1
        else:
            heads[argmin] += 1


def route_photons(entry_ps, seeds, n_outputs, loop_delay_ps, pbs_leak,
                  loop_transmission, fixed_transmission, detector_eff,
                  period_ps, phase_ps, rise_ps, on_ps, fall_ps, p_max,
                  backend=None):
    """Dispatch the routing kernel; returns (exit_channel, exit_k, outcome)."""
    entry_ps = np.ascontiguousarray(entry_ps, dtype=np.int64)
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    args = (entry_ps, seeds, int(n_outputs), int(loop_delay_ps),
            float(pbs_leak), float(loop_transmission), float(fixed_transmission),
            float(detector_eff), int(period_ps), float(phase_ps), float(rise_ps),
            float(on_ps), float(fall_ps), float(p_max))
    if _use_numba(backend):
        return _route_photons_numba(*args)
    return _route_photons_numpy(*args)


def correlate_diffs(ts_a, ts_b, max_delay_ps, bin_width_ps, backend=None):
    """Histogram counts of ts_b - ts_a over all pairs with |diff| <= max_delay."""
    ts_a = np.ascontiguousarray(ts_a, dtype=np.int64)
    ts_b = np.ascontiguousarray(ts_b, dtype=np.int64)
    if _use_numba(backend):
        return _correlate_numba(ts_a, ts_b, int(max_delay_ps), int(bin_width_ps))
    return _correlate_numpy(ts_a, ts_b, int(max_delay_ps), int(bin_width_ps))


def nfold_count(streams, window_ps, backend=None):
    """Greedy earliest-first count of n-fold coincidences across sorted streams."""
    starts = np.zeros(len(streams) + 1, dtype=np.int64)
    for i, s in enumerate(streams):
        starts[i + 1] = starts[i] + len(s)
    if starts[-1] == 0 or any(len(s) == 0 for s in streams):
        return 0
    ts_flat = np.concatenate([np.ascontiguousarray(s, dtype=np.int64) for s in streams])
    if _use_numba(backend):
        return int(_nfold_numba(ts_flat, starts, np.int64(window_ps)))
    return int(_nfold_python(ts_flat, starts, int(window_ps)))


def _use_numba(backend):
    if backend is None:
        return NUMBA_ENABLED
    if backend == "numba":
        if not NUMBA_ENABLED:
            raise RuntimeError("numba backend requested but numba is disabled/unavailable")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")


def set_num_threads(n):
    """Limit numba's worker threads (no-op on the numpy path)."""
    if NUMBA_ENABLED and n:
        import numba

        numba.set_num_threads(max(1, int(n)))
