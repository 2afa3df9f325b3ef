"""Metrics and statistics for the experiment assays.

Interval structure (histogram, entropy, just-ratio proximity), scene-level
consonance diagnostics, survival analysis (Kaplan-Meier), synchrony measures
(order parameter, PLV, vector strength), and the seed-level hypothesis tests
(Pearson/Fisher, Welch t with a series/continued-fraction t CDF).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .landscape import FIELD_COEFFS, consonance_core

INTERVAL_BIN_CT = 5.0
INTERVAL_RANGE_CT = 1200.0
INTERVAL_BINS = int(INTERVAL_RANGE_CT / INTERVAL_BIN_CT)  # 240

JI_SIGMA_CT = 15.0
JI_MAX_PQ = 8


def _ji_ratio_table():
    """Reduced ratios p/q in [1, 2) with p, q <= the max order, after folding
    every coprime pair into one octave; weight 2 / (p + q), capped at 1."""
    seen = {}
    for p in range(1, JI_MAX_PQ + 1):
        for q in range(1, JI_MAX_PQ + 1):
            if math.gcd(p, q) != 1:
                continue
            num, den = p, q
            while num / den >= 2.0:
                den *= 2
            while num / den < 1.0:
                num *= 2
            g = math.gcd(num, den)
            num, den = num // g, den // g
            cents = 1200.0 * math.log2(num / den)
            weight = min(1.0, 2.0 / (num + den))
            key = (num, den)
            if key not in seen or seen[key][1] < weight:
                seen[key] = (cents, weight)
    cents = np.array([v[0] for v in seen.values()])
    weights = np.array([v[1] for v in seen.values()])
    return cents, weights


JI_RATIO_CENTS, JI_RATIO_WEIGHTS = _ji_ratio_table()


def pairwise_intervals_ct(pitch_cents) -> np.ndarray:
    """All unordered pair intervals, folded into [0, 1200) cents."""
    p = np.asarray(pitch_cents, dtype=float)
    if p.size < 2:
        return np.array([])
    diffs = np.abs(p[:, None] - p[None, :])
    iu = np.triu_indices(p.size, k=1)
    return np.mod(diffs[iu], INTERVAL_RANGE_CT)


def interval_histogram(pitch_cents) -> np.ndarray:
    """Counts over 240 bins of 5 ct spanning one octave."""
    intervals = pairwise_intervals_ct(pitch_cents)
    counts, _ = np.histogram(intervals, bins=INTERVAL_BINS, range=(0.0, INTERVAL_RANGE_CT))
    return counts


def interval_entropy(counts) -> float:
    """Shannon entropy (nats) of a histogram; errors on an empty one."""
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total <= 0:
        raise ValueError("empty histogram")
    p = c[c > 0] / total
    return float(-np.sum(p * np.log(p)))


def unique_pitch_bins(pitch_bins) -> int:
    """Distinct occupied grid bins among the given (live-agent) pitches."""
    return int(np.unique(np.asarray(pitch_bins)).size)


def ji_score(intervals_ct) -> float:
    """Mean weighted proximity of intervals to simple just ratios.

    Per interval: max over the ratio table of weight * exp(-d^2 / (2 sigma^2))
    with d the circular cent distance to the ratio.
    """
    iv = np.atleast_1d(np.asarray(intervals_ct, dtype=float))
    if iv.size == 0:
        return 0.0
    d = np.abs(iv[:, None] - JI_RATIO_CENTS[None, :])
    d = np.minimum(d, INTERVAL_RANGE_CT - d)
    scores = JI_RATIO_WEIGHTS[None, :] * np.exp(-(d * d) / (2.0 * JI_SIGMA_CT ** 2))
    return float(scores.max(axis=1).mean())


def c_score_mean(scene) -> float:
    """Mean exact-LOO C_field across living agents."""
    scores = scene.c_scores()
    if not scores:
        raise ValueError("no living agents")
    return float(np.mean([c for c, _ in scores.values()]))


def scene_consonance_G(scene) -> float:
    """Scene-level consonance after subtracting the mean singleton
    contribution: G = a H_soc + b R_soc + c H_soc R_soc over band means."""
    live = scene.live()
    if not live:
        raise ValueError("no living agents")
    engine = scene.engine
    mix = scene.total_spectrum()
    h_mix, r_mix = engine.band_means(mix)
    cache = getattr(scene, "_singleton_means", None)
    if cache is None:
        cache = scene._singleton_means = {}
    h_solo = np.empty(len(live))
    r_solo = np.empty(len(live))
    for i, agent in enumerate(live):
        key = agent.pitch_bin
        if key not in cache:
            from .landscape import voice_deposit
            dep = voice_deposit(scene.grid, agent.pitch_bin, scene.timbre) + scene.drone_dep
            cache[key] = engine.band_means(dep, nonzero=np.nonzero(dep)[0])
        h_solo[i], r_solo[i] = cache[key]
    h_soc = h_mix - float(h_solo.mean())
    r_soc = r_mix - float(r_solo.mean())
    a, b, c, _ = FIELD_COEFFS
    return a * h_soc + b * r_soc + c * h_soc * r_soc


# ---------------------------------------------------------------------------
# Seed-level statistics
# ---------------------------------------------------------------------------

def pearson_r(x, y):
    """Pearson correlation; None when either side has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 3:
        raise ValueError("need >= 3 paired samples")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = math.sqrt(float(xd @ xd))
    sy = math.sqrt(float(yd @ yd))
    if sx == 0.0 or sy == 0.0:
        return None
    return float((xd @ yd) / (sx * sy))


def fisher_mean(rs) -> tuple[float, float]:
    """(mean z, back-transformed mean r) over Fisher z-transformed r values."""
    arr = np.asarray(list(rs), dtype=float)
    z = np.arctanh(arr)
    mz = float(z.mean())
    return mz, float(np.tanh(mz))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            break
    return h


def _betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), accurate to ~1e-10."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(1.0 - x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: float) -> float:
    """Two-sided p-value from the t distribution."""
    if math.isinf(t):
        return 0.0
    if dof <= 0:
        raise ValueError("dof must be positive")
    x = dof / (dof + t * t)
    return _betai(dof / 2.0, 0.5, x)


def student_t_ppf_975(dof: float) -> float:
    """97.5% t quantile by bisection on the two-sided p."""
    lo, hi = 0.0, 200.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_two_sided_p(mid, dof) > 0.05:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def welch_t(a, b) -> tuple[float, float, float]:
    """Welch's t test: (t, Welch-Satterthwaite dof, two-sided p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 3 or b.size < 3:
        raise ValueError("need >= 3 samples per group")
    va = float(a.var(ddof=1)) / a.size
    vb = float(b.var(ddof=1)) / b.size
    diff = float(a.mean() - b.mean())
    denom = va + vb
    if denom == 0.0:
        dof0 = float(a.size + b.size - 2)
        return (0.0, dof0, 1.0) if diff == 0 else (math.copysign(math.inf, diff), dof0, 0.0)
    t = diff / math.sqrt(denom)
    num = denom * denom
    dof_den = 0.0
    if va > 0:
        dof_den += va * va / (a.size - 1)
    if vb > 0:
        dof_den += vb * vb / (b.size - 1)
    dof = num / dof_den
    return t, dof, student_t_two_sided_p(t, dof)


# ---------------------------------------------------------------------------
# Survival
# ---------------------------------------------------------------------------

@dataclass
class KMCurve:
    times: np.ndarray
    survival: np.ndarray
    median: float


def kaplan_meier(lifetimes) -> KMCurve:
    """Product-limit estimate for fully observed lifetimes (no censoring).

    The median is the first time with S(t) <= 0.5.
    """
    arr = np.asarray(list(lifetimes), dtype=float)
    if arr.size == 0:
        raise ValueError("empty group")
    times, counts = np.unique(arr, return_counts=True)
    at_risk = arr.size - np.concatenate(([0], np.cumsum(counts[:-1])))
    factors = (at_risk - counts) / at_risk
    survival = np.cumprod(factors)
    median = float(times[np.nonzero(survival <= 0.5)[0][0]]) if np.any(survival <= 0.5) else math.inf
    return KMCurve(times=times, survival=survival, median=median)


def median_split(values, keys) -> tuple[np.ndarray, np.ndarray]:
    """Split values into (high, low) groups by the median of keys; ties on
    the median go to the high group."""
    values = np.asarray(values)
    keys = np.asarray(keys, dtype=float)
    med = float(np.median(keys))
    high = keys >= med
    return values[high], values[~high]


# ---------------------------------------------------------------------------
# Synchrony
# ---------------------------------------------------------------------------

def order_parameter(phases) -> float:
    """Kuramoto order parameter |mean exp(i phi)|."""
    ph = np.asarray(phases, dtype=float)
    return float(np.abs(np.mean(np.exp(1j * ph))))


def plv(phase_trace, times, drive_hz: float) -> float:
    """Phase-locking value of one trace against a fixed reference beat."""
    theta = 2.0 * math.pi * drive_hz * np.asarray(times, dtype=float)
    return float(np.abs(np.mean(np.exp(1j * (np.asarray(phase_trace) - theta)))))


def plv_timecourse(traces: np.ndarray, dt: float, drive_hz: float,
                   window_s: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Group-mean PLV per non-overlapping window.

    traces: (n_samples, n_agents). Returns (window centers, mean PLV).
    """
    n_samples, n_agents = traces.shape
    win = int(round(window_s / dt))
    n_win = n_samples // win
    times = np.arange(n_samples) * dt
    theta = 2.0 * math.pi * drive_hz * times
    rel = np.exp(1j * (traces - theta[:, None]))
    centers = np.empty(n_win)
    means = np.empty(n_win)
    for w in range(n_win):
        seg = rel[w * win:(w + 1) * win]
        per_agent = np.abs(seg.mean(axis=0))
        centers[w] = (w + 0.5) * win * dt
        means[w] = per_agent.mean()
    return centers, means


def vector_strength(onset_times, period_s: float):
    """Circular concentration of onset times on a periodic beat; None when
    there are no onsets."""
    t = np.asarray(list(onset_times), dtype=float)
    if t.size == 0:
        return None
    return float(np.abs(np.mean(np.exp(2j * math.pi * t / period_s))))


def auc_c(trajectory) -> float:
    """Duration-normalized trapezoid mean of a uniformly sampled trajectory."""
    y = np.asarray(trajectory, dtype=float)
    if y.size == 0:
        raise ValueError("empty trajectory")
    if y.size == 1:
        return float(y[0])
    return float(np.trapz(y) / (y.size - 1))
