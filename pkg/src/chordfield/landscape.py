"""Psychoacoustic terrain: log-frequency grids, spectra, and consonance fields.

Everything lives on a discrete log2-frequency grid. Harmonic voices deposit
smeared partials into a Spectrum; harmonicity is a two-pass power-law
projection over integer frequency ratios, roughness an interference-kernel
convolution on the ERB-rate axis, and the consonance fields are bilinear
combinations of the two after per-run calibration to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ERB_SCALE = 21.4
ERB_RATE_COEF = 0.00437

# Interference kernel g(d) = n * (exp(-p d) - exp(-q d)) with q = 4 p and p
# chosen so the peak sits at 0.25 ERB; n normalizes the peak to 1.
PL_PEAK_ERB = 0.25
PL_P = math.log(4.0) / (3.0 * PL_PEAK_ERB)
PL_Q = 4.0 * PL_P
PL_NORM = 1.0 / (math.exp(-PL_P * PL_PEAK_ERB) - math.exp(-PL_Q * PL_PEAK_ERB))

HARMONIC_ORDER = 16
HARMONIC_RHO = 0.4
# Reach of the harmonic projection in octaves; grids must extend this far
# beyond any evaluated bin so the two projection passes never hit an edge.
HARMONIC_SPAN_OCT = math.log2(HARMONIC_ORDER)

FIELD_COEFFS = (1.0, -1.35, 1.0, 0.0)
DENSITY_COEFFS = (1.0, 0.0, -1.0, 0.0)
SIGMOID_BETA = 2.0
SIGMOID_THETA = 0.0


def erb_rate(f):
    """ERB-rate z = 21.4 log10(0.00437 f + 1) for frequency f in Hz (f >= 0)."""
    arr = np.asarray(f, dtype=float)
    if np.any(arr < 0):
        raise ValueError("frequency must be nonnegative")
    z = ERB_SCALE * np.log10(ERB_RATE_COEF * arr + 1.0)
    return float(z) if np.isscalar(f) or arr.ndim == 0 else z


def pl_kernel(d):
    """Interference weight for an ERB-rate separation d >= 0.

    Vanishes at d = 0, peaks at exactly 1 for d = 0.25 ERB, decays to 0 for
    wide separations.
    """
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0):
        raise ValueError("separation must be nonnegative")
    g = PL_NORM * (np.exp(-PL_P * arr) - np.exp(-PL_Q * arr))
    return float(g) if np.isscalar(d) or arr.ndim == 0 else g


@dataclass(eq=False)
class LogFreqGrid:
    """Discrete log2-frequency axis centered on an anchor frequency.

    Bins are bin_ct cents wide; the axis spans span_oct octaves on each side
    of f_ref, with an odd bin count so the anchor sits exactly on a bin.
    """

    f_ref: float = 220.0
    span_oct: float = 6.0
    bin_ct: float = 3.0

    def __post_init__(self):
        n = int(math.floor(2.0 * self.span_oct * 1200.0 / self.bin_ct)) + 1
        if n % 2 == 0:
            raise ValueError("grid bin count must be odd; adjust span_oct/bin_ct")
        self.n_bins = n
        self.center = n // 2
        self.cents = (np.arange(n) - self.center) * self.bin_ct
        self.freqs = self.f_ref * 2.0 ** (self.cents / 1200.0)
        self.erb = erb_rate(self.freqs)
        self._harmonic_kernels: dict = {}

    def cents_of_bin(self, b):
        return (np.asarray(b) - self.center) * self.bin_ct

    def bin_of_cents(self, ct) -> int:
        b = int(round(ct / self.bin_ct)) + self.center
        if not 0 <= b < self.n_bins:
            raise ValueError(f"{ct} cents falls outside the grid")
        return b

    def band_bins(self, band_oct: float) -> tuple[int, int]:
        """Inclusive (lo, hi) bin indices of the +-band_oct band around f_ref."""
        half = int(round(band_oct * 1200.0 / self.bin_ct))
        lo, hi = self.center - half, self.center + half
        if lo < 0 or hi >= self.n_bins:
            raise ValueError("band exceeds grid span")
        return lo, hi

    def harmonic_kernel(self, order: int = HARMONIC_ORDER, rho: float = HARMONIC_RHO):
        key = (order, rho)
        if key not in self._harmonic_kernels:
            self._harmonic_kernels[key] = _build_harmonic_kernel(self.bin_ct, order, rho)
        return self._harmonic_kernels[key]


@dataclass
class VoiceTimbre:
    """Harmonic voice: n_partials partials with k**-rolloff amplitudes,
    deposited as Gaussians of smear_ct cents."""

    n_partials: int = 10
    rolloff: float = 1.0
    smear_ct: float = 5.0


DEFAULT_TIMBRE = VoiceTimbre()


@dataclass(eq=False)
class Spectrum:
    """Nonnegative spectral energy per grid bin."""

    grid: LogFreqGrid
    energy: np.ndarray

    @classmethod
    def zeros(cls, grid: LogFreqGrid) -> "Spectrum":
        return cls(grid, np.zeros(grid.n_bins))


def voice_deposit(grid: LogFreqGrid, pitch_bin: int, timbre: VoiceTimbre = DEFAULT_TIMBRE,
                  gain: float = 1.0) -> np.ndarray:
    """Energy array for one voice. Partials whose center falls off-grid are
    dropped; smear tails are clipped at the edges (never wrapped)."""
    if not 0 <= pitch_bin < grid.n_bins:
        raise ValueError(f"voice pitch bin {pitch_bin} outside grid [0, {grid.n_bins - 1}]")
    out = np.zeros(grid.n_bins)
    sigma = timbre.smear_ct
    radius = 4.0 * sigma / grid.bin_ct
    for k in range(1, timbre.n_partials + 1):
        center = pitch_bin + 1200.0 * math.log2(k) / grid.bin_ct
        if center < 0 or center > grid.n_bins - 1:
            continue
        j0 = int(math.ceil(center - radius))
        j1 = int(math.floor(center + radius))
        js = np.arange(j0, j1 + 1)
        w = np.exp(-(((js - center) * grid.bin_ct) ** 2) / (2.0 * sigma * sigma))
        w /= w.sum()
        amp = gain * float(k) ** (-timbre.rolloff)
        valid = (js >= 0) & (js < grid.n_bins)
        np.add.at(out, js[valid], amp * w[valid])
    return out


def deposit_voices(grid: LogFreqGrid, voices) -> Spectrum:
    """Linear superposition of voice deposits.

    voices: iterable of (pitch_bin, VoiceTimbre, gain) triples.
    """
    energy = np.zeros(grid.n_bins)
    for idx, (pitch_bin, timbre, gain) in enumerate(voices):
        try:
            energy += voice_deposit(grid, pitch_bin, timbre, gain)
        except ValueError as err:
            raise ValueError(f"voice {idx}: {err}") from None
    return Spectrum(grid, energy)


# ---------------------------------------------------------------------------
# Harmonicity
# ---------------------------------------------------------------------------

def _interp_taps(delta: float):
    n0 = math.floor(delta)
    frac = delta - n0
    if frac == 0.0:
        return ((n0, 1.0),)
    return ((n0, 1.0 - frac), (n0 + 1, frac))


def _build_harmonic_kernel(bin_ct: float, order: int, rho: float):
    """Collapse the two projection passes (both orientations, blended 50/50)
    into one sparse tap list over integer bin offsets.

    Valid wherever the intermediate pass positions stay on-grid, i.e. for
    bins at least HARMONIC_SPAN_OCT octaves from either grid edge.
    """
    deltas = [1200.0 * math.log2(k) / bin_ct for k in range(1, order + 1)]
    weights = [float(k) ** (-rho) for k in range(1, order + 1)]
    acc: dict[int, float] = {}
    for sign in (+1.0, -1.0):  # overtone route and its mirrored twin
        for m in range(order):
            for om, cm in _interp_taps(-sign * deltas[m]):
                wm = weights[m] * cm
                for k in range(order):
                    for ok, ck in _interp_taps(sign * deltas[k]):
                        off = om + ok
                        acc[off] = acc.get(off, 0.0) + 0.5 * wm * weights[k] * ck
    offsets = np.array(sorted(acc), dtype=np.int64)
    taps = np.array([acc[o] for o in offsets])
    return offsets, taps


def _shift_sample(arr: np.ndarray, delta: float) -> np.ndarray:
    """out[i] = linear interpolation of arr at position i + delta, 0 off-grid."""
    n = arr.size
    out = np.zeros(n)
    lo = math.floor(delta)
    frac = delta - lo
    for shift, w in ((lo, 1.0 - frac), (lo + 1, frac)):
        if w == 0.0:
            continue
        i0, i1 = max(0, -shift), min(n, n - shift)
        if i1 > i0:
            out[i0:i1] += w * arr[i0 + shift:i1 + shift]
    return out


def harmonicity(spec: Spectrum, order: int = HARMONIC_ORDER, rho: float = HARMONIC_RHO) -> np.ndarray:
    """Raw harmonicity field over the full grid (two-pass, both orientations
    blended with equal weight)."""
    if order < 1 or rho <= 0:
        raise ValueError("order must be >= 1 and rho > 0")
    S = spec.energy
    grid = spec.grid
    deltas = [1200.0 * math.log2(k) / grid.bin_ct for k in range(1, order + 1)]
    weights = [float(k) ** (-rho) for k in range(1, order + 1)]

    def two_pass(sign):
        roots = np.zeros_like(S)
        for d, w in zip(deltas, weights):
            roots += w * _shift_sample(S, sign * d)
        h = np.zeros_like(S)
        for d, w in zip(deltas, weights):
            h += w * _shift_sample(roots, -sign * d)
        return h

    return 0.5 * (two_pass(+1.0) + two_pass(-1.0))


def harmonicity_at(spec: Spectrum, bins, order: int = HARMONIC_ORDER,
                   rho: float = HARMONIC_RHO) -> np.ndarray:
    """Raw harmonicity at selected bins via the collapsed sparse kernel."""
    offsets, taps = spec.grid.harmonic_kernel(order, rho)
    bins = np.atleast_1d(np.asarray(bins, dtype=np.int64))
    idx = bins[:, None] + offsets[None, :]
    valid = (idx >= 0) & (idx < spec.grid.n_bins)
    vals = np.where(valid, spec.energy[np.clip(idx, 0, spec.grid.n_bins - 1)], 0.0)
    return vals @ taps


# ---------------------------------------------------------------------------
# Roughness
# ---------------------------------------------------------------------------

def roughness(spec: Spectrum) -> np.ndarray:
    """Raw roughness field over the full grid.

    Uses exact forward/backward recursions for each exponential term; the
    self term cancels because the kernel vanishes at zero separation.
    """
    S = spec.energy
    z = spec.grid.erb
    dz = np.diff(z)
    out = np.zeros_like(S)
    for rate, sgn in ((PL_P, +1.0), (PL_Q, -1.0)):
        decay = np.exp(-rate * dz)
        fwd = np.empty_like(S)
        fwd[0] = S[0]
        for i in range(1, S.size):
            fwd[i] = fwd[i - 1] * decay[i - 1] + S[i]
        bwd = np.empty_like(S)
        bwd[-1] = S[-1]
        for i in range(S.size - 2, -1, -1):
            bwd[i] = bwd[i + 1] * decay[i] + S[i]
        out += sgn * (fwd + bwd - S)  # own-bin energy enters both scans once
    return PL_NORM * out


def roughness_at(spec: Spectrum, bins) -> np.ndarray:
    """Raw roughness at selected bins by direct kernel dot products."""
    bins = np.atleast_1d(np.asarray(bins, dtype=np.int64))
    z = spec.grid.erb
    rows = pl_kernel(np.abs(z[bins][:, None] - z[None, :]))
    return rows @ spec.energy


# ---------------------------------------------------------------------------
# Consonance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsonanceCoeffs:
    a: float
    b: float
    c: float
    d: float = 0.0


def consonance_core(h01, r01, coeffs=FIELD_COEFFS):
    """Bilinear consonance core a*H + b*R + c*H*R + d."""
    a, b, c, d = coeffs
    return a * h01 + b * r01 + c * h01 * r01 + d


def c_level01(c_field, beta: float = SIGMOID_BETA, theta: float = SIGMOID_THETA):
    """Logistic squash of the consonance field into (0, 1)."""
    return 1.0 / (1.0 + np.exp(-beta * (np.asarray(c_field, dtype=float) - theta)))


@dataclass(frozen=True)
class Calibration:
    """Per-run normalization constants for the raw fields.

    Base references: raw harmonicity at the anchor bin of a single default
    voice there, and the maximum raw roughness of two default voices 0.25 ERB
    apart. Dense scenes exceed those donors, so runs raise the references to
    the maxima observed on their initial scene (with_observed) and then hold
    them fixed, keeping scores comparable across ticks.
    """

    h_ref: float
    r_ref: float
    pair_offset_bins: int = 0

    def with_observed(self, h_max: float, r_max: float) -> "Calibration":
        """References raised to observed scene maxima (never lowered)."""
        return Calibration(
            h_ref=max(self.h_ref, float(h_max)),
            r_ref=max(self.r_ref, float(r_max)),
            pair_offset_bins=self.pair_offset_bins,
        )


def calibrate(grid: LogFreqGrid, timbre: VoiceTimbre = DEFAULT_TIMBRE) -> Calibration:
    anchor = grid.center
    single = Spectrum(grid, voice_deposit(grid, anchor, timbre))
    h_ref = float(harmonicity_at(single, [anchor])[0])
    target = grid.erb[anchor] + PL_PEAK_ERB
    partner = int(np.argmin(np.abs(grid.erb - target)))
    pair = Spectrum(grid, single.energy + voice_deposit(grid, partner, timbre))
    r_ref = float(np.max(roughness(pair)))
    return Calibration(h_ref=h_ref, r_ref=r_ref, pair_offset_bins=partner - anchor)


@dataclass(eq=False)
class LandscapeFields:
    H01: np.ndarray
    R01: np.ndarray
    C_field: np.ndarray
    C_density: np.ndarray
    C_level01: np.ndarray
    clip_fraction: float = 0.0


def build_fields(spec: Spectrum, calib: Calibration) -> LandscapeFields:
    """All five normalized fields over the full grid."""
    h_raw = harmonicity(spec)
    r_raw = roughness(spec)
    h01 = h_raw / calib.h_ref
    r01 = r_raw / calib.r_ref
    clipped = np.count_nonzero(h01 > 1.0) + np.count_nonzero(r01 > 1.0)
    h01 = np.clip(h01, 0.0, 1.0)
    r01 = np.clip(r01, 0.0, 1.0)
    c = consonance_core(h01, r01)
    return LandscapeFields(
        H01=h01,
        R01=r01,
        C_field=c,
        C_density=h01 * (1.0 - r01),
        C_level01=c_level01(c),
        clip_fraction=clipped / (2.0 * spec.grid.n_bins),
    )


def shuffle_c_field(fields: LandscapeFields, seed=None, permutation=None) -> LandscapeFields:
    """Copy of the fields whose evaluation field C_field is bin-permuted.

    The permutation is drawn once (from seed) or supplied explicitly; the
    value multiset of C_field is preserved exactly.
    """
    n = fields.C_field.size
    if permutation is None:
        permutation = np.random.Generator(np.random.Philox(key=np.array(
            [np.uint64(seed), np.uint64(0)]))).permutation(n)
    permutation = np.asarray(permutation, dtype=np.int64)
    if sorted(permutation.tolist()) != list(range(n)):
        raise ValueError("not a permutation of the C_field bins")
    return LandscapeFields(
        H01=fields.H01.copy(),
        R01=fields.R01.copy(),
        C_field=fields.C_field[permutation],
        C_density=fields.C_density.copy(),
        C_level01=fields.C_level01.copy(),
        clip_fraction=fields.clip_fraction,
    )


# ---------------------------------------------------------------------------
# Fast per-run evaluator
# ---------------------------------------------------------------------------

class FieldEngine:
    """Bound evaluator for one run: grid + timbre + calibration + band.

    Per-bin consonance queries share one arithmetic path (sparse harmonic
    kernel, precomputed roughness rows over the band) so scores are mutually
    consistent everywhere in a run.
    """

    def __init__(self, grid: LogFreqGrid, timbre: VoiceTimbre, calib: Calibration,
                 band_oct: float, order: int = HARMONIC_ORDER, rho: float = HARMONIC_RHO):
        self.grid = grid
        self.timbre = timbre
        self.calib = calib
        self.band_lo, self.band_hi = grid.band_bins(band_oct)
        margin = HARMONIC_SPAN_OCT * 1200.0 / grid.bin_ct
        if self.band_lo < margin - 1e-9 or self.band_hi > grid.n_bins - 1 - margin + 1e-9:
            raise ValueError("band too close to grid edge for harmonic projection")
        self.h_offsets, self.h_taps = grid.harmonic_kernel(order, rho)
        band = np.arange(self.band_lo, self.band_hi + 1)
        self.band_idx = band
        self.g_band = pl_kernel(np.abs(grid.erb[band][:, None] - grid.erb[None, :]))

    # raw queries -----------------------------------------------------------

    def _h_raw_gather(self, rows: np.ndarray, bins: np.ndarray) -> np.ndarray:
        idx = bins[:, None] + self.h_offsets[None, :]
        valid = (idx >= 0) & (idx < self.grid.n_bins)
        np.clip(idx, 0, self.grid.n_bins - 1, out=idx)
        if rows.ndim == 1:
            vals = rows[idx]
        else:
            vals = rows[np.arange(rows.shape[0])[:, None], idx]
        if not valid.all():
            vals = np.where(valid, vals, 0.0)
        return vals @ self.h_taps

    def _r_raw_at(self, energy: np.ndarray, bins: np.ndarray) -> np.ndarray:
        in_band = (bins >= self.band_lo) & (bins <= self.band_hi)
        if np.all(in_band):
            rows = self.g_band[bins - self.band_lo]
        else:
            rows = pl_kernel(np.abs(self.grid.erb[bins][:, None] - self.grid.erb[None, :]))
        if energy.ndim == 1:
            return rows @ energy
        return np.einsum("ij,ij->i", rows, energy)

    # normalized queries ----------------------------------------------------

    def consonance_at(self, energy: np.ndarray, bins) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(H01, R01, C_field) at bins for one spectrum (energy 1-D) or for
        per-row spectra (energy 2-D, one row per bin)."""
        bins = np.atleast_1d(np.asarray(bins, dtype=np.int64))
        h = self._h_raw_gather(energy, bins) / self.calib.h_ref
        r = self._r_raw_at(energy, bins) / self.calib.r_ref
        np.clip(h, 0.0, 1.0, out=h)
        np.clip(r, 0.0, 1.0, out=r)
        return h, r, consonance_core(h, r)

    def band_consonance(self, energy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(H01, R01, C_field) over every band bin for a single spectrum."""
        h = self._h_raw_gather(energy, self.band_idx) / self.calib.h_ref
        r = (self.g_band @ energy) / self.calib.r_ref
        np.clip(h, 0.0, 1.0, out=h)
        np.clip(r, 0.0, 1.0, out=r)
        return h, r, consonance_core(h, r)

    def band_means(self, energy: np.ndarray, nonzero=None) -> tuple[float, float]:
        """Band means of H01 and R01 for one spectrum. nonzero optionally
        restricts the roughness product to the spectrum's support."""
        h = self._h_raw_gather(energy, self.band_idx) / self.calib.h_ref
        if nonzero is None:
            r = (self.g_band @ energy) / self.calib.r_ref
        else:
            r = (self.g_band[:, nonzero] @ energy[nonzero]) / self.calib.r_ref
        np.clip(h, 0.0, 1.0, out=h)
        np.clip(r, 0.0, 1.0, out=r)
        return float(h.mean()), float(r.mean())


# ---------------------------------------------------------------------------
# Single-anchor scan
# ---------------------------------------------------------------------------

SCAN_HEADER = "cents,H01,R01,C_field,C_density"


def single_anchor_scan(anchor_hz: float = 220.0, probe_range_oct: float = 2.0,
                       bin_ct: float = 3.0, timbre: VoiceTimbre = DEFAULT_TIMBRE):
    """Two-voice landscape scan: a fixed anchor voice plus a probe voice swept
    across +-probe_range_oct, fields recorded at the probe bin.

    Returns a dict of columns: cents, H01, R01, C_field, C_density.
    """
    span = probe_range_oct + HARMONIC_SPAN_OCT
    span = math.ceil(span * 2.0) / 2.0
    grid = LogFreqGrid(f_ref=anchor_hz, span_oct=span, bin_ct=bin_ct)
    calib = calibrate(grid, timbre)
    engine = FieldEngine(grid, timbre, calib, band_oct=probe_range_oct)
    anchor_dep = voice_deposit(grid, grid.center, timbre)
    n_probe = engine.band_idx.size
    h_raw = np.empty(n_probe)
    r_raw = np.empty(n_probe)
    for i, b in enumerate(engine.band_idx):
        energy = anchor_dep + voice_deposit(grid, int(b), timbre)
        h_raw[i] = engine._h_raw_gather(energy, np.array([int(b)]))[0]
        r_raw[i] = engine._r_raw_at(energy, np.array([int(b)]))[0]
    # the scan's own scenes donate the run maxima (unison probe for H,
    # quarter-ERB probe for R)
    calib = calib.with_observed(h_raw.max(), r_raw.max())
    h01 = np.clip(h_raw / calib.h_ref, 0.0, 1.0)
    r01 = np.clip(r_raw / calib.r_ref, 0.0, 1.0)
    c = consonance_core(h01, r01)
    return {
        "cents": grid.cents_of_bin(engine.band_idx),
        "H01": h01,
        "R01": r01,
        "C_field": c,
        "C_density": h01 * (1.0 - r01),
    }


def write_scan_csv(table: dict, path) -> None:
    """Write a scan table with 6 significant digits per value."""
    with open(path, "w") as fh:
        fh.write(SCAN_HEADER + "\n")
        for row in zip(table["cents"], table["H01"], table["R01"],
                       table["C_field"], table["C_density"]):
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")
