"""Energy metabolism, death, and the three respawn policies.

Two metabolic variants share one Euler tick: the selection variant recharges
on positive raw consonance, the hereditary variant first maps consonance to a
clamped survival signal. Respawn is uniform-random, lineage-biased toward the
parent's harmonic family, or a budget-matched random candidate draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import Agent, Scene, propose_and_accept

TICK_DT = 512.0 / 48000.0  # one 512-sample hop at 48 kHz

SURVIVAL_LO = 0.30
SURVIVAL_HI = 0.80

FAMILY_WINDOW_CT = 50.0
MATCHED_CANDIDATES = 8
SETTLE_TICKS = 2
FIRST_K_TICKS = 20


@dataclass
class MetabolicParams:
    variant: str  # "selection" | "hereditary"
    c_b: float
    r_e: float
    e0: float
    e_cap: float = 1.0
    dt: float = TICK_DT

    @classmethod
    def selection(cls, r_e: float = 0.4) -> "MetabolicParams":
        return cls(variant="selection", c_b=0.5, r_e=r_e, e0=1.0)

    @classmethod
    def hereditary(cls, r_e: float = 0.20) -> "MetabolicParams":
        return cls(variant="hereditary", c_b=0.12, r_e=r_e, e0=0.05)


@dataclass
class LifetimeRecord:
    agent_id: int
    lineage_id: int
    birth_tick: int
    death_tick: int
    lifetime_ticks: int
    c_firstk: float


def tick_energy_selection(energy: float, c_score: float, p: MetabolicParams):
    """One Euler step: drain c_b*dt, recharge r_e*max(0, c)*dt, cap at e_cap.

    Returns (new_energy, died); death fires exactly when energy <= 0.
    """
    e = energy - p.c_b * p.dt + p.r_e * max(0.0, c_score) * p.dt
    e = min(e, p.e_cap)
    return e, e <= 0.0


def survival_signal(c_score: float) -> float:
    """Clamped linear map of consonance onto [0, 1] between the two knees."""
    return min(1.0, max(0.0, (c_score - SURVIVAL_LO) / (SURVIVAL_HI - SURVIVAL_LO)))


def tick_energy_hereditary(energy: float, c_score: float, p: MetabolicParams):
    """Hereditary variant: recharge through the survival signal."""
    e = energy - p.c_b * p.dt + p.r_e * survival_signal(c_score) * p.dt
    e = min(e, p.e_cap)
    return e, e <= 0.0


def vitality(energy: float, e_cap: float = 1.0) -> float:
    """Normalized vigour sqrt(E / E_cap) for 0 <= E <= E_cap."""
    if energy < 0:
        raise ValueError("energy must be nonnegative")
    return math.sqrt(min(energy, e_cap) / e_cap)


def respawn_random(scene: Scene, rng: np.random.Generator, e0: float, tick: int = 0) -> Agent:
    """Fresh lineage at a pitch uniform in log-frequency over the band."""
    pitch = int(rng.integers(scene.band_lo, scene.band_hi + 1))
    return scene.add_agent(pitch, energy=e0, birth_tick=tick)


def band_local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima (both neighbors lower); edges excluded."""
    v = np.asarray(values)
    if v.size < 3:
        return np.array([], dtype=np.int64)
    inner = np.nonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:]))[0] + 1
    return inner


def respawn_heredity(scene: Scene, parent_pitch_bin: int, parent_lineage: int,
                     rng: np.random.Generator, e0: float, tick: int = 0,
                     window_ct: float = FAMILY_WINDOW_CT) -> Agent:
    """Lineage-biased respawn: pick the family (local maximum of the newborn's
    LOO consonance field) nearest the parent's final pitch, then place the
    child at the best-scoring bin within the family window by local search.

    Falls back to random placement when the field has no strict maxima.
    Ties break toward the lower pitch.
    """
    c_band = scene.newborn_c_band()
    peaks = band_local_maxima(c_band)
    if peaks.size == 0:
        agent = respawn_random(scene, rng, e0, tick)
        return agent
    parent_rel = parent_pitch_bin - scene.band_lo
    distances = np.abs(peaks - parent_rel)
    peak_rel = int(peaks[np.argmin(distances)])  # argmin takes lowest on ties
    peak_bin = peak_rel + scene.band_lo
    half = int(round(window_ct / scene.grid.bin_ct))
    lo = max(scene.band_lo, peak_bin - half)
    hi = min(scene.band_hi, peak_bin + half)
    window = np.arange(lo, hi + 1)
    scores = scene.newborn_score(window)
    best = int(window[np.argmax(scores)])
    return scene.add_agent(best, energy=e0, lineage_id=parent_lineage, birth_tick=tick)


def respawn_matched_random(scene: Scene, rng: np.random.Generator, e0: float,
                           tick: int = 0, n_candidates: int = MATCHED_CANDIDATES) -> Agent:
    """Budget-matched baseline: log-uniform candidates filtered by the same
    newborn score, fresh lineage."""
    bins = rng.integers(scene.band_lo, scene.band_hi + 1, size=n_candidates)
    bins = np.sort(bins)  # ties resolve toward the lower pitch
    scores = scene.newborn_score(bins)
    best = int(bins[np.argmax(scores)])
    return scene.add_agent(best, energy=e0, birth_tick=tick)


def settle_newborn(scene: Scene, agent: Agent, rng: np.random.Generator,
                   ticks: int = SETTLE_TICKS) -> Agent:
    """Slot-local settling: a few proposal steps at fixed T = t0 with all
    adults locked (only the newborn is visited)."""
    for _ in range(ticks):
        propose_and_accept(scene, agent, scene.params.t0, +1, rng)
    return agent
