"""Pitch-adaptation dynamics on the consonance terrain.

Agents propose small pitch steps and accept them by a Metropolis rule on an
exact leave-one-out score: consonance of the candidate bin against the scene
with the agent's own spectral contribution removed, minus a crowding penalty
in ERB space and a move cost in log-frequency units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .landscape import (
    PL_PEAK_ERB,
    Calibration,
    FieldEngine,
    LogFreqGrid,
    VoiceTimbre,
    c_level01,
    pl_kernel,
    voice_deposit,
)


@dataclass
class Agent:
    id: int
    pitch_bin: int
    energy: float = 1.0
    phase: float = 0.0
    omega: float = 0.0
    lineage_id: int = 0
    alive: bool = True
    birth_tick: int = 0


@dataclass
class SearchParams:
    """Proposal, crowding, and annealing constants for the local search.

    A sweep visits every agent once; each visit runs inner_steps Metropolis
    proposals of at most step_ct cents, so the per-perturbation magnitude
    stays bounded while a sweep amounts to a short annealed walk.
    """

    step_ct: float = 25.0
    inner_steps: int = 20
    lambda_crowd: float = 0.3
    lambda_move: float = 0.1
    kappa: float = 2.1
    t0: float = 0.05
    tau_sweeps: float = 4.8
    n_sweeps: int = 8
    switch_sweep: int = 4
    burn_in_sweeps: int = 2

    def __post_init__(self):
        for name in ("step_ct", "inner_steps", "kappa", "t0", "tau_sweeps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.switch_sweep < self.n_sweeps:
            raise ValueError("switch_sweep must lie inside the sweep schedule")


def crowding_kernel(d_erb, kappa: float = 2.1):
    """Pitch-proximity penalty: 1 at zero separation, falling to 0 where the
    scaled interference kernel peaks, and clamped to 0 beyond (monotone)."""
    arr = np.asarray(d_erb, dtype=float)
    if np.any(arr < 0):
        raise ValueError("separation must be nonnegative")
    out = np.where(arr < kappa * PL_PEAK_ERB, 1.0 - pl_kernel(np.minimum(arr / kappa, PL_PEAK_ERB)), 0.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.isscalar(d_erb) or arr.ndim == 0 else out


def anneal_temperature(sweep: int, params: SearchParams) -> float:
    """Exponential decay from t0, restarting at the curriculum switch."""
    if not 0 <= sweep < params.n_sweeps:
        raise ValueError("sweep outside schedule")
    s = sweep if sweep < params.switch_sweep else sweep - params.switch_sweep
    return params.t0 * math.exp(-s / params.tau_sweeps)


class Scene:
    """One run's sounding population plus its bound field evaluator.

    Holds cached per-voice deposits; every leave-one-out spectrum is the sum
    of the other living voices (plus the drone when present), so scores stay
    exact rather than approximated by subtraction bookkeeping.
    """

    def __init__(self, grid: LogFreqGrid, timbre: VoiceTimbre, calib: Calibration,
                 band_oct: float, params: SearchParams | None = None,
                 drone_bin: int | None = None, eval_perm: np.ndarray | None = None):
        self.grid = grid
        self.timbre = timbre
        self.params = params or SearchParams()
        self.engine = FieldEngine(grid, timbre, calib, band_oct)
        self.band_lo, self.band_hi = self.engine.band_lo, self.engine.band_hi
        self.drone_bin = drone_bin
        self.drone_dep = (voice_deposit(grid, drone_bin, timbre)
                          if drone_bin is not None else np.zeros(grid.n_bins))
        self.eval_perm = eval_perm  # maps band-evaluation bin -> source bin
        self.agents: dict[int, Agent] = {}
        self._next_id = 0
        self._next_lineage = 0
        self._version = 0
        self._stack_version = -1
        self._live_ids: list[int] = []
        self._dep_cache: dict[int, tuple[int, np.ndarray]] = {}
        self._dep_rows: np.ndarray | None = None
        self._loo_rows: np.ndarray | None = None
        self._scores_version = -1
        self._scores: dict[int, tuple[float, float]] = {}

    # population bookkeeping ------------------------------------------------

    def new_agent_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def new_lineage_id(self) -> int:
        self._next_lineage += 1
        return self._next_lineage - 1

    def add_agent(self, pitch_bin: int, energy: float = 1.0, lineage_id: int | None = None,
                  birth_tick: int = 0) -> Agent:
        if not self.band_lo <= pitch_bin <= self.band_hi:
            raise ValueError("agent pitch outside band")
        agent = Agent(id=self.new_agent_id(), pitch_bin=int(pitch_bin), energy=energy,
                      lineage_id=self.new_lineage_id() if lineage_id is None else lineage_id,
                      birth_tick=birth_tick)
        self.agents[agent.id] = agent
        self.touch()
        return agent

    def kill(self, agent: Agent) -> None:
        agent.alive = False
        self.touch()

    def set_pitch(self, agent: Agent, pitch_bin: int) -> None:
        agent.pitch_bin = int(pitch_bin)
        self.touch()

    def touch(self) -> None:
        self._version += 1

    @property
    def version(self) -> int:
        return self._version

    def live(self) -> list[Agent]:
        return [a for a in self.agents.values() if a.alive]

    # spectra ----------------------------------------------------------------

    def _refresh_stack(self) -> None:
        if self._stack_version == self._version:
            return
        live = self.live()
        self._live_ids = [a.id for a in live]
        for a in live:
            hit = self._dep_cache.get(a.id)
            if hit is None or hit[0] != a.pitch_bin:
                self._dep_cache[a.id] = (a.pitch_bin, voice_deposit(self.grid, a.pitch_bin, self.timbre))
        for stale in set(self._dep_cache) - set(self._live_ids):
            del self._dep_cache[stale]
        if live:
            rows = np.stack([self._dep_cache[i][1] for i in self._live_ids])
        else:
            rows = np.zeros((0, self.grid.n_bins))
        self._dep_rows = rows
        n = rows.shape[0]
        mask = np.ones((n, n)) - np.eye(n)
        self._loo_rows = mask @ rows + self.drone_dep[None, :]
        self._scores_version = -1
        self._stack_version = self._version

    def total_spectrum(self) -> np.ndarray:
        """Energy of the full mix (living agents plus drone)."""
        self._refresh_stack()
        return self._dep_rows.sum(axis=0) + self.drone_dep

    def loo_spectrum(self, agent_id: int) -> np.ndarray:
        """Energy of the mix with one agent's contribution removed."""
        self._refresh_stack()
        row = self._live_ids.index(agent_id)
        return self._loo_rows[row]

    # scoring ----------------------------------------------------------------

    def _eval_bins(self, bins: np.ndarray) -> np.ndarray:
        if self.eval_perm is None:
            return bins
        return self.eval_perm[bins]

    def loo_c(self, agent_id: int, bins) -> np.ndarray:
        """Exact-LOO C_field for one agent at the given bins."""
        bins = np.atleast_1d(np.asarray(bins, dtype=np.int64))
        loo = self.loo_spectrum(agent_id)
        _, _, c = self.engine.consonance_at(loo, self._eval_bins(bins))
        return c

    def crowding_sum(self, agent_id: int, candidate_bin: int) -> float:
        z = self.grid.erb
        zc = z[candidate_bin]
        others = [a for a in self.live() if a.id != agent_id]
        if not others:
            return 0.0
        zo = z[np.array([a.pitch_bin for a in others])]
        return float(np.sum(crowding_kernel(np.abs(zc - zo), self.params.kappa)))

    def loo_score(self, agent_id: int, candidate_bin: int) -> float:
        """Full proposal score S = C - lambda_C * crowding - lambda_M * |dx|."""
        agent = self.agents[agent_id]
        c = float(self.loo_c(agent_id, [candidate_bin])[0])
        crowd = self.crowding_sum(agent_id, candidate_bin)
        move_oct = abs(candidate_bin - agent.pitch_bin) * self.grid.bin_ct / 1200.0
        return c - self.params.lambda_crowd * crowd - self.params.lambda_move * move_oct

    def c_scores(self) -> dict[int, tuple[float, float]]:
        """Per-agent exact-LOO (C_field, C_level01) at current pitches, cached
        until the population changes."""
        if self._scores_version == self._version:
            return self._scores
        self._refresh_stack()
        out: dict[int, tuple[float, float]] = {}
        if self._live_ids:
            bins = np.array([self.agents[i].pitch_bin for i in self._live_ids], dtype=np.int64)
            _, _, c = self.engine.consonance_at(self._loo_rows, self._eval_bins(bins))
            lvl = c_level01(c)
            out = {i: (float(c[k]), float(lvl[k])) for k, i in enumerate(self._live_ids)}
        self._scores = out
        self._scores_version = self._version
        return out

    def newborn_c_band(self) -> np.ndarray:
        """C_field over the band as seen by a not-yet-placed newborn."""
        total = self.total_spectrum()
        _, _, c = self.engine.band_consonance(total)
        if self.eval_perm is not None:
            c = c[self.eval_perm[self.engine.band_idx] - self.band_lo]
        return c

    def newborn_score(self, bins) -> np.ndarray:
        """Newborn placement score: C minus crowding (no move cost)."""
        bins = np.atleast_1d(np.asarray(bins, dtype=np.int64))
        total = self.total_spectrum()
        _, _, c = self.engine.consonance_at(total, self._eval_bins(bins))
        live = self.live()
        if live:
            z = self.grid.erb
            zo = z[np.array([a.pitch_bin for a in live])]
            crowd = crowding_kernel(np.abs(z[bins][:, None] - zo[None, :]), self.params.kappa).sum(axis=1)
            c = c - self.params.lambda_crowd * crowd
        return c


def step_window_bins(params: SearchParams, bin_ct: float) -> int:
    return int(math.floor(params.step_ct / bin_ct))


def propose_and_accept(scene: Scene, agent: Agent, temperature: float, sign: int,
                       rng: np.random.Generator, random_walk: bool = False) -> bool:
    """One proposal for one agent; returns whether it was accepted.

    The candidate is uniform over bins within +-step_ct of the current pitch,
    the current bin excluded; out-of-band candidates are rejected outright.
    In random-walk mode every in-band candidate is accepted unconditionally.
    The curriculum sign negates the landscape-and-crowding part of the score;
    the move cost stays a cost in both phases.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    w = step_window_bins(scene.params, scene.grid.bin_ct)
    offset = int(rng.integers(1, 2 * w + 1))
    if offset > w:
        offset = w - offset  # negative side
    candidate = agent.pitch_bin + offset
    accepted = False
    if scene.band_lo <= candidate <= scene.band_hi:
        if random_walk:
            accepted = True
        else:
            pair = np.array([agent.pitch_bin, candidate])
            c = scene.loo_c(agent.id, pair)
            crowd_old = scene.crowding_sum(agent.id, agent.pitch_bin)
            crowd_new = scene.crowding_sum(agent.id, candidate)
            move = scene.params.lambda_move * abs(candidate - agent.pitch_bin) * scene.grid.bin_ct / 1200.0
            lam = scene.params.lambda_crowd
            delta = sign * ((c[1] - lam * crowd_new) - (c[0] - lam * crowd_old)) - move
            if delta >= 0:
                accepted = True
            else:
                accepted = rng.random() < math.exp(delta / temperature)
        if accepted:
            scene.set_pitch(agent, candidate)
    return accepted


def run_sweep(scene: Scene, sweep: int, params: SearchParams, mode: str,
              rng: np.random.Generator, curriculum: bool = True) -> list[dict]:
    """One sweep: every living agent visited once in shuffled order, each
    visit running params.inner_steps proposals.

    mode: "local-search" (Metropolis on the signed LOO score) or
    "random-walk" (matched step window and step count, unconditional in-band
    acceptance). Returns one event per agent visit with the exact-LOO
    consonance at the visit's final pitch.
    """
    if mode not in ("local-search", "random-walk"):
        raise ValueError(f"unknown sweep mode {mode!r}")
    sign = -1 if (curriculum and sweep < params.switch_sweep) else +1
    temperature = anneal_temperature(sweep, params)
    live = scene.live()
    order = rng.permutation(len(live))
    events = []
    for idx in order:
        agent = live[idx]
        accepted_any = False
        for _ in range(params.inner_steps):
            accepted_any |= propose_and_accept(scene, agent, temperature, sign, rng,
                                               random_walk=(mode == "random-walk"))
        events.append({
            "sweep": sweep,
            "agent": agent.id,
            "pitch_ct": float(scene.grid.cents_of_bin(agent.pitch_bin)),
            "loo_c": float(scene.loo_c(agent.id, [agent.pitch_bin])[0]),
            "accepted": bool(accepted_any),
        })
    return events
