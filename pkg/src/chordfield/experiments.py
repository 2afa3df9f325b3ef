"""Experiment harness: declarative configs, the four assays, and a scan.

Each run is addressed by (experiment, condition, seed) and writes its own
directory of events and summaries; seed batches aggregate into a per-experiment
summary. All randomness flows through named substreams of the (experiment,
seed) root so condition arms share placement draws and outputs are
bit-reproducible regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .agents import Scene, SearchParams, run_sweep
from .analysis import (
    auc_c,
    c_score_mean,
    interval_entropy,
    interval_histogram,
    ji_score,
    kaplan_meier,
    median_split,
    pairwise_intervals_ct,
    pearson_r,
    scene_consonance_G,
    student_t_ppf_975,
    unique_pitch_bins,
)
from .entrainment import OscillatorParams, draw_oscillators, extract_onsets, simulate
from .landscape import (
    HARMONIC_SPAN_OCT,
    LogFreqGrid,
    VoiceTimbre,
    calibrate,
    single_anchor_scan,
    write_scan_csv,
)
from .lifecycle import (
    MetabolicParams,
    respawn_heredity,
    respawn_matched_random,
    respawn_random,
    settle_newborn,
    tick_energy_hereditary,
    tick_energy_selection,
)
from .rng import substream

EXPERIMENTS = ("scan", "search", "selection", "heredity", "entrain")

CONDITIONS = {
    "scan": ("default",),
    "search": ("local_search", "random_walk", "shuffled", "consonance_only"),
    "selection": ("recharge_on", "recharge_off"),
    "heredity": ("heredity_selection", "random_selection", "heredity_only", "random_only"),
    "entrain": ("shared", "scrambled", "off"),
}


class ConfigError(Exception):
    """Invalid experiment configuration; carries the offending key paths."""

    def __init__(self, message: str, paths=()):
        super().__init__(message)
        self.paths = list(paths)


@dataclass
class LifecycleParams:
    respawn_window_ct: float = 50.0
    matched_candidates: int = 8
    settle_ticks: int = 2
    first_k: int = 20


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: list = field(default_factory=lambda: list(range(20)))
    conditions: list = field(default_factory=list)
    n_agents: int = 24
    anchor_hz: float = 220.0
    band_oct: float = 2.0
    bin_ct: float = 3.0
    drone: bool = False
    drone_gain: float = 3.0
    placement_half_oct: float | None = None  # None: uniform over the full band
    calib_h_scale: float = 1.0
    calib_r_scale: float = 1.0
    timbre: VoiceTimbre = field(default_factory=VoiceTimbre)
    search: SearchParams = field(default_factory=SearchParams)
    metabolism: MetabolicParams = field(default_factory=MetabolicParams.selection)
    lifecycle: LifecycleParams = field(default_factory=LifecycleParams)
    entrain: OscillatorParams = field(default_factory=OscillatorParams)
    selection_max_deaths: int = 200
    heredity_max_steps: int = 12000
    heredity_max_deaths: int = 2500
    scan_probe_oct: float = 2.0
    dump_phase_trace: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}", ["experiment"])
        if not self.conditions:
            self.conditions = list(CONDITIONS[self.experiment])
        bad = [c for c in self.conditions if c not in CONDITIONS[self.experiment]]
        if bad:
            raise ConfigError(f"unknown conditions for {self.experiment}: {bad}", ["conditions"])
        if self.experiment == "heredity":
            off = {"heredity_only", "random_only"} & set(self.conditions)
            if off and "heredity_selection" not in self.conditions:
                raise ConfigError(
                    "heredity no-selection arms need heredity_selection in conditions "
                    "(their death schedule is rate-matched to it)", ["conditions"])

    def grid(self) -> LogFreqGrid:
        span = self.band_oct + HARMONIC_SPAN_OCT
        span = math.ceil(span * 2.0) / 2.0
        return LogFreqGrid(f_ref=self.anchor_hz, span_oct=span, bin_ct=self.bin_ct)


def default_config(experiment: str, seeds=None) -> ExperimentConfig:
    """Table of standard assay setups."""
    seeds = list(range(20)) if seeds is None else list(seeds)
    if experiment == "scan":
        return ExperimentConfig(experiment="scan", seeds=[0], n_agents=0)
    if experiment == "search":
        return ExperimentConfig(experiment="search", seeds=seeds, n_agents=24,
                                band_oct=2.0, drone=True, placement_half_oct=0.25,
                                timbre=VoiceTimbre(smear_ct=3.0))
    if experiment == "selection":
        return ExperimentConfig(experiment="selection", seeds=seeds, n_agents=32,
                                band_oct=1.0, calib_r_scale=3.0,
                                metabolism=MetabolicParams.selection())
    if experiment == "heredity":
        return ExperimentConfig(experiment="heredity", seeds=seeds, n_agents=16,
                                band_oct=1.0, calib_r_scale=3.0,
                                timbre=VoiceTimbre(smear_ct=3.0),
                                metabolism=MetabolicParams.hereditary())
    if experiment == "entrain":
        return ExperimentConfig(experiment="entrain", seeds=seeds, n_agents=32)
    raise ConfigError(f"unknown experiment {experiment!r}", ["experiment"])


# ---------------------------------------------------------------------------
# Config (de)serialization and validation
# ---------------------------------------------------------------------------

def parse_seeds(spec) -> list:
    """Seed lists may be given as [0, 1, ...] or as a range string "0..19"."""
    if isinstance(spec, str):
        lo, _, hi = spec.partition("..")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise ConfigError(f"bad seed range {spec!r}", ["seeds"]) from None
    if isinstance(spec, list) and all(isinstance(s, int) for s in spec):
        return list(spec)
    raise ConfigError("seeds must be an int list or an \"A..B\" string", ["seeds"])


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def _apply_subdict(obj, data: dict, prefix: str, errors: list):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in fields:
            errors.append(path)
            continue
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _apply_subdict(current, value, path, errors)
        elif dataclasses.is_dataclass(current):
            errors.append(path)
        else:
            setattr(obj, key, value)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config from plain JSON data.

    Unknown keys are collected and reported with their full dotted paths.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "experiment" not in data:
        raise ConfigError("config is missing 'experiment'", ["experiment"])
    seeds = parse_seeds(data["seeds"]) if "seeds" in data else None
    cfg = default_config(data["experiment"], seeds=seeds)
    rest = {k: v for k, v in data.items() if k not in ("experiment", "seeds")}
    errors: list[str] = []
    _apply_subdict(cfg, rest, "", errors)
    if errors:
        raise ConfigError(f"unknown or malformed config keys: {', '.join(errors)}", errors)
    # re-run invariant checks after overrides
    cfg.__post_init__()
    return cfg


def apply_override(cfg: ExperimentConfig, dotted: str, raw: str) -> None:
    """Set one config value by dotted path; raw values parse as JSON with a
    bare-string fallback."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = dotted.split(".")
    obj = cfg
    for part in parts[:-1]:
        if not hasattr(obj, part):
            raise ConfigError(f"unknown config key {dotted!r}", [dotted])
        obj = getattr(obj, part)
    if not hasattr(obj, parts[-1]):
        raise ConfigError(f"unknown config key {dotted!r}", [dotted])
    if parts[-1] == "seeds":
        value = parse_seeds(value)
    setattr(obj, parts[-1], value)
    cfg.__post_init__()


# ---------------------------------------------------------------------------
# Run helpers
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_jsonl(path: str, events) -> None:
    with open(path, "w") as fh:
        for event in events:
            fh.write(json.dumps(_jsonable(event), sort_keys=True) + "\n")


def _build_scene(cfg: ExperimentConfig, placement_rng, eval_perm=None) -> Scene:
    from .landscape import voice_deposit

    grid = cfg.grid()
    calib = calibrate(grid, cfg.timbre)
    scene = Scene(grid, cfg.timbre, calib, cfg.band_oct, params=cfg.search,
                  drone_bin=grid.center if cfg.drone else None, eval_perm=eval_perm)
    if cfg.drone:
        scene.drone_dep = voice_deposit(grid, grid.center, cfg.timbre, gain=cfg.drone_gain)
    if cfg.placement_half_oct is None:
        lo, hi = scene.band_lo, scene.band_hi
    else:
        half = int(round(cfg.placement_half_oct * 1200.0 / grid.bin_ct))
        lo, hi = grid.center - half, grid.center + half
    pitches = placement_rng.integers(lo, hi + 1, size=cfg.n_agents)
    for p in pitches:
        scene.add_agent(int(p), energy=cfg.metabolism.e0)
    # raise the field references to the maxima of a canonical density-matched
    # donor scene (n voices evenly spaced across the band, plus the drone) so
    # normalized fields span [0, 1] on run scenes without wholesale clipping;
    # the sparse base donors underestimate dense scenes badly
    donor = scene.drone_dep.copy()
    for b in np.linspace(scene.band_lo, scene.band_hi, max(cfg.n_agents, 2)).round().astype(int):
        donor += voice_deposit(grid, int(b), cfg.timbre)
    h_raw = scene.engine._h_raw_gather(donor, scene.engine.band_idx)
    r_raw = scene.engine.g_band @ donor
    scene.engine.calib = scene.engine.calib.with_observed(
        h_raw.max() * cfg.calib_h_scale, r_raw.max() * cfg.calib_r_scale)
    return scene


def _final_state_metrics(scene: Scene) -> dict:
    pitches = [a.pitch_bin for a in scene.live()]
    cents = [float(scene.grid.cents_of_bin(p)) for p in pitches]
    intervals = pairwise_intervals_ct(cents)
    hist = interval_histogram(cents)
    return {
        "final_pitch_ct": sorted(cents),
        "final_interval_entropy_nats": interval_entropy(hist) if hist.sum() else 0.0,
        "final_unique_bins": unique_pitch_bins(pitches),
        "final_ji_score": ji_score(intervals) if intervals.size else 0.0,
    }


# ---------------------------------------------------------------------------
# Search assay
# ---------------------------------------------------------------------------

def run_search_seed(cfg: ExperimentConfig, seed: int, condition: str) -> dict:
    placement = substream("search", seed, "placement")
    proposals = substream("search", seed, "proposals")
    eval_perm = None
    if condition == "shuffled":
        grid = cfg.grid()
        lo, hi = grid.band_bins(cfg.band_oct)
        perm = np.arange(grid.n_bins)
        shuffle_rng = substream("search", seed, "shuffle")
        perm[lo:hi + 1] = shuffle_rng.permutation(np.arange(lo, hi + 1))
        eval_perm = perm
    scene = _build_scene(cfg, placement, eval_perm=eval_perm)

    mode = "random-walk" if condition == "random_walk" else "local-search"
    curriculum = condition != "consonance_only"
    params = cfg.search
    events = []
    c_by_sweep = []
    g_by_sweep = []
    for sweep in range(params.n_sweeps):
        events.extend(run_sweep(scene, sweep, params, mode, proposals, curriculum=curriculum))
        c_by_sweep.append(c_score_mean(scene))
        g_by_sweep.append(scene_consonance_G(scene))
    pre = g_by_sweep[params.burn_in_sweeps:params.switch_sweep]
    post = g_by_sweep[params.switch_sweep:]
    summary = {
        "seed": seed,
        "condition": condition,
        "c_score_by_sweep": c_by_sweep,
        "g_by_sweep": g_by_sweep,
        "g_gain": float(np.mean(post) - np.mean(pre)),
        "calib": {"h_ref": scene.engine.calib.h_ref, "r_ref": scene.engine.calib.r_ref},
    }
    summary.update(_final_state_metrics(scene))
    return {"summary": summary, "events": events}


# ---------------------------------------------------------------------------
# Selection assay
# ---------------------------------------------------------------------------

def run_selection_seed(cfg: ExperimentConfig, seed: int, condition: str) -> dict:
    placement = substream("selection", seed, "placement")
    respawn_rng = substream("selection", seed, "respawn")
    p = dataclasses.replace(cfg.metabolism, r_e=0.0 if condition == "recharge_off" else cfg.metabolism.r_e)
    scene = _build_scene(cfg, placement)

    first_k = cfg.lifecycle.first_k
    buffers: dict[int, list] = {a.id: [] for a in scene.live()}
    records = []
    events = []
    tick = 0
    while len(records) < cfg.selection_max_deaths:
        tick += 1
        scores = scene.c_scores()
        snapshot = scene.live()
        died = []
        for agent in snapshot:
            c, lvl = scores[agent.id]
            if tick - agent.birth_tick <= first_k:
                buffers[agent.id].append(lvl)
            agent.energy, dead = tick_energy_selection(agent.energy, c, p)
            if dead:
                died.append(agent)
        for agent in died:
            scene.kill(agent)
            rec = {
                "agent": agent.id,
                "lineage": agent.lineage_id,
                "birth": agent.birth_tick,
                "death": tick,
                "lifetime_ticks": tick - agent.birth_tick,
                "c_firstk": float(np.mean(buffers.pop(agent.id))),
            }
            records.append(rec)
            events.append({"type": "death", "tick": tick, **rec})
            child = respawn_random(scene, respawn_rng, p.e0, tick)
            buffers[child.id] = []
            events.append({"type": "spawn", "tick": tick, "agent": child.id,
                           "lineage": child.lineage_id,
                           "pitch_ct": float(scene.grid.cents_of_bin(child.pitch_bin))})

    lifetimes = np.array([r["lifetime_ticks"] for r in records], dtype=float)
    firstk = np.array([r["c_firstk"] for r in records], dtype=float)
    r = pearson_r(firstk, lifetimes)
    high, low = median_split(lifetimes, firstk)
    summary = {
        "seed": seed,
        "condition": condition,
        "n_ticks": tick,
        "n_deaths": len(records),
        # correlation is undefined when lifetimes are constant (recharge off);
        # the recorded value is then zero with the degenerate flag set
        "seed_r": 0.0 if r is None else r,
        "degenerate_r": r is None,
        "mean_lifetime": float(lifetimes.mean()),
        "km_median_high": kaplan_meier(high).median if high.size else None,
        "km_median_low": kaplan_meier(low).median if low.size else None,
        "calib": {"h_ref": scene.engine.calib.h_ref, "r_ref": scene.engine.calib.r_ref},
    }
    return {"summary": summary, "events": events, "lifetimes": records}


# ---------------------------------------------------------------------------
# Heredity assay
# ---------------------------------------------------------------------------

def run_heredity_seed(cfg: ExperimentConfig, seed: int, condition: str,
                      matched_rate: float | None = None) -> dict:
    placement = substream("heredity", seed, "placement")
    respawn_rng = substream("heredity", seed, "respawn")
    proposals = substream("heredity", seed, "proposals")
    schedule = substream("heredity", seed, "schedule")
    p = cfg.metabolism
    selection_on = condition in ("heredity_selection", "random_selection")
    hereditary = condition in ("heredity_selection", "heredity_only")
    if not selection_on and matched_rate is None:
        raise ValueError("no-selection arm needs the matched death rate")
    scene = _build_scene(cfg, placement)

    first_k = cfg.lifecycle.first_k
    buffers: dict[int, list] = {a.id: [] for a in scene.live()}
    records = []
    events = []
    c_traj = []
    ji_traj = []
    last_ji_version = -1
    ji_value = 0.0
    tick = 0
    while tick < cfg.heredity_max_steps and len(records) < cfg.heredity_max_deaths:
        tick += 1
        scores = scene.c_scores()
        c_traj.append(float(np.mean([c for c, _ in scores.values()])))
        if scene.version != last_ji_version:
            cents = [scene.grid.cents_of_bin(a.pitch_bin) for a in scene.live()]
            ji_value = ji_score(pairwise_intervals_ct(cents))
            last_ji_version = scene.version
        ji_traj.append(ji_value)

        snapshot = scene.live()
        died = []
        if selection_on:
            for agent in snapshot:
                c, lvl = scores[agent.id]
                if tick - agent.birth_tick <= first_k:
                    buffers[agent.id].append(lvl)
                agent.energy, dead = tick_energy_hereditary(agent.energy, c, p)
                if dead:
                    died.append(agent)
        else:
            for agent in snapshot:
                _, lvl = scores[agent.id]
                if tick - agent.birth_tick <= first_k:
                    buffers[agent.id].append(lvl)
            if schedule.random() < matched_rate:
                died.append(snapshot[int(schedule.integers(0, len(snapshot)))])
        for agent in died:
            scene.kill(agent)
            buf = buffers.pop(agent.id, [])
            rec = {
                "agent": agent.id,
                "lineage": agent.lineage_id,
                "birth": agent.birth_tick,
                "death": tick,
                "lifetime_ticks": tick - agent.birth_tick,
                "c_firstk": float(np.mean(buf)) if buf else 0.0,
            }
            records.append(rec)
            events.append({"type": "death", "tick": tick, **rec})
            if hereditary:
                child = respawn_heredity(scene, agent.pitch_bin, agent.lineage_id,
                                         respawn_rng, p.e0, tick,
                                         window_ct=cfg.lifecycle.respawn_window_ct)
            else:
                child = respawn_matched_random(scene, respawn_rng, p.e0, tick,
                                               n_candidates=cfg.lifecycle.matched_candidates)
            settle_newborn(scene, child, proposals, ticks=cfg.lifecycle.settle_ticks)
            buffers[child.id] = []
            events.append({"type": "spawn", "tick": tick, "agent": child.id,
                           "lineage": child.lineage_id,
                           "pitch_ct": float(scene.grid.cents_of_bin(child.pitch_bin))})

    c_traj = np.array(c_traj)
    ji_traj = np.array(ji_traj)
    summary = {
        "seed": seed,
        "condition": condition,
        "n_ticks": tick,
        "n_deaths": len(records),
        "death_rate": len(records) / tick if tick else 0.0,
        "final_c_score": float(c_traj[-1]),
        "auc_c": auc_c(c_traj),
        "ji_max": float(ji_traj.max()),
        "ji_crossed": bool(np.any(ji_traj >= 0.5)),
        "c_traj_decimated": c_traj[::10].tolist(),
        "calib": {"h_ref": scene.engine.calib.h_ref, "r_ref": scene.engine.calib.r_ref},
    }
    summary.update(_final_state_metrics(scene))
    return {"summary": summary, "events": events, "lifetimes": records}


# ---------------------------------------------------------------------------
# Entrainment assay
# ---------------------------------------------------------------------------

def run_entrain_seed(cfg: ExperimentConfig, seed: int, condition: str) -> dict:
    from .analysis import plv_timecourse, vector_strength

    init = substream("entrain", seed, "phase_init")
    scramble = substream("entrain", seed, "scramble")
    params = cfg.entrain
    omegas, phases0 = draw_oscillators(cfg.n_agents, params, init)
    trace = simulate(params, condition, omegas, phases0, scramble_rng=scramble)
    onsets = [extract_onsets(trace[:, i], params.dt) for i in range(cfg.n_agents)]
    pooled = np.concatenate([o for o in onsets if o.size]) if any(o.size for o in onsets) else np.array([])
    vs = vector_strength(pooled, 1.0 / params.drive_hz)
    centers, curve = plv_timecourse(trace, params.dt, params.drive_hz, window_s=2.0)
    summary = {
        "seed": seed,
        "condition": condition,
        "vector_strength": vs,
        "n_onsets": int(pooled.size),
        "plv_window_centers_s": centers.tolist(),
        "plv_timecourse": curve.tolist(),
        "plv_final_window": float(curve[-1]),
    }
    events = [{"type": "onset", "agent": i, "t": float(t)}
              for i, times in enumerate(onsets) for t in times]
    out = {"summary": summary, "onsets": onsets, "events": events}
    if cfg.dump_phase_trace:
        out["trace"] = trace
    return out


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def _run_dir(out_root: str, experiment: str, condition: str, seed) -> str:
    path = os.path.join(out_root, experiment, condition, str(seed))
    os.makedirs(path, exist_ok=True)
    return path


def _write_lifetime_csv(path: str, seed: int, condition: str, records) -> None:
    with open(path, "w") as fh:
        fh.write("seed,agent,lineage,birth,death,lifetime_ticks,c_firstK,condition\n")
        for r in records:
            fh.write(f"{seed},{r['agent']},{r['lineage']},{r['birth']},{r['death']},"
                     f"{r['lifetime_ticks']},{r['c_firstk']!r},{condition}\n")


def _write_onset_csv(path: str, seed: int, condition: str, onsets) -> None:
    with open(path, "w") as fh:
        fh.write("seed,condition,agent,onset_time_s\n")
        for agent, times in enumerate(onsets):
            for t in times:
                fh.write(f"{seed},{condition},{agent},{t!r}\n")


def run_seed_task(cfg_dict: dict, seed: int, out_root: str) -> dict:
    """Run every condition of one seed and write the run directories.

    Top-level so process pools can pickle it. Returns per-condition summaries.
    """
    cfg = config_from_dict(cfg_dict)
    results = {}
    matched_rate = None
    for condition in cfg.conditions:
        if cfg.experiment == "search":
            res = run_search_seed(cfg, seed, condition)
        elif cfg.experiment == "selection":
            res = run_selection_seed(cfg, seed, condition)
        elif cfg.experiment == "heredity":
            res = run_heredity_seed(cfg, seed, condition,
                                    matched_rate=None if condition.endswith("_selection") else matched_rate)
            if condition == "heredity_selection":
                matched_rate = res["summary"]["death_rate"]
        elif cfg.experiment == "entrain":
            res = run_entrain_seed(cfg, seed, condition)
        else:
            raise ValueError(f"experiment {cfg.experiment} has no per-seed runs")
        run_dir = _run_dir(out_root, cfg.experiment, condition, seed)
        write_json(os.path.join(run_dir, "summary.json"), res["summary"])
        write_jsonl(os.path.join(run_dir, "events.jsonl"), res.get("events", []))
        if "lifetimes" in res:
            _write_lifetime_csv(os.path.join(run_dir, "lifetimes.csv"), seed, condition,
                                res["lifetimes"])
        if "onsets" in res:
            _write_onset_csv(os.path.join(run_dir, "onsets.csv"), seed, condition, res["onsets"])
        if "trace" in res:
            res["trace"].T.astype("<f4").tofile(os.path.join(run_dir, "phases.f32"))
        results[condition] = {"summary": res["summary"],
                              "lifetimes": res.get("lifetimes", [])}
    return results


def _stats_block(values) -> dict:
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return {"per_seed": list(values), "mean": None, "sd": None, "ci95": None}
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    half = (student_t_ppf_975(arr.size - 1) * sd / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return {"per_seed": _jsonable(list(values)), "mean": mean, "sd": sd,
            "ci95": [mean - half, mean + half]}


SCALAR_METRICS = {
    "search": ("final_interval_entropy_nats", "final_unique_bins", "final_ji_score", "g_gain"),
    "selection": ("seed_r", "mean_lifetime", "km_median_high", "km_median_low"),
    "heredity": ("final_c_score", "final_interval_entropy_nats", "final_unique_bins",
                 "final_ji_score", "auc_c", "ji_max", "n_deaths"),
    "entrain": ("vector_strength", "plv_final_window"),
}


def aggregate(cfg: ExperimentConfig, per_seed: dict) -> dict:
    """Experiment-level summary: metric -> condition -> stats over seeds."""
    metrics: dict = {}
    for name in SCALAR_METRICS.get(cfg.experiment, ()):
        metrics[name] = {}
        for condition in cfg.conditions:
            vals = [per_seed[(condition, seed)]["summary"].get(name) for seed in cfg.seeds]
            metrics[name][condition] = _stats_block(vals)
    extras: dict = {}
    if cfg.experiment == "selection":
        extras["degenerate_seeds"] = {
            condition: [seed for seed in cfg.seeds
                        if per_seed[(condition, seed)]["summary"]["degenerate_r"]]
            for condition in cfg.conditions}
        extras["km_pooled"] = {}
        for condition in cfg.conditions:
            high_all, low_all = [], []
            for seed in cfg.seeds:
                recs = per_seed[(condition, seed)]["lifetimes"]
                lifetimes = np.array([r["lifetime_ticks"] for r in recs], dtype=float)
                firstk = np.array([r["c_firstk"] for r in recs], dtype=float)
                high, low = median_split(lifetimes, firstk)
                high_all.extend(high.tolist())
                low_all.extend(low.tolist())
            extras["km_pooled"][condition] = {
                "median_high": kaplan_meier(high_all).median if high_all else None,
                "median_low": kaplan_meier(low_all).median if low_all else None,
            }
    if cfg.experiment == "heredity":
        extras["ji_crossed_count"] = {
            condition: int(sum(per_seed[(condition, seed)]["summary"]["ji_crossed"]
                               for seed in cfg.seeds))
            for condition in cfg.conditions}
    if cfg.experiment == "search":
        extras["c_score_by_sweep_mean"] = {
            condition: np.mean([per_seed[(condition, seed)]["summary"]["c_score_by_sweep"]
                                for seed in cfg.seeds], axis=0).tolist()
            for condition in cfg.conditions}
        extras["g_by_sweep_mean"] = {
            condition: np.mean([per_seed[(condition, seed)]["summary"]["g_by_sweep"]
                                for seed in cfg.seeds], axis=0).tolist()
            for condition in cfg.conditions}
    if cfg.experiment == "entrain":
        extras["plv_timecourse_mean"] = {
            condition: np.mean([per_seed[(condition, seed)]["summary"]["plv_timecourse"]
                                for seed in cfg.seeds], axis=0).tolist()
            for condition in cfg.conditions}
    return {
        "experiment": cfg.experiment,
        "version": __version__,
        "conditions": list(cfg.conditions),
        "seeds": list(cfg.seeds),
        "metrics": metrics,
        **extras,
    }


def _write_summary_csv(path: str, summary: dict) -> None:
    with open(path, "w") as fh:
        fh.write("metric,condition,seed,value\n")
        for metric in sorted(summary["metrics"]):
            for condition in summary["conditions"]:
                block = summary["metrics"][metric][condition]
                for seed, value in zip(summary["seeds"], block["per_seed"]):
                    fh.write(f"{metric},{condition},{seed},{'' if value is None else repr(value)}\n")


def run_experiment(cfg: ExperimentConfig, out_root: str, threads: int = 1) -> dict:
    """Run a full seed batch and write out/<experiment>/ artifacts."""
    exp_dir = os.path.join(out_root, cfg.experiment)
    os.makedirs(exp_dir, exist_ok=True)
    write_json(os.path.join(exp_dir, "manifest.json"),
               {"config": config_to_dict(cfg), "version": __version__})

    if cfg.experiment == "scan":
        table = single_anchor_scan(cfg.anchor_hz, cfg.scan_probe_oct, cfg.bin_ct, cfg.timbre)
        run_dir = _run_dir(out_root, "scan", "default", 0)
        write_scan_csv(table, os.path.join(run_dir, "scan.csv"))
        summary = {
            "experiment": "scan",
            "version": __version__,
            "n_rows": int(table["cents"].size),
            "h01_argmax_ct": float(table["cents"][int(np.argmax(table["H01"]))]),
            "c_field_max": float(table["C_field"].max()),
        }
        write_json(os.path.join(exp_dir, "summary.json"), summary)
        return summary

    cfg_dict = config_to_dict(cfg)
    per_seed: dict = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {seed: pool.submit(run_seed_task, cfg_dict, seed, out_root)
                       for seed in cfg.seeds}
            for seed in cfg.seeds:
                for condition, res in futures[seed].result().items():
                    per_seed[(condition, seed)] = res
    else:
        for seed in cfg.seeds:
            for condition, res in run_seed_task(cfg_dict, seed, out_root).items():
                per_seed[(condition, seed)] = res

    summary = aggregate(cfg, per_seed)
    write_json(os.path.join(exp_dir, "summary.json"), summary)
    _write_summary_csv(os.path.join(exp_dir, "summary.csv"), summary)
    return summary
