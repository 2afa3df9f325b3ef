"""Per-agent phase oscillators under a condition-specific periodic drive.

Each agent is a single phase oscillator pulled toward a drive phase: shared
(continuous reference), scrambled (same cycle length, phase re-randomized at
every cycle boundary), or off (no coupling). Onsets are upward zero crossings
of the wrapped phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

CONDITIONS = ("shared", "scrambled", "off")


@dataclass
class OscillatorParams:
    k_base: float = 3.0
    f0_hz: float = 1.8
    freq_jitter: float = 0.02
    drive_hz: float = 2.0
    duration_s: float = 40.0
    dt: float = 512.0 / 48000.0
    cycle_s: float = 0.5


def drive_phase(t: float, condition: str, params: OscillatorParams,
                cycle_offsets: np.ndarray | None = None):
    """Drive phase at time t, or None when the scaffold is off."""
    if condition == "off":
        return None
    base = TWO_PI * params.drive_hz * t
    if condition == "shared":
        return base % TWO_PI
    if condition == "scrambled":
        n = int(t / params.cycle_s)
        return (base + cycle_offsets[n]) % TWO_PI
    raise ValueError(f"unknown drive condition {condition!r}")


def phase_step(phi, omega, theta_star, k: float, dt: float):
    """Explicit Euler step of dphi/dt = omega + K sin(theta* - phi), wrapped."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if theta_star is None:
        return (phi + omega * dt) % TWO_PI
    return (phi + (omega + k * np.sin(theta_star - phi)) * dt) % TWO_PI


def draw_oscillators(n_agents: int, params: OscillatorParams, rng: np.random.Generator):
    """Intrinsic frequencies (uniform +-jitter around f0) and initial phases."""
    jitter = rng.uniform(-params.freq_jitter, params.freq_jitter, size=n_agents)
    omegas = params.f0_hz * TWO_PI * (1.0 + jitter)
    phases = rng.uniform(0.0, TWO_PI, size=n_agents)
    return omegas, phases


def simulate(params: OscillatorParams, condition: str, omegas: np.ndarray,
             phases0: np.ndarray, scramble_rng: np.random.Generator | None = None) -> np.ndarray:
    """Phase traces, shape (n_steps + 1, n_agents); row n is time n * dt."""
    n_steps = int(round(params.duration_s / params.dt))
    trace = np.empty((n_steps + 1, omegas.size))
    trace[0] = phases0
    offsets = None
    if condition == "scrambled":
        n_cycles = int(math.ceil(params.duration_s / params.cycle_s)) + 1
        offsets = scramble_rng.uniform(0.0, TWO_PI, size=n_cycles)
    phi = phases0.copy()
    for n in range(n_steps):
        theta = drive_phase(n * params.dt, condition, params, offsets)
        phi = phase_step(phi, omegas, theta, params.k_base, params.dt)
        trace[n + 1] = phi
    return trace


def extract_onsets(trace_1d: np.ndarray, dt: float) -> np.ndarray:
    """Onset times: upward crossings of phase through 0 (mod 2pi), linearly
    interpolated between samples."""
    phi = np.asarray(trace_1d)
    d = np.diff(phi)
    wraps = np.nonzero(d < -math.pi)[0]
    if wraps.size == 0:
        return np.array([])
    before = phi[wraps]
    after = phi[wraps + 1] + TWO_PI
    frac = (TWO_PI - before) / (after - before)
    return (wraps + frac) * dt
