"""Single-port reflection model of a resonator and a synthetic trace generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .traces import ComplexTrace


@dataclass(frozen=True)
class ResonatorParams:
    f0_hz: float
    q_total: float
    q_c: float

    def __post_init__(self):
        if not (self.f0_hz > 0 and self.q_total > 0 and self.q_c > 0):
            raise ModelError("f0_hz, q_total and q_c must all be positive")
        if self.q_total > self.q_c:
            raise ModelError(
                f"q_total ({self.q_total}) exceeds q_c ({self.q_c}); "
                "the internal quality factor would be negative")

    @property
    def r(self) -> float:
        """Circle radius of the calibrated response, q_total / q_c."""
        return self.q_total / self.q_c

    @property
    def q_i(self) -> float:
        return self.q_total / (1.0 - self.r)

    @classmethod
    def from_qi(cls, f0_hz, q_i, q_c) -> "ResonatorParams":
        q_total = 1.0 / (1.0 / q_i + 1.0 / q_c)
        return cls(f0_hz, q_total, q_c)

    @classmethod
    def from_radius(cls, f0_hz, q_i, r) -> "ResonatorParams":
        """Build from the internal Q and the circle radius r in (0, 1)."""
        q_total = q_i * (1.0 - r)
        return cls(f0_hz, q_total, q_total / r)


@dataclass(frozen=True)
class EnvironmentParams:
    """Measurement chain wrapped around the resonator response.

    ``fano_eps`` and ``fano_phase_rad`` describe a constant leakage signal
    added to the resonator response before the amplitude, phase and cable
    delay are applied. ``noise_sigma`` is the standard deviation of the
    additive Gaussian noise in each quadrature.
    """

    delay_s: float = 0.0
    amp: float = 1.0
    phase_rad: float = 0.0
    fano_eps: float = 0.0
    fano_phase_rad: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.amp > 0:
            raise ModelError(f"amp must be positive, got {self.amp}")
        if self.fano_eps < 0 or self.noise_sigma < 0:
            raise ModelError("fano_eps and noise_sigma must be non-negative")


@dataclass(frozen=True)
class LumpedElements:
    l_h: float
    c1_f: float
    c2_f: float

    def __post_init__(self):
        if not (self.l_h > 0 and self.c1_f > 0 and self.c2_f > 0):
            raise ModelError("inductance and capacitances must be positive")


def s11_ideal(p: ResonatorParams, f_hz):
    """Calibrated reflection coefficient at frequency ``f_hz`` (scalar or array)."""
    f = np.asarray(f_hz, dtype=float)
    if np.any(f <= 0):
        raise ModelError("frequencies must be positive")
    s = 1.0 - (2.0 * p.r) / (1.0 + 2j * p.q_total * (f / p.f0_hz - 1.0))
    return complex(s) if f.ndim == 0 else s


def environment(env: EnvironmentParams, f_hz):
    """Complex gain of the measurement chain (amplitude, phase, cable delay)."""
    f = np.asarray(f_hz, dtype=float)
    return env.amp * np.exp(1j * (env.phase_rad - 2.0 * np.pi * f * env.delay_s))


def synthesize(p: ResonatorParams, env: EnvironmentParams, f_grid) -> ComplexTrace:
    """Sample the resonator response on ``f_grid`` through the environment.

    Noise is drawn from ``numpy.random.default_rng(env.seed)`` so equal
    inputs give bitwise-equal traces.
    """
    f = np.asarray(f_grid, dtype=float)
    if f.size == 0:
        raise ModelError("empty frequency grid")
    if np.any(np.diff(f) <= 0):
        raise ModelError("frequency grid must be strictly increasing")
    background = env.fano_eps * np.exp(1j * env.fano_phase_rad)
    z = environment(env, f) * (s11_ideal(p, f) + background)
    if env.noise_sigma > 0:
        rng = np.random.default_rng(env.seed)
        z = z + env.noise_sigma * (rng.standard_normal(f.size)
                                   + 1j * rng.standard_normal(f.size))
    return ComplexTrace(f, z)


def linewidth_grid(p: ResonatorParams, n_points=1001, span_linewidths=10.0):
    """Uniform grid centred on f0 spanning ``span_linewidths`` times f0/q_total."""
    half = 0.5 * span_linewidths * p.f0_hz / p.q_total
    return np.linspace(p.f0_hz - half, p.f0_hz + half, n_points)


def lumped_f0(e: LumpedElements) -> float:
    """Resonance frequency in hertz of L in parallel with C1 + C2."""
    return 1.0 / (2.0 * np.pi * np.sqrt(e.l_h * (e.c1_f + e.c2_f)))
