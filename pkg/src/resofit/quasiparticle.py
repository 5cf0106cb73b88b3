"""Thermal quasi-particle model for resonator frequency shift and loss.

Conductivities use the low-temperature, low-frequency (h f << 2 Delta)
Mattis-Bardeen expressions, normalised to the normal-state value:

    s1 = (4 Delta / h f) exp(-Delta / kT) sinh(xi) K0(xi)
    s2 = (pi Delta / h f) exp(-x)
    x  = [sqrt(2 pi kT / Delta) + 2 exp(-xi) I0(xi)] exp(-Delta / kT)

with xi = h f / 2kT and Delta(T) = 1.764 k Tc tanh(1.74 sqrt(Tc/T - 1)).
The usual low-temperature bracket 1 - x is replaced by exp(-x): the two
agree to first order in exp(-Delta / kT), but 1 - x turns negative as T
approaches Tc while exp(-x) keeps s2 positive over the whole (0, Tc).
The resonator response relative to the lowest measured temperature T_ref:

    delta_f(T) = f0 (alpha / 2) (s2(T) - s2(T_ref)) / s2(T_ref)
    1 / Q_i(T) = A_qp alpha s1(T) / s2(T) + 1 / Q_other
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.constants import h as H_PLANCK
from scipy.constants import k as K_B
from scipy.special import i0e, k0e

from .errors import (InsufficientSpanError, ModelError, ParseError,
                     QuasiparticleError)
from .lm import levenberg_marquardt

log = logging.getLogger(__name__)

GAP_RATIO = 1.764
MIN_POINTS = 8
MIN_SPAN_RATIO = 3.0


@dataclass(frozen=True)
class QuasiparticleParams:
    t_c_k: float
    alpha: float
    a_qp: float
    q_other: float

    def __post_init__(self):
        vals = (self.t_c_k, self.alpha, self.a_qp, self.q_other)
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise ModelError("quasi-particle parameters must be finite and positive")
        if self.alpha > 1:
            raise ModelError(f"alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class TempSweepPoint:
    temperature_k: float
    delta_f_hz: float
    q_i: float


@dataclass(frozen=True)
class QuasiparticleFit:
    params: QuasiparticleParams
    rms_delta_f_hz: float
    rms_log_q_i: float
    n_points: int
    n_iter: int
    converged: bool
    # names of parameters that ended against a constraint (alpha at 1, or
    # t_c pinned at the highest fitted temperature)
    at_bound: tuple = ()


def bcs_gap(t_k, t_c_k):
    """Superconducting gap in joules (interpolated BCS temperature dependence)."""
    t = np.asarray(t_k, dtype=float)
    if np.any(t <= 0) or np.any(t >= t_c_k):
        raise ModelError(f"temperature must lie in (0, {t_c_k}) K")
    gap = GAP_RATIO * K_B * t_c_k * np.tanh(1.74 * np.sqrt(t_c_k / t - 1.0))
    return float(gap) if gap.ndim == 0 else gap


def mb_sigma(t_k, f_hz, t_c_k):
    """Normalised conductivities ``(s1, s2)`` at temperature ``t_k`` and frequency ``f_hz``.

    Bessel functions are used in their exponentially scaled forms, so deep
    in the low-temperature regime nothing overflows.
    """
    t = np.asarray(t_k, dtype=float)
    gap = np.asarray(bcs_gap(t, t_c_k))
    hf = H_PLANCK * f_hz
    if np.any(hf > 0.2 * gap):
        warnings.warn("h f is not small compared with 2 Delta; the "
                      "low-frequency conductivity approximation degrades",
                      RuntimeWarning, stacklevel=2)
    kt = K_B * t
    xi = hf / (2.0 * kt)
    boltz = np.exp(-gap / kt)
    # sinh(xi) K0(xi) = (1 - exp(-2 xi)) / 2 * k0e(xi)
    s1 = (4.0 * gap / hf) * boltz * (-np.expm1(-2.0 * xi)) / 2.0 * k0e(xi)
    thermal = (np.sqrt(2.0 * np.pi * kt / gap) + 2.0 * i0e(xi)) * boltz
    s2 = (np.pi * gap / hf) * np.exp(-thermal)
    if s1.ndim == 0:
        return float(s1), float(s2)
    return s1, s2


def model_curves(p: QuasiparticleParams, f0_hz: float, t_grid):
    """Frequency shift (Hz) and internal Q on ``t_grid``, anchored at its minimum."""
    t = np.asarray(t_grid, dtype=float)
    t_ref = t.min()
    s1, s2 = mb_sigma(t, f0_hz, p.t_c_k)
    _, s2_ref = mb_sigma(t_ref, f0_hz, p.t_c_k)
    delta_f = f0_hz * (p.alpha / 2.0) * ((s2 - s2_ref) / s2_ref)
    inv_q = p.a_qp * p.alpha * s1 / s2 + 1.0 / p.q_other
    return delta_f, 1.0 / inv_q


def default_init(points: Sequence[TempSweepPoint]) -> QuasiparticleParams:
    """Starting point derived from the data.

    t_c is 1.1 times the temperature at which Q_i has halved from its
    base value (6 K if it never does), raised if needed so it sits above
    every measured temperature.
    """
    pts = sorted(points, key=lambda p: p.temperature_k)
    t = np.array([p.temperature_k for p in pts])
    q = np.array([p.q_i for p in pts])
    halved = np.nonzero(q <= 0.5 * q[0])[0]
    t_c = 1.1 * t[halved[0]] if halved.size else 6.0
    t_c = max(t_c, 1.05 * t.max())
    return QuasiparticleParams(float(t_c), 1e-3, 100.0, float(q[0]))


class _Objective:
    """Stacked, scaled residual of the joint fit in log-parameter space."""

    def __init__(self, points, f0_hz):
        self.t = np.array([p.temperature_k for p in points])
        self.df = np.array([p.delta_f_hz for p in points])
        self.log_q = np.log([p.q_i for p in points])
        self.f0 = f0_hz
        self.t_max = self.t.max()
        self.scale_f = max(np.max(np.abs(self.df)), 1e-300)

    def pack(self, p: QuasiparticleParams):
        if p.t_c_k <= self.t_max:
            raise QuasiparticleError(
                f"initial t_c {p.t_c_k} K does not exceed the highest "
                f"fitted temperature {self.t_max} K")
        return np.array([math.log(p.t_c_k - self.t_max), math.log(p.alpha),
                         math.log(p.a_qp), math.log(p.q_other)])

    def unpack(self, x):
        return (self.t_max + math.exp(x[0]), math.exp(x[1]),
                math.exp(x[2]), math.exp(x[3]))

    def channels(self, x):
        return self.evaluate(*self.unpack(x))

    def evaluate(self, t_c, alpha, a_qp, q_other):
        s1, s2 = mb_sigma(self.t, self.f0, t_c)
        s2_ref = s2[np.argmin(self.t)]
        delta_f = self.f0 * (alpha / 2.0) * ((s2 - s2_ref) / s2_ref)
        log_q = -np.log(a_qp * alpha * s1 / s2 + 1.0 / q_other)
        return (delta_f - self.df) / self.scale_f, log_q - self.log_q

    def __call__(self, x):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.concatenate(self.channels(x))


def joint_objective(params: QuasiparticleParams, points, f0_hz: float) -> float:
    """Sum of squared stacked residuals, the quantity :func:`joint_fit` minimises."""
    obj = _Objective(points, f0_hz)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rf, rq = obj.evaluate(params.t_c_k, params.alpha, params.a_qp, params.q_other)
    return float(rf @ rf + rq @ rq)


def joint_fit(points: Sequence[TempSweepPoint], f0_hz: float,
              init: QuasiparticleParams | None = None,
              t_cutoff_k: float | None = None) -> QuasiparticleFit:
    """Fit t_c, alpha, A_qp and Q_other to a temperature sweep.

    Frequency shifts are scaled by the largest measured shift and Q_i enters
    through its logarithm, so both channels weigh in comparably. Points
    above ``t_cutoff_k`` are ignored. Without ``init`` the start is taken
    from :func:`default_init`.
    """
    pts = [p for p in points if t_cutoff_k is None or p.temperature_k <= t_cutoff_k]
    if len(pts) < MIN_POINTS:
        raise InsufficientSpanError(
            f"joint fit needs at least {MIN_POINTS} points, got {len(pts)}")
    t = np.array([p.temperature_k for p in pts])
    if not np.all(t > 0):
        raise InsufficientSpanError("temperatures must be positive")
    if t.max() < MIN_SPAN_RATIO * t.min():
        raise InsufficientSpanError(
            f"temperatures span only a factor {t.max() / t.min():.3g}; "
            f"need at least {MIN_SPAN_RATIO:g}")
    if init is None:
        init = default_init(pts)

    obj = _Objective(pts, f0_hz)
    res = levenberg_marquardt(obj, obj.pack(init))
    if not np.all(np.isfinite(res.residual)):
        raise QuasiparticleError("joint fit diverged to a non-finite residual")
    if not res.converged:
        raise QuasiparticleError(f"joint fit did not converge: {res.message}")
    t_c, alpha, a_qp, q_other = (float(v) for v in obj.unpack(res.x))
    at_bound = []
    if alpha > 1:
        at_bound.append("alpha")
        alpha = 1.0
    if t_c - obj.t_max < 1e-6 * obj.t_max:
        at_bound.append("t_c_k")
    for name in at_bound:
        log.warning("joint fit parameter %s ended at its bound", name)
    rf, rq = obj.channels(res.x)
    return QuasiparticleFit(
        params=QuasiparticleParams(t_c, alpha, a_qp, q_other),
        rms_delta_f_hz=float(np.sqrt(np.mean(rf ** 2)) * obj.scale_f),
        rms_log_q_i=float(np.sqrt(np.mean(rq ** 2))),
        n_points=len(pts),
        n_iter=res.n_iter,
        converged=res.converged,
        at_bound=tuple(at_bound),
    )


def synthetic_sweep(p: QuasiparticleParams, f0_hz: float, t_grid) -> list[TempSweepPoint]:
    delta_f, q_i = model_curves(p, f0_hz, t_grid)
    return [TempSweepPoint(float(t), float(d), float(q))
            for t, d, q in zip(np.asarray(t_grid, dtype=float), delta_f, q_i)]


def parse_temperature_csv(text: str) -> list[TempSweepPoint]:
    """Read a ``temperature_k,delta_f_hz,q_i`` CSV."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty temperature sweep")
    fields = {name.strip().lower(): name for name in rows[0]}
    for need in ("temperature_k", "delta_f_hz", "q_i"):
        if need not in fields:
            raise ParseError(f"missing required column {need!r}", 1)
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            vals = [float(row[fields[k]]) for k in ("temperature_k", "delta_f_hz", "q_i")]
        except (TypeError, ValueError):
            raise ParseError(f"non-numeric cell in row {row!r}", lineno) from None
        if not (vals[0] > 0 and vals[2] > 0 and all(map(math.isfinite, vals))):
            raise ParseError("temperature and q_i must be positive and finite", lineno)
        out.append(TempSweepPoint(*vals))
    return out
