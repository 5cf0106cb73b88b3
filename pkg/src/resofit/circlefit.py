"""Quality-factor extraction from complex reflection traces.

The fit runs in stages, each usable on its own:

1. :func:`estimate_delay` - cable delay from the phase slope off resonance.
2. :func:`normalize` - remove the delay and scale the off-resonant level to 1.
3. :func:`fit_circle` - algebraic (Taubin) circle through the samples.
4. :func:`fit_phase` - resonance frequency and loaded Q from the angle
   swept around the circle centre.
5. a Levenberg-Marquardt refinement of all six parameters against the raw
   trace, done inside :func:`fit_reflection`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import (ConvergenceError, DegenerateCircleError,
                     DelayEstimateError, FitError)
from .lm import levenberg_marquardt
from .traces import ComplexTrace

log = logging.getLogger(__name__)

EDGE_FRACTION = 0.1
MIN_DELAY_POINTS = 20
# rms scatter (rad) of the edge phases about the fitted line above which the
# delay estimate is rejected
DELAY_RESIDUAL_LIMIT = 0.5
MIN_OFFRES_MAGNITUDE = 1e-6


@dataclass(frozen=True)
class CircleFitResult:
    f0_hz: float
    q_total: float
    q_c: float
    q_i: float
    r: float
    delay_s: float
    amp: float
    phase_rad: float
    rms_residual: float
    fwhm_hz: float
    n_points: int
    # "ok", "not-converged" (iteration cap hit, result still improved on the
    # seed) or "seed-returned" (refinement was worse than the seed)
    flag: str = "ok"


@dataclass(frozen=True)
class FanoEnvelope:
    q_i_point: float
    q_i_lo: float
    q_i_hi: float
    eps: float


def _edge_count(n):
    return max(2, int(round(EDGE_FRACTION * n)))


def _offres_point(f, z):
    k = _edge_count(z.size)
    return np.concatenate([z[:k], z[-k:]]).mean()


def _wrap(phi):
    return phi - (2.0 * np.pi) * np.round(phi / (2.0 * np.pi))


def estimate_delay(trace: ComplexTrace) -> float:
    """Cable delay in seconds from the phase slope of the off-resonant edges.

    Each edge window (outer 10 % of points) is unwrapped on its own; a
    common-slope fit with one offset per edge then fixes the whole number
    of turns between the two windows, and the delay comes from a single
    line through both, which uses the full span as lever arm.
    """
    f, z = trace.frequencies_hz, trace.samples
    n = f.size
    if n < MIN_DELAY_POINTS:
        raise DelayEstimateError(
            f"trace too short for a delay estimate ({n} < {MIN_DELAY_POINTS} points)")
    k = _edge_count(n)
    fc = 0.5 * (f[0] + f[-1])
    x = np.concatenate([f[:k], f[-k:]]) - fc
    phi = np.concatenate([np.unwrap(np.angle(z[:k])), np.unwrap(np.angle(z[-k:]))])
    design = np.zeros((2 * k, 3))
    design[:, 0] = x
    design[:k, 1] = 1.0
    design[k:, 2] = 1.0
    coef, *_ = np.linalg.lstsq(design, phi, rcond=None)
    resid = phi - design @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if rms > DELAY_RESIDUAL_LIMIT:
        raise DelayEstimateError(
            f"delay estimate unreliable: edge phase scatter {rms:.3g} rad "
            f"exceeds {DELAY_RESIDUAL_LIMIT} rad")

    turns = np.round((coef[2] - coef[1]) / (2.0 * math.pi))
    phi[k:] -= 2.0 * math.pi * turns
    slope = np.polyfit(x, phi, 1)[0]
    step = abs(slope) * np.max(np.diff(f))
    if step > math.pi or abs(coef[0]) * np.max(np.diff(f)) > math.pi:
        raise DelayEstimateError(
            f"phase unwrap ambiguous: slope implies {step:.3g} rad between points")
    return float(-slope / (2.0 * math.pi))


def normalize(trace: ComplexTrace, delay_s: float) -> ComplexTrace:
    """Remove ``delay_s`` and divide by the off-resonant point."""
    f = trace.frequencies_hz
    z = trace.samples * np.exp(2j * np.pi * f * delay_s)
    off = _offres_point(f, z)
    if abs(off) < MIN_OFFRES_MAGNITUDE:
        raise FitError(
            f"degenerate normalization: off-resonant level {abs(off):.3g} "
            f"is below {MIN_OFFRES_MAGNITUDE}")
    return trace.with_samples(z / off)


def fit_circle(points):
    """Taubin algebraic circle fit.

    Returns ``(center, radius, rms)`` where ``center`` is complex and
    ``rms`` is the root-mean-square geometric distance of the points from
    the circle.
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < 3:
        raise DegenerateCircleError(f"need at least 3 points, got {z.size}")
    centroid = z.mean()
    x = z.real - centroid.real
    y = z.imag - centroid.imag
    sv = np.linalg.svd(np.column_stack([x, y]), compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateCircleError("points are collinear; no unique circle")

    zz = x * x + y * y
    zmean = zz.mean()
    z0 = (zz - zmean) / (2.0 * math.sqrt(zmean))
    _, _, vt = np.linalg.svd(np.column_stack([z0, x, y]), full_matrices=False)
    a = vt[2].copy()
    a0 = a[0] / (2.0 * math.sqrt(zmean))
    if abs(a0) <= 1e-14 * np.hypot(a[1], a[2]):
        raise DegenerateCircleError("points are collinear; no unique circle")
    a3 = -zmean * a0
    center = complex(-a[1] / (2 * a0), -a[2] / (2 * a0)) + centroid
    radius = math.sqrt(a[1] ** 2 + a[2] ** 2 - 4 * a0 * a3) / abs(a0) / 2
    rms = float(np.sqrt(np.mean((np.abs(z - center) - radius) ** 2)))
    return center, radius, rms


def _phase_model(f, f0, q, theta0, sense):
    return theta0 + 2.0 * sense * np.arctan(2.0 * q * (1.0 - f / f0))


def fit_phase(trace: ComplexTrace, center: complex, f0_guess=None, q_guess=None):
    """Fit the angle of ``sample - center`` to an arctangent phase roll.

    The model is ``theta0 + 2*arctan(2*q_total*(1 - f/f0))``; a circle
    traversed the other way round is fitted with the arctangent's sign
    flipped. Returns ``(f0_hz, q_total, theta0_rad)``.
    """
    f = trace.frequencies_hz
    theta = np.angle(trace.samples - center)
    unwrapped = np.unwrap(theta)
    sense = -1.0 if unwrapped[-1] > unwrapped[0] else 1.0
    span = f[-1] - f[0]

    if f0_guess is None:
        mid = 0.5 * (unwrapped[0] + unwrapped[-1])
        f0_guess = f[np.argmin(np.abs(unwrapped - mid))]
    if q_guess is None:
        i0 = np.searchsorted(f, f0_guess).clip(0, f.size - 1)
        inside = np.abs(_wrap(unwrapped - unwrapped[i0])) < math.pi / 2
        width = max(np.count_nonzero(inside), 2) * span / (f.size - 1)
        q_guess = f0_guess / width
    i0 = int(np.searchsorted(f, f0_guess).clip(0, f.size - 1))
    theta0_guess = theta[i0]
    scale = f0_guess / q_guess

    def unpack(p):
        return f0_guess + p[0] * scale, q_guess * math.exp(p[1]), p[2]

    def resid(p):
        f0, q, th = unpack(p)
        return _wrap(theta - _phase_model(f, f0, q, th, sense))

    def jac(p):
        f0, q, th = unpack(p)
        v = 2.0 * q * (1.0 - f / f0)
        dv = 2.0 * sense / (1.0 + v * v)
        return -np.column_stack([dv * 2.0 * q * f / f0 ** 2 * scale,
                                 dv * v,
                                 np.ones_like(f)])

    res = levenberg_marquardt(resid, [0.0, 0.0, theta0_guess], jac)
    f0, q, th = unpack(res.x)
    if not res.converged:
        raise ConvergenceError(f"phase fit did not converge: {res.message}")
    if not (f[0] <= f0 <= f[-1]):
        raise ConvergenceError(
            f"phase fit placed f0 = {f0:.9g} Hz outside the trace span")
    if not (np.isfinite(q) and np.min(np.diff(f)) < f0 / q < span):
        raise ConvergenceError(
            "phase fit found no resonance resolved within the trace span")
    return float(f0), float(q), float(_wrap(th))


def _dip_guess(trace):
    """f0 and Q from the smoothed peak of |z - 1|**2 of a normalised trace."""
    f = trace.frequencies_hz
    power = np.abs(trace.samples - 1.0) ** 2
    w = max(1, f.size // 100)
    smooth = np.convolve(power, np.ones(w) / w, mode="same")
    base = np.median(np.concatenate([smooth[:_edge_count(f.size)],
                                     smooth[-_edge_count(f.size):]]))
    i0 = int(np.argmax(smooth))
    above = np.nonzero(smooth - base >= 0.5 * (smooth[i0] - base))[0]
    width = max(above[-1] - above[0] + 1, 2) * (f[-1] - f[0]) / (f.size - 1)
    return f[i0], f[i0] / width


class _ReflectionModel:
    """Raw-trace model used by the final refinement.

    Parameters are scaled to order one: the f0 offset in linewidths of the
    seed, log q_i, log q_c, the delay as phase across the span, log amp and
    the phase at the span centre.
    """

    def __init__(self, f, z, f0_seed, q_seed):
        self.f, self.z = f, z
        self.f0_seed = f0_seed
        self.lw = f0_seed / q_seed
        self.fc = 0.5 * (f[0] + f[-1])
        self.span = max(f[-1] - f[0], 1e-300)
        self.w = (f - self.fc) / self.span

    def pack(self, f0, q_i, q_c, delay, amp, phase):
        t = 2 * math.pi * self.span * delay
        psi = phase - 2 * math.pi * self.fc * delay
        return np.array([(f0 - self.f0_seed) / self.lw, math.log(q_i),
                         math.log(q_c), t, math.log(amp), psi])

    def unpack(self, p):
        f0 = self.f0_seed + p[0] * self.lw
        q_i, q_c = math.exp(p[1]), math.exp(p[2])
        delay = p[3] / (2 * math.pi * self.span)
        amp = math.exp(p[4])
        phase = p[5] + 2 * math.pi * self.fc * delay
        return f0, q_i, q_c, delay, amp, phase

    def _parts(self, p):
        key = p.tobytes()
        if key != getattr(self, "_key", None):
            self._key, self._cache = key, self._compute(p)
        return self._cache

    def _compute(self, p):
        f0 = self.f0_seed + p[0] * self.lw
        q_i, q_c = math.exp(p[1]), math.exp(p[2])
        q_t = q_i * q_c / (q_i + q_c)
        r = q_t / q_c
        x = self.f / f0 - 1.0
        inv = 1.0 / (1.0 + 2j * q_t * x)
        env = np.exp(p[4] + 1j * (p[5] - p[3] * self.w))
        m = env * (1.0 - 2.0 * r * inv)
        return f0, q_t, r, x, inv, env, m

    def residual(self, p):
        m = self._parts(p)[-1]
        d = m - self.z
        return np.concatenate([d.real, d.imag])

    def jacobian(self, p):
        f0, q_t, r, x, inv, env, m = self._parts(p)
        e_inv = env * inv  # env / den
        g = e_inv * inv  # env / den**2
        xg = x * g
        rr = 2.0 * r * (1.0 - r)
        c = 4j * r * q_t
        cols = (
            (c * (-self.lw / f0 ** 2)) * (g * self.f),
            (c * (1.0 - r)) * xg - rr * e_inv,
            (c * r) * xg + rr * e_inv,
        )
        n = self.f.size
        out = np.empty((2 * n, 6))
        for k, col in enumerate(cols):
            out[:n, k] = col.real
            out[n:, k] = col.imag
        out[:n, 3] = self.w * m.imag
        out[n:, 3] = -self.w * m.real
        out[:n, 4] = m.real
        out[n:, 4] = m.imag
        out[:n, 5] = -m.imag
        out[n:, 5] = m.real
        return out


def fit_reflection(trace: ComplexTrace) -> CircleFitResult:
    """Fit a single-port reflection trace and derive Q_total, Q_c and Q_i.

    The trace should span at least five linewidths so the outer 10 % of
    points on each side sit off resonance.
    """
    f, z = trace.frequencies_hz, trace.samples
    delay = estimate_delay(trace)
    zd = z * np.exp(2j * np.pi * f * delay)
    off = _offres_point(f, zd)
    norm = normalize(trace, delay)
    center, radius, _ = fit_circle(norm.samples)
    f0, q_t, theta0 = fit_phase(norm, center, *_dip_guess(norm))

    # the off-resonant point sits diametrically opposite the resonance
    p_off = center - radius * np.exp(1j * theta0)
    r = min(radius / abs(p_off), 0.99)
    q_c = q_t / r
    q_i = q_t / (1.0 - r)
    amp = abs(off * p_off)
    phase = float(np.angle(off * p_off))

    model = _ReflectionModel(f, z, f0, q_t)
    seed = model.pack(f0, q_i, q_c, delay, amp, phase)
    seed_resid = model.residual(seed)
    seed_cost = 0.5 * float(seed_resid @ seed_resid)
    if not np.isfinite(seed_cost):
        seed_cost = math.inf
    res = levenberg_marquardt(model.residual, seed, model.jacobian)

    flag = "ok"
    params = res.x
    if not (np.isfinite(res.cost) or np.isfinite(seed_cost)):
        raise ConvergenceError("refinement and seed both give a non-finite residual")
    if not (res.cost <= seed_cost and np.all(np.isfinite(params))):
        log.warning("refinement worse than seed (%.3g > %.3g); returning seed",
                    res.cost, seed_cost)
        params, flag = seed, "seed-returned"
    elif not res.converged:
        log.warning("refinement stopped: %s", res.message)
        flag = "not-converged"
    return _assemble(model, params, f.size, flag)


def _assemble(model, params, n_points, flag):
    f0, q_i, q_c, delay, amp, phase = model.unpack(params)
    q_total = 1.0 / (1.0 / q_i + 1.0 / q_c)
    r = q_total / q_c
    resid = model.residual(params)
    return CircleFitResult(
        f0_hz=float(f0),
        q_total=q_total,
        q_c=q_c,
        q_i=q_total / (1.0 - r),
        r=r,
        delay_s=float(delay),
        amp=amp,
        phase_rad=float(_wrap(phase)),
        rms_residual=float(np.sqrt(2.0 * np.mean(resid ** 2))),
        fwhm_hz=float(fwhm(f0, q_total)),
        n_points=int(n_points),
        flag=flag,
    )


def fwhm(f0_hz: float, q_total: float) -> float:
    """Full width at half maximum of the resonance, in hertz."""
    if not (f0_hz > 0 and q_total > 0):
        raise ValueError("f0_hz and q_total must be positive")
    return f0_hz / q_total


def calibrated(trace: ComplexTrace, fit: CircleFitResult) -> ComplexTrace:
    """Divide out the fitted amplitude, phase and delay."""
    f = trace.frequencies_hz
    env = fit.amp * np.exp(1j * (fit.phase_rad - 2 * np.pi * f * fit.delay_s))
    return trace.with_samples(trace.samples / env)


def fano_envelope(trace: ComplexTrace, eps: float, n_phases: int = 16,
                  fit: CircleFitResult | None = None) -> FanoEnvelope:
    """Spread of Q_i over an unknown leakage background of amplitude ``eps``.

    For each of ``n_phases`` equally spaced phases a background
    ``eps*exp(i*phi)`` is subtracted from the calibrated trace and the trace
    is refitted; the envelope is the range of the resulting Q_i, widened to
    include the unperturbed fit. Pass ``fit`` to reuse an existing fit of
    ``trace``.
    """
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    if n_phases < 8:
        raise ValueError(f"n_phases must be at least 8, got {n_phases}")
    point = fit if fit is not None else fit_reflection(trace)
    if eps == 0:
        # subtracting a zero background leaves the trace unchanged
        return FanoEnvelope(point.q_i, point.q_i, point.q_i, 0.0)

    base = calibrated(trace, point)
    values = [point.q_i]
    for k in range(n_phases):
        phi = 2.0 * math.pi * k / n_phases
        shifted = base.with_samples(base.samples - eps * np.exp(1j * phi))
        try:
            values.append(fit_reflection(shifted).q_i)
        except FitError as exc:
            raise type(exc)(f"Fano refit failed at phase {phi:.6g} rad: {exc}") from exc
    return FanoEnvelope(point.q_i, min(values), max(values), float(eps))
