"""Drive-power calibration and Q_i versus photon-number sweeps."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence


from .circlefit import fano_envelope, fit_reflection
from .errors import FitError, ResofitError
from .traces import SweepRecord

log = logging.getLogger(__name__)

HBAR = 1.054571817e-34  # J s, CODATA 2018 to ten digits


@dataclass(frozen=True)
class PowerPoint:
    n_bar: float
    q_i: float
    q_i_lo: float
    q_i_hi: float
    source_power_dbm: float
    p_in_w: float


@dataclass(frozen=True)
class RecordFailure:
    index: int
    label: str
    code: str
    message: str


class SweepWarning(UserWarning):
    pass


def input_power(source_power_dbm: float, line_attenuation_db: float) -> float:
    """Power in watts arriving at the device after the input-line attenuation."""
    if line_attenuation_db < 0:
        raise ValueError(f"negative attenuation: {line_attenuation_db} dB")
    return 1e-3 * 10.0 ** ((source_power_dbm - line_attenuation_db) / 10.0)


def mean_photon_number(q_total: float, q_c: float, f0_hz: float, p_in_w: float) -> float:
    """Average photon number stored in the resonator for input power ``p_in_w``."""
    if not (q_total > 0 and q_c > 0 and f0_hz > 0 and p_in_w > 0):
        raise ValueError("q_total, q_c, f0_hz and p_in_w must be positive")
    if q_total > q_c:
        raise ValueError(f"q_total ({q_total}) exceeds q_c ({q_c})")
    omega = 2.0 * math.pi * f0_hz
    return 4.0 * q_total ** 2 / (q_c * HBAR * omega ** 2) * p_in_w


def power_point(record: SweepRecord, fano_eps: float, n_phases: int = 16) -> PowerPoint:
    fit = fit_reflection(record.trace)
    p_in = input_power(record.source_power_dbm, record.line_attenuation_db)
    n_bar = mean_photon_number(fit.q_total, fit.q_c, fit.f0_hz, p_in)
    env = fano_envelope(record.trace, fano_eps, n_phases, fit=fit)
    return PowerPoint(n_bar, env.q_i_point, env.q_i_lo, env.q_i_hi,
                      record.source_power_dbm, p_in)


def _guarded(args):
    i, record, fano_eps, n_phases = args
    try:
        return i, power_point(record, fano_eps, n_phases), None
    except (ResofitError, ValueError) as exc:
        code = getattr(exc, "code", "circle-fit.fit")
        return i, None, RecordFailure(i, record.label, code, str(exc))


def sweep_points(records: Sequence[SweepRecord], fano_eps: float,
                 n_phases: int = 16, workers: int = 1):
    """Fit every record; return ``(points, failures)``.

    Points are sorted by ascending photon number (input order breaks ties),
    so the result does not depend on how work was scheduled.
    """
    jobs = [(i, rec, fano_eps, n_phases) for i, rec in enumerate(records)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_guarded, jobs))
    else:
        outcomes = [_guarded(job) for job in jobs]
    done = sorted(((pt.n_bar, i, pt) for i, pt, _ in outcomes if pt is not None),
                  key=lambda t: t[:2])
    failures = [fail for _, _, fail in outcomes if fail is not None]
    return [pt for *_, pt in done], failures


def assemble_power_sweep(records: Sequence[SweepRecord], fano_eps: float,
                         n_phases: int = 16, workers: int = 1) -> list[PowerPoint]:
    """Q_i against mean photon number, one point per record.

    Records whose fit fails are reported through a :class:`SweepWarning`;
    if every record fails a :class:`FitError` is raised.
    """
    if not records:
        raise FitError("power sweep needs at least one record")
    points, failures = sweep_points(records, fano_eps, n_phases, workers)
    if not points:
        details = "; ".join(f"[{f.index}] {f.message}" for f in failures)
        raise FitError(f"every record in the sweep failed: {details}")
    for fail in failures:
        log.warning("record %d (%s) failed: %s", fail.index, fail.label, fail.message)
        warnings.warn(f"record {fail.index} ({fail.label}) skipped: {fail.message}",
                      SweepWarning, stacklevel=2)
    return points
