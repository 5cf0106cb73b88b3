"""Quality-factor extraction and loss modelling for superconducting resonators."""

from .circlefit import (CircleFitResult, FanoEnvelope, estimate_delay, fano_envelope,
                        fit_circle, fit_phase, fit_reflection, fwhm, normalize)
from .model import (EnvironmentParams, LumpedElements, ResonatorParams, lumped_f0,
                    s11_ideal, synthesize)
from .photon import PowerPoint, assemble_power_sweep, input_power, mean_photon_number
from .quasiparticle import (QuasiparticleParams, TempSweepPoint, bcs_gap, joint_fit,
                            mb_sigma, model_curves)
from .traces import (ComplexTrace, SweepRecord, emit_results, load_manifest, parse_csv,
                     parse_touchstone, write_touchstone)

__version__ = "0.1.0"
