"""Ergodicity rates for nonlinear autoregressions with a unit root.

Modules
-------
model      model specification, coefficient algebra, one-step transition
companion  companion matrices and the contracting weighted norm
drift      Lyapunov functions, drift shapes, envelope and drift checks
classify   rate certificates from envelope exponents and error moments
sim        simulation, autocorrelations, ensemble TV decay
config     TOML model files
cli        command line front end
"""

from .classify import RateCertificate, check_condition_h, classify, classify_model, \
    implied_drift_spec
from .companion import CompanionForm, build_companion, transform_z, weighted_norm
from .drift import (DriftReport, DriftSpec, EnvelopeCertificate, GeometricPhi, GridConfig,
                    MCConfig, PolyPhi, PolyV, SubexpPhi, SubexpV, check_epsilon_decay,
                    check_g_envelope, default_drift_spec, eval_phi, eval_V, verify_drift,
                    verify_drift_autoshrink)
from .errors import *  # noqa: F401,F403
from .model import (Custom, EstarSlope, GeneralEstar, HSpec, LstarIntercept, ModelSpec,
                    MomentOnly, NoiseSpec, Subexponential, ZeroTerm, decompose_unit_root,
                    reconstruct_phi, sample_error, sample_errors, step)
from .rng import make_rng, stream
from .sim import (MixingReport, Trajectory, acf, ensemble_tv, fit_mixing_rate,
                  reference_sample, simulate)

__version__ = "0.1.0"
