"""TV decay from a far start for Example_1-type models with growing rho.

A larger rho means the inward pull fades faster in the tails, so the chain
forgets a distant start more slowly.  The random walk never settles.
"""

from subgeo import EstarSlope, HSpec, ModelSpec, NoiseSpec, ZeroTerm, ensemble_tv, fit_mixing_rate
from subgeo.errors import InsufficientDecay

for rho in (0.5, 1.0, 1.5):
    model = ModelSpec(1, (), EstarSlope("S1", 0.5, HSpec("i", rho=rho)), NoiseSpec.gaussian())
    rep = ensemble_tv(model, [10.0], reps=10_000, seed=0)
    fit = fit_mixing_rate(rep)
    tv = " ".join(f"{t:.3f}" for t in rep.tv_estimates)
    print(f"rho={rho}: tv {tv}")
    print(f"         floor {rep.noise_floor:.3f}, log-linear decay {fit.log_rate:.4f}, "
          f"best fit {fit.class_guess}")

rw = ModelSpec(1, (), ZeroTerm(), NoiseSpec.gaussian())
try:
    fit_mixing_rate(ensemble_tv(rw, [0.0], reps=10_000, seed=0))
except InsufficientDecay as e:
    print(f"random walk: {e}")
