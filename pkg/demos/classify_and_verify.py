"""Certificates for the shipped models, then a Monte Carlo check of one of them.

Run with ``python3 demos/classify_and_verify.py``.
"""

import warnings

from subgeo import MCConfig, classify_model, implied_drift_spec, verify_drift_autoshrink
from subgeo.config import bundled_models, load
from subgeo.drift import tail_grid
from subgeo.errors import NotCovered

for name in bundled_models():
    model = load(name).model
    try:
        cert = classify_model(model)
    except NotCovered as e:
        print(f"{name:18s} NotCovered ({e})")
        continue
    exp = "" if cert.exponent is None else f" exponent {cert.exponent:.3g}"
    print(f"{name:18s} {cert.rate_class}{exp}, moments up to {cert.moments}")

# The subexponential certificate for fig2_left comes with a V and phi shape.
# Its drift constant is tiny, so check it far out where it dominates.
model = load("fig2_left").model
cert = classify_model(model)
spec = implied_drift_spec(model, cert)
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    rep, used = verify_drift_autoshrink(model, spec, tail_grid(spec),
                                        MCConfig(reps=20_000, control_variates=True))
print()
print(cert.to_text())
print()
print(f"V = {used.V}\nphi = {used.phi}")
print(f"drift holds beyond |x| = {rep.suggested_C_radius:.4g}: {rep.passed}")
