import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from subgeo.config import load

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def shipped():
    """Loader for the model files bundled with the package."""
    return lambda name: load(name).model


def stable_pi(rng, k, min_modulus=1.05, max_modulus=4.0):
    """Coefficients of a degree-k polynomial 1 - pi_1 z - ... with all roots outside |z| = min_modulus."""
    roots = []
    while len(roots) < k:
        mod = rng.uniform(min_modulus, max_modulus)
        if k - len(roots) >= 2 and rng.random() < 0.5:
            ang = rng.uniform(0, np.pi)
            z = mod * np.exp(1j * ang)
            roots += [z, np.conj(z)]
        else:
            roots.append(mod * rng.choice([-1.0, 1.0]))
    # prod (1 - z / root) = 1 - pi_1 z - ...
    poly = np.array([1.0 + 0j])
    for rt in roots:
        poly = np.convolve(poly, [1.0, -1.0 / rt])
    return tuple(float(v) for v in -poly[1:].real)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props:
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((props["criterion"], status, props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for crit, status, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {crit}: {status}  {detail}".rstrip())
