"""Simulation, autocorrelations and ensemble total-variation diagnostics.

``ensemble_tv`` runs many independent chains from a fixed state and compares
the law of ``y_n`` with a long-run reference sample through a quantile-binned
L1 histogram distance.  A stationary-start run of the same size measures the
binning noise floor, which is what TV values must clear before a decay rate
is fitted.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, DegenerateSeries, InsufficientDecay
from .model import ModelSpec, sample_errors
from .rng import make_rng, stream

DEFAULT_HORIZONS = (1, 2, 5, 10, 20, 50, 100, 200, 500)


def fingerprint(model: ModelSpec) -> str:
    """Short hash identifying the model parameters."""
    return hashlib.sha256(repr(model).encode()).hexdigest()[:16]


def _initial_state(model: ModelSpec, init):
    if init is None or (isinstance(init, str) and init == "warmup"):
        return np.zeros(model.p)
    x = np.asarray(init, dtype=float).ravel()
    if x.shape != (model.p,):
        raise ValueError(f"init must have length {model.p}")
    return x


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Simulated path ``y_1..y_n`` after burn-in, with ``u_t`` and the coefficient path."""

    values: np.ndarray
    u: np.ndarray
    coefficient: np.ndarray
    seed: Optional[int]
    burn_in: int
    fingerprint: str
    init: tuple = ()

    def __len__(self):
        return self.values.size

    def to_csv(self, fh):
        """Columns ``t, y, u, coef``; ``coef`` is I(u_t) or S(u_t) (empty if none)."""
        w = csv.writer(fh)
        w.writerow(["t", "y", "u", "coef"])
        for t, (y, u, c) in enumerate(zip(self.values, self.u, self.coefficient), start=1):
            w.writerow([t, repr(float(y)), repr(float(u)), "" if np.isnan(c) else repr(float(c))])


def simulate(model: ModelSpec, n: int, burn_in: int = 0, seed=None, init=None) -> Trajectory:
    """Simulate ``n`` observations after discarding ``burn_in``.

    All errors are drawn up front from one Philox stream keyed by ``seed``,
    so the path is bit-reproducible from ``(model, seed, init, n, burn_in)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    total = n + burn_in
    eps = sample_errors(model.noise, make_rng(seed), total)
    x = _initial_state(model, init)
    p, pi = model.p, model.pi_array
    nl = model.nonlinear
    ys = np.empty(total)
    us = np.empty(total)
    for t in range(total):
        u_prev = model.filtered(x)
        u_new = float(nl.gbar(u_prev, x)) + eps[t]
        y = u_new + (float(x[:-1] @ pi) if p > 1 else 0.0)
        ys[t], us[t] = y, u_new
        if p > 1:
            x[1:] = x[:-1]
        x[0] = y
    ys, us = ys[burn_in:], us[burn_in:]
    coef = np.asarray(nl.coefficient(us), dtype=float)
    return Trajectory(values=ys, u=us, coefficient=coef, seed=seed, burn_in=burn_in,
                      fingerprint=fingerprint(model), init=tuple(_initial_state(model, init)))


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag`` (biased normalisation)."""
    x = np.asarray(series, dtype=float).ravel()
    if not 0 <= max_lag < x.size:
        raise ValueError("need 0 <= max_lag < len(series)")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise DegenerateSeries("series has zero sample variance")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(x[:-k] @ x[k:]) / denom
    return out


def acf_to_csv(values, fh):
    w = csv.writer(fh)
    w.writerow(["lag", "acf"])
    for k, v in enumerate(values):
        w.writerow([k, repr(float(v))])


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def _noise_matrix(model: ModelSpec, seed, reps, steps, offset=0, workers=1):
    """``(steps, reps)`` errors; column ``i`` comes from stream ``offset + i``."""
    def col(i):
        return sample_errors(model.noise, stream(seed, offset + i), steps)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            cols = list(ex.map(col, range(reps)))
    else:
        cols = [col(i) for i in range(reps)]
    return np.column_stack(cols) if cols else np.empty((steps, 0))


def run_ensemble(model: ModelSpec, starts, horizons, seed, offset=0, workers=1):
    """First coordinate of each chain at every horizon, shape ``(len(horizons), reps)``."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    reps = starts.shape[0]
    H = int(max(horizons))
    eps = _noise_matrix(model, seed, reps, H, offset, workers)
    want = {int(h): k for k, h in enumerate(horizons)}
    out = np.empty((len(horizons), reps))
    X = starts.copy()
    for t in range(1, H + 1):
        X = model.advance(X, eps[t - 1])
        if t in want:
            out[want[t]] = X[:, 0]
    return out


@dataclass(frozen=True, eq=False)
class ReferenceSample:
    """Approximate draws from the stationary law: full states and first coordinates."""

    states: np.ndarray
    chains: int
    burn_in: int
    thin: int

    @property
    def values(self):
        return self.states[:, 0]


def reference_sample(model: ModelSpec, size=100_000, seed=0, chains=1000, burn_in=5000,
                     thin=10, workers=1) -> ReferenceSample:
    """Long-run sample from ``chains`` parallel chains started at zero.

    Each chain runs ``burn_in`` steps and then keeps every ``thin``-th state.
    """
    per = math.ceil(size / chains)
    steps = burn_in + per * thin
    eps = _noise_matrix(model, seed, chains, steps, offset=10_000_000, workers=workers)
    X = np.zeros((chains, model.p))
    keep = []
    for t in range(1, steps + 1):
        X = model.advance(X, eps[t - 1])
        if t > burn_in and (t - burn_in) % thin == 0:
            keep.append(X.copy())
    states = np.concatenate(keep)[:size]
    return ReferenceSample(states=states, chains=chains, burn_in=burn_in, thin=thin)


def quantile_edges(pooled, bins):
    edges = np.quantile(pooled, np.linspace(0, 1, bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    return np.unique(edges)


def histogram_tv(a, b, bins=None):
    """Half L1 distance between histograms of ``a`` and ``b`` on shared quantile bins.

    Returns ``(tv, null)`` where ``null`` is the expected value of the
    statistic when both samples come from the same law.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if bins is None:
        bins = math.ceil(min(a.size, b.size) ** (1 / 3))
    edges = quantile_edges(np.concatenate((a, b)), bins)
    pa = np.histogram(a, edges)[0] / a.size
    pb = np.histogram(b, edges)[0] / b.size
    tv = 0.5 * float(np.abs(pa - pb).sum())
    q = 0.5 * (pa + pb)
    null = 0.5 * math.sqrt(2 / math.pi) * float(
        np.sqrt(q * (1 - q) * (1 / a.size + 1 / b.size)).sum())
    return min(tv, 1.0), null


@dataclass(eq=False)
class MixingReport:
    horizons: np.ndarray
    tv_estimates: np.ndarray
    ci: np.ndarray
    noise_floor: float
    floor_by_horizon: np.ndarray
    reps: int
    x0: tuple = ()
    fitted: Optional[dict] = None

    def to_csv(self, fh):
        """Columns ``horizon, tv, ci``; ``ci`` is the same-law noise level of the statistic."""
        w = csv.writer(fh)
        w.writerow(["horizon", "tv", "ci"])
        for h, t, c in zip(self.horizons, self.tv_estimates, self.ci):
            w.writerow([int(h), repr(float(t)), repr(float(c))])


def ensemble_tv(model: ModelSpec, x0, horizons=DEFAULT_HORIZONS, reps=10_000, seed=0,
                reference: Optional[ReferenceSample] = None, reference_size=100_000,
                bins=None, max_steps=5e9, workers=1) -> MixingReport:
    """TV distance between the law of ``y_n`` started at ``x0`` and a reference sample.

    The noise floor is measured by repeating the experiment from states
    drawn out of the reference sample itself.

    Raises
    ------
    BudgetExceeded
        When ``2 * reps * max(horizons)`` exceeds ``max_steps``.
    """
    if reps < 1000:
        raise ValueError("reps must be at least 1000")
    horizons = np.asarray(horizons, dtype=int)
    if horizons.size == 0 or np.any(np.diff(horizons) <= 0) or horizons[0] < 1:
        raise ValueError("horizons must be positive and strictly increasing")
    if 2.0 * reps * horizons[-1] > max_steps:
        raise BudgetExceeded(f"{2 * reps * horizons[-1]:.3g} chain steps exceed the budget")
    if reference is None:
        reference = reference_sample(model, reference_size, seed=seed, workers=workers)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size == 1 and model.p > 1:
        x0 = np.full(model.p, x0[0])
    starts = np.tile(x0, (reps, 1))
    ens = run_ensemble(model, starts, horizons, seed, offset=0, workers=workers)
    # stationary start: draw initial states from the reference sample
    pick = make_rng((seed, 7)).integers(0, reference.states.shape[0], reps)
    cal = run_ensemble(model, reference.states[pick], horizons, seed, offset=reps,
                       workers=workers)
    tv = np.empty(horizons.size)
    null = np.empty(horizons.size)
    floor = np.empty(horizons.size)
    for k in range(horizons.size):
        tv[k], null[k] = histogram_tv(ens[k], reference.values, bins)
        floor[k], _ = histogram_tv(cal[k], reference.values, bins)
    return MixingReport(horizons=horizons, tv_estimates=tv, ci=null,
                        noise_floor=float(np.max(floor)), floor_by_horizon=floor, reps=reps,
                        x0=tuple(x0))


@dataclass(frozen=True)
class MixingFit:
    class_guess: str
    exponent: float
    geometric_rate: float
    poly_exponent: float
    log_rate: float
    residual_poly: float
    residual_geometric: float
    used_horizons: tuple


def fit_mixing_rate(report: MixingReport, floor_factor=2.0, settle=0.2, min_points=4) -> MixingFit:
    """Fit polynomial and geometric decay to the excess TV above the noise floor.

    Horizons with ``tv > floor_factor * noise_floor`` are used and the floor is
    subtracted.  ``log(tv)`` is regressed on ``log n`` (polynomial) and on ``n``
    (geometric); the smaller residual decides the class.  ``log_rate`` is the
    log-linear slope magnitude, a decay measure comparable across models.

    Raises
    ------
    InsufficientDecay
        Fewer than ``min_points`` usable horizons, or the TV never drops
        below ``settle`` (the chain never approaches the reference law).
    """
    tv = np.asarray(report.tv_estimates, dtype=float)
    n = np.asarray(report.horizons, dtype=float)
    floor = float(report.noise_floor)
    if tv.min() > settle:
        raise InsufficientDecay(f"TV stays above {settle} at every horizon "
                                f"(min {tv.min():.3g}); no approach to the reference law")
    use = tv > floor_factor * floor
    if use.sum() < min_points:
        raise InsufficientDecay(f"only {int(use.sum())} horizons clear the noise floor "
                                f"{floor:.3g}")
    y = np.log(tv[use] - floor)
    ln = np.log(n[use])
    bp, rp = np.polyfit(ln, y, 1, full=True)[:2]
    bg, rg = np.polyfit(n[use], y, 1, full=True)[:2]
    res_p = float(rp[0]) if rp.size else 0.0
    res_g = float(rg[0]) if rg.size else 0.0
    poly_exp = float(-bp[0])
    geo_rate = float(math.exp(bg[0]))
    guess = "polynomial" if res_p <= res_g else "geometric"
    fit = MixingFit(class_guess=guess,
                    exponent=poly_exp if guess == "polynomial" else float(-bg[0]),
                    geometric_rate=geo_rate, poly_exponent=poly_exp, log_rate=float(-bg[0]),
                    residual_poly=res_p, residual_geometric=res_g,
                    used_horizons=tuple(int(h) for h in n[use]))
    report.fitted = {"class": guess, "poly_exponent": poly_exp, "geometric_rate": geo_rate,
                     "residual_poly": res_p, "residual_geometric": res_g}
    return fit
