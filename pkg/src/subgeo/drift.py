"""Lyapunov functions, drift rate shapes and numerical drift verification.

Two families of test functions are provided, both built on the companion
transform ``z = A x``:

* ``SubexpV``: ``exp`` of a power of ``|z1|`` and ``||z2||_*``
* ``PolyV``: ``1 + |z1|^s0 + s1 ||z2||_*^(alpha s0)`` with ``alpha = 1 - rho/s0``

``verify_drift`` estimates ``E[V(y_1) | y_0 = x] - V(x) + phi(V(x))`` by Monte
Carlo on a radial grid and reports where the drift inequality holds.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import stats

from .companion import CompanionForm, build_companion, transform_z
from .errors import BudgetExceeded, DimensionMismatch, DomainError
from .model import ModelSpec, MomentOnly, Subexponential, sample_errors
from .rng import make_rng, stream

# ---------------------------------------------------------------------------
# Lyapunov functions
# ---------------------------------------------------------------------------


def _check_dim(companion, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != companion.p:
        raise DimensionMismatch(f"state has dimension {x.shape[-1]}, expected {companion.p}")
    return x


@dataclass(frozen=True, eq=False)
class SubexpV:
    b1: float
    b2: float
    b3: float
    companion: CompanionForm = field(repr=False)

    def __post_init__(self):
        if not (self.b1 > 0 and self.b2 > 0):
            raise ValueError("b1 and b2 must be positive")
        if not 0 < self.b3 <= 1:
            raise ValueError("b3 must lie in (0, 1]")

    degree = math.inf

    def __call__(self, x):
        x = _check_dim(self.companion, x)
        if self.companion.p == 1:
            return np.exp(self.b1 * np.abs(x[..., 0]) ** self.b3)
        z1, z2 = transform_z(self.companion, x)
        n2 = self.companion.norm(z2)
        return 0.5 * np.exp(self.b1 * np.abs(z1) ** self.b3) + 0.5 * np.exp(self.b2 * n2 ** self.b3)

    def scaled(self, factor):
        # shrinking b1 flattens V and weakens the drift, so V is kept
        return self


@dataclass(frozen=True, eq=False)
class PolyV:
    s0: float
    s1: float
    rho: float
    companion: CompanionForm = field(repr=False)

    def __post_init__(self):
        if not 0 < self.rho < self.s0:
            raise ValueError("need s0 > rho > 0")
        if not self.s1 > 0:
            raise ValueError("s1 must be positive")

    @property
    def alpha(self) -> float:
        return 1.0 - self.rho / self.s0

    @property
    def degree(self) -> float:
        return self.s0

    def __call__(self, x):
        x = _check_dim(self.companion, x)
        if self.companion.p == 1:
            return 1.0 + np.abs(x[..., 0]) ** self.s0
        z1, z2 = transform_z(self.companion, x)
        n2 = self.companion.norm(z2)
        return 1.0 + np.abs(z1) ** self.s0 + self.s1 * n2 ** (self.alpha * self.s0)

    def scaled(self, factor):
        return replace(self, s1=self.s1 * factor)


# ---------------------------------------------------------------------------
# phi shapes
# ---------------------------------------------------------------------------


def _check_v(v):
    v = np.asarray(v, dtype=float)
    if np.any(v < 1.0 - 1e-12):
        raise DomainError("phi is defined on [1, inf)")
    return v


@dataclass(frozen=True)
class GeometricPhi:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def c(self):
        return self.lam

    def __call__(self, v):
        return self.lam * _check_v(v)

    def scaled(self, factor):
        return GeometricPhi(self.lam * factor)


@dataclass(frozen=True)
class SubexpPhi:
    """``c (v + v0) / log(v + v0)^alpha``; concave increasing once ``v0 >= e^(alpha+1) - 1``."""

    c: float
    alpha: float
    v0: Optional[float] = None

    def __post_init__(self):
        if not (self.c > 0 and self.alpha > 0):
            raise ValueError("c and alpha must be positive")
        floor = math.exp(self.alpha + 1.0) - 1.0
        if self.v0 is None:
            object.__setattr__(self, "v0", floor)
        elif self.v0 < floor - 1e-12:
            raise ValueError(f"v0 must be at least e^(alpha+1) - 1 = {floor:.6g}")

    def __call__(self, v):
        w = _check_v(v) + self.v0
        return self.c * w / np.log(w) ** self.alpha

    def scaled(self, factor):
        return replace(self, c=self.c * factor)


@dataclass(frozen=True)
class PolyPhi:
    c: float
    alpha: float

    def __post_init__(self):
        if not 0 < self.c <= 1:
            raise ValueError("c must lie in (0, 1]")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")

    def __call__(self, v):
        return self.c * _check_v(v) ** self.alpha

    def scaled(self, factor):
        return replace(self, c=self.c * factor)


Phi = Union[GeometricPhi, SubexpPhi, PolyPhi]


@dataclass(frozen=True, eq=False)
class DriftSpec:
    V: Union[SubexpV, PolyV]
    phi: Phi

    @property
    def p(self):
        return self.V.companion.p

    def scaled(self, factor):
        """Shrink ``phi``'s scale (and ``s1`` for polynomial V) by ``factor``."""
        return DriftSpec(self.V.scaled(factor), self.phi.scaled(factor))


def eval_V(spec: DriftSpec, x):
    return spec.V(x)


def eval_phi(spec: DriftSpec, v):
    return spec.phi(v)


def phi_from_proof(c_phi, alpha):
    """Drift rate ``0.5 c_phi (1 + log v)^(-alpha) v`` produced by the bounding argument."""

    def phi1(v):
        v = _check_v(v)
        return 0.5 * c_phi * (1.0 + np.log(v)) ** (-alpha) * v

    return phi1


def subexp_b2(b1, b3, companion: CompanionForm) -> float:
    """A ``b2`` small enough for the ``z2`` block to drift inward.

    Needs ``b2 ||iota||_*^b3 / tau1 < b1`` with ``tau1 < 1 - eta^b3``; we take
    half of the admissible bound.
    """
    if companion.p == 1:
        return b1
    tau1 = 1.0 - companion.eta ** b3
    return 0.5 * b1 * tau1 / companion.iota_norm ** b3


def default_drift_spec(model: ModelSpec, kind: str, rho: float, s0=None, c=0.01,
                       s1=0.01, b1=None, companion=None) -> DriftSpec:
    """Drift spec with the package's default small constants.

    ``kind`` is ``"poly"`` or ``"subexp"``.  For ``poly`` the exponent ``s0``
    defaults to the noise's declared moment order.
    """
    comp = companion if companion is not None else build_companion(model.pi)
    mc = model.noise.moment_class
    if kind == "poly":
        if s0 is None:
            if not isinstance(mc, MomentOnly):
                raise ValueError("s0 is required for polynomial V with exponential-moment noise")
            s0 = mc.s0
        V = PolyV(s0=s0, s1=s1, rho=rho, companion=comp)
        return DriftSpec(V, PolyPhi(c=c, alpha=V.alpha))
    if kind == "subexp":
        if not isinstance(mc, Subexponential):
            raise ValueError("subexponential V needs exponential-moment noise")
        b3 = min(mc.kappa0, 2.0 - rho)
        if b1 is None:
            b1 = min(mc.beta0 / 4.0, 0.1)
        V = SubexpV(b1=b1, b2=subexp_b2(b1, b3, comp), b3=b3, companion=comp)
        alpha = rho / b3 - 1.0
        if alpha <= 1e-12:
            return DriftSpec(V, GeometricPhi(lam=c))
        return DriftSpec(V, SubexpPhi(c=c, alpha=alpha))
    raise ValueError(f"unknown V kind {kind!r}")


# ---------------------------------------------------------------------------
# envelope checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeCertificate:
    r: float
    M0: float
    K0: float
    rho: float
    passed: bool
    worst_margin: float
    worst_u: Optional[float] = None
    r_sup: float = 0.0

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class EnvelopeGrid:
    m0_candidates: tuple = (0.5, 1, 2, 5, 10, 20, 50)
    r_lo: float = 1e-6
    r_hi: float = 10.0
    n_points: int = 100_000
    u_max: float = 1e6
    bisect_iter: int = 60


def _envelope_gap(g, u, rho):
    """``(|u| - |g(u)|) * |u|^(rho-1)``; the envelope holds with r iff this is >= r."""
    au = np.abs(u)
    return (au - np.abs(np.asarray(g(u), dtype=float))) * au ** (rho - 1.0)


def check_g_envelope(g, rho, grid: EnvelopeGrid = EnvelopeGrid()) -> EnvelopeCertificate:
    """Search constants ``(r, M0, K0)`` for ``|g(u)| <= (1 - r|u|^-rho)|u|`` beyond ``M0``.

    ``r`` is bisected for each candidate ``M0``.  The reported ``r`` is half of
    the best achievable one and ``M0`` is the smallest candidate that supports
    it, so the certificate keeps a safety factor of two in the tail.
    """
    if not 0 < rho <= 2:
        raise ValueError("rho must lie in (0, 2]")
    cands = np.sort(np.asarray(grid.m0_candidates, dtype=float))
    half = grid.n_points // 2
    pos = np.unique(np.concatenate((
        np.logspace(math.log10(cands[0]), math.log10(grid.u_max), half - cands.size), cands)))
    u_all = np.concatenate((-pos[::-1], pos))
    gap_all = _envelope_gap(g, u_all, rho)
    if not np.all(np.isfinite(gap_all)):
        gap_all = np.where(np.isfinite(gap_all), gap_all, -np.inf)

    def holds(mask, r):
        return bool(np.all(gap_all[mask] >= r))

    def best_r(M0):
        mask = np.abs(u_all) >= M0
        if not holds(mask, grid.r_lo):
            return 0.0
        if holds(mask, grid.r_hi):
            return grid.r_hi
        lo, hi = grid.r_lo, grid.r_hi
        for _ in range(grid.bisect_iter):
            mid = 0.5 * (lo + hi)
            if holds(mask, mid):
                lo = mid
            else:
                hi = mid
        return lo

    r_by_m0 = [best_r(m) for m in cands]
    r_sup = r_by_m0[-1]
    if r_sup < grid.r_lo:
        mask = np.abs(u_all) >= cands[-1]
        idx = np.argmin(gap_all[mask])
        u_bad = float(u_all[mask][idx])
        return EnvelopeCertificate(r=0.0, M0=float(cands[-1]), K0=math.nan, rho=rho,
                                   passed=False, worst_margin=float(gap_all[mask][idx]),
                                   worst_u=u_bad, r_sup=r_sup)
    r = 0.5 * r_sup
    M0 = float(next(m for m, rb in zip(cands, r_by_m0) if rb >= r))
    inner = np.linspace(-M0, M0, 4001)
    K0 = float(np.max(np.abs(g(inner))))
    K0 = max(K0, np.finfo(float).tiny)
    mask = np.abs(u_all) >= M0
    au = np.abs(u_all[mask])
    slack = (au - r * au ** (1.0 - rho)) - np.abs(g(u_all[mask]))
    idx = int(np.argmin(slack))
    return EnvelopeCertificate(r=r, M0=M0, K0=K0, rho=rho, passed=True,
                               worst_margin=float(slack[idx]), worst_u=float(u_all[mask][idx]),
                               r_sup=r_sup)


@dataclass(frozen=True)
class DecayFit:
    passes: bool
    slope: float
    radii: np.ndarray = field(repr=False)
    shell_max: np.ndarray = field(repr=False)


def check_epsilon_decay(model: ModelSpec, g, d, companion=None, shells=25, directions=64,
                        seed=0, margin=0.05) -> DecayFit:
    """Fit the decay order of ``|u + tilde_g(x) - g(u)| / |x|`` in ``|x|``.

    Passes when the log-log slope of the shell maxima is at most ``-d - margin``.
    A remainder that is identically zero, or that underflows to zero in the
    outer shells, counts as faster than any power (slope ``-inf``).
    """
    if not d > 0:
        raise ValueError("d must be positive")
    rng = make_rng(seed)
    radii = np.logspace(0, 6, shells)
    if model.p == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        dirs = rng.standard_normal((directions, model.p))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    shell_max = np.empty(shells)
    for k, R in enumerate(radii):
        X = R * dirs
        u = model.filtered(X)
        resid = np.abs(model.nonlinear.gbar(u, X) - np.asarray(g(u), dtype=float))
        shell_max[k] = np.max(resid) / R
    positive = shell_max > 0
    if not positive.any():
        slope = -math.inf
    elif not positive[-1]:
        slope = -math.inf
    else:
        keep = positive & np.isfinite(shell_max)
        slope = float(np.polyfit(np.log(radii[keep]), np.log(shell_max[keep]), 1)[0])
    return DecayFit(passes=bool(slope <= -d - margin), slope=slope, radii=radii,
                    shell_max=shell_max)


# ---------------------------------------------------------------------------
# Monte Carlo drift verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    radii: tuple = (1, 2, 5, 10, 20, 50, 100)
    directions: int = 32
    tail_shells: int = 1
    seed: int = 20240601


@dataclass(frozen=True)
class MCConfig:
    reps: int = 200_000
    seed: int = 0
    level: float = 0.99
    blocks: int = 32
    estimator: str = "auto"  # "auto", "clt" or "mom"
    control_variates: bool = False
    target_halfwidth: Optional[float] = None
    max_reps: Optional[int] = None
    workers: int = 1


def tail_grid(spec: DriftSpec, shells=7, r_min=10.0, r_max=1e6, **kw) -> GridConfig:
    """Log-spaced shells reaching as far out as ``V`` stays representable.

    For exponential ``V`` the outer radius keeps ``b1 |z1|^b3`` below about
    300, so that ``V`` and its square are finite in double precision.
    """
    V = spec.V
    if isinstance(V, SubexpV):
        r_max = min(r_max, 0.5 * (300.0 / V.b1) ** (1.0 / V.b3))
    r_min = min(r_min, r_max / 10.0)
    radii = tuple(float(r) for r in np.geomspace(r_min, r_max, shells))
    return GridConfig(radii=radii, **kw)


def drift_grid(p, config: GridConfig = GridConfig()):
    """Radial shells: random unit directions plus signed axis points.

    Returns ``(points, radii)``.
    """
    if p == 1:
        base = np.array([[1.0], [-1.0]])
    else:
        rng = make_rng(config.seed)
        dirs = rng.standard_normal((config.directions, p))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        axes = np.concatenate((np.eye(p), -np.eye(p)))
        base = np.concatenate((dirs, axes))
    pts = np.concatenate([R * base for R in config.radii])
    rad = np.repeat(np.asarray(config.radii, dtype=float), base.shape[0])
    return pts, rad


def uses_heavy_tail_guard(model: ModelSpec, V) -> bool:
    mc = model.noise.moment_class
    return isinstance(mc, MomentOnly) and mc.s0 < 4.0 * V.degree


def _mom_halfwidth(block_means, level):
    B = block_means.size
    srt = np.sort(block_means)
    med = float(np.median(srt))
    alpha = 1.0 - level
    # largest k with P(Bin(B, 1/2) <= k - 1) <= alpha/2
    k = int(stats.binom.ppf(alpha / 2, B, 0.5))
    while k > 0 and stats.binom.cdf(k - 1, B, 0.5) > alpha / 2:
        k -= 1
    k = max(k, 1)
    lo, hi = srt[k - 1], srt[B - k]
    return med, float(max(med - lo, hi - med))


def conditional_expectation(model: ModelSpec, V, x, reps, rng, level=0.99, estimator="clt",
                            blocks=32, control_variates=False):
    """Monte Carlo ``E[V(y_1) | y_0 = x]`` with a confidence half-width.

    ``estimator="clt"`` uses the sample mean and a normal interval;
    ``"mom"`` uses the median of ``blocks`` block means with an
    order-statistic interval.  With ``control_variates`` the CLT estimator
    regresses out ``eps`` and ``eps^2 - sigma^2``, whose means are known.
    """
    x = np.asarray(x, dtype=float)
    eps = sample_errors(model.noise, rng, reps)
    u = model.filtered(x)
    mean_u = float(model.nonlinear.gbar(u, x))
    Y = np.empty((reps, model.p))
    Y[:, 0] = mean_u + eps + (x[:-1] @ model.pi_array if model.p > 1 else 0.0)
    Y[:, 1:] = x[:-1]
    vals = V(Y)
    if estimator == "mom":
        usable = (reps // blocks) * blocks
        bm = vals[:usable].reshape(blocks, -1).mean(axis=1)
        return _mom_halfwidth(bm, level)
    z = stats.norm.ppf(0.5 + level / 2)
    if control_variates:
        var = model.noise.second_moment
        if var is None or not model.noise.mean_zero:
            raise ValueError("control variates need zero-mean errors with known variance")
        # centre V to keep the regression well conditioned when V is huge
        shift = float(V(Y[:1])[0])
        X = np.column_stack((np.ones(reps), eps, eps * eps - var))
        coef, *_ = np.linalg.lstsq(X, vals - shift, rcond=None)
        resid = vals - shift - X @ coef
        sd = math.sqrt(float(resid @ resid) / (reps - 3))
        return float(shift + coef[0]), float(z * sd / math.sqrt(reps))
    return float(vals.mean()), float(z * vals.std(ddof=1) / math.sqrt(reps))


@dataclass(eq=False)
class DriftReport:
    grid: np.ndarray
    radii: np.ndarray
    V_values: np.ndarray
    expected: np.ndarray
    margins: np.ndarray
    ci_halfwidth: np.ndarray
    suggested_b: float
    suggested_C_radius: float
    passed: bool
    estimator: str
    reps: np.ndarray
    tail_radius: float
    spec: Optional[DriftSpec] = None
    notes: list = field(default_factory=list)

    @property
    def point_ok(self):
        return self.margins + self.ci_halfwidth <= 0

    def __repr__(self):
        return (f"DriftReport(points={self.grid.shape[0]}, passed={self.passed}, "
                f"failing={int(np.sum(~self.point_ok))}, C={self.suggested_C_radius:g}, "
                f"b={self.suggested_b:.4g}, estimator={self.estimator!r})")

    def to_csv(self, fh):
        """Columns ``x1..xp, margin, ci, pass``."""
        p = self.grid.shape[1]
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(p)] + ["margin", "ci", "pass"])
        for row, m, c, ok in zip(self.grid, self.margins, self.ci_halfwidth, self.point_ok):
            w.writerow([repr(float(v)) for v in row] + [repr(float(m)), repr(float(c)), int(ok)])


def _summarise(points, radii, Vx, expected, margins, ci, tail_shells):
    ok = margins + ci <= 0
    shells = np.unique(radii)
    C = 0.0
    for R in shells[::-1]:
        if not np.all(ok[radii >= R]):
            C = float(R)
            break
    inside = radii <= C
    b = float(np.max((margins + ci)[inside])) if inside.any() else 0.0
    b = max(b, 0.0)
    tail_from = shells[max(0, shells.size - tail_shells)]
    passed = bool(np.all(ok[radii >= tail_from]))
    return C, b, passed, float(tail_from)


def verify_drift(model: ModelSpec, spec: DriftSpec, grid: GridConfig = GridConfig(),
                 mc: MCConfig = MCConfig()) -> DriftReport:
    """Monte Carlo check of ``E V(y1) <= V(x) - phi(V(x)) + b 1_C(x)`` on a radial grid.

    Each grid point gets its own random stream derived from ``(mc.seed, index)``,
    so results are reproducible regardless of ``mc.workers``.
    """
    if spec.p != model.p:
        raise DimensionMismatch("drift spec and model disagree on p")
    if not np.allclose(spec.V.companion.pi, model.pi, rtol=0, atol=1e-14):
        raise ValueError("drift spec was built for different pi coefficients")
    notes = []
    estimator = mc.estimator
    if estimator == "auto":
        estimator = "mom" if uses_heavy_tail_guard(model, spec.V) else "clt"
        if estimator == "mom":
            msg = ("error distribution has only polynomial moments; CLT interval is "
                   "unreliable, using median of block means")
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
    points, radii = drift_grid(model.p, grid)
    Vx = spec.V(points)
    phix = spec.phi(Vx)

    def one(i):
        rng = stream(mc.seed, i)
        reps = mc.reps
        while True:
            m, h = conditional_expectation(model, spec.V, points[i], reps, rng, mc.level,
                                           estimator, mc.blocks,
                                           mc.control_variates and estimator == "clt")
            if mc.target_halfwidth is None or h <= mc.target_halfwidth:
                return m, h, reps, True
            cap = mc.max_reps if mc.max_reps is not None else mc.reps
            if reps * 2 > cap:
                return m, h, reps, False
            reps *= 2

    idx = range(points.shape[0])
    if mc.workers > 1:
        with ThreadPoolExecutor(mc.workers) as ex:
            results = list(ex.map(one, idx))
    else:
        results = [one(i) for i in idx]
    expected = np.array([r[0] for r in results])
    ci = np.array([r[1] for r in results])
    reps = np.array([r[2] for r in results])
    met = np.array([r[3] for r in results])
    margins = expected - Vx + phix
    C, b, passed, tail_from = _summarise(points, radii, Vx, expected, margins, ci,
                                         grid.tail_shells)
    report = DriftReport(grid=points, radii=radii, V_values=Vx, expected=expected,
                         margins=margins, ci_halfwidth=ci, suggested_b=b,
                         suggested_C_radius=C, passed=passed, estimator=estimator,
                         reps=reps, tail_radius=tail_from, spec=spec, notes=notes)
    if not met.all():
        raise BudgetExceeded(
            f"{int((~met).sum())} grid points did not reach half-width "
            f"{mc.target_halfwidth} within the replication cap", partial=report)
    return report


def verify_drift_autoshrink(model: ModelSpec, spec: DriftSpec, grid: GridConfig = GridConfig(),
                            mc: MCConfig = MCConfig(), floor=1e-6):
    """Halve the scale of ``phi`` until ``verify_drift`` passes or it drops below ``floor``.

    Returns ``(report, spec_used)``.
    """
    current = spec
    while True:
        report = verify_drift(model, current, grid, mc)
        if report.passed:
            return report, current
        nxt = current.scaled(0.5)
        if nxt.phi.c < floor:
            return report, current
        current = nxt
