"""Higher-order nonlinear autoregressions with a single unit root.

The model is written in terms of the filtered process
``u_t = y_t - pi_1 y_{t-1} - ... - pi_{p-1} y_{t-p+1}``::

    u_t = gbar(y_{t-1}) + eps_t,   gbar(x) = u + tilde_g(x)
    y_t = u_t + pi_1 y_{t-1} + ... + pi_{p-1} y_{t-p+1}

Nonlinear terms implement ``gbar(u, x)`` (the conditional mean of ``u_t``)
and, where one exists, the scalar envelope function ``g(u)``.  All of them
broadcast: ``u`` has shape ``(...)`` and ``x`` has shape ``(..., p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    HistoryLengthMismatch,
    NoUnitRoot,
    RescaleUndefined,
    UnstableRemainder,
)

ROOT_MARGIN = 1e-8
UNIT_ROOT_TOL = 1e-10


# ---------------------------------------------------------------------------
# coefficient algebra
# ---------------------------------------------------------------------------


def remainder_spectral_radius(pi) -> float:
    """Spectral radius of the companion matrix of ``1 - pi_1 z - ...``.

    The roots of the polynomial lie outside the unit circle exactly when this
    radius is below one.
    """
    pi = np.asarray(pi, dtype=float)
    k = pi.size
    if k == 0:
        return 0.0
    M = np.zeros((k, k))
    M[0, :] = pi
    M[1:, :-1] = np.eye(k - 1)
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def check_stable_remainder(pi, margin=ROOT_MARGIN):
    rad = remainder_spectral_radius(pi)
    if rad >= 1.0 - margin:
        raise UnstableRemainder(
            f"stable factor has a root on or inside the unit circle "
            f"(companion spectral radius {rad:.12g})"
        )
    return rad


def decompose_unit_root(phi, tol=UNIT_ROOT_TOL):
    """Split ``phi(z) = (1 - z) * varpi(z)`` and return the coefficients of varpi.

    ``phi`` holds ``phi_1..phi_p`` of ``1 - phi_1 z - ... - phi_p z^p``.

    >>> decompose_unit_root([1.75, -0.75])
    (0.75,)
    """
    phi = np.asarray(phi, dtype=float).ravel()
    if phi.size == 0:
        raise ValueError("phi must have at least one coefficient")
    at_one = 1.0 - phi.sum()
    if abs(at_one) > tol:
        raise NoUnitRoot(f"phi(1) = {at_one:.3g}; no unit root")
    p = phi.size
    pi = tuple(float(-phi[j + 1:].sum()) for j in range(p - 1))
    check_stable_remainder(pi)
    return pi


def reconstruct_phi(pi):
    """Coefficients ``phi_1..phi_p`` of ``(1 - z)(1 - pi_1 z - ...)``."""
    pi = np.asarray(pi, dtype=float)
    varpi = np.concatenate(([1.0], -pi))
    full = np.convolve([1.0, -1.0], varpi)
    return -full[1:]


# ---------------------------------------------------------------------------
# h functions for ESTAR slopes
# ---------------------------------------------------------------------------

H_FAMILIES = ("i", "ii", "iii", "iv", "v", "vi", "custom")


@dataclass(frozen=True)
class HSpec:
    """Positive function ``h`` in the ESTAR slope ``S(u)``.

    Families ``i``-``iii`` use ``rho`` and shift ``a``; ``iv``-``vi`` use
    ``rho1``, ``rho2`` and shifts ``a1``, ``a2``; ``custom`` wraps ``func``
    with a declared ``rho``.
    """

    family: str
    rho: Optional[float] = None
    rho1: Optional[float] = None
    rho2: Optional[float] = None
    a: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in H_FAMILIES:
            raise ValueError(f"unknown h family {self.family!r}")
        if self.family in ("i", "ii", "iii", "custom"):
            if self.rho is None:
                raise ValueError(f"family {self.family} needs rho")
            exps = [self.rho]
        else:
            if self.rho1 is None or self.rho2 is None:
                raise ValueError(f"family {self.family} needs rho1 and rho2")
            exps = [self.rho1, self.rho2]
        for e in exps:
            if not 0.0 < e <= 2.0:
                raise ValueError(f"h exponents must lie in (0, 2], got {e}")
        if self.family == "custom" and self.func is None:
            raise ValueError("custom h needs func")

    @property
    def effective_rho(self) -> float:
        if self.family in ("iv", "v", "vi"):
            return max(self.rho1, self.rho2)
        return float(self.rho)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        f = self.family
        if f == "i":
            return 1.0 + np.abs(u - self.a) ** self.rho
        if f == "ii":
            return (1.0 + np.abs(u - self.a)) ** self.rho
        if f == "iii":
            return (1.0 + (u - self.a) ** 2) ** (self.rho / 2)
        if f == "iv":
            return 1.0 + np.abs(u - self.a1) ** self.rho1 + np.abs(u - self.a2) ** self.rho2
        if f == "v":
            return (1.0 + (1.0 + np.abs(u - self.a1)) ** self.rho1
                    + (1.0 + np.abs(u - self.a2)) ** self.rho2)
        if f == "vi":
            return (1.0 + (1.0 + (u - self.a1) ** 2) ** (self.rho1 / 2)
                    + (1.0 + (u - self.a2) ** 2) ** (self.rho2 / 2))
        return np.asarray(self.func(u), dtype=float)


# ---------------------------------------------------------------------------
# nonlinear terms
# ---------------------------------------------------------------------------


def logistic(u, b, a):
    """``1 / (1 + exp(-b (u - a)))`` without overflow warnings."""
    return 0.5 * (1.0 + np.tanh(0.5 * b * (np.asarray(u, dtype=float) - a)))


def eval_intercept(u, params: "LstarIntercept"):
    """LSTAR time-varying intercept ``nu1 L(u; b, a1) + nu2 (1 - L(u; b, a2))``."""
    return params.nu1 * logistic(u, params.b, params.a1) + params.nu2 * (
        1.0 - logistic(u, params.b, params.a2))


def eval_slope(u, variant: str, r0: float, h: HSpec):
    """ESTAR time-varying slope: ``1 - r0/h(u)`` (S1) or ``exp(-r0/h(u))`` (S2)."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    ratio = r0 / h(u)
    if variant == "S1":
        return 1.0 - ratio
    if variant == "S2":
        return np.exp(-ratio)
    raise ValueError(f"slope variant must be 'S1' or 'S2', got {variant!r}")


@dataclass(frozen=True)
class LstarIntercept:
    nu1: float
    nu2: float
    b: float
    a1: float = 0.0
    a2: float = 0.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("logistic scale b must be positive")
        if self.a1 > self.a2:
            raise ValueError("need a1 <= a2")
        if not self.nu1 < 0 < self.nu2:
            raise ValueError("need nu1 < 0 < nu2")

    def coefficient(self, u):
        return eval_intercept(u, self)

    def g(self, u):
        return np.asarray(u, dtype=float) + eval_intercept(u, self)

    def gbar(self, u, x):
        return self.g(u)


@dataclass(frozen=True)
class EstarSlope:
    """``u_t - nu = S(u_{t-1}) (u_{t-1} - nu) + eps_t``."""

    variant: str
    r0: float
    h: HSpec
    nu: float = 0.0

    def __post_init__(self):
        if self.variant not in ("S1", "S2"):
            raise ValueError("variant must be S1 or S2")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")

    def coefficient(self, u):
        return eval_slope(u, self.variant, self.r0, self.h)

    def g(self, u):
        u = np.asarray(u, dtype=float)
        return self.nu + self.coefficient(u) * (u - self.nu)

    def gbar(self, u, x):
        return self.g(u)


@dataclass(frozen=True)
class GeneralEstar:
    """``u_t = S(u_{t-1}) u_{t-1} + exp(-gamma |y_{t-1}|^2) theta'y_{t-1} + eps_t``."""

    variant: str
    r0: float
    h: HSpec
    gamma: float
    theta: tuple

    def __post_init__(self):
        if self.variant not in ("S1", "S2"):
            raise ValueError("variant must be S1 or S2")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))

    def coefficient(self, u):
        return eval_slope(u, self.variant, self.r0, self.h)

    def g(self, u):
        u = np.asarray(u, dtype=float)
        return self.coefficient(u) * u

    def remainder(self, x):
        """Part of ``gbar`` not captured by ``g(u)``."""
        x = np.asarray(x, dtype=float)
        sq = np.einsum("...i,...i->...", x, x)
        return np.exp(-self.gamma * sq) * (x @ np.asarray(self.theta))

    def gbar(self, u, x):
        return self.g(u) + self.remainder(x)


@dataclass(frozen=True)
class ZeroTerm:
    """No nonlinear part: the process is an integrated linear AR."""

    def coefficient(self, u):
        return np.full(np.shape(u), np.nan)

    def g(self, u):
        return np.asarray(u, dtype=float)

    def gbar(self, u, x):
        return np.asarray(u, dtype=float)


@dataclass(frozen=True)
class Custom:
    """User supplied ``tilde_g`` acting on states of shape ``(..., p)``.

    Admissibility cannot be read off a black box, so classification needs
    either a declared ``(g, rho)`` pair or an attached envelope certificate.
    """

    tilde_g: Callable = field(compare=False)
    g_func: Optional[Callable] = field(default=None, compare=False)
    rho: Optional[float] = None
    envelope: Optional[object] = None
    name: str = "custom"

    def coefficient(self, u):
        return np.full(np.shape(u), np.nan)

    def g(self, u):
        if self.g_func is None:
            raise ValueError("custom term has no declared g")
        return np.asarray(self.g_func(np.asarray(u, dtype=float)), dtype=float)

    def gbar(self, u, x):
        return np.asarray(u, dtype=float) + np.asarray(self.tilde_g(np.asarray(x, dtype=float)),
                                                       dtype=float)


NonlinearTerm = Union[LstarIntercept, EstarSlope, GeneralEstar, ZeroTerm, Custom]


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Subexponential:
    """``E exp(beta0 |eps|^kappa0) < inf``."""

    beta0: float
    kappa0: float

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if not 0 < self.kappa0 <= 1:
            raise ValueError("kappa0 must lie in (0, 1]")


@dataclass(frozen=True)
class MomentOnly:
    """``E |eps|^s0 < inf``."""

    s0: float

    def __post_init__(self):
        if not self.s0 > 0:
            raise ValueError("s0 must be positive")


MomentClass = Union[Subexponential, MomentOnly]


@dataclass(frozen=True)
class NoiseSpec:
    """IID error distribution.

    ``kind`` is ``"gaussian"``, ``"student_t"`` (scaled to the target
    ``variance``) or ``"custom"`` (``sampler(rng, size)``).
    """

    kind: str
    variance: Optional[float] = 1.0
    df: Optional[float] = None
    moment_class: Optional[MomentClass] = None
    sampler: Optional[Callable] = field(default=None, compare=False)
    mean_zero: bool = True

    def __post_init__(self):
        if self.kind not in ("gaussian", "student_t", "custom"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian":
            if not self.variance or self.variance <= 0:
                raise ValueError("gaussian variance must be positive")
            if self.moment_class is None:
                object.__setattr__(self, "moment_class", Subexponential(1.0, 1.0))
        elif self.kind == "student_t":
            if self.df is None or self.df <= 0:
                raise ValueError("student_t needs df > 0")
            if self.moment_class is None:
                s0 = math.ceil(self.df) - 1.0
                object.__setattr__(self, "moment_class", MomentOnly(max(s0, self.df / 2)))
            if isinstance(self.moment_class, Subexponential):
                raise ValueError("Student t errors have no exponential moments")
            if self.moment_class.s0 >= self.df:
                raise ValueError(f"t({self.df}) has no moment of order {self.moment_class.s0}")
        else:
            if self.sampler is None or self.moment_class is None:
                raise ValueError("custom noise needs sampler and a declared moment class")

    @classmethod
    def gaussian(cls, variance=1.0, beta0=1.0):
        return cls("gaussian", variance=variance, moment_class=Subexponential(beta0, 1.0))

    @classmethod
    def student_t(cls, df, variance=1.0, s0=None):
        mc = MomentOnly(s0) if s0 is not None else None
        return cls("student_t", variance=variance, df=df, moment_class=mc)

    @classmethod
    def custom(cls, sampler, moment_class, variance=None, mean_zero=True):
        return cls("custom", variance=variance, sampler=sampler,
                   moment_class=moment_class, mean_zero=mean_zero)

    @property
    def second_moment(self):
        """``E[eps^2]`` when known (zero-mean kinds), else None."""
        return self.variance


def sample_errors(noise: NoiseSpec, rng, size):
    """Draw ``size`` errors (array) from ``noise`` using generator ``rng``."""
    if noise.kind == "gaussian":
        return math.sqrt(noise.variance) * rng.standard_normal(size)
    if noise.kind == "student_t":
        df = noise.df
        if df <= 2:
            raise RescaleUndefined(f"t({df}) has no finite variance to rescale")
        z = rng.standard_normal(size)
        w = rng.chisquare(df, size)
        scale = math.sqrt(noise.variance * (df - 2.0) / df)
        return scale * z / np.sqrt(w / df)
    return np.asarray(noise.sampler(rng, size), dtype=float)


def sample_error(noise: NoiseSpec, rng) -> float:
    """Single draw of the error term."""
    return float(sample_errors(noise, rng, 1)[0])


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    p: int
    pi: tuple
    nonlinear: NonlinearTerm
    noise: NoiseSpec

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("order p must be a positive integer")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "pi", tuple(float(v) for v in self.pi))
        if len(self.pi) != self.p - 1:
            raise ValueError(f"expected {self.p - 1} pi coefficients, got {len(self.pi)}")
        check_stable_remainder(self.pi)
        if isinstance(self.nonlinear, GeneralEstar) and len(self.nonlinear.theta) != self.p:
            raise ValueError("theta must have length p")

    @property
    def pi_array(self):
        return np.asarray(self.pi, dtype=float)

    def filtered(self, x):
        """``u = x_1 - pi_1 x_2 - ... - pi_{p-1} x_p`` for states ``(..., p)``."""
        x = np.asarray(x, dtype=float)
        if self.p == 1:
            return x[..., 0]
        return x[..., 0] - x[..., 1:] @ self.pi_array

    def advance(self, states, eps):
        """Vectorised transition: states ``(n, p)`` and errors ``(n,)``."""
        states = np.asarray(states, dtype=float)
        u = self.filtered(states)
        u_next = self.nonlinear.gbar(u, states) + eps
        y = u_next if self.p == 1 else u_next + states[..., :-1] @ self.pi_array
        out = np.empty_like(states)
        out[..., 0] = y
        out[..., 1:] = states[..., :-1]
        return out


def step(model: ModelSpec, history, eps: float) -> float:
    """One step: ``history`` is ``(y_{t-1}, ..., y_{t-p})``; returns ``y_t``."""
    x = np.asarray(history, dtype=float)
    if x.shape != (model.p,):
        raise HistoryLengthMismatch(f"history must have length {model.p}, got {x.shape}")
    u = model.filtered(x)
    u_next = model.nonlinear.gbar(u, x) + eps
    if model.p == 1:
        return float(u_next)
    return float(u_next + x[:-1] @ model.pi_array)
