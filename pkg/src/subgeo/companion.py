"""Companion form of the model and a weighted norm that makes ``Pi1`` contract.

For ``x in R^p`` the transform ``z = A x`` splits into ``z1 = u`` (the
filtered value) and ``z2 = (x_2, ..., x_p)``; the second block evolves as
``z2' = Pi1 z2 + z1 * iota``.  The norm ``||z||_* = sqrt(z' P z)`` with
``P = Pi1' P Pi1 + I`` satisfies ``||Pi1 z||_* <= eta ||z||_*``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, NotContractive
from .model import check_stable_remainder
from .rng import make_rng

CONTRACTION_MARGIN = 1e-8


class ZSplit(NamedTuple):
    z1: np.ndarray
    z2: np.ndarray


@dataclass(frozen=True, eq=False)
class CompanionForm:
    Phi: np.ndarray
    A: np.ndarray
    Pi: np.ndarray
    Pi1: np.ndarray
    P: np.ndarray
    eta: float

    @property
    def p(self) -> int:
        return self.Phi.shape[0]

    @property
    def pi(self):
        return tuple(self.Phi[0, :-1])

    def norm(self, z2):
        """``||z2||_*`` over the last axis."""
        z2 = np.asarray(z2, dtype=float)
        if self.p == 1:
            return np.zeros(z2.shape[:-1])
        return np.sqrt(np.einsum("...i,ij,...j->...", z2, self.P, z2))

    @property
    def iota_norm(self) -> float:
        if self.p == 1:
            return 0.0
        return float(np.sqrt(self.P[0, 0]))

    def equivalence_constant(self) -> float:
        """``c`` with ``|z|/c <= ||z||_* <= c |z|``."""
        if self.p == 1:
            return 1.0
        w = np.linalg.eigvalsh(self.P)
        return float(max(np.sqrt(w[-1]), 1.0 / np.sqrt(w[0])))


def solve_lyapunov(Pi1):
    """Solve ``P = Pi1' P Pi1 + I``."""
    Pi1 = np.atleast_2d(np.asarray(Pi1, dtype=float))
    P = linalg.solve_discrete_lyapunov(Pi1.T, np.eye(Pi1.shape[0]))
    return 0.5 * (P + P.T)


def lyapunov_residual(Pi1, P) -> float:
    k = P.shape[0]
    return float(np.max(np.abs(P - Pi1.T @ P @ Pi1 - np.eye(k))))


def weighted_norm(Pi1, certify=True, n_samples=10_000, seed=0):
    """Return ``(P, eta)`` with ``||Pi1 z||_* <= eta ||z||_*`` and ``eta < 1``.

    ``eta = sqrt(1 - 1/lambda_max(P))`` is the analytic bound; with
    ``certify`` it is also checked on ``n_samples`` random vectors.
    """
    Pi1 = np.asarray(Pi1, dtype=float)
    if Pi1.size == 0:
        return np.zeros((0, 0)), 0.0
    Pi1 = np.atleast_2d(Pi1)
    rad = float(np.max(np.abs(np.linalg.eigvals(Pi1))))
    if rad >= 1.0 - CONTRACTION_MARGIN:
        raise NotContractive(f"spectral radius {rad:.12g} is not below one")
    P = solve_lyapunov(Pi1)
    lam_max = float(np.linalg.eigvalsh(P)[-1])
    eta = float(np.sqrt(max(0.0, 1.0 - 1.0 / lam_max)))
    if certify:
        ratio = max_contraction_ratio(Pi1, P, n_samples, seed)
        if ratio > eta + 1e-12:
            raise NotContractive(f"sampled ratio {ratio} exceeds eta {eta}")
    return P, eta


def max_contraction_ratio(Pi1, P, n_samples=10_000, seed=0) -> float:
    """Largest ``||Pi1 z||_* / ||z||_*`` over random Gaussian ``z``."""
    rng = make_rng(seed)
    Z = rng.standard_normal((n_samples, P.shape[0]))
    num = np.einsum("ni,ij,nj->n", Z @ Pi1.T, P, Z @ Pi1.T)
    den = np.einsum("ni,ij,nj->n", Z, P, Z)
    return float(np.sqrt(np.max(num / den)))


def build_companion(pi) -> CompanionForm:
    """Matrices ``Phi``, ``A``, ``Pi = A Phi A^{-1}`` and ``Pi1`` for coefficients ``pi``."""
    pi = np.asarray(pi, dtype=float).ravel()
    check_stable_remainder(pi)
    p = pi.size + 1
    Phi = np.zeros((p, p))
    Phi[0, :p - 1] = pi
    Phi[1:, :-1] += np.eye(p - 1)
    A = np.eye(p)
    A[0, 1:] = -pi
    Pi = np.zeros((p, p))
    if p > 1:
        Pi[1, 0] = 1.0
        Pi[1, 1:] = pi
        Pi[2:, 1:-1] += np.eye(p - 2)
    Pi1 = Pi[1:, 1:].copy()
    P, eta = weighted_norm(Pi1)
    return CompanionForm(Phi=Phi, A=A, Pi=Pi, Pi1=Pi1, P=P, eta=eta)


def transform_z(companion: CompanionForm, x) -> ZSplit:
    """``z = A x`` split into ``(z1, z2)``; works on ``(p,)`` or ``(n, p)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != companion.p:
        raise DimensionMismatch(f"state has dimension {x.shape[-1]}, expected {companion.p}")
    z = x @ companion.A.T
    return ZSplit(z[..., 0], z[..., 1:])


def companion_step(companion: CompanionForm, gbar_value, eps, x):
    """Matrix form ``y_t = Phi y_{t-1} + (gbar + eps) iota``."""
    x = np.asarray(x, dtype=float)
    out = x @ companion.Phi.T
    out[..., 0] += gbar_value + eps
    return out
