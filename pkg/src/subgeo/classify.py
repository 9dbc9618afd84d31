"""Map envelope exponents and error moments to an ergodicity-rate certificate.

The envelope exponent ``rho`` (how fast the inward pull ``r |u|^(1-rho)``
fades) and the error moment class decide the rate:

* exponential moments of order ``kappa0`` and ``rho > kappa0``: subexponential
  ``exp(k n^(b3/rho))`` with ``b3 = min(kappa0, 2 - rho)``
* exponential moments and ``rho == kappa0``: geometric
* only ``s0`` moments: polynomial ``n^(delta-1)``, ``delta <= s0/rho``, when one
  of three ``(rho, s0)`` clauses holds
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .drift import DriftSpec, EnvelopeCertificate, check_epsilon_decay, check_g_envelope, \
    default_drift_spec
from .errors import BorderlineAmbiguous, EnvelopeMissing, NotCovered
from .model import (Custom, EstarSlope, GeneralEstar, HSpec, LstarIntercept, ModelSpec,
                    MomentOnly, Subexponential, ZeroTerm)

GEOMETRIC = "Geometric"
SUBEXPONENTIAL = "Subexponential"
POLYNOMIAL = "Polynomial"


@dataclass(frozen=True)
class RateCertificate:
    """Ergodicity rate, f-norm, beta-mixing rate and stationary moments.

    ``exponent`` is ``b3/rho`` for subexponential rates (``r(n) = e^{k n^exponent}``)
    and ``s0/rho - 1`` for polynomial ones (the fastest ``r(n) = n^exponent``);
    it is ``None`` for geometric rates.
    """

    rate_class: str
    rho: float
    exponent: Optional[float]
    rate: str
    f_norm: str
    beta_mixing: str
    beta_exponent: Optional[float]
    moments: float
    assumptions_trace: tuple
    b3: Optional[float] = None
    s0: Optional[float] = None
    delta_range: Optional[tuple] = None
    k_range: Optional[str] = None
    r: Optional[float] = None
    drift_kind: str = "subexp"

    def to_text(self) -> str:
        lines = [f"class: {self.rate_class}",
                 f"rate: r(n) = {self.rate}"]
        if self.exponent is not None:
            lines.append(f"rate exponent: {self.exponent:.6g}")
        if self.k_range:
            lines.append(f"admissible k: {self.k_range}")
        if self.delta_range:
            lines.append(f"delta range: [{self.delta_range[0]:.6g}, {self.delta_range[1]:.6g}]")
        lines += [f"f: {self.f_norm}",
                  f"beta-mixing: {self.beta_mixing}",
                  f"finite stationary moments up to order: {_fmt(self.moments)}",
                  f"rho: {self.rho:.6g}"]
        if self.r is not None:
            lines.append(f"envelope r: {self.r:.6g}")
        lines.append("assumptions:")
        lines += [f"  - {t}" for t in self.assumptions_trace]
        return "\n".join(lines)

    def to_kv(self) -> str:
        """``key=value`` lines, one per field."""
        out = []
        for k, v in asdict(self).items():
            if k == "assumptions_trace":
                v = " | ".join(v)
            elif isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            elif isinstance(v, float):
                v = _fmt(v)
            out.append(f"{k}={'' if v is None else v}")
        return "\n".join(out) + "\n"


def _fmt(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:.10g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# classification from (rho, moment class)
# ---------------------------------------------------------------------------


def clause_iii_value(s0, r, second_moment):
    """``s0 r - s0 (s0 - 1) E[eps^2] / 2``; the rho = 2 clause needs it positive."""
    return s0 * r - 0.5 * s0 * (s0 - 1.0) * second_moment


def _polynomial(rho, s0, trace, r=None):
    e = s0 / rho - 1.0
    return RateCertificate(
        rate_class=POLYNOMIAL, rho=rho, exponent=e,
        rate=f"n^(delta-1), delta in [1, {s0 / rho:.6g}]; fastest n^{e:.6g}",
        f_norm="V^(1 - delta*rho/s0)" + ("; p=1: 1 + |x|^(s0 - delta*rho)"),
        beta_mixing=f"n^{e:.6g} beta(n) -> 0", beta_exponent=e,
        moments=float(s0 - rho), assumptions_trace=tuple(trace), s0=float(s0),
        delta_range=(1.0, s0 / rho), r=r, drift_kind="poly")


def _polynomial_clause(rho, s0, r, second_moment):
    """Which polynomial clause holds, as ``(label, ok, why)``."""
    if 0 < rho < 1:
        return "i", s0 > rho, f"0 < rho < 1 needs s0 > rho (s0={s0:g})"
    if 1 <= rho < 2:
        ok = s0 == 2 or s0 >= 4
        return "ii", ok, f"1 <= rho < 2 needs s0 = 2 or s0 >= 4 (s0={s0:g})"
    if s0 < 4:
        return "iii", False, f"rho = 2 needs s0 >= 4 (s0={s0:g})"
    if r is None or second_moment is None:
        return "iii", False, "rho = 2 needs the envelope r and E[eps^2]"
    val = clause_iii_value(s0, r, second_moment)
    return "iii", val > 0, (f"rho = 2: s0 r - s0(s0-1)E[eps^2]/2 = {val:.6g} "
                            f"(s0={s0:g}, r={r:g}, E[eps^2]={second_moment:g})")


def classify(rho, moment_class, r=None, second_moment=None, tolerance=0.0,
             mean_zero=True) -> RateCertificate:
    """Rate certificate for envelope exponent ``rho`` and an error moment class.

    Parameters
    ----------
    rho : float
        Envelope exponent in ``(0, 2]``.
    moment_class : Subexponential or MomentOnly
    r : float, optional
        Envelope constant; only needed when ``rho == 2``.
    second_moment : float, optional
        ``E[eps^2]``; only needed when ``rho == 2``.
    tolerance : float
        ``rho`` within ``tolerance`` of ``kappa0`` (but not equal) is
        reported as ambiguous instead of being rounded either way.

    Raises
    ------
    NotCovered
        No result applies to the combination.
    BorderlineAmbiguous
        ``0 < |rho - kappa0| < tolerance``.
    """
    if not 0 < rho <= 2:
        raise ValueError("rho must lie in (0, 2]")
    if not mean_zero:
        raise NotCovered("the rate results need zero-mean errors")
    trace = []
    if r is not None:
        trace.append(f"envelope |g(u)| <= (1 - r|u|^-rho)|u| with rho={rho:g}, r={r:.6g}")
    else:
        trace.append(f"envelope exponent rho={rho:g}")

    if isinstance(moment_class, Subexponential):
        k0, b0 = moment_class.kappa0, moment_class.beta0
        trace.append(f"errors: E exp(beta0 |eps|^kappa0) < inf, beta0={b0:g}, kappa0={k0:g}")
        if rho == 2:
            # exponential moments imply every polynomial moment; use s0 = 4
            trace.append("rho = 2 is outside the subexponential result; "
                         "falling back to the polynomial result with s0 = 4")
            label, ok, why = _polynomial_clause(rho, 4.0, r, second_moment)
            trace.append(f"polynomial clause ({label}): {why}")
            if not ok:
                raise NotCovered("; ".join(trace[-2:]))
            return _polynomial(rho, 4.0, trace, r)
        diff = rho - k0
        b3 = min(k0, 2.0 - rho)
        if diff == 0:
            trace.append(f"rho == kappa0: geometric drift with b3 = kappa0 = {k0:g}")
            return _geometric(rho, b3, trace, r)
        if abs(diff) < tolerance:
            raise BorderlineAmbiguous(
                f"|rho - kappa0| = {abs(diff):.3g} is below the tolerance {tolerance:g}; "
                "refusing to pick between geometric and subexponential")
        if diff < 0:
            trace.append("rho < kappa0: geometric (stated without proof for the general "
                         "order; not backed by a proved result here)")
            return _geometric(rho, b3, trace, r)
        e = b3 / rho
        trace.append(f"rho > kappa0: subexponential drift with b3 = kappa0 ^ (2 - rho) = {b3:g}")
        return RateCertificate(
            rate_class=SUBEXPONENTIAL, rho=rho, exponent=e,
            rate=f"exp(k n^{e:.6g})",
            f_norm="V^delta, delta in (0, 1)",
            beta_mixing=(f"exp(k~ n^{e:.6g}) beta(n) -> 0 for k~ in "
                         f"(0, (c rho/(2 b3))^(b3/rho))"),
            beta_exponent=e, moments=math.inf, assumptions_trace=tuple(trace), b3=b3,
            k_range="(0, (1 - delta) (c rho / b3)^(b3/rho)), c the drift-rate constant",
            r=r, drift_kind="subexp")

    if isinstance(moment_class, MomentOnly):
        s0 = float(moment_class.s0)
        trace.append(f"errors: E|eps|^s0 < inf with s0={s0:g}")
        label, ok, why = _polynomial_clause(rho, s0, r, second_moment)
        trace.append(f"polynomial clause ({label}): {why}")
        if not ok:
            raise NotCovered(f"no polynomial clause covers rho={rho:g}, s0={s0:g}: {why}")
        return _polynomial(rho, s0, trace, r)

    raise TypeError(f"unknown moment class {moment_class!r}")


def _geometric(rho, b3, trace, r):
    return RateCertificate(
        rate_class=GEOMETRIC, rho=rho, exponent=None, rate="exp(c n) for some c > 0",
        f_norm="V", beta_mixing="r~^n beta(n) -> 0 for some r~ > 1", beta_exponent=None,
        moments=math.inf, assumptions_trace=tuple(trace), b3=b3, r=r, drift_kind="subexp")


def required_decay_order(cert: RateCertificate) -> float:
    """Decay order ``d`` the remainder ``|u + tilde_g(x) - g(u)|/|x|`` must have."""
    if cert.rate_class == POLYNOMIAL:
        return cert.rho / cert.s0 if cert.s0 < 1 else cert.rho
    return cert.rho / cert.b3


# ---------------------------------------------------------------------------
# condition (h)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HCheck:
    passed: bool
    rho: float
    c1: float
    c2: float
    c3: float
    M0: float
    reason: str = ""


def check_condition_h(h: HSpec, m0_candidates=(0.5, 1, 2, 5, 10, 20, 50), u_max=1e6,
                      n_points=20_000, growth_tol=0.02) -> HCheck:
    """Find ``c1, c3, M0`` with ``c1 h(u) <= |u|^rho`` and ``|u|^(rho+c2) <= c3 h(u)^2``.

    ``c2`` is fixed at ``rho/2``.  The check fails when ``h`` is not finite on
    the grid, does not grow, or when either ratio is still increasing over the
    outer decades (the constants would not exist).
    """
    rho = h.effective_rho
    c2 = rho / 2.0
    fail = lambda why: HCheck(False, rho, math.nan, c2, math.nan, math.nan, why)  # noqa: E731
    pos = np.logspace(math.log10(min(m0_candidates)), math.log10(u_max), n_points)
    u = np.concatenate((-pos[::-1], pos))
    au = np.abs(u)
    with np.errstate(over="ignore", invalid="ignore"):
        hv = np.asarray(h(u), dtype=float)
        if not np.all(np.isfinite(hv)) or np.any(hv <= 0):
            return fail("h is not finite and positive on the grid")
        q1 = hv / au ** rho
        q3 = au ** (rho + c2) / hv ** 2
    if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(q3))):
        return fail("ratios not finite on the grid")
    if not h(np.array([u_max]))[0] > h(np.array([u_max / 1e3]))[0]:
        return fail("h does not grow in the tails")
    # slopes over the outer two decades on each side
    for side in (u > 0, u < 0):
        uu, a1, a3 = au[side], q1[side], q3[side]
        sel = uu >= u_max / 100
        for q, name in ((a1, "h/|u|^rho"), (a3, "|u|^(rho+c2)/h^2")):
            slope = np.polyfit(np.log(uu[sel]), np.log(q[sel]), 1)[0]
            if slope > growth_tol:
                return fail(f"{name} keeps growing (log-log slope {slope:.3g})")
    for M0 in sorted(m0_candidates):
        sel = au >= M0
        c1 = 1.0 / float(np.max(q1[sel]))
        c3 = float(np.max(q3[sel]))
        if c1 > 0 and np.isfinite(c3):
            return HCheck(True, rho, c1, c2, c3, float(M0))
    return fail("no candidate M0 works")


# ---------------------------------------------------------------------------
# model dispatch
# ---------------------------------------------------------------------------


def _envelope_for(model: ModelSpec, trace):
    nl = model.nonlinear
    if isinstance(nl, ZeroTerm):
        raise NotCovered("no nonlinear term: g(u) = u has no inward drift (unit root)")
    if isinstance(nl, LstarIntercept):
        cert = check_g_envelope(nl.g, 1.0)
        trace.append(f"LSTAR intercept: rho = 1, analytic r = min(-nu1, nu2)/2 = "
                     f"{min(-nl.nu1, nl.nu2) / 2:.6g}")
        if not cert.passed:
            raise NotCovered("LSTAR envelope search failed")
        return 1.0, cert, nl.g
    if isinstance(nl, (EstarSlope, GeneralEstar)):
        hc = check_condition_h(nl.h)
        if not hc.passed:
            raise NotCovered(f"condition on h fails: {hc.reason}")
        trace.append(f"ESTAR slope {nl.variant}: h family {nl.h.family} satisfies the growth "
                     f"condition with rho={hc.rho:g}, c1={hc.c1:.4g}, c2={hc.c2:.4g}, "
                     f"c3={hc.c3:.4g}, M0={hc.M0:g}; analytic r = c1 r0/2 = "
                     f"{hc.c1 * nl.r0 / 2:.6g}")
        cert = check_g_envelope(nl.g, hc.rho)
        if not cert.passed:
            raise NotCovered(f"envelope search failed at u={cert.worst_u}")
        return hc.rho, cert, nl.g
    if isinstance(nl, Custom):
        if isinstance(nl.envelope, EnvelopeCertificate):
            if not nl.envelope.passed:
                raise NotCovered("attached envelope certificate did not pass")
            trace.append(f"custom term '{nl.name}' with attached envelope certificate")
            return nl.envelope.rho, nl.envelope, nl.g_func
        if nl.g_func is not None and nl.rho is not None:
            cert = check_g_envelope(nl.g, nl.rho)
            trace.append(f"custom term '{nl.name}' with declared g and rho={nl.rho:g}")
            if not cert.passed:
                raise NotCovered(f"envelope search failed at u={cert.worst_u}")
            return float(nl.rho), cert, nl.g
        raise EnvelopeMissing("custom term needs an envelope certificate or a declared (g, rho)")
    raise TypeError(f"unsupported nonlinear term {type(nl).__name__}")


def classify_model(model: ModelSpec, tolerance=0.0, check_decay=True) -> RateCertificate:
    """Certificate for a model: find ``rho`` and ``r``, then call :func:`classify`.

    For terms whose conditional mean depends on more than ``u`` the decay of
    the remainder is fitted and compared with the order the result needs.
    """
    trace = []
    rho, env, g = _envelope_for(model, trace)
    trace.append(f"numerical envelope: r={env.r:.6g}, M0={env.M0:g}, K0={env.K0:.6g}")
    cert = classify(rho, model.noise.moment_class, r=env.r,
                    second_moment=model.noise.second_moment, tolerance=tolerance,
                    mean_zero=model.noise.mean_zero)
    nl = model.nonlinear
    if check_decay and isinstance(nl, (GeneralEstar, Custom)):
        d = required_decay_order(cert)
        if g is None:
            trace.append("remainder decay not checked (no g declared)")
        else:
            fit = check_epsilon_decay(model, g, d)
            trace.append(f"remainder decay: fitted slope {fit.slope:.4g}, need <= -{d:.4g}")
            if not fit.passes:
                raise NotCovered(f"remainder decays too slowly (slope {fit.slope:.4g}, "
                                 f"need {-d:.4g})")
    else:
        trace.append("conditional mean depends on u only; remainder is zero")
    full = tuple(trace) + tuple(cert.assumptions_trace)
    if cert.rate_class == POLYNOMIAL and model.noise.kind == "student_t":
        full += (f"t({model.noise.df:g}) errors: any s0 < {model.noise.df:g} is admissible; "
                 f"the rate is reported for s0={cert.s0:g}",)
    return RateCertificate(**{**asdict(cert), "assumptions_trace": full})


def implied_drift_spec(model: ModelSpec, cert: RateCertificate, **kw) -> DriftSpec:
    """Lyapunov function and drift shape matching ``cert`` with default small constants."""
    if cert.drift_kind == "poly":
        return default_drift_spec(model, "poly", cert.rho, s0=cert.s0, **kw)
    return default_drift_spec(model, "subexp", cert.rho, **kw)
