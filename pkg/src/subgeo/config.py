"""TOML model files.

Schema::

    [model]       p, pi
    [nonlinear]   type = "lstar" | "estar" | "general_estar" | "zero", plus parameters
    [nonlinear.h] family, rho | rho1 + rho2, a | a1 + a2      (ESTAR types only)
    [noise]       kind = "gaussian" | "student_t", variance, df, s0, beta0, kappa0
    [run]         optional defaults for the command line

Unknown keys are rejected.  Custom Python terms cannot be written to a file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import tomli_w

from .errors import ConfigError
from .model import (EstarSlope, GeneralEstar, HSpec, LstarIntercept, ModelSpec, MomentOnly,
                    NoiseSpec, Subexponential, ZeroTerm)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

RUN_KEYS = {
    "n": int, "burn_in": int, "seed": int, "reps": int, "horizons": list, "x0": list,
    "max_lag": int, "V": str, "s0": float, "rho": float, "tolerance": float,
}

_NL_KEYS = {
    "lstar": {"type", "nu1", "nu2", "b", "a1", "a2"},
    "estar": {"type", "variant", "r0", "nu", "h"},
    "general_estar": {"type", "variant", "r0", "gamma", "theta", "h"},
    "zero": {"type"},
}
_H_KEYS = {"family", "rho", "rho1", "rho2", "a", "a1", "a2"}
_NOISE_KEYS = {"kind", "variance", "df", "s0", "beta0", "kappa0"}


@dataclass
class ModelFile:
    model: ModelSpec
    run: dict = field(default_factory=dict)
    path: str = ""


def _reject_unknown(section, got, allowed):
    extra = set(got) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")


def _need(section, d, key):
    if key not in d:
        raise ConfigError(f"[{section}] is missing '{key}'")
    return d[key]


def _parse_h(d):
    _reject_unknown("nonlinear.h", d, _H_KEYS)
    return HSpec(**d)


def _parse_nonlinear(d):
    kind = _need("nonlinear", d, "type")
    if kind not in _NL_KEYS:
        raise ConfigError(f"unknown nonlinear type {kind!r}")
    _reject_unknown("nonlinear", d, _NL_KEYS[kind])
    args = {k: v for k, v in d.items() if k != "type"}
    if kind == "lstar":
        return LstarIntercept(**args)
    if kind == "zero":
        return ZeroTerm()
    args["h"] = _parse_h(_need("nonlinear", d, "h"))
    if kind == "estar":
        return EstarSlope(**args)
    args["theta"] = tuple(args.get("theta", ()))
    return GeneralEstar(**args)


def _parse_noise(d):
    _reject_unknown("noise", d, _NOISE_KEYS)
    kind = d.get("kind", "gaussian")
    var = float(d.get("variance", 1.0))
    if kind == "gaussian":
        if "df" in d or "s0" in d:
            raise ConfigError("gaussian noise takes variance, beta0 and kappa0 only")
        mc = Subexponential(float(d.get("beta0", 1.0)), float(d.get("kappa0", 1.0)))
        return NoiseSpec("gaussian", variance=var, moment_class=mc)
    if kind == "student_t":
        if "beta0" in d or "kappa0" in d:
            raise ConfigError("Student t noise has no exponential moments")
        df = float(_need("noise", d, "df"))
        return NoiseSpec.student_t(df, var, s0=d.get("s0"))
    raise ConfigError(f"unknown noise kind {kind!r}")


def _parse_run(d):
    _reject_unknown("run", d, RUN_KEYS)
    out = {}
    for k, v in d.items():
        typ = RUN_KEYS[k]
        if typ is list:
            if not isinstance(v, list):
                raise ConfigError(f"[run] {k} must be a list")
            out[k] = v
        else:
            try:
                out[k] = typ(v)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"[run] {k}: {e}") from None
    return out


def parse_model(doc: dict) -> ModelFile:
    _reject_unknown("top level", doc, {"model", "nonlinear", "noise", "run"})
    try:
        m = doc.get("model", {})
        _reject_unknown("model", m, {"p", "pi"})
        p = int(_need("model", m, "p"))
        pi = tuple(float(v) for v in m.get("pi", []))
        nl = _parse_nonlinear(_need("top level", doc, "nonlinear"))
        noise = _parse_noise(doc.get("noise", {}))
        model = ModelSpec(p=p, pi=pi, nonlinear=nl, noise=noise)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return ModelFile(model=model, run=_parse_run(doc.get("run", {})))


def loads(text: str) -> ModelFile:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}") from e
    return parse_model(doc)


def bundled_models():
    """Names of the model files shipped with the package."""
    root = resources.files("subgeo") / "models"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_model_path(path) -> Path:
    """``path`` if it exists, else the shipped model with the same stem."""
    p = Path(path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".toml") else p.name
    cand = resources.files("subgeo") / "models" / f"{stem}.toml"
    if cand.is_file():
        return Path(str(cand))
    raise ConfigError(f"model file {path} not found (shipped models: "
                      f"{', '.join(bundled_models())})")


def load(path) -> ModelFile:
    real = resolve_model_path(path)
    mf = loads(real.read_text())
    mf.path = str(real)
    return mf


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def _h_dict(h: HSpec):
    if h.family == "custom":
        raise ConfigError("custom h functions cannot be serialised")
    if h.family in ("i", "ii", "iii"):
        return {"family": h.family, "rho": h.rho, "a": h.a}
    return {"family": h.family, "rho1": h.rho1, "rho2": h.rho2, "a1": h.a1, "a2": h.a2}


def model_to_dict(model: ModelSpec, run=None) -> dict:
    nl = model.nonlinear
    if isinstance(nl, LstarIntercept):
        nd = {"type": "lstar", "nu1": nl.nu1, "nu2": nl.nu2, "b": nl.b, "a1": nl.a1, "a2": nl.a2}
    elif isinstance(nl, EstarSlope):
        nd = {"type": "estar", "variant": nl.variant, "r0": nl.r0, "nu": nl.nu,
              "h": _h_dict(nl.h)}
    elif isinstance(nl, GeneralEstar):
        nd = {"type": "general_estar", "variant": nl.variant, "r0": nl.r0,
              "gamma": nl.gamma, "theta": list(nl.theta), "h": _h_dict(nl.h)}
    elif isinstance(nl, ZeroTerm):
        nd = {"type": "zero"}
    else:
        raise ConfigError(f"{type(nl).__name__} terms cannot be serialised")
    nz = model.noise
    if nz.kind == "gaussian":
        nd_noise = {"kind": "gaussian", "variance": nz.variance,
                    "beta0": nz.moment_class.beta0, "kappa0": nz.moment_class.kappa0}
    elif nz.kind == "student_t":
        nd_noise = {"kind": "student_t", "variance": nz.variance, "df": nz.df,
                    "s0": nz.moment_class.s0}
    else:
        raise ConfigError("custom noise cannot be serialised")
    doc = {"model": {"p": model.p, "pi": list(model.pi)}, "nonlinear": nd, "noise": nd_noise}
    if run:
        doc["run"] = dict(run)
    return doc


def dumps(model: ModelSpec, run=None) -> str:
    return tomli_w.dumps(model_to_dict(model, run))
