"""Command line interface.

Exit codes: 0 success, 2 certified failure (drift fails, classification not
covered, no detectable decay), 1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import io
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfg
from .classify import classify_model, implied_drift_spec
from .companion import build_companion
from .drift import GridConfig, MCConfig, check_g_envelope, default_drift_spec, verify_drift, \
    verify_drift_autoshrink
from .errors import (BorderlineAmbiguous, ConfigError, EnvelopeMissing, InsufficientDecay,
                     NotCovered, SubgeoError)
from .model import NoiseSpec
from .sim import DEFAULT_HORIZONS, acf, acf_to_csv, ensemble_tv, fit_mixing_rate, simulate

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

DEFAULTS = {
    "n": 1000, "burn_in": 0, "seed": 0, "reps": 200_000, "horizons": list(DEFAULT_HORIZONS),
    "x0": [10.0], "max_lag": 20, "V": None, "s0": None, "rho": None, "tolerance": 0.0,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _csv_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _csv_ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    ap = _Parser(prog="subgeo", description="Ergodicity diagnostics for unit-root nonlinear "
                                            "autoregressions")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True, out=True):
        p.add_argument("--model", required=True, help="model TOML file or shipped model name")
        p.add_argument("--noise", choices=("gaussian", "t"),
                       help="replace the file's error law, keeping its variance")
        if seed:
            p.add_argument("--seed", type=int)
        if out:
            p.add_argument("--out", help="output file (stdout if omitted)")

    p = sub.add_parser("simulate", help="simulate a trajectory to CSV")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)

    p = sub.add_parser("classify", help="ergodicity-rate certificate")
    common(p, seed=False)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--companion-csv", help="write Phi, A, Pi and P as CSV")

    p = sub.add_parser("verify-drift", help="Monte Carlo drift check")
    common(p)
    p.add_argument("--V", choices=("poly", "subexp"))
    p.add_argument("--s0", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--radii", type=_csv_floats, help="comma-separated shell radii")
    p.add_argument("--c", type=float, default=0.01, help="scale of phi")
    p.add_argument("--s1", type=float, default=0.01, help="z2 weight for polynomial V")
    p.add_argument("--autoshrink", action="store_true", help="halve constants until it passes")
    p.add_argument("--control-variates", action="store_true")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("envelope", help="search envelope constants (r, M0, K0)")
    common(p, seed=False, out=False)
    p.add_argument("--rho", type=float)

    p = sub.add_parser("mixing", help="ensemble TV decay and rate fit")
    common(p)
    p.add_argument("--reps", type=int)
    p.add_argument("--horizons", type=_csv_ints)
    p.add_argument("--x0", type=_csv_floats)

    p = sub.add_parser("acf", help="sample autocorrelations of a simulated path")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--max-lag", dest="max_lag", type=int)
    return ap


def _settings(args, mf, keys):
    """Merge defaults < [run] section < command line for ``keys``."""
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None:
            v = mf.run.get(k, DEFAULTS[k])
        out[k] = v
    return out


def _header(command, mf, settings, out):
    nz = mf.model.noise
    lines = [f"# subgeo {command}", f"# model: {mf.path}",
             f"# noise: {nz.kind}, variance {nz.variance}"
             + (f", df {nz.df}" if nz.df is not None else "")]
    lines += [f"# {k} = {v}" for k, v in settings.items()]
    print("\n".join(lines), file=out)


def _write(text_fn, path, stdout):
    if path:
        with open(path, "w", newline="") as fh:
            text_fn(fh)
    else:
        buf = io.StringIO()
        text_fn(buf)
        stdout.write(buf.getvalue())


def _load(args):
    mf = cfg.load(args.model)
    if args.noise:
        var = mf.model.noise.variance
        noise = NoiseSpec.gaussian(var) if args.noise == "gaussian" else NoiseSpec.student_t(5, var)
        mf.model = replace(mf.model, noise=noise)
    return mf


def _rho_of(model, given):
    if given is not None:
        return float(given)
    from .classify import _envelope_for
    rho, _, _ = _envelope_for(model, [])
    return rho


def cmd_simulate(args, out):
    mf = _load(args)
    st = _settings(args, mf, ("n", "burn_in", "seed"))
    _header("simulate", mf, st, out)
    traj = simulate(mf.model, st["n"], st["burn_in"], st["seed"])
    _write(traj.to_csv, args.out, out)
    return EXIT_OK


def cmd_classify(args, out):
    mf = _load(args)
    st = _settings(args, mf, ("tolerance",))
    _header("classify", mf, st, out)
    if args.companion_csv:
        comp = build_companion(mf.model.pi)
        with open(args.companion_csv, "w") as fh:
            for name in ("Phi", "A", "Pi", "P"):
                mat = getattr(comp, name)
                fh.write(f"# {name}\n")
                np.savetxt(fh, np.atleast_2d(mat), delimiter=",", fmt="%.17g")
            fh.write(f"# eta\n{comp.eta!r}\n")
    try:
        cert = classify_model(mf.model, tolerance=st["tolerance"])
    except (NotCovered, BorderlineAmbiguous, EnvelopeMissing) as e:
        print(f"{type(e).__name__}: {e}", file=out)
        return EXIT_FAIL
    print(cert.to_text(), file=out)
    print("", file=out)
    print(cert.to_kv(), end="", file=out)
    if args.out:
        Path(args.out).write_text(cert.to_kv())
    return EXIT_OK


def cmd_verify_drift(args, out):
    mf = _load(args)
    st = _settings(args, mf, ("seed", "reps", "V", "s0", "rho"))
    model = mf.model
    rho = _rho_of(model, st["rho"])
    kind = st["V"]
    if kind is None:
        try:
            kind = classify_model(model).drift_kind
        except SubgeoError:
            kind = "poly"
    spec = default_drift_spec(model, kind, rho, s0=st["s0"], c=args.c, s1=args.s1)
    grid = GridConfig(radii=tuple(args.radii)) if args.radii else GridConfig()
    mc = MCConfig(reps=st["reps"], seed=st["seed"], control_variates=args.control_variates,
                  workers=args.workers)
    st.update(rho=rho, V=kind, radii=list(grid.radii), c=args.c, s1=args.s1,
              control_variates=args.control_variates, autoshrink=args.autoshrink)
    _header("verify-drift", mf, st, out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.autoshrink:
            report, spec = verify_drift_autoshrink(model, spec, grid, mc)
        else:
            report = verify_drift(model, spec, grid, mc)
    for w in caught:
        print(f"# warning: {w.message}", file=out)
    print(f"# V = {spec.V}", file=out)
    print(f"# phi = {spec.phi}", file=out)
    print(f"# estimator = {report.estimator}", file=out)
    print(f"# suggested_C_radius = {report.suggested_C_radius:g}", file=out)
    print(f"# suggested_b = {report.suggested_b:.6g}", file=out)
    print(f"# pass = {str(report.passed).lower()}", file=out)
    _write(report.to_csv, args.out, out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_envelope(args, out):
    mf = _load(args)
    nl = mf.model.nonlinear
    rho = _rho_of(mf.model, args.rho)
    _header("envelope", mf, {"rho": rho}, out)
    cert = check_g_envelope(nl.g, rho)
    for k in ("passed", "r", "M0", "K0", "rho", "worst_margin", "worst_u"):
        print(f"{k} = {getattr(cert, k)}", file=out)
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_mixing(args, out):
    mf = _load(args)
    st = _settings(args, mf, ("seed", "reps", "horizons", "x0"))
    if args.reps is None and "reps" not in mf.run:
        st["reps"] = 10_000
    _header("mixing", mf, st, out)
    rep = ensemble_tv(mf.model, st["x0"], st["horizons"], st["reps"], seed=st["seed"])
    print(f"# noise_floor = {rep.noise_floor:.6g}", file=out)
    code = EXIT_OK
    try:
        fit = fit_mixing_rate(rep)
        print(f"# class_guess = {fit.class_guess}", file=out)
        print(f"# poly_exponent = {fit.poly_exponent:.6g}", file=out)
        print(f"# geometric_rate = {fit.geometric_rate:.6g}", file=out)
        print(f"# log_rate = {fit.log_rate:.6g}", file=out)
    except InsufficientDecay as e:
        print(f"# InsufficientDecay: {e}", file=out)
        code = EXIT_FAIL
    _write(rep.to_csv, args.out, out)
    return code


def cmd_acf(args, out):
    mf = _load(args)
    st = _settings(args, mf, ("n", "burn_in", "seed", "max_lag"))
    _header("acf", mf, st, out)
    traj = simulate(mf.model, st["n"], st["burn_in"], st["seed"])
    vals = acf(traj.values, st["max_lag"])
    _write(lambda fh: acf_to_csv(vals, fh), args.out, out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "classify": cmd_classify, "verify-drift": cmd_verify_drift,
            "envelope": cmd_envelope, "mixing": cmd_mixing, "acf": cmd_acf}


def run(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NotCovered as e:
        print(f"NotCovered: {e}", file=sys.stderr)
        return EXIT_FAIL
    except (SubgeoError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
