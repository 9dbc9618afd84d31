import io
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from subgeo import config as cfg
from subgeo.cli import run
from subgeo.errors import ConfigError
from subgeo.model import EstarSlope, HSpec, ModelSpec, NoiseSpec


@pytest.mark.parametrize("name", cfg.bundled_models())
def test_roundtrip(name):
    mf = cfg.load(name)
    again = cfg.loads(cfg.dumps(mf.model, mf.run))
    assert again.model == mf.model
    assert again.run == mf.run


def test_reference_models_shipped():
    names = set(cfg.bundled_models())
    for n in ("fig1_left", "fig1_middle", "fig1_right", "fig2_left", "fig2_middle",
              "fig2_right", "specific_example1", "general_example2"):
        assert n in names


def test_example_path_falls_back_to_bundled():
    assert cfg.resolve_model_path("examples/fig1_left.toml").name == "fig1_left.toml"
    with pytest.raises(ConfigError):
        cfg.resolve_model_path("nope.toml")


@pytest.mark.parametrize("text", [
    '[model]\np = 1\nfoo = 2\n[nonlinear]\ntype = "zero"\n',
    '[model]\np = 1\n[nonlinear]\ntype = "zero"\nnu = 1\n',
    '[model]\np = 1\n[nonlinear]\ntype = "warp"\n',
    '[model]\np = 1\n[nonlinear]\ntype = "zero"\n[run]\ncolour = "red"\n',
    '[model]\np = 1\n[nonlinear]\ntype = "zero"\n[noise]\nkind = "gaussian"\ndf = 5\n',
    '[model]\np = 2\npi = [1.5]\n[nonlinear]\ntype = "zero"\n',
    'not toml at all [',
])
def test_bad_files(text):
    with pytest.raises(ConfigError):
        cfg.loads(text)


@given(st.floats(0.05, 2.0), st.floats(0.1, 2.0), st.floats(-0.9, 0.9), st.floats(0.1, 5.0))
def test_roundtrip_property(r0, rho, pi1, var):
    m = ModelSpec(2, (pi1,), EstarSlope("S2", r0, HSpec("i", rho=rho), nu=1.0),
                  NoiseSpec.gaussian(var))
    assert cfg.loads(cfg.dumps(m)).model == m


def _run(argv):
    out = io.StringIO()
    code = run(argv, out)
    return code, out.getvalue()


def test_cli_simulate(tmp_path):
    dest = tmp_path / "traj.csv"
    code, header = _run(["simulate", "--model", "examples/fig1_left.toml", "--n", "1000",
                         "--seed", "7", "--out", str(dest)])
    assert code == 0
    rows = dest.read_text().splitlines()
    assert rows[0] == "t,y,u,coef" and len(rows) == 1001
    assert "# seed = 7" in header and "# burn_in = 500" in header


def test_cli_seed_fixes_bytes(tmp_path):
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    for dest, seed in ((a, "3"), (b, "3"), (c, "4")):
        _run(["simulate", "--model", "fig2_left", "--n", "200", "--seed", seed, "--out", str(dest)])
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_cli_classify_gaussian_is_geometric(tmp_path):
    dest = tmp_path / "cert.txt"
    code, text = _run(["classify", "--model", "examples/fig1_left.toml", "--noise", "gaussian",
                       "--out", str(dest), "--companion-csv", str(tmp_path / "comp.csv")])
    assert code == 0 and "Geometric" in text
    assert "rate_class=Geometric" in dest.read_text()
    assert "# eta" in (tmp_path / "comp.csv").read_text()


def test_cli_classify_t_is_polynomial():
    code, text = _run(["classify", "--model", "fig1_left"])
    assert code == 0 and "class: Polynomial" in text


def test_cli_classify_not_covered():
    code, text = _run(["classify", "--model", "random_walk"])
    assert code == 2 and "NotCovered" in text


def test_cli_verify_drift():
    code, text = _run(["verify-drift", "--model", "examples/example1_rho1.toml", "--V", "poly",
                       "--s0", "4", "--reps", "20000"])
    assert code == 0
    assert "# pass = true" in text and "x1,margin,ci,pass" in text


def test_cli_verify_drift_random_walk_fails():
    code, text = _run(["verify-drift", "--model", "random_walk", "--V", "poly", "--s0", "2",
                       "--rho", "1", "--reps", "5000"])
    assert code == 2 and "# pass = false" in text


def test_cli_envelope():
    code, text = _run(["envelope", "--model", "fig1_left"])
    assert code == 0 and "passed = True" in text


def test_cli_mixing_and_acf(tmp_path):
    code, text = _run(["mixing", "--model", "example1_rho05", "--reps", "1000",
                       "--horizons", "1,2,5,10,20", "--seed", "1"])
    assert code in (0, 2) and "horizon,tv,ci" in text
    code, text = _run(["acf", "--model", "fig2_right", "--n", "2000", "--max-lag", "5"])
    assert code == 0 and text.splitlines()[-6].startswith("0,")


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["simulate"],
    ["simulate", "--model", "missing_file.toml"],
    ["mixing", "--model", "fig1_left", "--horizons", "1,x"],
])
def test_cli_usage_errors(argv):
    assert _run(argv)[0] == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "subgeo", "classify", "--model", "fig2_left"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "Subexponential" in res.stdout
