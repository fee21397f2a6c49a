import os
import stat

import numpy as np
import pytest
from hypothesis import given, strategies as st

from confens import config, snapshot
from confens import scenarios as sc
from confens.dynamics import HybridBilinear
from confens.errors import ConfigError
from confens.grid import Axis, Grid

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


# --- snapshots ------------------------------------------------------------------------------

def test_snapshot_roundtrip_is_exact(sg1, tmp_path):
    p = tmp_path / "e.ce"
    snapshot.save(sg1, p)
    back = snapshot.load(p)
    assert np.array_equal(back.P, sg1.P) and np.array_equal(back.S, sg1.S)
    assert back.grid == sg1.grid and back.hbar == sg1.hbar
    assert back.metadata == {"scenario": "SG", "t": 1.0}
    assert p.read_bytes().startswith(b"ce-ensemble/1\n")


def test_snapshot_bytes_deterministic(sg0):
    assert snapshot.to_bytes(sg0) == snapshot.to_bytes(sc.sg_ensemble(n=64))


@pytest.mark.parametrize("mutate", [lambda b: b"xx" + b[2:], lambda b: b[:-8]])
def test_snapshot_rejects_corruption(sg0, mutate):
    with pytest.raises(snapshot.SnapshotError):
        snapshot.from_bytes(mutate(snapshot.to_bytes(sg0)))


def test_atomic_write_leaves_no_temp_and_normal_mode(tmp_path):
    p = tmp_path / "sub" / "a.txt"
    snapshot.atomic_write(p, "hello")
    assert p.read_text() == "hello"
    assert os.listdir(p.parent) == ["a.txt"]
    umask = os.umask(0)
    os.umask(umask)
    assert stat.S_IMODE(p.stat().st_mode) == 0o666 & ~umask


# --- configs -------------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_shipped_configs_load_and_roundtrip(name):
    cfg = config.load(os.path.join(CONFIGS, name))
    assert config.loads(cfg.to_toml()) == cfg


def test_default_is_sg():
    cfg = config.default()
    assert cfg.name == "SG"
    assert cfg.hamiltonian() == HybridBilinear(1.0, 1.0, "simultaneous")
    assert cfg["grid"]["n"] == 96


def _err(text):
    with pytest.raises(ConfigError) as exc:
        config.loads(text)
    return exc.value


def test_unknown_key_reports_line():
    e = _err('[scenario]\nname = "x"\n\n[grid]\nn = 32\nbogus = 1\n')
    assert e.line == 6 and "bogus" in str(e)


def test_unknown_section_rejected():
    assert "nope" in str(_err("[nope]\na = 1\n"))


def test_nonfinite_value_rejected():
    e = _err("[hamiltonian]\ntype = \"hybrid-bilinear\"\ng1 = nan\n")
    assert e.line == 3


def test_wrong_type_rejected():
    e = _err("[grid]\nn = \"many\"\n")
    assert e.key == "grid.n"


def test_toml_syntax_error_has_line():
    e = _err("[grid]\nn = = 3\n")
    assert e.line == 2


@pytest.mark.parametrize("text", [
    "[grid]\nn = 4\n",
    "[qubit]\np0 = 1.5\n",
    "[initial.psi1]\nwidth = 0.0\n",
    "[initial]\nhbar = -1.0\n",
    "[hamiltonian]\nmode = \"later\"\n",
    "[observables]\nclassical = [\"k^3\"]\n",
    "[gravity]\ninitial = [\"+\", \"w\"]\n",
    "[gravity]\nh1 = \"W\"\n",
    "[selftest]\ncriteria = [12]\n",
    "[initial]\nkind = \"expression\"\n",
])
def test_cross_checks(text):
    _err(text)


def test_expression_initial_data(tmp_path):
    text = """
[grid]
q1 = [-8.0, 8.0, 48]
q2 = [-8.0, 8.0, 48]
x = [-8.0, 8.0, 48]

[initial]
kind = "expression"

[initial.psi1]
log_amplitude = "-q^2/2"
phase = "0.5*q"

[initial.psi2]
log_amplitude = "-q^2"
phase = "0"

[initial.classical]
log_density = "-x^2 - 0.1*x^4"
action = "x"
"""
    cfg = config.loads(text)
    e = cfg.ensemble()
    assert abs(e.norm - 1) < 1e-8
    q1 = e.grid.mesh()[0]
    x = e.grid.mesh()[2]
    assert np.allclose((e.S - 0.5 * q1 - x)[e.support], 0, atol=1e-12)
    assert config.loads(cfg.to_toml()) == cfg


@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(["simultaneous", "sequential"]),
       st.integers(0, 2 ** 64 - 1), st.integers(8, 200))
def test_config_roundtrip_property(g1, g2, mode, seed, n):
    cfg = config.default().replace("hamiltonian", g1=g1, g2=g2, mode=mode)
    cfg = cfg.replace("scenario", seed=seed).replace("grid", n=n)
    back = config.loads(cfg.to_toml())
    assert back == cfg and back.hamiltonian() == HybridBilinear(g1, g2, mode)


def test_pauli_parser():
    assert np.allclose(config.pauli_matrix("Z"), np.diag([1, -1]))
    assert np.allclose(config.pauli_matrix("0.5*X + 2*I"), [[2, 0.5], [0.5, 2]])
    with pytest.raises(ValueError):
        config.pauli_matrix("Q")


def test_grid_builder_covers_explicit_axes():
    cfg = config.loads("[grid]\nq1 = [-5.0, 5.0, 16]\n")
    g = cfg.grid(times=(0.0,))
    assert g.q1 == Axis(-5.0, 5.0, 16)
    assert isinstance(g, Grid)
