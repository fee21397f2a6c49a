import numpy as np
import pytest
from hypothesis import given, strategies as st

from confens import scenarios as sc
from confens.dynamics import (
    ClassicalAnalog,
    HybridBilinear,
    ObservableHamiltonian,
    evolve,
    evolve_split_step,
    flow_map,
    hamiltonian_from_dict,
    hamiltonian_to_dict,
    nondimensionalize,
    rate_check,
    redimensionalize,
)
from confens.ensemble import HybridWavefunction, classical_marginal
from confens.errors import GridExtentError, PreconditionError, ResolutionError
from confens.grid import Axis, Grid
from confens.observables import classical, quantum


def test_hamiltonian_spec_validation_and_roundtrip():
    with pytest.raises(ValueError):
        HybridBilinear(1.0, np.inf)
    with pytest.raises(ValueError):
        HybridBilinear(1.0, 1.0, "both")
    h = ClassicalAnalog(0.5, -2.0, "sequential")
    assert hamiltonian_from_dict(hamiltonian_to_dict(h)) == h


@pytest.mark.parametrize("mode,sigma", [("simultaneous", 0.5), ("sequential", 1.0)])
def test_flow_map_shear(mode, sigma):
    fm = flow_map(HybridBilinear(1.0, 1.0, mode), 1.0)
    assert fm.sigma == sigma
    assert np.linalg.det(fm.matrix) == pytest.approx(1.0, abs=1e-14)
    assert np.array_equal(fm.matrix, [[1, sigma, -1], [0, 1, 0], [0, -1, 1]])


def test_t_zero_is_identity(sg0):
    e = evolve(sg0, sc.SG_HAMILTONIAN, 0.0)
    assert np.array_equal(e.P, sg0.P) and np.array_equal(e.S, sg0.S)


def test_g2_zero_formula(sg0):
    e = evolve(sg0, HybridBilinear(1.0, 0.0), 1.0)
    q1, q2, x = sg0.grid.mesh()
    ref = sg0.generator.P(q1 - x, q2, x)
    assert np.max(np.abs(e.P - ref)) < 1e-15
    assert np.max(np.abs(classical_marginal(e) - classical_marginal(sg0))) < 1e-10


def test_sequential_differs_by_shear_only(sg0):
    a = evolve(sg0, HybridBilinear(1, 1, "simultaneous"), 1.0)
    b = evolve(sg0, HybridBilinear(1, 1, "sequential"), 1.0)
    q1, q2, x = sg0.grid.mesh()
    assert np.max(np.abs(b.P - a.generator.P(q1 + 0.5 * q2, q2, x))) < 1e-12
    assert np.max(np.abs(b.P - a.P)) > 1e-3


@pytest.mark.parametrize("t", [0.3, 1.0, -0.7])
def test_norm_preserved(sg0, t):
    assert abs(evolve(sg0, sc.SG_HAMILTONIAN, t).norm - 1) < 1e-8


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_group_property(t1, t2, g1, g2):
    g = Grid(Axis.symmetric(10, 32), Axis.symmetric(7, 32), Axis.symmetric(10, 32))
    e = sc.sg_ensemble(grid=g)
    h = HybridBilinear(g1, g2)
    two = evolve(evolve(e, h, t1), h, t2)
    one = evolve(e, h, t1 + t2)
    assert np.max(np.abs(two.P - one.P)) < 1e-8
    assert abs(two.norm - 1) < 1e-8


def test_grid_extent_error(sg0):
    with pytest.raises(GridExtentError) as exc:
        evolve(sg0, HybridBilinear(4.0, 4.0), 3.0)
    assert exc.value.lost_mass > 1e-6


def test_interpolated_flow_tracks_analytic(sg0):
    h = HybridBilinear(0.5, 0.5)
    exact = evolve(sg0, h, 0.5)
    interp = evolve(sg0.without_generator(), h, 0.5)
    assert np.max(np.abs(interp.P - exact.P)) < 2e-3 * exact.P.max()
    assert abs(interp.norm - 1) < 1e-8


def test_observable_hamiltonian_has_no_flow(sg0):
    with pytest.raises(PreconditionError):
        evolve(sg0, ObservableHamiltonian(classical("k")), 1.0)


def test_classical_analog_matches_relabeled_hybrid(sg0):
    for mode in ("simultaneous", "sequential"):
        a = evolve(sg0, HybridBilinear(1.0, 1.0, mode), 1.0)
        b = evolve(sg0, ClassicalAnalog(1.0, 1.0, mode), 1.0)
        assert np.max(np.abs(a.P - b.P)) < 1e-12


# --- split step -------------------------------------------------------------------------

SPLIT = Grid(Axis.symmetric(10, 64), Axis.symmetric(7, 64), Axis.symmetric(9, 64))


@pytest.fixture(scope="module")
def split_pair():
    e0 = sc.sg_ensemble(grid=SPLIT)
    return e0, HybridWavefunction.from_ensemble(e0)


@pytest.mark.parametrize("n", [1, 7])
def test_split_step_single_factor_exact(split_pair, n):
    e0, w0 = split_pair
    h = HybridBilinear(1.0, 0.0)
    ref = HybridWavefunction.from_ensemble(evolve(e0, h, 1.0))
    assert ref.distance(evolve_split_step(w0, h, 1.0, n)) < 1e-6


def test_split_step_converges_to_flow(split_pair):
    e0, w0 = split_pair
    ref = HybridWavefunction.from_ensemble(evolve(e0, sc.SG_HAMILTONIAN, 1.0))
    assert ref.distance(evolve_split_step(w0, sc.SG_HAMILTONIAN, 1.0, 64)) < 1e-3
    lie = [ref.distance(evolve_split_step(w0, sc.SG_HAMILTONIAN, 1.0, n, "lie")) for n in (16, 32)]
    # first-order splitting halves the error per doubling
    assert 1.7 < lie[0] / lie[1] < 2.3


def test_classical_analog_split_step(split_pair):
    e0, w0 = split_pair
    h = ClassicalAnalog(1.0, 1.0)
    ref = HybridWavefunction.from_ensemble(evolve(e0, h, 1.0))
    assert ref.distance(evolve_split_step(w0, h, 1.0, 64)) < 1e-3


def test_sequential_split_step_matches_sequential_flow(split_pair):
    e0, w0 = split_pair
    h = HybridBilinear(1.0, 1.0, "sequential")
    ref = HybridWavefunction.from_ensemble(evolve(e0, h, 1.0))
    assert ref.distance(evolve_split_step(w0, h, 1.0, 8)) < 1e-6


def test_split_step_aliasing_detected():
    from confens.ensemble import GaussianWavepacket, make_product_ensemble
    g = Grid(Axis.symmetric(10, 48), Axis.symmetric(7, 32), Axis.symmetric(10, 40))
    d = sc.sg_data()
    # wavenumber close to the q1 Nyquist limit
    e0 = make_product_ensemble(GaussianWavepacket(wavenumber=6.9), d.psi2, d.P0, d.S0, g)
    with pytest.raises(ResolutionError):
        evolve_split_step(HybridWavefunction.from_ensemble(e0), sc.SG_HAMILTONIAN, 1.0, 4)


def test_split_step_rejects_zero_steps(split_pair):
    with pytest.raises(ValueError):
        evolve_split_step(split_pair[1], sc.SG_HAMILTONIAN, 1.0, 0)


# --- rate law -----------------------------------------------------------------------------

def test_rate_constant_functional(sg0):
    r = rate_check(sc.SG_HAMILTONIAN, classical("1"), sg0)
    assert abs(r.bracket_rate) < 1e-8 and abs(r.finite_difference_rate) < 1e-8


def test_rate_q1_symmetric(sg0):
    r = rate_check(HybridBilinear(1.0, 0.0), quantum("q1"), sg0)
    assert abs(r.bracket_rate) < 1e-6 and abs(r.finite_difference_rate) < 1e-6


def test_rate_q1_shifted(shifted0):
    r = rate_check(HybridBilinear(1.0, 0.0), quantum("q1"), shifted0)
    assert abs(r.bracket_rate - 1) < 1e-3
    assert abs(r.finite_difference_rate - 1) < 1e-3


@pytest.mark.parametrize("V", ["C:x", "C:k", "C:x*k", "Q:p2", "Q:q1*p1_sym", "Q:q2^2"])
def test_rate_corpus(V, sg1):
    kind, expr = V.split(":")
    obs = classical(expr) if kind == "C" else quantum(expr)
    r = rate_check(sc.SG_HAMILTONIAN, obs, sg1)
    assert r.abs_error < 1e-3


def test_rate_rejects_sequential(sg0):
    with pytest.raises(PreconditionError):
        rate_check(HybridBilinear(1, 1, "sequential"), quantum("q1"), sg0)


def test_nondimensionalization_roundtrip():
    g1, g2, t, c = nondimensionalize(2.0, 3.0, 0.5, 0.5, [1.0, 2.0])
    assert (g1, g2, t) == (1.0, 1.5, 1.0)
    assert np.allclose(c, [2.0, 4.0])
    back = redimensionalize(g1, g2, t, 0.5, 0.5, c)
    assert back[:3] == (2.0, 3.0, 0.5) and np.allclose(back[3], [1.0, 2.0])
