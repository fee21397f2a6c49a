import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from confens import operators as ops
from confens import scenarios as sc
from confens.dynamics import HybridBilinear, evolve
from confens.ensemble import (
    ClassicalGaussian,
    Ensemble,
    GaussianWavepacket,
    HybridWavefunction,
    classical_marginal,
    classical_phase_density,
    conditional_wavefunction,
    expectation_product,
    make_product_ensemble,
    quantum_density_operator,
)
from confens.errors import (
    HermiticityError,
    MomentumTruncationError,
    NormalizationError,
    TailMassError,
    ZeroProbabilityError,
)
from confens.grid import Axis, Grid
from confens.observables import classical, quantum, value

GRID = Grid(Axis.symmetric(8.0, 48), Axis.symmetric(8.0, 48), Axis.symmetric(6.0, 48))


def unit_gauss(q):
    return np.pi ** -0.25 * np.exp(-q ** 2 / 2)


def P0(x):
    return np.pi ** -0.5 * np.exp(-x ** 2)


def _interior_l2(a, b, dq):
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) * dq))


def _aligned(psi, ref):
    # remove a global phase before comparing
    ov = np.vdot(ref, psi)
    return psi * np.conj(ov) / abs(ov)


# --- make_product_ensemble ---------------------------------------------------------------

def test_product_density_and_norm():
    e = make_product_ensemble(unit_gauss, unit_gauss, P0, 0.0, GRID)
    q1, q2, x = GRID.mesh()
    expect = unit_gauss(q1) ** 2 * unit_gauss(q2) ** 2 * P0(x)
    assert np.allclose(e.P, expect / (np.sum(expect) * GRID.cell_volume), rtol=1e-12, atol=0)
    assert abs(e.norm - 1) < 1e-8


def test_linear_classical_action_passes_through():
    e = make_product_ensemble(unit_gauss, unit_gauss, P0, lambda x: 2.0 * x, GRID)
    x = GRID.mesh()[2]
    assert np.allclose(e.S, np.broadcast_to(2.0 * x, GRID.shape), atol=1e-14)


def test_linear_quantum_phase_extracted_on_grid_arrays():
    q = GRID.q1.points
    psi1 = unit_gauss(q) * np.exp(1j * q)
    e = make_product_ensemble(psi1, unit_gauss(GRID.q2.points), P0(GRID.x.points), 0.0, GRID, hbar=0.5)
    q1 = GRID.mesh()[0]
    assert np.allclose(e.S[e.support], np.broadcast_to(0.5 * q1, GRID.shape)[e.support], atol=1e-12)


def test_unnormalized_input_rejected_with_norm():
    with pytest.raises(NormalizationError) as exc:
        make_product_ensemble(lambda q: 1.1 * unit_gauss(q), unit_gauss, P0, 0.0, GRID)
    assert exc.value.norm == pytest.approx(1.21, rel=1e-6)


def test_tail_mass_violation_names_axis():
    narrow = Grid(GRID.q1, Axis.symmetric(2.0, 48), GRID.x)
    with pytest.raises(TailMassError) as exc:
        make_product_ensemble(unit_gauss, unit_gauss, P0, 0.0, narrow)
    assert exc.value.axis == "q2"


def test_ensemble_rejects_unnormalized_density():
    P = np.full(GRID.shape, 2.0 / (np.prod(GRID.shape) * GRID.cell_volume))
    with pytest.raises(NormalizationError):
        Ensemble(GRID, P, np.zeros(GRID.shape))


def test_ensemble_is_immutable(sg0):
    with pytest.raises(ValueError):
        sg0.P[0, 0, 0] = 1.0


# --- marginals ---------------------------------------------------------------------------

def test_marginal_of_product_is_P0():
    e = make_product_ensemble(unit_gauss, unit_gauss, P0, 0.0, GRID)
    m = classical_marginal(e)
    ref = P0(GRID.x.points)
    ref = ref / (ref.sum() * GRID.x.spacing)
    assert np.max(np.abs(m - ref)) < 1e-10


def test_marginal_unchanged_when_g2_zero(sg0):
    e1 = evolve(sg0, HybridBilinear(1.0, 0.0), 1.0)
    assert np.max(np.abs(classical_marginal(e1) - classical_marginal(sg0))) < 1e-10


def test_sg_marginal_matches_quadrature(sg1):
    # x_t = x_0 + q2_0 with independent N(0, 1/2) terms, so P_t(x) is N(0, 1);
    # the quadrature route integrates the evolved generator directly
    g = sg1.grid
    m = classical_marginal(sg1)
    assert np.max(np.abs(m - stats.norm.pdf(g.x.points))) < 1e-6
    for xv in (-1.3, 0.0, 0.7, 2.1):
        val, _ = integrate.dblquad(lambda q2, q1: float(sg1.generator.P(q1, q2, xv)),
                                   g.q1.lower, g.q1.upper, g.q2.lower, g.q2.upper, epsabs=1e-12)
        assert abs(val - stats.norm.pdf(xv)) < 1e-6


# --- conditioning ------------------------------------------------------------------------

@pytest.mark.parametrize("a", [-1.0, 0.0, 0.8])
def test_conditioning_product_returns_factors(a):
    e = make_product_ensemble(unit_gauss, unit_gauss, P0, 0.0, GRID)
    psi = conditional_wavefunction(e, a)
    ref = unit_gauss(GRID.q1.points)[:, None] * unit_gauss(GRID.q2.points)[None, :]
    ref = ref / np.sqrt(np.sum(ref ** 2) * GRID.q_cell)
    assert _interior_l2(_aligned(psi, ref), ref, GRID.q_cell) < 1e-8


def test_conditioning_sg_matches_closed_form(sg1):
    g = sg1.grid
    q1, q2 = g.q1.points[:, None], g.q2.points[None, :]
    ref = np.exp(-(q1 + q2 / 2) ** 2 / 2 - q2 ** 2 / 2 - q2 ** 2 / 2)
    ref = ref / np.sqrt(np.sum(ref ** 2) * g.q_cell)
    psi = conditional_wavefunction(sg1, 0.0)
    assert _interior_l2(_aligned(psi, ref), ref, g.q_cell) < 1e-6


def test_conditioning_normalized(sg1):
    psi = conditional_wavefunction(sg1.without_generator(), 0.4)
    assert abs(np.sum(np.abs(psi) ** 2) * sg1.grid.q_cell - 1) < 1e-6


def test_conditioning_far_outside_support(sg0):
    with pytest.raises(ZeroProbabilityError) as exc:
        conditional_wavefunction(sg0, 10.0 * np.sqrt(0.5) * 10)
    assert exc.value.probability >= 0


def test_conditioning_at_ten_sigma(sg0):
    sd = np.sqrt(0.5)
    with pytest.raises(ZeroProbabilityError):
        conditional_wavefunction(sg0, 10 * sd)


# --- density operator and expectations ---------------------------------------------------

def test_density_operator_of_product_is_pure():
    e = make_product_ensemble(unit_gauss, unit_gauss, P0, 0.0, GRID)
    m = quantum_density_operator(e)
    ref = m.states[len(m.states) // 2]
    for s in m.states:
        assert _interior_l2(_aligned(s, ref), ref, m.q_cell) < 1e-8
    assert m.trace == pytest.approx(1.0, abs=1e-14)


def test_density_operator_weights_match_marginal(sg1):
    m = quantum_density_operator(sg1)
    marg = classical_marginal(sg1) * sg1.grid.x.spacing
    keep = np.isin(sg1.grid.x.points, m.x_values)
    assert np.max(np.abs(m.weights - marg[keep] / marg[keep].sum())) < 1e-8
    assert abs(marg[keep].sum() - 1) < 1e-8


def test_mixture_q1_matches_functional(shifted0):
    e = evolve(shifted0, sc.SG_HAMILTONIAN, 1.0)
    m = quantum_density_operator(e)
    via_mixture = expectation_product(m, ops.q(1), None)
    via_functional = value(quantum("q1"), e)
    assert abs(via_mixture - via_functional) < 1e-6
    assert abs(via_functional) > 0.1


def test_identity_expectation(sg1):
    assert abs(expectation_product(quantum_density_operator(sg1), None, None) - 1) < 1e-8


def test_q1q2_vanishes_at_t0(sg0):
    assert abs(expectation_product(quantum_density_operator(sg0), ops.q(1), ops.q(2))) < 1e-12


def test_witnesses_match_quadrature(sg1):
    m = quantum_density_operator(sg1)
    g = sg1.grid
    q1, q2, _ = g.mesh()
    # <q1 q2> is a plain 3-D moment of P
    ref = float(np.sum(sg1.P * q1 * q2) * g.cell_volume)
    assert abs(expectation_product(m, ops.q(1), ops.q(2)) - ref) < 1e-6
    # <p1 (x) q2> = integral P dS/dq1 q2 on the support; S is analytic here
    h = 1e-5
    dS = (sg1.generator.S(q1 + h, q2, g.mesh()[2]) - sg1.generator.S(q1 - h, q2, g.mesh()[2])) / (2 * h)
    ref = float(np.sum(sg1.P * dS * q2) * g.cell_volume)
    assert abs(expectation_product(m, ops.p(1), ops.q(2)) - ref) < 1e-6


def test_callable_and_matrix_operators_agree(sg1):
    m = quantum_density_operator(sg1)
    X = np.diag(m.q1.points)
    a = expectation_product(m, lambda q: q ** 2, None)
    b = expectation_product(m, X @ X, None)
    assert a == pytest.approx(b, abs=1e-10)


def test_non_hermitian_operator_rejected(sg1):
    m = quantum_density_operator(sg1)
    n = m.q1.n
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = 1.0 / m.q1.spacing   # forward difference, anti-Hermitian part
    with pytest.raises(HermiticityError):
        expectation_product(m, A, None)


def test_one_component_mixture_matches_direct(sg1):
    from confens.ensemble import PureStateMixture
    psi = conditional_wavefunction(sg1, 0.3)
    g = sg1.grid
    m = PureStateMixture(np.array([1.0]), psi[None], g.q1, g.q2)
    direct = np.vdot(psi, g.q1.points[:, None] * psi * g.q2.points[None, :] ** 2).real * g.q_cell
    assert abs(expectation_product(m, ops.q(1), ops.position(2, (0.0, 0.0, 1.0))) - direct) < 1e-8


# --- classical phase density -------------------------------------------------------------

def test_phase_density_single_bin():
    e = make_product_ensemble(unit_gauss, unit_gauss, P0, lambda x: 2.0 * x, GRID)
    rho = classical_phase_density(e, (-5.0, 5.0, 21))
    col = np.sum(rho.rho, axis=0) * rho.x.spacing * rho.dk
    j = int(np.searchsorted(rho.k_edges, 2.0, side="right") - 1)
    assert col[j] == pytest.approx(1.0, abs=1e-12)
    assert rho.total() == pytest.approx(1.0, abs=1e-6)


def test_phase_density_zero_action_is_P0_times_delta(sg0):
    rho = classical_phase_density(sg0, (-1.0, 1.0, 4))
    j = int(np.searchsorted(rho.k_edges, 0.0, side="right") - 1)
    marg = classical_marginal(sg0)
    assert np.allclose(rho.rho[:, j] * rho.dk, marg, atol=1e-10)
    assert np.all(np.delete(rho.rho, j, axis=1) == 0)


def test_phase_density_mean_matches_Ck(sg1):
    rho = classical_phase_density(sg1, (-12.0, 12.0, 481))
    assert abs(rho.mean(lambda x, k: k) - value(classical("k"), sg1)) < 1e-3


def test_phase_density_mean_matches_Ck_with_momentum():
    data = sc.sg_data(ClassicalGaussian(momentum=0.8, chirp=0.3))
    e0 = make_product_ensemble(data.psi1, data.psi2, data.P0, data.S0,
                               sc.default_grid(data, sc.SG_HAMILTONIAN, (0.0, 1.0), 64))
    e = evolve(e0, sc.SG_HAMILTONIAN, 1.0)
    rho = classical_phase_density(e, (-12.0, 12.0, 2401))
    ck = value(classical("k"), e)
    assert abs(ck - 0.8) < 1e-2
    assert abs(rho.mean(lambda x, k: k) - ck) < 1e-3


def test_phase_density_truncation(sg1):
    with pytest.raises(MomentumTruncationError) as exc:
        classical_phase_density(sg1, (1.0, 5.0, 10))
    assert exc.value.lost_mass > 1e-3


# --- representation round trip -----------------------------------------------------------

@given(st.floats(-2, 2), st.floats(-1.5, 1.5), st.floats(0.3, 2.0))
def test_wavefunction_roundtrip(k, chirp, hbar):
    g = Grid(Axis.symmetric(7.0, 24), Axis.symmetric(7.0, 24), Axis.symmetric(5.0, 24))
    psi = GaussianWavepacket(0.2, 1.0, k, chirp)
    e = make_product_ensemble(psi, GaussianWavepacket(), ClassicalGaussian(momentum=k), ClassicalGaussian(momentum=k).action, g, hbar)
    back = HybridWavefunction.from_ensemble(e).to_ensemble()
    assert np.array_equal(back.P, e.P) or np.max(np.abs(back.P - e.P)) <= 1e-15 * e.P.max()
    d = (back.S - e.S)[e.support] / (2 * np.pi * hbar)
    assert np.max(np.abs(d - np.round(d))) < 1e-9
    assert abs(back.norm - 1) < 1e-8
