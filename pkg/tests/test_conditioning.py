import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from confens import operators as ops
from confens import scenarios as sc
from confens.conditioning import (
    GaussianExponent,
    eq11_exponent,
    entanglement_sweep,
    gaussian_entanglement,
    measure_and_condition,
    schmidt_analysis,
    sweep_csv,
)
from confens.dynamics import evolve
from confens.ensemble import ClassicalGaussian, GaussianWavepacket, ProductData, expectation_product, quantum_density_operator
from confens.errors import NormalizationError, PreconditionError, ZeroProbabilityError

SG = sc.sg_data()


def _vn(nu):
    return (nu + 0.5) * np.log(nu + 0.5) - (nu - 0.5) * np.log(nu - 0.5)


# closed form at a = 0: psi ~ exp(-q^T A q / 2), A = [[1, 1/2], [1/2, 9/4]] so nu^2 = A11 A22 / (4 det A) = 9/32
SG_ENTROPY = _vn(3 / (4 * np.sqrt(2)))


def test_closed_form_sg_state():
    s = measure_and_condition(SG, 1, 1, 1, 0.0)
    q1, q2 = s.q1.points[:, None], s.q2.points[None, :]
    ref = np.exp(-(q1 + q2 / 2) ** 2 / 2 - q2 ** 2 / 2 - q2 ** 2 / 2)
    ref = ref / np.sqrt(np.sum(ref ** 2) * s.q1.spacing * s.q2.spacing)
    assert np.max(np.abs(s.psi - ref)) < 1e-8
    assert s.K_a > 0 and s.provenance == "analytic-eq11"


@pytest.mark.parametrize("a", [0.0, 0.7])
def test_dual_path_conditioning(a):
    gs = measure_and_condition(SG, 1, 1, 1, a, path="grid-slice")
    an = measure_and_condition(SG, 1, 1, 1, a, q1=gs.q1, q2=gs.q2)
    assert gs.provenance == "grid-slice"
    assert an.distance(gs) < 1e-4


@pytest.mark.parametrize("g1,g2,t", [(0, 1, 1), (1, 0, 1), (1, 1, 0)])
def test_no_shear_factorizes(g1, g2, t):
    s = measure_and_condition(SG, g1, g2, t, 0.4)
    rep = schmidt_analysis(s)
    assert rep.schmidt_rank == 1 and rep.entropy < 1e-9


def test_zero_probability_outcome():
    with pytest.raises(ZeroProbabilityError):
        measure_and_condition(SG, 1, 1, 1, 10 * 1.0 * 8)


def test_schmidt_product_state():
    q = np.linspace(-6, 6, 48)
    h = q[1] - q[0]
    f = np.exp(-q ** 2 / 2 + 0.3j * q)
    psi = np.outer(f, np.exp(-(q - 1) ** 2))
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * h * h)
    r = schmidt_analysis(psi, h, h)
    assert r.entropy < 1e-9 and r.schmidt_rank == 1
    assert np.sum(r.schmidt_coefficients ** 2) == pytest.approx(1, abs=1e-6)


def test_schmidt_bell_like_toy():
    r = schmidt_analysis(np.diag([1, 1]) / np.sqrt(2))
    assert abs(r.entropy - np.log(2)) < 1e-10 and r.schmidt_rank == 2


def test_schmidt_rejects_unnormalized():
    with pytest.raises(NormalizationError):
        schmidt_analysis(np.eye(2))


def test_sg_entropy_two_oracles():
    s = measure_and_condition(SG, 1, 1, 1, 0.0)
    svd = schmidt_analysis(s).entropy
    gauss = gaussian_entanglement(eq11_exponent(SG, 1, 1, 1, 0.0))
    assert gauss.method == "gaussian-covariance"
    assert abs(gauss.entropy - SG_ENTROPY) < 1e-12
    assert abs(svd - SG_ENTROPY) < 1e-4
    assert gauss.details["nu"] == pytest.approx(3 / (4 * np.sqrt(2)), abs=1e-12)


def test_gaussian_product_has_zero_entropy():
    r = gaussian_entanglement(GaussianExponent.from_coefficients(0.5, 0.7, 0.0))
    assert r.entropy == 0.0 and r.details["nu"] == pytest.approx(0.5)


def test_gaussian_rejects_indefinite_form():
    with pytest.raises(PreconditionError):
        gaussian_entanglement(GaussianExponent.from_coefficients(0.5, 0.5, 2.0))


@given(st.floats(0.2, 5.0), st.floats(0.3, 2.0), st.floats(0.3, 2.0), st.floats(-1.0, 1.0))
def test_local_symplectic_scaling_invariance(c, alpha, beta, gfrac):
    gamma = gfrac * 2 * np.sqrt(alpha * beta) * 0.95
    base = gaussian_entanglement(GaussianExponent.from_coefficients(alpha, beta, gamma)).entropy
    # q1 -> c q1, q2 -> q2 / c
    scaled = GaussianExponent.from_coefficients(alpha * c ** 2, beta / c ** 2, gamma)
    assert abs(gaussian_entanglement(scaled).entropy - base) < 1e-8


@given(st.floats(-2, 2), st.floats(-1.5, 1.5), st.integers(-3, 3))
def test_local_unitary_invariance_of_svd_entropy(k, chirp, shift):
    s = measure_and_condition(SG, 1, 1, 1, 0.0, n=48)
    q1, q2 = s.q1.points[:, None], s.q2.points[None, :]
    base = schmidt_analysis(s).entropy
    psi = s.psi * np.exp(1j * (k * q1 + chirp * q2 ** 2))
    psi = np.roll(psi, shift, axis=1)
    assert abs(schmidt_analysis(psi, s.q1.spacing, s.q2.spacing).entropy - base) < 1e-8


def test_random_local_unitary_invariance():
    s = measure_and_condition(SG, 1, 1, 1, 0.0, n=32)
    U = unitary_group.rvs(32, random_state=1)
    V = unitary_group.rvs(32, random_state=2)
    psi = U @ s.psi @ V.T
    assert abs(schmidt_analysis(psi, s.q1.spacing, s.q2.spacing).entropy - schmidt_analysis(s).entropy) < 1e-8


def test_sweep_rows_and_a_independence():
    rows = entanglement_sweep(1, 1, [0.0, 1.0], [-1.0, 0.0, 1.0])
    assert all(r["entropy"] == 0.0 for r in rows if r["t"] == 0.0)
    ent = [r["entropy"] for r in rows if r["t"] == 1.0]
    assert max(ent) - min(ent) < 1e-6
    single = schmidt_analysis(measure_and_condition(SG, 1, 1, 1, 0.0)).entropy
    assert ent[1] == single
    csv = sweep_csv(rows).splitlines()
    assert csv[0] == "g1,g2,t,a,mode,entropy,schmidt_rank"
    assert len(csv) == 7


def test_entropy_grows_with_shear():
    ent = [r["entropy"] for r in entanglement_sweep(1, 1, [0.25, 0.5, 1.0, 1.5], [0.0])]
    assert all(b > a for a, b in zip(ent, ent[1:]))


def test_zero_coupling_column():
    rows = entanglement_sweep(1, 0, [0.5, 2.0], [0.0, 1.0])
    assert all(r["entropy"] == 0.0 for r in rows)


def test_nonzero_phase_gaussian_oracles_agree():
    data = ProductData.gaussian(GaussianWavepacket(0.3, 1.2, 0.5, 0.2), GaussianWavepacket(width=0.8),
                                ClassicalGaussian(momentum=0.4, chirp=0.3))
    s = measure_and_condition(data, 0.8, 1.3, 1.0, 0.2, n=96)
    g = gaussian_entanglement(eq11_exponent(data, 0.8, 1.3, 1.0, 0.2))
    assert abs(schmidt_analysis(s).entropy - g.entropy) < 1e-4


def test_mixture_consistent_with_conditional_components(sg1):
    # the unconditioned mixture is correlated with x, yet every component is pure
    m = quantum_density_operator(sg1)
    total = expectation_product(m, ops.q(1), ops.q(2))
    parts = sum(w * expectation_product(
        type(m)(np.array([1.0]), s[None], m.q1, m.q2), ops.q(1), ops.q(2)) for w, s in zip(m.weights, m.states))
    assert abs(total - parts) < 1e-6
    assert abs(total) > 1e-2
