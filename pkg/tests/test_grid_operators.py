import numpy as np
import pytest
from hypothesis import given, strategies as st

from confens import operators as ops
from confens.grid import Axis, Grid
from confens.operators import commutator, parse, sym_product


def test_axis_spacing_and_points():
    a = Axis(-2.0, 2.0, 9)
    assert a.spacing == pytest.approx(0.5)
    assert a.points[0] == -2.0 and a.points[-1] == 2.0
    assert a.refined().spacing == pytest.approx(0.25)


@pytest.mark.parametrize("args", [(1.0, 0.0, 16), (0.0, 1.0, 4)])
def test_axis_rejects_bad_extent_or_count(args):
    with pytest.raises(ValueError):
        Axis(*args)


def test_grid_cell_volume_and_roundtrip():
    g = Grid(Axis(-1, 1, 11), Axis(-2, 2, 21), Axis(0, 3, 31))
    assert g.cell_volume == pytest.approx(0.2 * 0.2 * 0.1)
    assert Grid.from_dict(g.to_dict()) == g


def test_canonical_commutator_is_identity():
    # [q, p] / (i hbar) = 1
    c = commutator(ops.q(1), ops.p(1))
    assert c == ops.identity()


def test_commuting_operators_give_zero():
    assert commutator(ops.q(1), ops.q(2)).is_zero()
    assert commutator(ops.p(1), ops.q(2)).is_zero()


def test_commutator_p2_qp():
    # [p^2, (qp+pq)/2] / (i hbar) = -2 p^2
    c = commutator(ops.momentum(1, 2), ops.qp_sym(1), hbar=0.7)
    assert c == parse("-2*p1^2")


def test_sym_product_of_q_and_p_is_weyl_qp():
    assert sym_product(ops.q(1), ops.p(1)) == ops.qp_sym(1)


def test_parse_accepts_sym_alias():
    assert parse("q1*p1_sym") == ops.qp_sym(1)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 2.0))
def test_commutator_antisymmetric(a, b, hbar):
    M = parse(f"{a}*q1^2 + p1^2")
    N = parse(f"{b}*q1*p1 + q1")
    assert commutator(M, N, hbar) == commutator(N, M, hbar) * -1.0


def test_apply_matches_explicit_matrix():
    # the finite-difference action and the explicit matrix must agree on interior points
    ax = Axis(-6, 6, 48)
    pts = (ax.points, ax.points)
    q = ax.points
    psi = np.exp(-q[:, None] ** 2 / 2 - q[None, :] ** 2 / 2 + 0.3j * q[:, None]) / np.sqrt(np.pi)
    op = parse("p1^2 + q1*p1")
    direct = ops.apply(op, psi, pts, (ax.spacing, ax.spacing))
    M = ops.to_matrix(op, 1, ax.points)
    via_matrix = np.einsum("ij,jk->ik", M, psi)
    assert np.abs(direct - via_matrix)[2:-2].max() < 1e-10


def test_d1_adjoint_is_transpose():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(7, 5, 6))
    g = rng.normal(size=(7, 5, 6))
    for axis in range(3):
        lhs = np.sum(ops.d1(f, axis, 0.3) * g)
        rhs = np.sum(f * ops.d1_adjoint(g, axis, 0.3))
        assert lhs == pytest.approx(rhs, rel=1e-12)
