import json

import numpy as np
import pytest

from confens import operators as ops
from confens import scenarios as sc
from confens.dynamics import HybridBilinear, rate_check
from confens.errors import MisuseError, PreconditionError
from confens.locality import (
    check_remote_invariance,
    check_strong_separability,
    control_detected,
    cross_bracket,
    exhibit_nonseparable_bracket,
    m_corpus,
    max_abs,
    reports_to_json,
)
from confens.observables import quantum

TIMES = [0.25, 0.5, 1.0]


@pytest.fixture(scope="module")
def corr():
    return sc.correlated_ensemble(n=48)


def test_q1_side_leaves_particle_two_invariant(shifted0):
    reps = check_remote_invariance("Q1", shifted0, 1.0, TIMES, ["q2", "p2", "q2^2"])
    for r in reps:
        assert r.verdict == "pass" and not r.unexpected
        assert r.max_drift < 1e-8 and abs(r.bracket) < 1e-6


def test_q2_side_leaves_particle_one_invariant(shifted0):
    reps = check_remote_invariance("Q2", shifted0, 1.0, TIMES, m_corpus(1))
    assert all(r.max_drift < 1e-8 and r.verdict == "pass" for r in reps)


def test_wrong_particle_is_misuse(sg0):
    with pytest.raises(MisuseError):
        check_remote_invariance("Q1", sg0, 1.0, TIMES, ["q1"])


def test_same_side_control_detected(shifted0):
    reps = check_remote_invariance("Q1", shifted0, 1.0, TIMES, ["q1"], allow_same_side=True)
    (r,) = reps
    assert r.expected == "any" and not r.unexpected
    assert r.max_drift > 0.1
    assert control_detected(reps)
    # <q1> grows linearly at the rate given by the finite-difference oracle
    rate = rate_check(HybridBilinear(1.0, 0.0), quantum("q1"), shifted0)
    assert r.max_drift == pytest.approx(rate.finite_difference_rate * max(TIMES), abs=1e-3)


def test_conserved_control_alone_is_not_detected(sg0):
    reps = check_remote_invariance("Q1", sg0, 1.0, TIMES, ["p1"], allow_same_side=True)
    assert not control_detected(reps)


def test_strong_separability_at_t0(sg0):
    assert abs(cross_bracket(sg0, "x", "q1")) < 1e-6


def test_strong_separability_along_flow(sg0):
    reps = check_strong_separability(sg0, sc.SG_HAMILTONIAN, [0.0, 0.5, 1.0])
    assert len(reps) == 5 * 10
    assert all(r.verdict == "pass" for r in reps)
    assert max_abs(reps) < 1e-3


def test_strong_separability_shrinks_with_grid():
    coarse = max_abs(check_strong_separability(sc.sg_ensemble(n=33), sc.SG_HAMILTONIAN, [1.0]))
    fine = max_abs(check_strong_separability(sc.sg_ensemble(n=65), sc.SG_HAMILTONIAN, [1.0]))
    assert coarse / fine > 3.5


def test_strong_separability_requires_product(corr):
    with pytest.raises(PreconditionError):
        check_strong_separability(corr, sc.SG_HAMILTONIAN, [0.0])


def test_correlated_ensemble_violates_separability(corr):
    r = exhibit_nonseparable_bracket(corr)
    assert r.note == "violation exhibited" and r.verdict == "fail" and not r.unexpected
    assert abs(r.bracket) > 1e-2
    assert abs(cross_bracket(corr, r.details["f"], r.details["M"]) - r.bracket) < 1e-14


def test_momentum_position_pair_commutes_even_when_correlated(corr):
    # dC_k/dS = -dP/dx integrates to zero against a position-only symbol,
    # so this pair cannot witness the correlation
    assert abs(cross_bracket(corr, "k", "q1")) < 1e-8


def test_product_input_finds_no_violation(sg0):
    r = exhibit_nonseparable_bracket(sg0)
    assert r.note == "no violation found" and r.verdict == "pass"


@pytest.mark.parametrize("M", m_corpus())
def test_constant_classical_observable_commutes(corr, M):
    assert abs(cross_bracket(corr, "1", M)) < 1e-8


def test_reports_serialize(sg0):
    reps = check_remote_invariance("Q1", sg0, 1.0, [0.5], ["q2"])
    data = json.loads(reports_to_json(reps))
    assert data[0]["verdict"] == "pass" and data[0]["expected"] == "pass"
    assert set(data[0]) >= {"label", "times", "values", "max_drift", "tolerance", "bracket"}
