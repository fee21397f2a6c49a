"""Locality checks for the hybrid dynamics.

A one-sided interaction (only H_Q1C or only H_Q2C) must leave every
observable of the other quantum particle unchanged, and for initially
independent factors every classical observable keeps commuting with every
quantum observable as the ensemble evolves. Correlated initial ensembles
are the counterexample: some cross bracket is then nonzero.
"""

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import operators as ops
from .dynamics import HybridBilinear, evolve, hamiltonian_functional
from .errors import MisuseError, PreconditionError
from .observables import BracketCache, Classical, PhasePolynomial, Quantum, poisson_bracket, value

ANALYTIC_TOL = 1e-8
BRACKET_TOL = 1e-6
GRID_TOL = 1e-3
SIDES = ("Q1", "Q2")

F_CORPUS = tuple(PhasePolynomial.parse(s) for s in ("x", "k", "x*k", "x^2", "k^2"))


def m_corpus(axis=None):
    """q, p, q^2, p^2 and the symmetrized qp for one particle (or both when ``axis`` is None)."""
    axes = (1, 2) if axis is None else (axis,)
    out = []
    for a in axes:
        out += [ops.q(a), ops.p(a), ops.position(a, (0.0, 0.0, 1.0)), ops.momentum(a, 2), ops.qp_sym(a)]
    return out


@dataclass(frozen=True)
class LocalityReport:
    label: str
    values: tuple
    max_drift: float
    tolerance: float
    verdict: str
    times: tuple = ()
    bracket: Optional[float] = None
    expected: str = "pass"
    note: str = ""
    details: dict = field(default_factory=dict)

    @property
    def unexpected(self) -> bool:
        # "any": a same-side control, judged as a group by control_detected
        return self.expected != "any" and self.verdict != self.expected

    def to_dict(self):
        return {"label": self.label, "times": [_num(t) for t in self.times],
                "values": [_num(v) for v in self.values], "max_drift": _num(self.max_drift),
                "tolerance": _num(self.tolerance), "verdict": self.verdict, "expected": self.expected,
                "bracket": None if self.bracket is None else _num(self.bracket), "note": self.note}


def _num(v):
    return float(f"{float(v):.12g}")


def _verdict(drift, tol):
    return "pass" if drift < tol else "fail"


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=False) + "\n"


def one_sided_hamiltonian(side, g):
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    return HybridBilinear(g, 0.0) if side == "Q1" else HybridBilinear(0.0, g)


def check_remote_invariance(side, e0, g, t_samples, observables, allow_same_side=False,
                            tolerance=ANALYTIC_TOL, bracket_tolerance=BRACKET_TOL) -> List[LocalityReport]:
    """Track observables of the remote particle under a one-sided interaction.

    ``side="Q1"`` evolves with H_Q1C only (g2 = 0), so observables of
    particle 2 must stay constant; ``side="Q2"`` is the mirror case.
    Observables acting on the interacting particle are rejected unless
    ``allow_same_side`` is set, which is how planted controls are run. Some
    of those are conserved (p1 under x p1), so a control carries no
    individual expectation; :func:`control_detected` asks whether the group
    as a whole registered the interaction.
    """
    h = one_sided_hamiltonian(side, g)
    H = hamiltonian_functional(h)
    remote = 2 if side == "Q1" else 1
    times = tuple(float(t) for t in t_samples)
    evolved = [evolve(e0, h, t) for t in times]
    out = []
    for M in observables:
        M = ops.parse(M) if isinstance(M, str) else M
        used = M.axes_used()
        same = bool(used - {remote})
        if same and not allow_same_side:
            raise MisuseError(f"observable {M} acts on the interacting particle; remote invariance "
                              f"concerns particle {remote} only")
        Q = Quantum(M)
        v0 = value(Q, e0)
        vals = tuple(value(Q, e) for e in evolved)
        drift = max((abs(v - v0) for v in vals), default=0.0)
        br = poisson_bracket(Q, H, e0)
        verdict = _verdict(drift, tolerance)
        if not same and abs(br) >= bracket_tolerance:
            verdict = "fail"
        out.append(LocalityReport(f"<{M}> under H_{side}C", vals, drift, tolerance, verdict, times, br,
                                  expected="any" if same else "pass",
                                  note="same-side control" if same else "remote observable"))
    return out


def control_detected(reports, tolerance=GRID_TOL) -> bool:
    """True when some same-side control drifted by more than ``tolerance``."""
    return any(r.expected == "any" and r.max_drift > tolerance for r in reports)


def check_strong_separability(e0, h, t_samples, f_corpus=F_CORPUS, M_corpus=None,
                              tolerance=GRID_TOL) -> List[LocalityReport]:
    """|{C_f, Q_M}| along the flow for initially independent factors."""
    if e0.product is None:
        raise PreconditionError("strong separability needs a product initial ensemble; "
                                "use exhibit_nonseparable_bracket for correlated ones")
    M_corpus = list(M_corpus if M_corpus is not None else m_corpus())
    times = tuple(float(t) for t in t_samples)
    table = {}
    for t in times:
        cache = BracketCache(evolve(e0, h, t))
        for f in f_corpus:
            for M in M_corpus:
                table.setdefault((str(f), str(M)), []).append(cache.bracket(Classical(f), Quantum(M)))
    out = []
    for (f, M), vals in table.items():
        drift = max(abs(v) for v in vals)
        out.append(LocalityReport(f"{{C[{f}], Q[{M}]}}", tuple(vals), drift, tolerance,
                                  _verdict(drift, tolerance), times))
    return out


def exhibit_nonseparable_bracket(e_corr, f_corpus=F_CORPUS, M_corpus=None, tolerance=GRID_TOL) -> LocalityReport:
    """Search the corpus for a cross bracket larger than ten times ``tolerance``.

    The returned report names the largest pair. Its verdict is "fail"
    (separability violated) when one is found; otherwise the note reads
    "no violation found".
    """
    M_corpus = list(M_corpus if M_corpus is not None else m_corpus())
    cache = BracketCache(e_corr)
    best = None
    for f in f_corpus:
        for M in M_corpus:
            b = cache.bracket(Classical(f), Quantum(M))
            if best is None or abs(b) > abs(best[0]):
                best = (b, f, M)
    b, f, M = best
    threshold = 10 * tolerance
    found = abs(b) > threshold
    return LocalityReport(f"{{C[{f}], Q[{M}]}}", (b,), abs(b), threshold, _verdict(abs(b), threshold),
                          (float(e_corr.metadata.get("t", 0.0)),), b, expected="fail" if found else "pass",
                          note="violation exhibited" if found else "no violation found",
                          details={"f": str(f), "M": str(M)})


def cross_bracket(e, f, M) -> float:
    f = f if isinstance(f, PhasePolynomial) else PhasePolynomial.parse(f)
    M = ops.parse(M) if isinstance(M, str) else M
    return poisson_bracket(Classical(f), Quantum(M), e)


def max_abs(reports) -> float:
    return float(np.max([r.max_drift for r in reports])) if reports else 0.0
