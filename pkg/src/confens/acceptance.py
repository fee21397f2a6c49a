"""The acceptance criteria as plain functions.

Each ``criterion_N(cfg)`` returns a :class:`CriterionResult` holding named
checks (value, threshold, relation). The pytest acceptance module and
``ce selftest`` both call these, so the two cannot drift apart.
"""

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from . import config as _config
from . import operators as ops
from .conditioning import eq11_exponent, gaussian_entanglement, measure_and_condition, schmidt_analysis
from .dynamics import ClassicalAnalog, HybridBilinear, evolve, evolve_split_step, flow_map, rate_check, shear
from .ensemble import HybridWavefunction, make_product_ensemble
from .locality import check_remote_invariance, check_strong_separability, exhibit_nonseparable_bracket
from .observables import (BracketCache, Classical, PhasePolynomial, Quantum, verify_classical_isomorphism,
                          verify_quantum_isomorphism)
from . import qubit_bit as qb
from . import scenarios as sc


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: object        # float, or (lo, hi) for "in"
    relation: str            # "<", ">", "in"

    @property
    def passed(self) -> bool:
        v = self.value
        if not np.isfinite(v):
            return False
        if self.relation == "<":
            return v < self.threshold
        if self.relation == ">":
            return v > self.threshold
        lo, hi = self.threshold
        return lo <= v <= hi

    def describe(self):
        t = self.threshold
        bound = f"[{t[0]:.4g}, {t[1]:.4g}]" if self.relation == "in" else f"{t:.3g}"
        return f"{self.name} = {self.value:.6g} {self.relation} {bound}"


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: List[Check] = field(default_factory=list)
    details: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, value, threshold, relation="<"):
        self.checks.append(Check(name, float(value), threshold, relation))

    def line(self) -> str:
        bad = [c for c in self.checks if not c.passed]
        tail = "; ".join(c.describe() for c in bad) if bad else f"{len(self.checks)} check{'s' if len(self.checks) != 1 else ''}"
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number:2d} {self.title}: {tail}"


def _cfg(cfg):
    return cfg if cfg is not None else _config.default()


def _bilinear(cfg):
    h = cfg.hamiltonian()
    return h if isinstance(h, HybridBilinear) else HybridBilinear(h.g1, h.g2, h.mode)


# --- 1: entanglement from conditioning -----------------------------------------------------

def criterion_1(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(1, "entanglement generation by conditioning")
    h = _bilinear(cfg)
    data = cfg.product_data()
    t, a, n = cfg["time"]["t"], cfg["measurement"]["a"], cfg["measurement"]["svd_n"]
    st = measure_and_condition(data, h.g1, h.g2, t, a, h.mode, n=n, hbar=cfg["initial"]["hbar"])
    svd = schmidt_analysis(st)
    gauss = gaussian_entanglement(eq11_exponent(data, h.g1, h.g2, t, a, h.mode, cfg["initial"]["hbar"]))
    r.add("entropy", svd.entropy, tol["entropy_min"], ">")
    r.add("|svd - gaussian|", abs(svd.entropy - gauss.entropy), tol["entropy_match"])
    for label, (g1, g2, tt) in {"g1=0": (0.0, h.g2, t), "g2=0": (h.g1, 0.0, t), "t=0": (h.g1, h.g2, 0.0)}.items():
        s = schmidt_analysis(measure_and_condition(data, g1, g2, tt, a, h.mode, n=n)).entropy
        r.add(f"entropy({label})", s, tol["entropy_zero"])
    r.details.update(entropy=svd.entropy, gaussian_entropy=gauss.entropy, schmidt_rank=svd.schmidt_rank)
    return r


# --- 2: flow against split-step propagation -------------------------------------------------

def criterion_2(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(2, "flow matches split-step propagation")
    h = _bilinear(cfg)
    t = cfg["time"]["t"]
    e0 = cfg.ensemble()
    w0 = HybridWavefunction.from_ensemble(e0)
    w1 = HybridWavefunction.from_ensemble(evolve(e0, h, t))
    steps = sorted(cfg["selftest"]["split_steps"])
    errs = {n: w1.distance(evolve_split_step(w0, h, t, n)) for n in steps}
    lie = {n: w1.distance(evolve_split_step(w0, h, t, n, scheme="lie")) for n in steps}
    ref = 64 if 64 in errs else steps[len(steps) // 2]
    r.add(f"L2 distance at {ref} steps", errs[ref], tol["flow_l2"])
    for a, b in zip(steps, steps[1:]):
        r.add(f"error ratio {a}->{b} steps", errs[a] / errs[b], (tol["flow_ratio_min"], tol["flow_ratio_max"]), "in")
    r.details.update(strang_errors=errs, lie_errors=lie)
    return r


# --- 3: sequential against simultaneous ----------------------------------------------------

def criterion_3(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(3, "sequential variant differs by the shear only")
    h = _bilinear(cfg)
    t = cfg["time"]["t"]
    sim = HybridBilinear(h.g1, h.g2, "simultaneous")
    seq = HybridBilinear(h.g1, h.g2, "sequential")
    e0 = cfg.ensemble(times=(0.0, t))
    a, b = evolve(e0, sim, t), evolve(e0, seq, t)
    ds = flow_map(seq, t).sigma - flow_map(sim, t).sigma
    r.add("|delta sigma - g1 g2 t^2 / 2|", abs(ds - 0.5 * h.g1 * h.g2 * t * t), tol["sequential"])
    # undo the extra shear: P_seq(q1, q2, x) = P_sim(q1 + delta sigma q2, q2, x)
    d = shear(h.g1, h.g2, t, "sequential") - shear(h.g1, h.g2, t, "simultaneous")
    q1, q2, x = e0.grid.mesh()
    P = a.generator.P(q1 + d * q2, q2, x)
    S = a.generator.S(q1 + d * q2, q2, x)
    r.add("max |P_seq - compensated P_sim|", np.abs(b.P - P).max(), tol["sequential"])
    r.add("max |S_seq - compensated S_sim|", np.abs(np.broadcast_to(b.S - S, e0.grid.shape)).max(), tol["sequential"])
    r.add("max |P_seq - P_sim| (uncompensated, must differ)", np.abs(b.P - a.P).max(), tol["sequential"], ">")
    return r


# --- 4: bracket isomorphisms --------------------------------------------------------------

def _corpus_errors(e, f_corpus, m_corpus):
    cache = BracketCache(e)
    worst = (0.0, "")
    for f, g in itertools.combinations(f_corpus, 2):
        rep = verify_classical_isomorphism(f, g, e, cache)
        worst = max(worst, (rep.abs_error, rep.label))
    for A, B in itertools.combinations(m_corpus, 2):
        rep = verify_quantum_isomorphism(A, B, e, cache)
        worst = max(worst, (rep.abs_error, rep.label))
    canon = [cache.bracket(Classical(PhasePolynomial.parse("x")), Classical(PhasePolynomial.parse("k")))]
    canon += [cache.bracket(Quantum(ops.q(ax)), Quantum(ops.p(ax))) for ax in (1, 2)]
    return worst, max(abs(c - 1.0) for c in canon)


def random_seeds(seed, count):
    return np.random.SeedSequence(seed).spawn(count)


def criterion_4(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(4, "bracket isomorphisms")
    f_corpus = [PhasePolynomial.parse(s) for s in cfg["observables"]["classical"]]
    m_corpus = [ops.parse(s) for s in cfg["observables"]["quantum"]]
    n = cfg["selftest"]["n"]
    h, t = cfg.hamiltonian(), cfg["time"]["t"]
    base = cfg.replace("grid", n=n)
    # (name, builder(refined: bool))
    def sg(refined):
        e0 = base.ensemble()
        if refined:
            d = base.product_data()
            e0 = make_product_ensemble(d.psi1, d.psi2, d.P0, d.S0, e0.grid.refined(), e0.hbar)
        return evolve(e0, h, t)
    builders = [(f"{cfg.name} t={t:g}", sg)]
    seeds = random_seeds(cfg.seed, cfg["selftest"]["random_ensembles"])
    for i, s in enumerate(seeds):
        builders.append((f"random[{i}]", lambda refined, s=s: sc.random_ensemble(
            np.random.default_rng(s), n=2 * n - 1 if refined else n)))
    n_refine = 1 + min(cfg["selftest"]["refined_random"], len(seeds))
    rows = []
    worst_err, worst_canon, ratios = 0.0, 0.0, []
    for j, (name, build) in enumerate(builders):
        (err, label), canon = _corpus_errors(build(False), f_corpus, m_corpus)
        row = {"ensemble": name, "max_error": err, "worst_pair": label, "canonical": canon}
        worst_err, worst_canon = max(worst_err, err), max(worst_canon, canon)
        if j < n_refine:
            (err2, _), canon2 = _corpus_errors(build(True), f_corpus, m_corpus)
            row.update(max_error_refined=err2, ratio=err / err2)
            ratios.append(err / err2)
            worst_canon = max(worst_canon, canon2)
        rows.append(row)
    r.add("max |lhs - rhs| at default spacing", worst_err, tol["isomorphism"])
    lo, hi = tol["isomorphism_ratio_min"], tol["isomorphism_ratio_max"]
    if ratios:
        r.add("min error ratio on halving spacing", min(ratios), (lo, hi), "in")
        r.add("max error ratio on halving spacing", max(ratios), (lo, hi), "in")
    r.add("max |canonical bracket - 1|", worst_canon, tol["canonical"])
    r.details["ensembles"] = rows
    return r


# --- 5: locality under one-sided interactions ---------------------------------------------

def _locality_ensemble(cfg, times):
    data = cfg.product_data()
    g = cfg.grid(times=(0.0,) + tuple(times))
    return make_product_ensemble(data.psi1, data.psi2, data.P0, data.S0, g, cfg["initial"]["hbar"])


def criterion_5(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(5, "one-sided interactions leave the remote particle alone")
    h = _bilinear(cfg)
    samples = cfg["time"]["samples"]
    e0 = _locality_ensemble(cfg.replace("grid", n=cfg["selftest"]["n"]), samples)
    drift = bracket = 0.0
    control = {}
    reports = []
    for side, g, remote in (("Q1", h.g1, 2), ("Q2", h.g2, 1)):
        rem = check_remote_invariance(side, e0, g, samples, _side_corpus(cfg, remote),
                                      tolerance=tol["locality_drift"], bracket_tolerance=tol["locality_bracket"])
        same = check_remote_invariance(side, e0, g, samples, _side_corpus(cfg, 3 - remote), allow_same_side=True,
                                       tolerance=tol["locality_drift"])
        drift = max([drift] + [x.max_drift for x in rem])
        bracket = max([bracket] + [abs(x.bracket) for x in rem])
        control[side] = max(x.max_drift for x in same)
        reports += rem + same
    r.add("max remote drift", drift, tol["locality_drift"])
    r.add("max |{H_QC, Q_remote}|", bracket, tol["locality_bracket"])
    for side, v in control.items():
        r.add(f"same-side control drift under H_{side}C", v, tol["locality_control"], ">")
    r.details["reports"] = [x.to_dict() for x in reports]
    return r


def _side_corpus(cfg, axis):
    out = []
    for s in cfg["observables"]["quantum"]:
        M = ops.parse(s)
        if M.axes_used() == {axis}:
            out.append(M)
    return out


# --- 6: strong separability -----------------------------------------------------------------

def criterion_6(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(6, "strong separability and its correlated counterexample")
    samples = cfg["time"]["samples"]
    n = cfg["selftest"]["n"]
    e0 = _locality_ensemble(cfg.replace("grid", n=n), samples)
    f_corpus = [PhasePolynomial.parse(s) for s in cfg["observables"]["classical"]]
    m_corpus = [ops.parse(s) for s in cfg["observables"]["quantum"]]
    reps = check_strong_separability(e0, cfg.hamiltonian(), samples, f_corpus, m_corpus, tol["separability"])
    worst = max(reps, key=lambda x: x.max_drift)
    r.add("max |{C_f, Q_M}| along the flow", worst.max_drift, tol["separability"])
    corr = exhibit_nonseparable_bracket(sc.correlated_ensemble(n=n), f_corpus, m_corpus,
                                        tolerance=tol["nonseparable"] / 10)
    r.add("correlated |{C_f, Q_M}|", abs(corr.bracket), tol["nonseparable"], ">")
    r.details.update(worst_pair=worst.label, counterexample=corr.label)
    return r


# --- 7: rate law ---------------------------------------------------------------------------

def criterion_7(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(7, "rate law dV/dt = {V, H}")
    h = _bilinear(cfg)
    n, t, dt = cfg["selftest"]["n"], cfg["time"]["t"], cfg["time"]["dt"]
    base = cfg.replace("grid", n=n)
    corpus = [Classical(PhasePolynomial.parse(s)) for s in cfg["observables"]["classical"]]
    corpus += [Quantum(ops.parse(s)) for s in cfg["observables"]["quantum"]]
    span = (0.0, t - 2 * dt, t + 2 * dt)
    cases = [(f"{cfg.name} t={t:g}", h, evolve(base.ensemble(times=span), h, t))]
    cases.append(("shifted classical centre", h, evolve(sc.shifted_sg_ensemble(1.0, n=n, times=span), h, t)))
    rng = np.random.default_rng(random_seeds(cfg.seed, 1)[0])
    cases.append(("random ensemble", HybridBilinear(0.7, -0.4), sc.random_ensemble(rng, n=n)))
    worst = (0.0, "")
    for name, hh, e in cases:
        for V in corpus:
            rep = rate_check(hh, V, e, dt)
            worst = max(worst, (rep.abs_error, f"{name}: {rep.label}"))
    r.add("max |{V, H} - centered difference|", worst[0], tol["rate"])
    r.details["worst"] = worst[1]
    return r


# --- 8: classical analog ------------------------------------------------------------------

def criterion_8(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(8, "classical analog reproduces the hybrid flow")
    h = _bilinear(cfg)
    t = cfg["time"]["t"]
    for mode in ("simultaneous", "sequential"):
        e0 = cfg.ensemble(times=(0.0, t))
        a = evolve(e0, HybridBilinear(h.g1, h.g2, mode), t)
        # the analog lives on (x1, x2, x); relabel its grid onto (q1, q2, x)
        c0 = e0.regrid(e0.grid.relabeled(("x1", "x2", "x")))
        b = evolve(c0, ClassicalAnalog(h.g1, h.g2, mode), t)
        dev = max(np.abs(a.P - b.P).max(), np.abs(np.broadcast_to(a.S - b.S, a.P.shape)).max())
        r.add(f"max array deviation ({mode})", dev, tol["analog"])
    return r


# --- 9: qubit protocol ----------------------------------------------------------------------

def criterion_9(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(9, "Bell states entangled through a classical bit")
    r0, r1 = qb.bell_pair_states()
    s = 1 / np.sqrt(2)
    phi_minus = np.array([s, 0, 0, -s])
    psi_minus = np.array([0, s, -s, 0])
    r.add("|rho_0 - |Phi-><Phi-||", np.abs(r0.matrix - np.outer(phi_minus, phi_minus)).max(), tol["qubit_exact"])
    r.add("|rho_1 - |Psi-><Psi-||", np.abs(r1.matrix - np.outer(psi_minus, psi_minus)).max(), tol["qubit_exact"])
    r.add("|tr(rho_0 rho_1)|", abs(np.trace(r0.matrix @ r1.matrix)), tol["qubit_exact"])
    rep = qb.mixture_and_separability()
    r.add("|mixture - separable decomposition|", rep.max_deviation, tol["qubit_exact"])
    r.add("negativity(mixture)", rep.negativity, tol["negativity"])
    p0 = cfg["qubit"]["p0"]
    st = qb.run_protocol(p0, communicate=True)
    r.add("|final state - rho_0|", np.abs(st.state.matrix - r0.matrix).max(), tol["qubit_exact"])
    r.add("|negativity(final) - 0.5|", abs(qb.negativity(st.state) - 0.5), tol["negativity"])
    r.add("transcript is LOCC (1 = yes)", float(qb.check_locc(st.transcript)), 0.5, ">")
    r.details["p0"] = p0
    return r


# --- 10: gravity-style coupling ------------------------------------------------------------

def criterion_10(cfg=None) -> CriterionResult:
    cfg = _cfg(cfg)
    tol = cfg.tolerances
    r = CriterionResult(10, "gravity-style coupling changes local observables")
    init = tuple(qb.ket(k) for k in cfg["gravity"]["initial"])
    ts = cfg["gravity"]["t_samples"]
    Z = qb.Z
    # lambda = 0 against independently evolved single qubits
    d0 = qb.semiclassical_gravity_demo(0.0, ts, Z, Z, init)
    ref = {}
    for t in ts:
        for name, P in qb.PAULI.items():
            ref[(t, name, "A")] = qb.single_qubit_expectations(Z, init[0], t, P)
            ref[(t, name, "B")] = qb.single_qubit_expectations(Z, init[1], t, P)
    dev0 = max(abs(row["value"] - ref[(row["t"], row["observable"], row["party"])]) for row in d0.rows)
    r.add("lambda=0 vs uncoupled evolution", dev0, tol["gravity_null"])
    d = qb.semiclassical_gravity_demo(0.1, [1.0], Z, Z, init, threshold=tol["gravity_signal"])
    r.add("deviation of <X (x) 1> at t=1, lambda=0.1", d.deviations[("X", "A")], tol["gravity_signal"], ">")
    worst = 0.0
    for lam in (0.1, 0.7, 2.0):
        dc = qb.semiclassical_gravity_demo(lam, ts, 2.0 * qb.I2, -0.5 * qb.I2, init)
        worst = max([worst] + list(dc.deviations.values()))
    r.add("constant-h control deviation", worst, tol["gravity_null"])
    return r


# --- 11: determinism -------------------------------------------------------------------------

def criterion_11(cfg=None) -> CriterionResult:
    """Run every artifact-producing subcommand twice and compare the files byte for byte."""
    import tempfile
    from .runner import ARTIFACT_COMMANDS, run_command, tree_digest
    cfg = _cfg(cfg)
    r = CriterionResult(11, "identical configs give byte-identical artifacts")
    with tempfile.TemporaryDirectory() as tmp:
        digests = []
        for k in range(2):
            out = f"{tmp}/run{k}"
            for cmd in ARTIFACT_COMMANDS:
                run_command(cmd, cfg, out, quiet=True)
            digests.append(tree_digest(out))
    differing = sorted(set(digests[0].items()) ^ set(digests[1].items()))
    r.add("differing artifact files", len(differing), 0.5)
    r.add("artifact files produced", len(digests[0]), 0.5, ">")
    r.details["files"] = sorted(digests[0])
    return r


CRITERIA: Dict[int, Callable] = {i: globals()[f"criterion_{i}"] for i in range(1, 12)}


def run(cfg=None, numbers=None, progress=None) -> List[CriterionResult]:
    cfg = _cfg(cfg)
    numbers = numbers or cfg["selftest"]["criteria"]
    out = []
    for i in numbers:
        res = CRITERIA[i](cfg)
        out.append(res)
        if progress:
            progress(res)
    return out
