"""Subcommand implementations behind ``ce``.

Each command reads a :class:`ScenarioConfig`, writes its artifacts into
``out`` atomically and returns an exit code (0 ok, 1 check failure).
Artifacts never contain timestamps or timings, so equal configs give
byte-identical files.
"""

import dataclasses
import hashlib
import itertools
import json
import os

import numpy as np

from . import acceptance
from . import operators as ops
from . import qubit_bit as qb
from . import scenarios as sc
from . import snapshot
from .conditioning import (entanglement_sweep, eq11_exponent, fmt, gaussian_entanglement, measure_and_condition,
                           rows_to_csv, schmidt_analysis, sweep_csv)
from .config import pauli_matrix
from .errors import ConfigError
from .dynamics import HybridBilinear, evolve, hamiltonian_to_dict
from .locality import (check_remote_invariance, check_strong_separability, control_detected,
                       exhibit_nonseparable_bracket)
from .observables import (BracketCache, Classical, PhasePolynomial, Quantum, value, verify_classical_isomorphism,
                          verify_quantum_isomorphism)

ARTIFACT_COMMANDS = ("evolve", "condition", "sweep", "brackets", "locality", "qubit-protocol", "gravity-demo")
COMMANDS = ARTIFACT_COMMANDS + ("selftest",)


def _num(v):
    v = float(v)
    return 0.0 if v == 0 else float(f"{v:.12g}")


def clean(obj):
    """JSON-ready copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {("/".join(map(str, k)) if isinstance(k, tuple) else str(k)): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dump_json(obj) -> str:
    return json.dumps(clean(obj), indent=2) + "\n"


def tree_digest(root) -> dict:
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = hashlib.sha256(fh.read()).hexdigest()
    return out


class _Writer:
    def __init__(self, out, quiet):
        self.out = out
        self.quiet = quiet

    def write(self, name, data):
        path = os.path.join(self.out, name)
        snapshot.atomic_write(path, data)
        if not self.quiet:
            print(f"wrote {path}")

    def say(self, msg):
        if not self.quiet:
            print(msg)


# --- commands -----------------------------------------------------------------------------------

def cmd_evolve(cfg, w, **_):
    h, t = cfg.hamiltonian(), cfg["time"]["t"]
    e0 = cfg.ensemble()
    e1 = evolve(e0, h, t)
    w.write("ensemble_initial.ce", snapshot.to_bytes(e0))
    w.write("ensemble_final.ce", snapshot.to_bytes(e1))
    summary = {"scenario": cfg.name, "hamiltonian": hamiltonian_to_dict(h), "t": t, "grid": e1.grid.to_dict(),
               "norm_initial": e0.norm, "norm_final": e1.norm,
               "means_final": {"q1": value(Quantum(ops.q(1)), e1), "q2": value(Quantum(ops.q(2)), e1),
                               "x": value(Classical(PhasePolynomial.parse("x")), e1)}}
    w.write("evolve.json", dump_json(summary))
    return 0


def cmd_condition(cfg, w, **_):
    h = acceptance._bilinear(cfg)
    m = cfg["measurement"]
    t, hbar = cfg["time"]["t"], cfg["initial"]["hbar"]
    data = cfg.product_data()
    kw = {}
    if not data.is_gaussian():
        g = cfg.grid()
        kw = dict(q1=g.q1, q2=g.q2, x_axis=g.x)
    st = measure_and_condition(data, h.g1, h.g2, t, m["a"], h.mode, path=m["path"], n=m["svd_n"], hbar=hbar, **kw)
    rep = schmidt_analysis(st)
    summary = {"scenario": cfg.name, "g1": h.g1, "g2": h.g2, "t": t, "a": m["a"], "mode": h.mode,
               "path": st.provenance, "K_a": st.K_a, "entropy": rep.entropy, "schmidt_rank": rep.schmidt_rank,
               "q1": st.q1.to_list(), "q2": st.q2.to_list()}
    if data.is_gaussian():
        summary["gaussian_entropy"] = gaussian_entanglement(eq11_exponent(data, h.g1, h.g2, t, m["a"], h.mode,
                                                                          hbar)).entropy
    w.write("condition.json", dump_json(summary))
    coeffs = [{"index": i, "coefficient": c} for i, c in enumerate(rep.schmidt_coefficients)]
    w.write("schmidt.csv", rows_to_csv(coeffs, ("index", "coefficient")))
    return 0


def cmd_sweep(cfg, w, **_):
    h = acceptance._bilinear(cfg)
    m = cfg["measurement"]
    data = cfg.product_data()
    if not data.is_gaussian():
        raise ConfigError("sweep needs Gaussian initial data", key="initial.kind")
    rows = entanglement_sweep(h.g1, h.g2, m["sweep_t"], m["sweep_a"], h.mode, data, n=m["svd_n"],
                              hbar=cfg["initial"]["hbar"])
    w.write("sweep.csv", sweep_csv(rows))
    return 0


BRACKET_FIELDS = ("kind", "label", "lhs", "rhs", "abs_error")


def cmd_brackets(cfg, w, **_):
    tol = cfg.tolerances
    e = evolve(cfg.ensemble(), cfg.hamiltonian(), cfg["time"]["t"])
    cache = BracketCache(e)
    rows = []
    F = [PhasePolynomial.parse(s) for s in cfg["observables"]["classical"]]
    M = [ops.parse(s) for s in cfg["observables"]["quantum"]]
    for f, g in itertools.combinations(F, 2):
        r = verify_classical_isomorphism(f, g, e, cache)
        rows.append({"kind": "classical", "label": r.label, "lhs": r.lhs, "rhs": r.rhs, "abs_error": r.abs_error})
    for A, B in itertools.combinations(M, 2):
        r = verify_quantum_isomorphism(A, B, e, cache)
        rows.append({"kind": "quantum", "label": r.label, "lhs": r.lhs, "rhs": r.rhs, "abs_error": r.abs_error})
    canon = [("{C[x], C[k]}", Classical(PhasePolynomial.parse("x")), Classical(PhasePolynomial.parse("k")))]
    canon += [(f"{{Q[q{a}], Q[p{a}]}}", Quantum(ops.q(a)), Quantum(ops.p(a))) for a in (1, 2)]
    for label, V, W in canon:
        b = cache.bracket(V, W)
        rows.append({"kind": "canonical", "label": label, "lhs": b, "rhs": 1.0, "abs_error": abs(b - 1.0)})
    w.write("brackets.csv", rows_to_csv(rows, BRACKET_FIELDS))
    iso = max((r["abs_error"] for r in rows if r["kind"] != "canonical"), default=0.0)
    can = max(r["abs_error"] for r in rows if r["kind"] == "canonical")
    ok = iso < tol["isomorphism"] and can < tol["canonical"]
    w.write("brackets.json", dump_json({"scenario": cfg.name, "t": cfg["time"]["t"], "grid": e.grid.to_dict(),
                                        "max_isomorphism_error": iso, "max_canonical_error": can,
                                        "tolerance": tol["isomorphism"], "passed": ok}))
    w.say(f"max isomorphism error {fmt(iso)} (tolerance {fmt(tol['isomorphism'])}), canonical {fmt(can)}")
    return 0 if ok else 1


def cmd_locality(cfg, w, **_):
    tol = cfg.tolerances
    h = acceptance._bilinear(cfg)
    samples = cfg["time"]["samples"]
    e0 = acceptance._locality_ensemble(cfg, samples)
    reports = []
    missed = []
    for side, g, remote in (("Q1", h.g1, 2), ("Q2", h.g2, 1)):
        reports += check_remote_invariance(side, e0, g, samples, acceptance._side_corpus(cfg, remote),
                                           tolerance=tol["locality_drift"],
                                           bracket_tolerance=tol["locality_bracket"])
        controls = check_remote_invariance(side, e0, g, samples, acceptance._side_corpus(cfg, 3 - remote),
                                           allow_same_side=True, tolerance=tol["locality_drift"])
        reports += controls
        if g != 0 and not control_detected(controls, tol["locality_control"]):
            missed.append(f"same-side controls under H_{side}C never drifted above {fmt(tol['locality_control'])}")
    F = [PhasePolynomial.parse(s) for s in cfg["observables"]["classical"]]
    M = [ops.parse(s) for s in cfg["observables"]["quantum"]]
    reports += check_strong_separability(e0, h, samples, F, M, tol["separability"])
    corr = exhibit_nonseparable_bracket(sc.correlated_ensemble(n=cfg["grid"]["n"]), F, M,
                                        tolerance=tol["nonseparable"] / 10)
    reports.append(dataclasses.replace(corr, expected="fail"))
    w.write("locality.json", json.dumps([clean(r.to_dict()) for r in reports], indent=2) + "\n")
    bad = [r for r in reports if r.unexpected]
    for r in bad:
        w.say(f"unexpected {r.verdict}: {r.label} (drift {fmt(r.max_drift)}, expected {r.expected})")
    for m in missed:
        w.say(m)
    return 1 if bad or missed else 0


QUBIT_FIELDS = ("record", "c", "probability", "negativity", "purity", "fidelity_rho0")


def cmd_qubit_protocol(cfg, w, communicate=None, **_):
    comm = cfg["qubit"]["communicate"] if communicate is None else communicate
    st = qb.run_protocol(cfg["qubit"]["p0"], communicate=comm)
    rho0 = qb.bell_pair_states()[0].matrix
    rows = []
    for c, p, rho in st.branches:
        rows.append({"record": "branch", "c": c, "probability": p, "negativity": qb.negativity(rho),
                     "purity": rho.purity(), "fidelity_rho0": float(np.trace(rho0 @ rho.matrix).real)})
    rows.append({"record": "final", "c": "", "probability": 1.0, "negativity": qb.negativity(st.state),
                 "purity": st.state.purity(), "fidelity_rho0": float(np.trace(rho0 @ st.state.matrix).real)})
    w.write("qubit_protocol.csv", rows_to_csv(rows, QUBIT_FIELDS))
    locc = qb.check_locc(st.transcript)
    w.write("transcript.json", dump_json({"p0": st.p0, "communicated": st.communicated, "locc": locc,
                                         "steps": [dataclasses.asdict(e) for e in st.transcript]}))
    w.say(f"final negativity {fmt(qb.negativity(st.state))}, LOCC transcript: {locc}")
    return 0 if locc else 1


def cmd_gravity_demo(cfg, w, **_):
    g = cfg["gravity"]
    init = tuple(qb.ket(k) for k in g["initial"])
    demo = qb.semiclassical_gravity_demo(g["lambda"], g["t_samples"], pauli_matrix(g["h1"]), pauli_matrix(g["h2"]),
                                         init, threshold=cfg.tolerances["gravity_signal"])
    w.write("gravity.csv", rows_to_csv(demo.rows, qb.DEMO_FIELDS))
    w.write("gravity.json", dump_json({"lambda": g["lambda"], "h1": g["h1"], "h2": g["h2"],
                                       "deviations": demo.deviations,
                                       "flagged": ["/".join(k) for k in demo.flagged]}))
    return 0


ACCEPTANCE_FIELDS = ("criterion", "title", "check", "value", "threshold", "relation", "verdict")


def cmd_selftest(cfg, w, **_):
    def progress(res):
        w.say(res.line())

    if not w.quiet:
        print(f"{'verdict':8s} criterion")
    results = acceptance.run(cfg, progress=progress)
    rows = []
    for res in results:
        for c in res.checks:
            thr = "/".join(fmt(x) for x in c.threshold) if c.relation == "in" else c.threshold
            rows.append({"criterion": res.number, "title": res.title, "check": c.name, "value": c.value,
                         "threshold": thr, "relation": c.relation, "verdict": "PASS" if c.passed else "FAIL"})
    w.write("acceptance.csv", rows_to_csv(rows, ACCEPTANCE_FIELDS))
    w.write("acceptance.json", dump_json([{"criterion": r.number, "title": r.title, "passed": r.passed,
                                            "details": r.details} for r in results]))
    n_pass = sum(r.passed for r in results)
    w.say(f"{n_pass}/{len(results)} criteria passed")
    return 0 if n_pass == len(results) else 1


HANDLERS = {"evolve": cmd_evolve, "condition": cmd_condition, "sweep": cmd_sweep, "brackets": cmd_brackets,
            "locality": cmd_locality, "qubit-protocol": cmd_qubit_protocol, "gravity-demo": cmd_gravity_demo,
            "selftest": cmd_selftest}


def run_command(cmd, cfg, out, quiet=False, communicate=None) -> int:
    if cmd not in HANDLERS:
        raise ValueError(f"unknown subcommand {cmd!r}")
    w = _Writer(out, quiet)
    w.write("effective_config.toml", cfg.to_toml())
    return HANDLERS[cmd](cfg, w, communicate=communicate)
