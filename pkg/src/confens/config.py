"""Scenario configuration files (TOML).

Every key is declared in ``SCHEMA``; unknown keys, wrong types and
non-finite numbers raise :class:`ConfigError` carrying the offending key
and, where it can be located, the line number. ``ScenarioConfig.to_toml``
writes the effective configuration (defaults filled in), which parses
back to an equal object. The full key reference lives in docs/config.md.
"""

import math
import re
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import tomli
import tomli_w
from scipy import integrate

from . import _poly
from .dynamics import ClassicalAnalog, HybridBilinear, MODES
from .ensemble import ClassicalGaussian, GaussianWavepacket, ProductData, make_product_ensemble
from .errors import ConfigError
from .grid import Axis, Grid
from .qubit_bit import ket


@dataclass(frozen=True)
class Key:
    kind: str            # float, int, str, bool, floats, strs, ints, axis
    default: Any = None
    choices: tuple = ()
    doc: str = ""


def _grid_vals(lo, hi, n):
    return [round(lo + (hi - lo) * i / (n - 1), 12) for i in range(n)]


DEFAULT_F = ["x", "k", "x*k", "x^2", "k^2"]
DEFAULT_M = ["q1", "p1", "q1^2", "p1^2", "q1*p1_sym", "q2", "p2", "q2^2", "p2^2", "q2*p2_sym"]

SCHEMA = {
    "scenario": {
        "name": Key("str", "SG", doc="label copied into artifacts"),
        "seed": Key("int", 0, doc="seed for randomized corpora"),
        "output_dir": Key("str", "out", doc="artifact directory (overridden by --out)"),
    },
    "grid": {
        "n": Key("int", 96, doc="points per axis for the covariance-based default grid"),
        "sigmas": Key("float", 8.0, doc="half-width of default axes in evolved standard deviations"),
        "q1": Key("axis", doc="explicit [lower, upper, n]; required for expression initial data"),
        "q2": Key("axis"),
        "x": Key("axis"),
    },
    "initial": {
        "kind": Key("str", "gaussian", ("gaussian", "expression")),
        "hbar": Key("float", 1.0),
    },
    "initial.psi1": {
        "center": Key("float", 0.0), "width": Key("float", 1.0),
        "wavenumber": Key("float", 0.0), "chirp": Key("float", 0.0),
        "log_amplitude": Key("str", doc="polynomial in q (expression kind)"),
        "phase": Key("str", doc="polynomial in q (expression kind)"),
    },
    "initial.classical": {
        "center": Key("float", 0.0), "width": Key("float", 1.0),
        "momentum": Key("float", 0.0), "chirp": Key("float", 0.0),
        "log_density": Key("str", doc="polynomial in x (expression kind)"),
        "action": Key("str", doc="polynomial in x (expression kind)"),
    },
    "hamiltonian": {
        "type": Key("str", "hybrid-bilinear", ("hybrid-bilinear", "classical-analog")),
        "g1": Key("float", 1.0),
        "g2": Key("float", 1.0),
        "mode": Key("str", "simultaneous", MODES),
    },
    "time": {
        "t": Key("float", 1.0, doc="evolution time for evolve/condition/brackets"),
        "samples": Key("floats", [0.5, 1.0, 2.0], doc="times for locality checks"),
        "dt": Key("float", 1e-3, doc="centered-difference step of the rate law check"),
    },
    "measurement": {
        "a": Key("float", 0.0, doc="measured classical position"),
        "path": Key("str", "analytic-eq11", ("analytic-eq11", "grid-slice")),
        "svd_n": Key("int", 64),
        "sweep_t": Key("floats", _grid_vals(0.0, 2.0, 9)),
        "sweep_a": Key("floats", [0.0]),
    },
    "observables": {
        "classical": Key("strs", DEFAULT_F, doc="f(x, k) polynomials"),
        "quantum": Key("strs", DEFAULT_M, doc="operator expressions"),
    },
    "qubit": {
        "p0": Key("float", 0.5, doc="probability of c = 0"),
        "communicate": Key("bool", False, doc="send c to party A (also --communicate)"),
    },
    "gravity": {
        "lambda": Key("float", 0.1),
        "h1": Key("str", "Z", doc="linear combination of I, X, Y, Z"),
        "h2": Key("str", "Z"),
        "t_samples": Key("floats", _grid_vals(0.0, 1.0, 5)),
        "initial": Key("strs", ["+", "+"], doc="single-qubit states of A and B"),
    },
    "tolerances": {
        "entropy_min": Key("float", 1e-2),
        "entropy_match": Key("float", 1e-4),
        "entropy_zero": Key("float", 1e-9),
        "flow_l2": Key("float", 1e-3),
        "flow_ratio_min": Key("float", 3.5),
        "flow_ratio_max": Key("float", 4.5),
        "sequential": Key("float", 1e-8),
        "isomorphism": Key("float", 1e-3),
        "isomorphism_ratio_min": Key("float", 3.5),
        "isomorphism_ratio_max": Key("float", 4.5),
        "canonical": Key("float", 1e-4),
        "locality_drift": Key("float", 1e-8),
        "locality_bracket": Key("float", 1e-6),
        "locality_control": Key("float", 1e-3),
        "separability": Key("float", 1e-3),
        "nonseparable": Key("float", 1e-2),
        "rate": Key("float", 1e-3),
        "analog": Key("float", 1e-12),
        "qubit_exact": Key("float", 1e-12),
        "negativity": Key("float", 1e-10),
        "gravity_null": Key("float", 1e-12),
        "gravity_signal": Key("float", 1e-6),
    },
    "selftest": {
        "criteria": Key("ints", list(range(1, 12))),
        "random_ensembles": Key("int", 10),
        "refined_random": Key("int", 10, doc="random ensembles also checked at halved spacing"),
        "split_steps": Key("ints", [32, 64, 128]),
        "n": Key("int", 96, doc="grid points per axis for bracket and locality criteria"),
    },
}
# psi2 shares the psi1 keys
SCHEMA["initial.psi2"] = SCHEMA["initial.psi1"]
SECTION_ORDER = ("scenario", "grid", "initial", "initial.psi1", "initial.psi2", "initial.classical",
                 "hamiltonian", "time", "measurement", "observables", "qubit", "gravity", "tolerances",
                 "selftest")
_GAUSS_KEYS = {"center", "width", "wavenumber", "chirp", "momentum"}
_EXPR_KEYS = {"log_amplitude", "phase", "log_density", "action"}


# --- locating keys in the source --------------------------------------------------------------

def _locate(text, path):
    """Best-effort 1-based line of ``path`` (tuple of keys) in TOML ``text``."""
    if not text:
        return None
    header = ""
    section_line = None
    full = ".".join(path)
    key = re.escape(path[-1])
    parent = ".".join(path[:-1])
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]$", line)
        if m:
            header = m.group(1).replace(" ", "")
            if header == full:
                return i
            if header == parent:
                section_line = i
            continue
        if header == parent and re.match(rf"^[\"']?{key}[\"']?\s*=", line):
            return i
        if len(path) > 1 and header == ".".join(path[:-2]):
            # inline table or dotted key: parent = { ..., key = ... } / parent.key = ...
            last = re.escape(path[-2])
            if re.match(rf"^{last}\s*=\s*\{{", line) and re.search(rf"[{{,]\s*{key}\s*=", line):
                return i
            if re.match(rf"^{last}\.{key}\s*=", line):
                return i
    return section_line


def _err(msg, path, text):
    line = _locate(text, path)
    where = f" (line {line})" if line else ""
    return ConfigError(f"{'.'.join(path)}: {msg}{where}", key=".".join(path), line=line)


# --- validation -----------------------------------------------------------------------------

def _finite(v, path, text):
    if not math.isfinite(v):
        raise _err(f"must be finite, got {v}", path, text)
    return v


def _coerce(spec: Key, v, path, text):
    k = spec.kind
    if k == "float":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _err(f"expected a number, got {v!r}", path, text)
        return _finite(float(v), path, text)
    if k == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            raise _err(f"expected an integer, got {v!r}", path, text)
        return v
    if k == "bool":
        if not isinstance(v, bool):
            raise _err(f"expected true or false, got {v!r}", path, text)
        return v
    if k == "str":
        if not isinstance(v, str):
            raise _err(f"expected a string, got {v!r}", path, text)
        if spec.choices and v not in spec.choices:
            raise _err(f"must be one of {list(spec.choices)}, got {v!r}", path, text)
        return v
    if k in ("floats", "ints", "strs"):
        if not isinstance(v, list):
            raise _err(f"expected an array, got {v!r}", path, text)
        inner = Key(k[:-1])
        return [_coerce(inner, x, path, text) for x in v]
    if k == "axis":
        if not (isinstance(v, list) and len(v) == 3):
            raise _err("expected [lower, upper, n]", path, text)
        lo = _coerce(Key("float"), v[0], path, text)
        hi = _coerce(Key("float"), v[1], path, text)
        n = _coerce(Key("int"), v[2], path, text)
        if not (hi > lo and n >= 3):
            raise _err("axis needs upper > lower and n >= 3", path, text)
        return [lo, hi, n]
    raise AssertionError(k)


def _flatten(raw, text):
    """Split the parsed document into {section: {key: value}} using dotted section names."""
    out = {}
    for name, body in raw.items():
        if name not in ("scenario", "grid", "initial", "hamiltonian", "time", "measurement", "observables",
                        "qubit", "gravity", "tolerances", "selftest"):
            raise _err("unknown section or key", (name,), text)
        if not isinstance(body, dict):
            raise _err("expected a table", (name,), text)
        if name == "initial":
            flat = {}
            for k, v in body.items():
                if k in ("psi1", "psi2", "classical"):
                    if not isinstance(v, dict):
                        raise _err("expected a table", (name, k), text)
                    out[f"initial.{k}"] = v
                else:
                    flat[k] = v
            out[name] = flat
        else:
            out[name] = body
    return out


def validate(raw: dict, text: str = "") -> dict:
    sections = _flatten(raw, text)
    data = {}
    for sec in SECTION_ORDER:
        schema = SCHEMA[sec]
        body = sections.get(sec, {})
        path0 = tuple(sec.split("."))
        for k in body:
            if k not in schema:
                raise _err(f"unknown key (allowed: {', '.join(schema)})", path0 + (k,), text)
        vals = {}
        for k, spec in schema.items():
            if k in body:
                vals[k] = _coerce(spec, body[k], path0 + (k,), text)
            elif spec.default is not None:
                vals[k] = list(spec.default) if isinstance(spec.default, list) else spec.default
        data[sec] = vals
    _cross_checks(data, sections, text)
    return data


def _cross_checks(data, sections, text):
    kind = data["initial"]["kind"]
    for sec in ("initial.psi1", "initial.psi2", "initial.classical"):
        given = set(sections.get(sec, {}))
        path0 = tuple(sec.split("."))
        bad = given & (_EXPR_KEYS if kind == "gaussian" else _GAUSS_KEYS)
        if bad:
            raise _err(f"not valid for initial.kind = {kind!r}", path0 + (sorted(bad)[0],), text)
        if kind == "expression":
            need = ("log_density", "action") if sec.endswith("classical") else ("log_amplitude", "phase")
            for k in need:
                if k not in given:
                    raise _err(f"required when initial.kind = 'expression'", path0 + (k,), text)
            for k in ("center", "width", "wavenumber", "chirp", "momentum"):
                data[sec].pop(k, None)
        else:
            if data[sec]["width"] <= 0:
                raise _err("width must be positive", path0 + ("width",), text)
    if kind == "expression":
        for ax in ("q1", "q2", "x"):
            if ax not in data["grid"]:
                raise _err("explicit axes are required for expression initial data", ("grid", ax), text)
    if data["initial"]["hbar"] <= 0:
        raise _err("hbar must be positive", ("initial", "hbar"), text)
    if data["grid"]["n"] < 8:
        raise _err("need at least 8 points", ("grid", "n"), text)
    if not 0.0 <= data["qubit"]["p0"] <= 1.0:
        raise _err("probability must lie in [0, 1]", ("qubit", "p0"), text)
    if len(data["gravity"]["initial"]) != 2:
        raise _err("expected two single-qubit states", ("gravity", "initial"), text)
    for label in data["gravity"]["initial"]:
        try:
            ket(label)
        except ValueError as exc:
            raise _err(str(exc), ("gravity", "initial"), text) from None
    for c in data["selftest"]["criteria"]:
        if not 1 <= c <= 11:
            raise _err(f"criterion {c} does not exist", ("selftest", "criteria"), text)
    for k in ("classical", "quantum"):
        for s in data["observables"][k]:
            try:
                _parse_observable(k, s)
            except ValueError as exc:
                raise _err(str(exc), ("observables", k), text) from None
    for k in ("h1", "h2"):
        try:
            pauli_matrix(data["gravity"][k])
        except ValueError as exc:
            raise _err(str(exc), ("gravity", k), text) from None


def _parse_observable(kind, s):
    from . import operators
    from .observables import PhasePolynomial
    return PhasePolynomial.parse(s) if kind == "classical" else operators.parse(s)


def pauli_matrix(text):
    """2x2 matrix from a real linear combination of I, X, Y, Z."""
    from .qubit_bit import I2, PAULI
    p = _poly.parse(text, ["I", "X", "Y", "Z"])
    mats = (I2, PAULI["X"], PAULI["Y"], PAULI["Z"])
    out = np.zeros((2, 2), dtype=complex)
    for k, c in p.items():
        if sum(k) == 0:
            out += c * I2
        elif sum(k) == 1:
            out += c * mats[k.index(1)]
        else:
            raise ValueError(f"{text!r} must be linear in I, X, Y, Z")
    return out


# --- the config object ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    data: dict
    source: Optional[str] = None

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.data == other.data

    def __getitem__(self, section):
        return self.data[section]

    @property
    def name(self):
        return self.data["scenario"]["name"]

    @property
    def seed(self):
        return self.data["scenario"]["seed"]

    @property
    def tolerances(self):
        return dict(self.data["tolerances"])

    def replace(self, section, **kw) -> "ScenarioConfig":
        data = {s: dict(v) for s, v in self.data.items()}
        data[section].update(kw)
        return ScenarioConfig(validate(_nest(data)), self.source)

    # builders
    def hamiltonian(self):
        h = self.data["hamiltonian"]
        cls = HybridBilinear if h["type"] == "hybrid-bilinear" else ClassicalAnalog
        return cls(h["g1"], h["g2"], h["mode"])

    def product_data(self) -> ProductData:
        ini = self.data["initial"]
        p1, p2, c = (self.data[f"initial.{s}"] for s in ("psi1", "psi2", "classical"))
        if ini["kind"] == "gaussian":
            mk = lambda d: GaussianWavepacket(d["center"], d["width"], d["wavenumber"], d["chirp"])
            cl = ClassicalGaussian(c["center"], c["width"], c["momentum"], c["chirp"])
            return ProductData(mk(p1), mk(p2), cl, cl.action)
        return ProductData(ExpressionWavepacket(p1["log_amplitude"], p1["phase"]),
                           ExpressionWavepacket(p2["log_amplitude"], p2["phase"]),
                           ExpressionDensity(c["log_density"]), _poly_callable(c["action"], "x"))

    def grid(self, times=None) -> Grid:
        g = self.data["grid"]
        if all(k in g for k in ("q1", "q2", "x")):
            return Grid(*(Axis(*g[k]) for k in ("q1", "q2", "x")))
        from .scenarios import default_grid
        times = (0.0, self.data["time"]["t"]) if times is None else times
        d = default_grid(self.product_data(), self.hamiltonian(), times, g["n"], g["sigmas"])
        axes = [Axis(*g[k]) if k in g else a for k, a in zip(("q1", "q2", "x"), d.axes)]
        return Grid(*axes)

    def ensemble(self, times=None):
        d = self.product_data()
        e = make_product_ensemble(d.psi1, d.psi2, d.P0, d.S0, self.grid(times), self.data["initial"]["hbar"])
        return e.with_metadata(scenario=self.name, t=0.0)

    # serialization
    def to_dict(self) -> dict:
        return _nest(self.data)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _nest(data):
    out = {}
    for sec in SECTION_ORDER:
        if sec not in data:
            continue
        body = {k: v for k, v in data[sec].items()}
        if "." in sec:
            a, b = sec.split(".")
            out.setdefault(a, {})[b] = body
        else:
            out.setdefault(sec, {}).update(body)
    # keep subtables after scalar keys for a readable dump
    if "initial" in out:
        ini = out["initial"]
        out["initial"] = {k: ini[k] for k in sorted(ini, key=lambda k: isinstance(ini[k], dict))}
    return out


def loads(text: str, source=None) -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{source or '<config>'}: {exc}", line=int(m.group(1)) if m else None) from None
    return ScenarioConfig(validate(raw, text), source)


def load(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not UTF-8 ({exc})") from None
    return loads(text, str(path))


def default() -> ScenarioConfig:
    return ScenarioConfig(validate({}))


# --- expression initial data ----------------------------------------------------------------

def _poly_callable(text, var):
    p = _poly.parse(text, [var])
    return lambda v: np.asarray(_poly.evaluate(p, (np.asarray(v, dtype=float),)), dtype=float) + 0.0 * v


def _normalizer(logf):
    val, _ = integrate.quad(lambda v: math.exp(logf(v)), -np.inf, np.inf, limit=200)
    if not (math.isfinite(val) and val > 0):
        raise ConfigError(f"initial data is not normalizable (integral {val})")
    return val


class ExpressionWavepacket:
    """psi(q) proportional to exp(log_amplitude(q) + i phase(q)), normalized on the real line."""

    def __init__(self, log_amplitude, phase):
        self.texts = (log_amplitude, phase)
        self._la = _poly_callable(log_amplitude, "q")
        self.phase = _poly_callable(phase, "q")
        self._shift = 0.5 * math.log(_normalizer(lambda v: 2 * float(self._la(v))))

    def log_amplitude(self, q):
        return self._la(q) - self._shift

    def __call__(self, q):
        return np.exp(self.log_amplitude(q) + 1j * self.phase(q))


class ExpressionDensity:
    def __init__(self, log_density):
        self.text = log_density
        self._ld = _poly_callable(log_density, "x")
        self._shift = math.log(_normalizer(lambda v: float(self._ld(v))))

    def log_density(self, x):
        return self._ld(x) - self._shift

    def __call__(self, x):
        return np.exp(self.log_density(x))
