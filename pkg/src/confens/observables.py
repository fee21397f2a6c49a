"""Observable functionals of an ensemble and their functional Poisson bracket.

Classical observables average a phase-space function ``f(x, k)`` with the
momentum read off the action gradient, ``k = dS/dx``. Quantum observables
are expectation values of an operator acting on the quantum coordinates,
which reduce to ``<Psi| M |Psi>`` for the hybrid wavefunction
``Psi = sqrt(P) exp(iS/hbar)``.

The bracket is

    {V, W} = integral (dV/dP dW/dS - dW/dP dV/dS)

and an observable evolves as ``dV/dt = {V, H}``.
"""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _poly
from . import operators as ops
from .errors import HermiticityError, UnsupportedOperationError
from .grid import Grid

MAX_X_DEGREE = 4
MAX_K_DEGREE = 2
VALUE_IMAG_TOL = 1e-6
BUMP_REL = 1e-6


# --- phase-space polynomials ---------------------------------------------------------------

class PhasePolynomial:
    """Polynomial f(x, k) = sum c_mn x^m k^n with m <= 4 and n <= 2."""

    __slots__ = ("_c",)

    def __init__(self, coeffs):
        c = _poly.clean({(int(m), int(n)): float(v) for (m, n), v in dict(coeffs).items()})
        for m, n in c:
            if m > MAX_X_DEGREE or n > MAX_K_DEGREE or m < 0 or n < 0:
                raise ValueError(f"term x^{m} k^{n} outside the supported degrees "
                                 f"(x <= {MAX_X_DEGREE}, k <= {MAX_K_DEGREE})")
        self._c = c

    @classmethod
    def parse(cls, text: str) -> "PhasePolynomial":
        return cls(_poly.parse(text, ["x", "k"]))

    @classmethod
    def constant(cls, c=1.0):
        return cls({(0, 0): c})

    @property
    def coeffs(self):
        return dict(self._c)

    def __call__(self, x, k):
        return _poly.evaluate(self._c, (x, k))

    def dx(self):
        return PhasePolynomial(_poly.deriv(self._c, 0))

    def dk(self):
        return PhasePolynomial(_poly.deriv(self._c, 1))

    def bracket(self, other: "PhasePolynomial") -> "PhasePolynomial":
        """Phase-space Poisson bracket df/dx dg/dk - dg/dx df/dk."""
        return PhasePolynomial(_poly.poisson_bracket(self._c, other._c, [(0, 1)]))

    @property
    def k_degree(self):
        return _poly.degree(self._c, 1)

    def __add__(self, other):
        if np.isscalar(other):
            other = PhasePolynomial.constant(other)
        return PhasePolynomial(_poly.add(self._c, other._c))

    __radd__ = __add__

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return PhasePolynomial(_poly.scale(self._c, float(c)))

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, PhasePolynomial) and self._c == other._c

    def __hash__(self):
        return hash(tuple(sorted(self._c.items())))

    def __str__(self):
        return _poly.to_string(self._c, ["x", "k"])

    def __repr__(self):
        return f"PhasePolynomial({str(self)!r})"


# --- functionals ------------------------------------------------------------------------------

@dataclass(frozen=True)
class Classical:
    f: PhasePolynomial

    @property
    def label(self):
        return f"C[{self.f}]"


@dataclass(frozen=True)
class Quantum:
    op: object

    @property
    def label(self):
        if isinstance(self.op, ops.ExplicitMatrix):
            return f"Q[matrix on particle {self.op.axis}]"
        return f"Q[{self.op}]"


@dataclass(frozen=True, eq=False)
class Custom:
    """User functional: ``value(state)`` plus optional derivative callables.

    Callables receive the ensemble (or an unnormalized :class:`Fields`) and
    return a float or grid arrays.
    """

    value_fn: Callable
    dP_fn: Optional[Callable] = None
    dS_fn: Optional[Callable] = None
    name: str = "custom"
    scale: Optional[float] = None

    @property
    def label(self):
        return self.name


class Fields(NamedTuple):
    """Raw (P, S) arrays; used for perturbed, unnormalized states."""

    grid: Grid
    P: np.ndarray
    S: np.ndarray
    hbar: float

    @property
    def support(self):
        return self.P > 1e-12 * self.P.max()

    def psi(self):
        return np.sqrt(self.P) * np.exp(1j * np.where(self.support, self.S, 0.0) / self.hbar)


def classical(expr) -> Classical:
    return Classical(expr if isinstance(expr, PhasePolynomial) else PhasePolynomial.parse(expr))


def quantum(op) -> Quantum:
    return Quantum(ops.parse(op) if isinstance(op, str) else op)


# --- gradients ---------------------------------------------------------------------------------

def support_gradient(S, supp, axis, h):
    """dS along ``axis``: central inside the support, one-sided at its edges, zero outside.

    At an edge cell the second-order one-sided stencil is used when three
    support points are available in that direction, else a first-order
    difference; isolated support points get zero.
    """
    S = np.moveaxis(np.where(supp, S, 0.0), axis, 0)
    m = np.moveaxis(supp, axis, 0)
    n = S.shape[0]
    out = np.zeros_like(S)
    inner = m[1:-1] & m[:-2] & m[2:]
    out[1:-1] = np.where(inner, (S[2:] - S[:-2]) / (2 * h), 0.0)
    edge = m.copy()
    edge[1:-1] &= ~inner
    idx = np.nonzero(edge)
    if idx[0].size:
        i, rest = idx[0], idx[1:]

        def ok(k):
            return (k >= 0) & (k < n) & m[(np.clip(k, 0, n - 1),) + rest]

        def val(k):
            return S[(np.clip(k, 0, n - 1),) + rest]

        g = np.zeros(i.size)
        done = np.zeros(i.size, dtype=bool)
        for cond, v in (
            (ok(i + 1) & ok(i + 2), (-3 * val(i) + 4 * val(i + 1) - val(i + 2)) / (2 * h)),
            (ok(i - 1) & ok(i - 2), (3 * val(i) - 4 * val(i - 1) + val(i - 2)) / (2 * h)),
            (ok(i + 1), (val(i + 1) - val(i)) / h),
            (ok(i - 1), (val(i) - val(i - 1)) / h),
        ):
            sel = cond & ~done
            g[sel] = v[sel]
            done |= sel
        out[idx] = g
    return np.moveaxis(out, 0, axis)


def support_edge_cells(supp, axis):
    """Support cells whose central stencil along ``axis`` leaves the support."""
    m = np.moveaxis(supp, axis, 0)
    edge = m.copy()
    edge[1:-1] &= ~(m[:-2] & m[2:])
    return int(edge.sum())


def grad_S(e, axis=2):
    cache = getattr(e, "_gradients", None)
    if cache is not None and axis in cache:
        return cache[axis]
    g = support_gradient(e.S, e.support, axis, e.grid.spacings[axis])
    g.setflags(write=False)
    if cache is not None:
        cache[axis] = g
    return g


def _x_values(grid):
    return grid.x.points[None, None, :]


# --- value and derivatives -------------------------------------------------------------------

def _quantum_density(op, e):
    """conj(Psi) M Psi on the full grid."""
    psi = e.psi()
    g = e.grid
    mpsi = ops.apply(op, psi, (g.q1.points, g.q2.points), (g.q1.spacing, g.q2.spacing), e.hbar)
    return np.conj(psi) * mpsi


def _split_symbol(op):
    """Weyl monomials with a hydrodynamic form, and the remainder."""
    if isinstance(op, ops.ExplicitMatrix):
        return {}, op
    hydro, rest = {}, {}
    for key, c in op.symbol.items():
        (rest if key[1] and key[3] else hydro)[key] = c
    return hydro, (ops.WeylOperator(rest) if rest else None)


def _divergence(f_mid, ax, h):
    """(F[j-1/2] - F[j+1/2]) / h on nodes, the adjoint of the forward difference."""
    f = np.moveaxis(f_mid, ax, 0)
    out = np.zeros((f.shape[0] + 1,) + f.shape[1:])
    out[:-1] -= f / h
    out[1:] += f / h
    return np.moveaxis(out, 0, ax)


def _monomial(key, e, derivatives):
    """<Psi|Weyl(q1^a p1^b q2^c p2^d)|Psi> in terms of P and S, at most one momentum factor.

    With R = sqrt(P) and primes along the momentum axis:
      n = 0:  int w P
      n = 1:  int w P S'
      n = 2:  int w P S'^2 + hbar^2 int w R'^2 - hbar^2 m(m-1)/4 int w/q^2 P
    where w is the position part and m the position power on the momentum axis.
    S' uses the support gradient; R'^2 uses forward differences on cell
    midpoints, which have a quarter of the central-difference error constant.
    The derivatives returned are the exact variations of these sums up to
    the one-sided rows at support edges.
    """
    a, b, c, d = key
    g = e.grid
    P = np.asarray(e.P)
    q1 = g.q1.points[:, None, None]
    q2 = g.q2.points[None, :, None]
    w = np.broadcast_to(q1 ** a * q2 ** c, g.shape)
    dv = g.cell_volume
    if not (b or d):
        return (float(np.sum(w * P) * dv),
                w if derivatives else None, np.zeros(g.shape) if derivatives else None)
    ax, n, m = (0, b, a) if b else (1, d, c)
    h = g.spacings[ax]
    supp = e.support
    Sg = grad_S(e, ax)
    hb = e.hbar
    if n == 1:
        val = float(np.sum(w * P * Sg) * dv)
        if not derivatives:
            return val, None, None
        return val, np.where(supp, w * Sg, 0.0), -ops.d1(w * P, ax, h)
    pts = g.axes[ax].points
    shape = [1, 1, 1]
    shape[ax] = -1
    mid = (0.5 * (pts[1:] + pts[:-1])).reshape(shape)
    wm = (q2 ** c if ax == 0 else q1 ** a) * mid ** m
    R = np.sqrt(P)
    Rm = np.moveaxis(R, ax, 0)
    DR = np.moveaxis(Rm[1:] - Rm[:-1], 0, ax) / h
    low = (m * (m - 1) / 4 * np.broadcast_to(q1 ** (a - 2 * (ax == 0)) * q2 ** (c - 2 * (ax == 1)), g.shape)
           if m >= 2 else 0.0)
    val = float((np.sum(w * P * Sg ** 2) + hb ** 2 * np.sum(wm * DR ** 2) - hb ** 2 * np.sum(low * P)) * dv)
    if not derivatives:
        return val, None, None
    safeR = np.where(supp, R, 1.0)
    dP = np.where(supp, w * Sg ** 2 + hb ** 2 * _divergence(wm * DR, ax, h) / safeR, 0.0) - hb ** 2 * low
    dS = -2.0 * ops.d1(w * P * Sg, ax, h)
    return val, dP, dS


def _quantum_terms(obs, e, derivatives):
    """Value (and derivatives) of a quantum observable.

    Monomials with momentum on at most one particle use the hydrodynamic
    form, whose discrete variations are exact; the rest (two-particle
    momentum products, explicit matrices) use conj(Psi) M Psi with the
    finite-difference operator.
    """
    g = e.grid
    hydro, rest = _split_symbol(obs.op)
    val = 0.0
    dP = np.zeros(g.shape)
    dS = np.zeros(g.shape)
    for key, coef in sorted(hydro.items()):
        v, p, s = _monomial(key, e, derivatives)
        val += coef * v
        if derivatives:
            dP += coef * p
            dS += coef * s
    if rest is not None:
        z = _quantum_density(rest, e)
        total = np.sum(z) * g.cell_volume
        if abs(total.imag) > VALUE_IMAG_TOL:
            raise HermiticityError(f"{obs.label} has imaginary part {total.imag:.3e}", abs(total.imag))
        val += float(total.real)
        if derivatives:
            supp = e.support
            dP += np.where(supp, z.real / np.where(supp, e.P, 1.0), 0.0)
            dS += 2.0 * z.imag / e.hbar
    return val, dP, dS


def value(obs, e) -> float:
    """Ensemble average of an observable functional."""
    g = e.grid
    if isinstance(obs, Classical):
        supp = e.support
        k = grad_S(e, 2)
        return float(np.sum(np.where(supp, e.P * obs.f(_x_values(g), k), 0.0)) * g.cell_volume)
    if isinstance(obs, Quantum):
        return _quantum_terms(obs, e, derivatives=False)[0]
    if isinstance(obs, Custom):
        return float(obs.value_fn(e))
    raise TypeError(f"not an observable functional: {obs!r}")


def _analytic_derivatives(obs, e):
    g = e.grid
    supp = e.support
    if isinstance(obs, Classical):
        k = grad_S(e, 2)
        x = _x_values(g)
        dP = np.where(supp, obs.f(x, k), 0.0) * np.ones(g.shape)
        fk = obs.f.dk()
        flux = e.P * fk(x, k) * np.ones(g.shape)
        dS = -ops.d1(flux, 2, g.x.spacing)
        return dP, dS
    if isinstance(obs, Quantum):
        return _quantum_terms(obs, e, derivatives=True)[1:]
    if isinstance(obs, Custom):
        if obs.dP_fn is None or obs.dS_fn is None:
            raise UnsupportedOperationError(f"{obs.label} provides no functional-derivative callables")
        return (np.broadcast_to(obs.dP_fn(e), g.shape).astype(float),
                np.broadcast_to(obs.dS_fn(e), g.shape).astype(float))
    raise TypeError(f"not an observable functional: {obs!r}")


def bump_size(obs, e) -> float:
    scale = getattr(obs, "scale", None)
    if scale is None:
        scale = abs(value(obs, e)) + 1.0
    return BUMP_REL * scale


def _numerical_derivative(obs, e, wrt, indices):
    if isinstance(obs, Custom) and (obs.dP_fn is None or obs.dS_fn is None):
        raise UnsupportedOperationError(f"{obs.label} provides no functional-derivative callables")
    g = e.grid
    h = bump_size(obs, e)
    amp = h / g.cell_volume
    P = np.array(e.P, dtype=float)
    S = np.array(e.S, dtype=float)
    out = np.empty(len(indices))
    for j, flat in enumerate(indices):
        idx = np.unravel_index(int(flat), g.shape)
        # a downward bump below P = 0 is replaced by the unbumped state (forward difference)
        steps = (1.0, -1.0) if wrt == "S" or P[idx] >= amp else (1.0, 0.0)
        vals = []
        for sgn in steps:
            Pb, Sb = P, S
            if wrt == "P":
                Pb = P.copy()
                Pb[idx] += sgn * amp
            else:
                Sb = S.copy()
                Sb[idx] += sgn * amp
            vals.append(value(obs, Fields(g, Pb, Sb, e.hbar)))
        out[j] = (vals[0] - vals[1]) / ((steps[0] - steps[1]) * h)
    return out


def functional_derivative(obs, e, wrt: str, method: str = "analytic", indices=None):
    """Functional derivative dV/dP or dV/dS on the grid.

    ``method="numerical"`` bumps single grid values by ``h / dv`` and takes a
    central difference; pass flat ``indices`` to limit the (costly) sweep.
    With ``indices`` given the result is a 1-D array at those points.
    """
    if wrt not in ("P", "S"):
        raise ValueError("wrt must be 'P' or 'S'")
    if method == "analytic":
        dP, dS = _analytic_derivatives(obs, e)
        full = dP if wrt == "P" else dS
        return full if indices is None else full.ravel()[np.asarray(indices)]
    if method == "numerical":
        if indices is None:
            indices = np.arange(int(np.prod(e.grid.shape)))
        out = _numerical_derivative(obs, e, wrt, np.asarray(indices))
        return out.reshape(e.grid.shape) if len(out) == np.prod(e.grid.shape) and indices is None else out
    raise ValueError(f"unknown method {method!r}")


class BracketCache:
    """Memoizes functional derivatives of several functionals on one ensemble."""

    def __init__(self, e):
        self.e = e
        self._d = {}
        self._v = {}

    def _key(self, obs):
        return obs if not isinstance(obs, Custom) else id(obs)

    def derivatives(self, obs):
        k = self._key(obs)
        if k not in self._d:
            self._d[k] = _analytic_derivatives(obs, self.e)
        return self._d[k]

    def value(self, obs):
        k = self._key(obs)
        if k not in self._v:
            self._v[k] = value(obs, self.e)
        return self._v[k]

    def edge_cells(self, axis):
        k = ("edges", axis)
        if k not in self._v:
            self._v[k] = support_edge_cells(self.e.support, axis)
        return self._v[k]

    def bracket(self, V, W):
        vP, vS = self.derivatives(V)
        wP, wS = self.derivatives(W)
        return float((np.vdot(vP.ravel(), wS.ravel()) - np.vdot(wP.ravel(), vS.ravel())) * self.e.grid.cell_volume)


def poisson_bracket(V, W, e) -> float:
    return BracketCache(e).bracket(V, W)


# --- isomorphism checks ---------------------------------------------------------------------

@dataclass(frozen=True)
class IsomorphismReport:
    label: str
    lhs: float
    rhs: float
    abs_error: float
    boundary_cells: int = 0
    details: dict = field(default_factory=dict)


def verify_classical_isomorphism(f, g, e, cache: Optional[BracketCache] = None) -> IsomorphismReport:
    """{C_f, C_g} against C_{f,g} with the phase-space bracket."""
    f = f if isinstance(f, PhasePolynomial) else PhasePolynomial.parse(f)
    g = g if isinstance(g, PhasePolynomial) else PhasePolynomial.parse(g)
    cache = cache or BracketCache(e)
    lhs = cache.bracket(Classical(f), Classical(g))
    rhs = cache.value(Classical(f.bracket(g)))
    return IsomorphismReport(f"{{C[{f}], C[{g}]}}", lhs, rhs, abs(lhs - rhs), cache.edge_cells(2))


def verify_quantum_isomorphism(M, N, e, cache: Optional[BracketCache] = None) -> IsomorphismReport:
    """{Q_M, Q_N} against Q of the commutator [M, N]/(i hbar)."""
    M = ops.parse(M) if isinstance(M, str) else M
    N = ops.parse(N) if isinstance(N, str) else N
    cache = cache or BracketCache(e)
    lhs = cache.bracket(Quantum(M), Quantum(N))
    C = ops.commutator(M, N, e.hbar)
    rhs = 0.0 if C.is_zero() else _linear_value(C, cache)
    return IsomorphismReport(f"{{Q[{M}], Q[{N}]}}", lhs, rhs, abs(lhs - rhs),
                             cache.edge_cells(0) + cache.edge_cells(1),
                             {"commutator": str(C)})


def _linear_value(op, cache):
    # expectation is linear in the symbol; reuse cached monomial values
    total = 0.0
    for key, c in sorted(op.symbol.items()):
        total += c * cache.value(Quantum(ops.WeylOperator({key: 1.0})))
    return total
