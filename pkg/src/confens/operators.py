"""Single- and two-particle quantum operators on the (q1, q2) grid.

Polynomial operators are stored by their Weyl symbol, a real polynomial in
``(q1, p1, q2, p2)``. A real symbol quantizes to a Hermitian operator, the
symbol of ``q1*p1`` is the symmetrized ``(q1 p1 + p1 q1)/2``, and the
commutator ``[M, N]/(i hbar)`` is the Moyal bracket of the symbols, which
terminates for polynomials.

Text grammar (see ``docs/grammar.md``): ``+ - * ^``, numeric literals and
the names ``q1 p1 q2 p2``; an optional ``_sym`` suffix on a name is
accepted and ignored, since every product is Weyl-symmetrized anyway.

Momentum acts through second-order central differences with one-sided
second-order stencils on the first and last grid points.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from . import _poly
from .errors import HermiticityError

NAMES = ("q1", "p1", "q2", "p2")
MAX_Q_DEGREE = 4
MAX_P_DEGREE = 2
MAX_MATRIX_N = 64
_PAIRS = [(0, 1), (2, 3)]


def d1(f, axis, h):
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def d1_adjoint(g, axis, h):
    """Transpose of the :func:`d1` stencil matrix applied to ``g``."""
    g = np.moveaxis(g, axis, 0)
    out = np.zeros_like(g)
    out[2:] += g[1:-1] / (2 * h)
    out[:-2] -= g[1:-1] / (2 * h)
    out[0] += -3 * g[0] / (2 * h)
    out[1] += 4 * g[0] / (2 * h)
    out[2] += -g[0] / (2 * h)
    out[-1] += 3 * g[-1] / (2 * h)
    out[-2] += -4 * g[-1] / (2 * h)
    out[-3] += g[-1] / (2 * h)
    return np.moveaxis(out, 0, axis)


def d2(f, axis, h):
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h ** 2
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h ** 2
    return np.moveaxis(out, 0, axis)


class WeylOperator:
    """Hermitian polynomial operator given by its real Weyl symbol."""

    __slots__ = ("_symbol",)

    def __init__(self, symbol):
        sym = _poly.clean({tuple(int(e) for e in k): float(v) for k, v in dict(symbol).items()})
        for k in sym:
            if len(k) != 4:
                raise ValueError("Weyl symbol exponents must be (q1, p1, q2, p2) tuples")
            if k[0] > MAX_Q_DEGREE or k[2] > MAX_Q_DEGREE:
                raise ValueError(f"position degree exceeds {MAX_Q_DEGREE} in term {k}")
            if k[1] > MAX_P_DEGREE or k[3] > MAX_P_DEGREE:
                raise ValueError(f"momentum degree exceeds {MAX_P_DEGREE} in term {k}")
        self._symbol = sym

    @property
    def symbol(self):
        return dict(self._symbol)

    def axes_used(self):
        used = set()
        for a, b, c, d in self._symbol:
            if a or b:
                used.add(1)
            if c or d:
                used.add(2)
        return used

    def __add__(self, other):
        if np.isscalar(other):
            other = identity() * other
        return WeylOperator(_poly.add(self._symbol, other._symbol))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return WeylOperator(_poly.scale(self._symbol, float(c)))

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def __eq__(self, other):
        return isinstance(other, WeylOperator) and self._symbol == other._symbol

    def __hash__(self):
        return hash(tuple(sorted(self._symbol.items())))

    def __repr__(self):
        return f"WeylOperator({str(self)!r})"

    def __str__(self):
        return _poly.to_string(self._symbol, NAMES)

    def is_zero(self):
        return not self._symbol


@dataclass(frozen=True, eq=False)
class ExplicitMatrix:
    """Dense single-particle operator on one axis (coarse grids only)."""

    axis: int
    matrix: np.ndarray
    tol: float = 1e-10

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("explicit operator must be a square matrix")
        if A.shape[0] > MAX_MATRIX_N:
            raise ValueError(f"explicit matrices are limited to n <= {MAX_MATRIX_N}")
        if self.axis not in (1, 2):
            raise ValueError("axis must be 1 or 2")
        anti = float(np.linalg.norm((A - A.conj().T) / 2))
        if anti > self.tol * max(1.0, float(np.linalg.norm(A))):
            raise HermiticityError(f"operator is not Hermitian: anti-Hermitian norm {anti:.3e}", anti)
        object.__setattr__(self, "matrix", A)

    def axes_used(self):
        return {self.axis}


def identity():
    return WeylOperator({(0, 0, 0, 0): 1.0})


def _key(axis, qpow, ppow):
    if axis == 1:
        return (qpow, ppow, 0, 0)
    if axis == 2:
        return (0, 0, qpow, ppow)
    raise ValueError("axis must be 1 or 2")


def position(axis, coeffs=(0.0, 1.0)):
    """Polynomial sum_i coeffs[i] q^i in the coordinate of particle ``axis``."""
    return WeylOperator({_key(axis, i, 0): c for i, c in enumerate(coeffs) if c})


def momentum(axis, power=1):
    return WeylOperator({_key(axis, 0, power): 1.0})


def q(axis):
    return position(axis)


def p(axis):
    return momentum(axis)


def qp_sym(axis):
    """(q p + p q)/2 for one particle."""
    return WeylOperator({_key(axis, 1, 1): 1.0})


def sym_product(A, B, hbar=1.0):
    """Weyl symbol of the Jordan product (AB + BA)/2."""
    f, g = A.symbol, B.symbol
    out = {}
    s = 0
    maxdeg = max((sum(k) for k in list(f) + list(g)), default=0)
    while s <= 2 * maxdeg:
        term = _poly.bidiff(f, g, _PAIRS, s)
        if term:
            # even part of exp(i hbar Λ / 2): (-1)^(s/2) (hbar/2)^s / s!
            c = (-1) ** (s // 2) * (hbar / 2) ** s / _factorial(s)
            out = _poly.add(out, _poly.scale(term, c))
        s += 2
    return WeylOperator(out)


def _factorial(n):
    r = 1
    for i in range(2, n + 1):
        r *= i
    return r


def commutator(A, B, hbar=1.0):
    """The operator [A, B]/(i hbar), Hermitian for Hermitian A and B."""
    return WeylOperator(_poly.moyal_bracket(A.symbol, B.symbol, _PAIRS, hbar))


def parse(text):
    return WeylOperator(_poly.parse(text, list(NAMES), aliases={"_sym": ""}))


def to_string(op):
    if isinstance(op, ExplicitMatrix):
        raise ValueError("explicit matrices have no text form")
    return str(op)


def _apply_axis(psi, axis_index, qpow, ppow, pts, h, hbar):
    if qpow == 0 and ppow == 0:
        return psi
    shape = [1] * psi.ndim
    shape[axis_index] = -1
    qv = pts.reshape(shape)

    def pn(f):
        if ppow == 0:
            return f
        if ppow == 1:
            return -1j * hbar * d1(f, axis_index, h)
        return -hbar ** 2 * d2(f, axis_index, h)

    if ppow == 0:
        return qv ** qpow * psi
    out = 0
    for j in range(qpow + 1):
        inner = psi if qpow - j == 0 else qv ** (qpow - j) * psi
        term = pn(inner)
        if j:
            term = qv ** j * term
        out = out + comb(qpow, j) * term
    return out / 2 ** qpow


def apply(op, psi, pts, spacing, hbar=1.0):
    """Apply an operator to a wavefunction whose axes 0, 1 are q1, q2.

    Trailing axes (e.g. the classical coordinate) are spectators.
    """
    psi = np.asarray(psi)
    if isinstance(op, ExplicitMatrix):
        ax = op.axis - 1
        if psi.shape[ax] != op.matrix.shape[0]:
            raise ValueError("explicit matrix size does not match the grid axis")
        return np.moveaxis(np.tensordot(op.matrix, psi, axes=([1], [ax])), 0, ax)
    out = np.zeros(psi.shape, dtype=complex)
    # group by the particle-1 factor so it is applied once per distinct monomial
    by_first = {}
    for (a, b, c, d), coef in op.symbol.items():
        by_first.setdefault((a, b), []).append((c, d, coef))
    for (a, b), rest in sorted(by_first.items()):
        phi = _apply_axis(psi, 0, a, b, pts[0], spacing[0], hbar)
        for c, d, coef in sorted(rest):
            out += coef * _apply_axis(phi, 1, c, d, pts[1], spacing[1], hbar)
    return out


def to_matrix(op, axis, pts, hbar=1.0):
    """Dense matrix of a single-particle Weyl operator on a coarse axis."""
    n = len(pts)
    if n > MAX_MATRIX_N:
        raise ValueError(f"explicit matrices are limited to n <= {MAX_MATRIX_N}")
    if op.axes_used() - {axis}:
        raise ValueError("operator acts on the other particle")
    h = pts[1] - pts[0]
    eye = np.eye(n, dtype=complex)
    cols = np.zeros((n, n), dtype=complex)
    for (a, b, c, d), coef in op.symbol.items():
        qpow, ppow = (a, b) if axis == 1 else (c, d)
        cols += coef * _apply_axis(eye, 0, qpow, ppow, np.asarray(pts), h, hbar)
    return cols
