"""Position measurement of the classical particle and entanglement of the outcome.

After the interaction the classical position is measured with result
``a``. For initially independent factors the quantum particles are left in

    psi(q1, q2 | a) = K_a psi1(q1 - g1 t a + sigma q2) psi2(q2)
                      sqrt(P0(a - g2 t q2)) exp(i S0(a - g2 t q2) / hbar)

which does not factorize when ``sigma != 0``. Two independent routes
measure the resulting entanglement: an SVD of the gridded state and, for
Gaussian inputs, the symplectic eigenvalue of the reduced covariance.
"""

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import HybridBilinear, evolve, shear
from .ensemble import (
    ProductData,
    conditional_wavefunction,
    make_product_ensemble,
)
from .ensemble import COND_REL
from .errors import NormalizationError, PreconditionError, ZeroProbabilityError
from .grid import Axis, Grid

SVD_N = 64
RANK_TOL = 1e-6
NORM_RTOL = 1e-4
PROVENANCES = ("analytic-eq11", "grid-slice")


@dataclass(frozen=True)
class ConditionalState:
    psi: np.ndarray
    a: float
    K_a: float
    provenance: str
    q1: Axis
    q2: Axis

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not self.K_a > 0:
            raise ValueError("normalization constant must be positive")
        n = float(np.sum(np.abs(self.psi) ** 2) * self.q1.spacing * self.q2.spacing)
        if abs(n - 1) > 1e-6:
            raise NormalizationError(f"conditional state has norm {n!r}", norm=n)

    def distance(self, other: "ConditionalState") -> float:
        """L2 distance, assuming a common (q1, q2) grid."""
        d = np.sum(np.abs(self.psi - other.psi) ** 2) * self.q1.spacing * self.q2.spacing
        return float(np.sqrt(d))


def _unnormalized_eq11(data: ProductData, g1, g2, t, a, mode, hbar):
    sigma = shear(g1, g2, t, mode)
    S0 = data.S0_callable()

    def f(q1, q2):
        xs = a - g2 * t * q2
        amp = np.sqrt(np.asarray(data.P0(xs), dtype=float))
        return data.psi1(q1 - g1 * t * a + sigma * q2) * data.psi2(q2) * amp * np.exp(1j * S0(xs) / hbar)

    return f


def _log_eq11(data: ProductData, g1, g2, t, a, mode, hbar):
    """Closed-form log of the unnormalized state, for Gaussian inputs."""
    sigma = shear(g1, g2, t, mode)
    p1, p2, c = data.psi1, data.psi2, data.P0

    def f(q1, q2):
        u = q1 - g1 * t * a + sigma * q2
        xs = a - g2 * t * q2
        return (p1.log_amplitude(u) + 1j * p1.phase(u) + p2.log_amplitude(q2) + 1j * p2.phase(q2)
                + 0.5 * c.log_density(xs) + 1j * c.action(xs) / hbar)

    return f


def measure_and_condition(data: ProductData, g1, g2, t, a, mode="simultaneous", q1: Optional[Axis] = None,
                          q2: Optional[Axis] = None, path="analytic-eq11", hbar=1.0, n=SVD_N,
                          x_axis: Optional[Axis] = None) -> ConditionalState:
    """Evolve, measure the classical position and condition on outcome ``a``.

    ``path="analytic-eq11"`` evaluates the closed-form conditional state on
    the (q1, q2) grid. ``path="grid-slice"`` builds the gridded ensemble,
    evolves it, drops the analytic generators and slices the plane x = a
    (the x axis is shifted so that ``a`` is a node).

    ``x_axis`` is the classical axis used for the marginal (zero-probability
    threshold, grid-slice path); it defaults to the covariance-based grid
    for Gaussian data and is required otherwise.
    """
    h = HybridBilinear(g1, g2, mode)
    big = None
    if x_axis is None or (path == "grid-slice" and (q1 is None or q2 is None)):
        if not data.is_gaussian():
            raise PreconditionError("pass explicit axes for non-Gaussian initial data")
        from .scenarios import default_grid
        big = default_grid(data, h, (0.0, t), n=n if path == "grid-slice" else 96)
    if q1 is None or q2 is None:
        if path == "grid-slice":
            d1, d2 = big.q1, big.q2
        else:
            d1, d2 = conditional_axes(data, g1, g2, t, a, mode, n, hbar)
        q1, q2 = q1 or d1, q2 or d2
    if path == "analytic-eq11":
        if not data.analytic:
            raise PreconditionError("the closed-form path needs analytic initial data")
        f = _unnormalized_eq11(data, g1, g2, t, a, mode, hbar)
        raw = f(q1.points[:, None], q2.points[None, :])
        mass = float(np.sum(np.abs(raw) ** 2) * q1.spacing * q2.spacing)
        # P_t(x) on the classical axis, integrated over a grid covering the evolved support
        gq1, gq2 = (big.q1, big.q2) if big is not None else (q1, q2)
        xs = (big.x if big is not None else x_axis).points
        marg = _marginal(data, g1, g2, t, mode, hbar, gq1, gq2, xs)
        threshold = COND_REL * float(marg.max())
        if not mass > threshold:
            raise ZeroProbabilityError(
                f"zero-probability conditioning: P(x={a}) = {mass:.3e} <= {threshold:.3e}", probability=mass)
        K = 1.0 / np.sqrt(mass)
        return ConditionalState(K * raw, float(a), float(K), path, q1, q2)
    if path == "grid-slice":
        xg = big.x if big is not None else x_axis
        grid = Grid(q1, q2, _aligned(xg, a))
        e0 = make_product_ensemble(data.psi1, data.psi2, data.P0, data.S0, grid, hbar)
        e = evolve(e0, h, t).without_generator()
        psi = conditional_wavefunction(e, a)
        px = float(np.sum(e.P[:, :, grid.x.nearest_index(a)]) * grid.q_cell)
        return ConditionalState(psi, float(a), float(1.0 / np.sqrt(px)), path, q1, q2)
    raise ValueError(f"path must be one of {PROVENANCES}")


def _marginal(data, g1, g2, t, mode, hbar, q1: Axis, q2: Axis, xs):
    out = np.empty(len(xs))
    Q1, Q2 = q1.points[:, None], q2.points[None, :]
    for i, x in enumerate(xs):
        f = _unnormalized_eq11(data, g1, g2, t, x, mode, hbar)
        out[i] = np.sum(np.abs(f(Q1, Q2)) ** 2) * q1.spacing * q2.spacing
    return out


def _aligned(axis: Axis, a: float) -> Axis:
    """Same spacing and count, shifted so ``a`` is a node."""
    h = axis.spacing
    k = round((a - axis.lower) / h)
    lower = a - k * h
    return Axis(lower, lower + (axis.n - 1) * h, axis.n)


def conditional_axes(data, g1, g2, t, a, mode="simultaneous", n=SVD_N, hbar=1.0, sigmas=8.0):
    """(q1, q2) axes covering ``sigmas`` standard deviations of the conditional state."""
    if not data.is_gaussian():
        raise PreconditionError("pass explicit axes for non-Gaussian initial data")
    ex = eq11_exponent(data, g1, g2, t, a, mode, hbar)
    cov = 0.5 * np.linalg.inv(ex.A.real)
    mean = np.linalg.solve(ex.A.real, ex.b.real)
    sd = np.sqrt(np.diag(cov))
    return tuple(Axis(m - sigmas * s, m + sigmas * s, n) for m, s in zip(mean, sd))


# --- Gaussian exponent data ----------------------------------------------------------------

@dataclass(frozen=True)
class GaussianExponent:
    """psi ~ exp(-1/2 q^T A q + b^T q) with complex symmetric A and complex b."""

    A: np.ndarray
    b: np.ndarray = None

    @classmethod
    def from_coefficients(cls, alpha, beta, gamma, phase_quadratic=None):
        """psi ~ exp(-alpha q1^2 - beta q2^2 - gamma q1 q2 + i phi); phi given as a 2x2 matrix F, phi = q^T F q."""
        A = np.array([[2 * alpha, gamma], [gamma, 2 * beta]], dtype=complex)
        if phase_quadratic is not None:
            A = A - 2j * np.asarray(phase_quadratic, dtype=float)
        return cls(A, np.zeros(2, dtype=complex))


def eq11_exponent(data: ProductData, g1, g2, t, a, mode="simultaneous", hbar=1.0) -> GaussianExponent:
    """Quadratic and linear coefficients of the conditional state for Gaussian inputs.

    The log of the unnormalized state is a quadratic polynomial, so
    centered second differences with unit step recover it exactly.
    """
    if not data.is_gaussian():
        raise PreconditionError("Gaussian exponent data needs Gaussian initial factors")
    f = _log_eq11(data, g1, g2, t, a, mode, hbar)
    e = np.eye(2)
    A = np.empty((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            pp = f(*(e[i] + e[j]))
            pm = f(*(e[i] - e[j]))
            mp = f(*(-e[i] + e[j]))
            mm = f(*(-e[i] - e[j]))
            A[i, j] = -(pp - pm - mp + mm) / 4
    b = np.array([(f(*e[i]) - f(*(-e[i]))) / 2 for i in range(2)])
    return GaussianExponent(0.5 * (A + A.T), b)


# --- entanglement quantifiers --------------------------------------------------------------

@dataclass(frozen=True)
class EntanglementReport:
    schmidt_coefficients: np.ndarray
    entropy: float
    schmidt_rank: int
    method: str
    details: dict = None


def _entropy(weights):
    # weights below rounding level of the largest are SVD noise; a single survivor is a product state
    w = np.asarray(weights, dtype=float)
    w = w[w > np.finfo(float).eps * w.max()]
    if w.size <= 1:
        return 0.0
    w = w / w.sum()
    return float(-np.sum(w * np.log(w)))


def schmidt_analysis(psi, dq1=1.0, dq2=1.0) -> EntanglementReport:
    """Schmidt decomposition of a two-particle wavefunction on a grid.

    ``psi`` holds samples on an (n1 x n2) grid with spacings ``dq1, dq2``
    (unit spacings treat it as a coefficient matrix).
    """
    if isinstance(psi, ConditionalState):
        psi, dq1, dq2 = psi.psi, psi.q1.spacing, psi.q2.spacing
    C = np.asarray(psi, dtype=complex) * np.sqrt(dq1 * dq2)
    norm = float(np.sum(np.abs(C) ** 2))
    if abs(norm - 1) > NORM_RTOL:
        raise NormalizationError(f"wavefunction norm {norm!r} deviates from 1", norm=norm)
    s = np.linalg.svd(C, compute_uv=False)
    return EntanglementReport(s, _entropy(s ** 2), int(np.sum(s > RANK_TOL)), "svd")


def gaussian_entanglement(ex: GaussianExponent, n_coefficients=64) -> EntanglementReport:
    """Entanglement entropy of a pure two-mode Gaussian state from its covariance.

    With A = U + iV the position covariance is U^-1 / 2, the momentum
    covariance (U + V U^-1 V) / 2 and the symmetrized cross term
    -U^-1 V / 2 (hbar = 1, vacuum variance 1/2). The symplectic eigenvalue
    of mode 1 is nu = sqrt(det of its 2x2 block).
    """
    A = np.asarray(ex.A, dtype=complex)
    U, V = A.real, A.imag
    if not np.allclose(A, A.T):
        raise PreconditionError("exponent matrix must be symmetric")
    if np.any(np.linalg.eigvalsh(0.5 * (U + U.T)) <= 0):
        raise PreconditionError("quadratic form is not positive definite")
    Ui = np.linalg.inv(U)
    xx = 0.5 * Ui
    pp = 0.5 * (U + V @ Ui @ V)
    xp = -0.5 * Ui @ V
    block = np.array([[xx[0, 0], xp[0, 0]], [xp[0, 0], pp[0, 0]]])
    nu = float(np.sqrt(max(np.linalg.det(block), 0.25)))
    if nu - 0.5 < 1e-15:
        lam = np.array([1.0])
        entropy = 0.0
    else:
        entropy = (nu + 0.5) * np.log(nu + 0.5) - (nu - 0.5) * np.log(nu - 0.5)
        r = (nu - 0.5) / (nu + 0.5)
        lam = (1 - r) * r ** np.arange(n_coefficients)
    coeffs = np.sqrt(lam)
    return EntanglementReport(coeffs, float(entropy), int(np.sum(coeffs > RANK_TOL)), "gaussian-covariance",
                              {"nu": nu, "covariance": np.block([[xx, xp], [xp.T, pp]])})


# --- sweeps ---------------------------------------------------------------------------------

SWEEP_FIELDS = ("g1", "g2", "t", "a", "mode", "entropy", "schmidt_rank")


def entanglement_sweep(g1, g2, t_values, a_values, mode="simultaneous", data: Optional[ProductData] = None,
                       n=SVD_N, hbar=1.0):
    """Entropy of the conditional state over a (t, a) grid, one dict per row."""
    data = data or ProductData.gaussian()
    rows = []
    for t in t_values:
        for a in a_values:
            st = measure_and_condition(data, g1, g2, t, a, mode, n=n, hbar=hbar)
            rep = schmidt_analysis(st)
            rows.append({"g1": float(g1), "g2": float(g2), "t": float(t), "a": float(a), "mode": mode,
                         "entropy": rep.entropy, "schmidt_rank": rep.schmidt_rank})
    return rows


def fmt(v):
    """12 significant digits; integers and strings unchanged."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "0" if v == 0 else f"{v:.12g}"
    return str(v)


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([fmt(r[f]) for f in fields])
    return buf.getvalue()


def sweep_csv(rows) -> str:
    return rows_to_csv(rows, SWEEP_FIELDS)
