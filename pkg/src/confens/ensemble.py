"""Hybrid ensembles (P, S) on a grid and the statistics derived from them.

An :class:`Ensemble` holds a probability density ``P(q1, q2, x)`` and its
conjugate action ``S(q1, q2, x)``. When the ensemble was built from
closed-form data it also carries an :class:`AnalyticGenerator`, so later
operations (flows, conditioning at off-grid points) can evaluate exactly
instead of interpolating.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import (
    HermiticityError,
    MomentumTruncationError,
    NormalizationError,
    TailMassError,
    ZeroProbabilityError,
)
from .grid import Axis, Grid

NORM_TOL = 1e-8
SUPPORT_REL = 1e-12
COND_REL = 1e-8
INPUT_NORM_RTOL = 1e-4
TAIL_TOL = 1e-6


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AnalyticGenerator:
    """Closed-form ``P(q1, q2, x)`` and ``S(q1, q2, x)`` callables."""

    P: Callable
    S: Callable

    def pulled_back(self, pullback):
        """Compose both fields with a coordinate substitution."""
        P, S = self.P, self.S
        return AnalyticGenerator(lambda q1, q2, x: P(*pullback(q1, q2, x)),
                                 lambda q1, q2, x: S(*pullback(q1, q2, x)))


@dataclass(frozen=True)
class Ensemble:
    grid: Grid
    P: np.ndarray
    S: np.ndarray
    hbar: float = 1.0
    generator: Optional[AnalyticGenerator] = None
    product: Optional["ProductData"] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        P = _readonly(self.P)
        S = _readonly(self.S)
        if P.shape != self.grid.shape or S.shape != self.grid.shape:
            raise ValueError(f"P, S must have grid shape {self.grid.shape}, got {P.shape}, {S.shape}")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("P must be finite and nonnegative")
        norm = float(np.sum(P) * self.grid.cell_volume)
        if abs(norm - 1.0) > NORM_TOL:
            raise NormalizationError(f"ensemble density integrates to {norm!r}, not 1", norm=norm)
        supp = P > SUPPORT_REL * P.max()
        if not np.all(np.isfinite(S[supp])):
            raise ValueError("S must be finite on the support of P")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @cached_property
    def support(self) -> np.ndarray:
        s = self.P > SUPPORT_REL * self.P.max()
        s.setflags(write=False)
        return s

    @cached_property
    def _gradients(self) -> dict:
        # memo for action gradients, filled by observables.grad_S
        return {}

    @property
    def norm(self) -> float:
        return float(np.sum(self.P) * self.grid.cell_volume)

    def S_on_support(self) -> np.ndarray:
        return np.where(self.support, self.S, 0.0)

    def psi(self) -> np.ndarray:
        """Hybrid wavefunction sqrt(P) exp(iS/hbar) as a plain array."""
        return np.sqrt(self.P) * np.exp(1j * self.S_on_support() / self.hbar)

    def regrid(self, grid: Grid) -> "Ensemble":
        """Re-evaluate the analytic generator on another grid."""
        if self.generator is None:
            raise ValueError("regridding requires analytic generators")
        return from_generator(self.generator, grid, self.hbar, product=self.product, metadata=self.metadata)

    def without_generator(self) -> "Ensemble":
        return Ensemble(self.grid, self.P, self.S, self.hbar, None, None, self.metadata)

    def with_metadata(self, **kw) -> "Ensemble":
        md = dict(self.metadata)
        md.update(kw)
        return Ensemble(self.grid, self.P, self.S, self.hbar, self.generator, self.product, md)


def from_generator(gen: AnalyticGenerator, grid: Grid, hbar=1.0, product=None, metadata=None) -> Ensemble:
    q1, q2, x = grid.mesh()
    P = np.broadcast_to(gen.P(q1, q2, x), grid.shape)
    S = np.broadcast_to(gen.S(q1, q2, x), grid.shape)
    return Ensemble(grid, P, S, hbar, gen, product, metadata or {})


# --- closed-form one-dimensional factors -------------------------------------------------

@dataclass(frozen=True)
class GaussianWavepacket:
    """psi(q) = (pi w^2)^(-1/4) exp(-(q-c)^2 / 2w^2 + i[k (q-c) + chirp (q-c)^2])."""

    center: float = 0.0
    width: float = 1.0
    wavenumber: float = 0.0
    chirp: float = 0.0

    def log_amplitude(self, q):
        return -0.25 * np.log(np.pi * self.width ** 2) - (q - self.center) ** 2 / (2 * self.width ** 2)

    def phase(self, q):
        d = q - self.center
        return self.wavenumber * d + self.chirp * d ** 2

    def __call__(self, q):
        return np.exp(self.log_amplitude(q) + 1j * self.phase(q))

    @property
    def variance(self):
        """Variance of |psi|^2."""
        return self.width ** 2 / 2


@dataclass(frozen=True)
class ClassicalGaussian:
    """P0(x) = (pi w^2)^(-1/2) exp(-(x-c)^2 / w^2),  S0(x) = momentum*x + chirp*x^2."""

    center: float = 0.0
    width: float = 1.0
    momentum: float = 0.0
    chirp: float = 0.0

    def log_density(self, x):
        return -0.5 * np.log(np.pi * self.width ** 2) - (x - self.center) ** 2 / self.width ** 2

    def density(self, x):
        return np.exp(self.log_density(x))

    __call__ = density

    def action(self, x):
        return self.momentum * x + self.chirp * x ** 2

    @property
    def variance(self):
        return self.width ** 2 / 2


@dataclass(frozen=True)
class ProductData:
    """Initially independent quantum and classical factors.

    ``psi1`` and ``psi2`` are callables (or arrays on the matching axis),
    ``P0`` and ``S0`` likewise for the classical particle.
    """

    psi1: object
    psi2: object
    P0: object
    S0: object = 0.0

    @property
    def analytic(self) -> bool:
        return all(callable(f) for f in (self.psi1, self.psi2, self.P0)) and (
            callable(self.S0) or np.isscalar(self.S0))

    def S0_callable(self):
        if callable(self.S0):
            return self.S0
        c = float(self.S0)
        return lambda x: np.full(np.shape(x), c)

    def is_gaussian(self) -> bool:
        return (isinstance(self.psi1, GaussianWavepacket) and isinstance(self.psi2, GaussianWavepacket)
                and isinstance(self.P0, ClassicalGaussian))

    @classmethod
    def gaussian(cls, psi1=None, psi2=None, classical=None):
        classical = classical or ClassicalGaussian()
        return cls(psi1 or GaussianWavepacket(), psi2 or GaussianWavepacket(), classical, classical.action)


def _phase_callable(psi):
    if hasattr(psi, "phase"):
        return psi.phase
    return lambda q: np.angle(psi(q))


def _unwrap_anchored(phase, anchor):
    out = np.array(phase, dtype=float)
    out[anchor:] = np.unwrap(out[anchor:])
    out[:anchor + 1] = np.unwrap(out[:anchor + 1][::-1])[::-1]
    return out


def _check_factor(values, axis: Axis, name: str, mass_fn=None):
    """Return on-grid mass after norm and tail checks."""
    mass = float(np.sum(values) * axis.spacing)
    if mass_fn is not None:
        # closed form: compare against a threefold wider grid to separate
        # a wrong normalization from a truncated tail
        wide = Axis(axis.lower - axis.upper + axis.lower, axis.upper + axis.upper - axis.lower, 3 * axis.n)
        total = float(np.sum(mass_fn(wide.points)) * wide.spacing)
        if abs(total - 1) > INPUT_NORM_RTOL:
            raise NormalizationError(f"{name} has norm {total!r}", norm=total)
        if total - mass > TAIL_TOL:
            raise TailMassError(f"{name}: mass {total - mass:.3e} lies outside the {name} axis",
                                axis=name, mass=total - mass)
    else:
        if abs(mass - 1) > INPUT_NORM_RTOL:
            raise NormalizationError(f"{name} has norm {mass!r}", norm=mass)
        k = max(1, axis.n // 20)
        edge = float((np.sum(values[:k]) + np.sum(values[-k:])) * axis.spacing)
        if edge > TAIL_TOL:
            raise TailMassError(f"{name}: mass {edge:.3e} in the outer cells of the axis", axis=name, mass=edge)
    return mass


def make_product_ensemble(psi1, psi2, P0, S0, grid: Grid, hbar: float = 1.0) -> Ensemble:
    """Ensemble with P = |psi1|^2 |psi2|^2 P0 and S = hbar arg psi1 + hbar arg psi2 + S0.

    Inputs may be callables (analytic generators are then retained) or arrays
    sampled on the corresponding axis. Each factor is renormalized on the
    grid after the norm and tail checks.
    """
    q1, q2, x = (a.points for a in grid.axes)
    data = ProductData(psi1, psi2, P0, S0)

    def sample(f, pts):
        return np.asarray(f(pts) if callable(f) else f)

    a1 = sample(psi1, q1).astype(complex)
    a2 = sample(psi2, q2).astype(complex)
    p0 = sample(P0, x).astype(float)
    s0 = np.asarray(data.S0_callable()(x) if (callable(S0) or np.isscalar(S0)) else S0, dtype=float)
    if np.any(p0 < 0):
        raise ValueError("P0 must be nonnegative")
    for arr, axis, name in ((a1, grid.q1, "q1"), (a2, grid.q2, "q2"), (p0, grid.x, "x")):
        if arr.shape != (axis.n,):
            raise ValueError(f"factor on {name} has shape {arr.shape}, expected ({axis.n},)")

    m1 = _check_factor(np.abs(a1) ** 2, grid.q1, "q1", (lambda q: np.abs(psi1(q)) ** 2) if callable(psi1) else None)
    m2 = _check_factor(np.abs(a2) ** 2, grid.q2, "q2", (lambda q: np.abs(psi2(q)) ** 2) if callable(psi2) else None)
    m0 = _check_factor(p0, grid.x, "x", P0 if callable(P0) else None)

    d1 = np.abs(a1) ** 2 / m1
    d2 = np.abs(a2) ** 2 / m2
    d0 = p0 / m0
    ph1 = _unwrap_anchored(np.angle(a1), int(np.argmax(d1)))
    ph2 = _unwrap_anchored(np.angle(a2), int(np.argmax(d2)))
    P = d1[:, None, None] * d2[None, :, None] * d0[None, None, :]
    S = hbar * (ph1[:, None, None] + ph2[None, :, None]) + s0[None, None, :]

    gen = None
    if data.analytic:
        f1, f2, fp = psi1, psi2, P0
        g1, g2, gs = _phase_callable(psi1), _phase_callable(psi2), data.S0_callable()
        norm = m1 * m2 * m0

        def Pf(q1, q2, x):
            return np.abs(f1(q1)) ** 2 * np.abs(f2(q2)) ** 2 * fp(x) / norm

        def Sf(q1, q2, x):
            return hbar * (g1(q1) + g2(q2)) + gs(x)

        gen = AnalyticGenerator(Pf, Sf)
        # keep the grid arrays bitwise consistent with the generator
        qq1, qq2, xx = grid.mesh()
        P = np.broadcast_to(Pf(qq1, qq2, xx), grid.shape)
        S = np.broadcast_to(Sf(qq1, qq2, xx), grid.shape)
    return Ensemble(grid, P, S, hbar, gen, data)


# --- hybrid wavefunction -----------------------------------------------------------------

@dataclass(frozen=True)
class HybridWavefunction:
    grid: Grid
    psi: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex, copy=True)
        if psi.shape != self.grid.shape:
            raise ValueError("wavefunction shape does not match grid")
        norm = float(np.sum(np.abs(psi) ** 2) * self.grid.cell_volume)
        if abs(norm - 1) > NORM_TOL:
            raise NormalizationError(f"hybrid wavefunction has norm {norm!r}", norm=norm)
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def from_ensemble(cls, e: Ensemble) -> "HybridWavefunction":
        return cls(e.grid, e.psi(), e.hbar)

    def to_ensemble(self, **kw) -> Ensemble:
        P = np.abs(self.psi) ** 2
        supp = P > SUPPORT_REL * P.max()
        phase = np.where(supp, np.angle(self.psi), 0.0)
        anchor = np.unravel_index(int(np.argmax(P)), P.shape)
        for axis in range(3):
            phase = np.apply_along_axis(_unwrap_anchored, axis, phase, anchor[axis])
        S = np.where(supp, self.hbar * phase, 0.0)
        return Ensemble(self.grid, P, S, self.hbar, **kw)

    def distance(self, other: "HybridWavefunction") -> float:
        """L2 distance on the common grid."""
        return float(np.sqrt(np.sum(np.abs(self.psi - other.psi) ** 2) * self.grid.cell_volume))


# --- marginals and conditioning ----------------------------------------------------------

def classical_marginal(e: Ensemble) -> np.ndarray:
    """P(x) = integral of P over q1, q2."""
    return np.sum(e.P, axis=(0, 1)) * e.grid.q_cell


def _cond_threshold(e: Ensemble) -> float:
    return COND_REL * float(classical_marginal(e).max())


def conditional_wavefunction(e: Ensemble, x_value: float) -> np.ndarray:
    """psi(q1, q2 | x) on the (q1, q2) grid, normalized.

    With analytic generators the field is evaluated exactly at ``x_value``;
    otherwise the nearest grid plane is used.
    """
    threshold = _cond_threshold(e)
    if e.generator is not None:
        q1, q2 = e.grid.q1.points[:, None], e.grid.q2.points[None, :]
        xv = np.full((1, 1), float(x_value))
        P = np.broadcast_to(e.generator.P(q1, q2, xv), (e.grid.q1.n, e.grid.q2.n))
        S = np.broadcast_to(e.generator.S(q1, q2, xv), P.shape)
    else:
        i = e.grid.x.nearest_index(x_value)
        P, S = e.P[:, :, i], e.S[:, :, i]
    px = float(np.sum(P) * e.grid.q_cell)
    if not px > threshold:
        raise ZeroProbabilityError(
            f"zero-probability conditioning: P(x={x_value}) = {px:.3e} <= {threshold:.3e}", probability=px)
    supp = P > SUPPORT_REL * P.max()
    return np.sqrt(P / px) * np.exp(1j * np.where(supp, S, 0.0) / e.hbar)


@dataclass(frozen=True)
class PureStateMixture:
    """rho = sum_i w_i |psi_i><psi_i| stored as weights and component wavefunctions."""

    weights: np.ndarray
    states: np.ndarray          # shape (m, n_q1, n_q2)
    q1: Axis
    q2: Axis
    x_values: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > NORM_TOL:
            raise NormalizationError(f"mixture weights sum to {w.sum()!r}", norm=float(w.sum()))
        dq = self.q1.spacing * self.q2.spacing
        norms = np.sum(np.abs(self.states) ** 2, axis=(1, 2)) * dq
        if np.any(np.abs(norms - 1) > 1e-6):
            raise NormalizationError("mixture component not normalized", norm=float(norms[np.argmax(np.abs(norms - 1))]))

    @property
    def q_cell(self):
        return self.q1.spacing * self.q2.spacing

    @property
    def trace(self) -> float:
        return float(np.sum(self.weights))


def quantum_density_operator(e: Ensemble) -> PureStateMixture:
    """Mixture over grid planes x_i with weights P(x_i) dx, renormalized."""
    marg = classical_marginal(e)
    keep = np.nonzero(marg > _cond_threshold(e))[0]
    w = marg[keep] * e.grid.x.spacing
    w = w / w.sum()
    plain = e.without_generator()
    xs = e.grid.x.points[keep]
    states = np.stack([conditional_wavefunction(plain, xv) for xv in xs])
    return PureStateMixture(w, states, e.grid.q1, e.grid.q2, xs)


def expectation_product(m: PureStateMixture, M1, M2, hbar: float = 1.0) -> float:
    """tr(rho M1 (x) M2) for single-particle operators on q1 and q2.

    ``M1``/``M2`` may be operator specs from :mod:`confens.operators`,
    position-diagonal callables, explicit (n x n) matrices, or ``None`` for
    the identity.
    """
    from . import operators as ops

    def as_op(M, axis):
        if M is None:
            return None
        if isinstance(M, np.ndarray):
            return ops.ExplicitMatrix(axis, M)
        if callable(M) and not isinstance(M, (ops.WeylOperator, ops.ExplicitMatrix)):
            return M
        if isinstance(M, ops.WeylOperator) and M.axes_used() - {axis}:
            raise ValueError(f"operator {M} does not act on particle {axis} only")
        return M

    A, B = as_op(M1, 1), as_op(M2, 2)
    spacing = (m.q1.spacing, m.q2.spacing)
    pts = (m.q1.points, m.q2.points)
    total = 0.0 + 0.0j
    for w, psi in zip(m.weights, m.states):
        phi = psi
        for op, axis in ((A, 1), (B, 2)):
            if op is None:
                continue
            if callable(op) and not isinstance(op, (ops.WeylOperator, ops.ExplicitMatrix)):
                shape = [1, 1]
                shape[axis - 1] = -1
                phi = np.asarray(op(pts[axis - 1]), dtype=complex).reshape(shape) * phi
            else:
                phi = ops.apply(op, phi, pts, spacing, hbar)
        total += w * np.sum(np.conj(psi) * phi) * m.q_cell
    if abs(total.imag) > 1e-8:
        raise HermiticityError(f"expectation has imaginary residue {total.imag:.3e}", abs(total.imag))
    return float(total.real)


# --- classical phase-space density --------------------------------------------------------

@dataclass(frozen=True)
class ClassicalPhaseDensity:
    x: Axis
    k_edges: np.ndarray
    rho: np.ndarray      # shape (n_x, n_k)

    @property
    def k_centers(self):
        return 0.5 * (self.k_edges[1:] + self.k_edges[:-1])

    @property
    def dk(self):
        return float(self.k_edges[1] - self.k_edges[0])

    def total(self) -> float:
        return float(np.sum(self.rho) * self.x.spacing * self.dk)

    def mean(self, f) -> float:
        X, K = np.meshgrid(self.x.points, self.k_centers, indexing="ij")
        return float(np.sum(f(X, K) * self.rho) * self.x.spacing * self.dk)


def classical_phase_density(e: Ensemble, k_bins, truncation_tol: float = 1e-3) -> ClassicalPhaseDensity:
    """Histogram of dS/dx weighted by P dv into ``k_bins = (k_min, k_max, n_bins)``."""
    from .observables import grad_S

    kmin, kmax, nk = k_bins
    edges = np.linspace(kmin, kmax, int(nk) + 1)
    supp = e.support
    k = grad_S(e, axis=2)
    weight = np.where(supp, e.P, 0.0) * e.grid.cell_volume
    total = weight.sum()
    idx = np.searchsorted(edges, k, side="right") - 1
    # the right edge belongs to the last bin
    idx = np.where(k == edges[-1], nk - 1, idx)
    inside = (idx >= 0) & (idx < nk)
    lost = float(weight[~inside].sum() / total)
    if lost > truncation_tol:
        raise MomentumTruncationError(f"momentum range truncation: {lost:.3e} of the weight lies outside "
                                      f"[{kmin}, {kmax}]", lost_mass=lost)
    ix = np.broadcast_to(np.arange(e.grid.x.n)[None, None, :], e.grid.shape)
    rho = np.zeros((e.grid.x.n, int(nk)))
    np.add.at(rho, (ix[inside], idx[inside]), weight[inside])
    dk = edges[1] - edges[0]
    rho /= rho.sum() * e.grid.x.spacing * dk
    return ClassicalPhaseDensity(e.grid.x, edges, rho)
