"""Ensemble Hamiltonians and their flows.

The bilinear hybrid Hamiltonian

    H = g1 int P (dS/dq1) x + g2 int P (dS/dx) q2

transports both P and S along the linear vector field
``dq1/dt = g1 x, dx/dt = g2 q2``; its flow is an exact shear and is
applied by composition with the pulled-back coordinates. Applying the two
terms one after the other (``mode="sequential"``) doubles the q2 shear
coefficient.

``evolve_split_step`` reaches the same state through the wavefunction
representation: each term exponentiates to a coordinate-dependent
translation, applied spectrally.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.linalg import expm

from .ensemble import (
    Ensemble,
    HybridWavefunction,
    SUPPORT_REL,
)
from .errors import GridExtentError, PreconditionError, ResolutionError
from .grid import Grid
from .observables import Custom, poisson_bracket, support_gradient, value
from . import operators as ops

MODES = ("simultaneous", "sequential")
TAIL_TOL = 1e-6
SPECTRAL_TAIL_TOL = 1e-4


@dataclass(frozen=True)
class HybridBilinear:
    g1: float
    g2: float
    mode: str = "simultaneous"

    def __post_init__(self):
        _check_couplings(self)


@dataclass(frozen=True)
class ClassicalAnalog:
    """h = g1 k1 x + g2 k x2 for three classical particles."""

    g1: float
    g2: float
    mode: str = "simultaneous"

    def __post_init__(self):
        _check_couplings(self)


@dataclass(frozen=True)
class ObservableHamiltonian:
    functional: object


def _check_couplings(h):
    if not (np.isfinite(h.g1) and np.isfinite(h.g2)):
        raise ValueError("couplings must be finite")
    if h.mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {h.mode!r}")


def hamiltonian_to_dict(h):
    kind = {HybridBilinear: "hybrid-bilinear", ClassicalAnalog: "classical-analog"}[type(h)]
    return {"type": kind, "g1": float(h.g1), "g2": float(h.g2), "mode": h.mode}


def hamiltonian_from_dict(d):
    kinds = {"hybrid-bilinear": HybridBilinear, "classical-analog": ClassicalAnalog}
    if d.get("type") not in kinds:
        raise ValueError(f"unknown hamiltonian type {d.get('type')!r}")
    return kinds[d["type"]](float(d["g1"]), float(d["g2"]), d.get("mode", "simultaneous"))


def shear(g1, g2, t, mode="simultaneous"):
    """q2 coefficient in the pulled-back q1 argument."""
    return (0.5 if mode == "simultaneous" else 1.0) * g1 * g2 * t * t


@dataclass(frozen=True)
class FlowMap:
    """Affine substitution: time-0 coordinates = matrix @ (q1, q2, x) + shift."""

    matrix: np.ndarray
    shift: np.ndarray
    t: float
    sigma: float

    def __post_init__(self):
        det = float(np.linalg.det(self.matrix))
        if abs(det - 1) > 1e-12:
            raise ValueError(f"flow map must preserve volume, det = {det}")

    def __call__(self, q1, q2, x):
        m, s = self.matrix, self.shift
        return (m[0, 0] * q1 + m[0, 1] * q2 + m[0, 2] * x + s[0],
                m[1, 0] * q1 + m[1, 1] * q2 + m[1, 2] * x + s[1],
                m[2, 0] * q1 + m[2, 1] * q2 + m[2, 2] * x + s[2])

    @property
    def forward(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


def flow_map(h, t: float) -> FlowMap:
    """Pullback of the flow generated by ``h`` over time ``t``."""
    if isinstance(h, HybridBilinear):
        g1, g2 = h.g1, h.g2
        sigma = shear(g1, g2, t, h.mode)
        m = np.array([[1.0, sigma, -g1 * t],
                      [0.0, 1.0, 0.0],
                      [0.0, -g2 * t, 1.0]])
        return FlowMap(m, np.zeros(3), t, sigma)
    if isinstance(h, ClassicalAnalog):
        return _characteristics(h, t)
    raise PreconditionError(f"no closed-form flow for {type(h).__name__}")


def _characteristics(h, t):
    # velocity field of h = g1 k1 x + g2 k x2: dx1/dt = g1 x, dx2/dt = 0, dx/dt = g2 x2
    G1 = np.zeros((3, 3))
    G1[0, 2] = h.g1
    G2 = np.zeros((3, 3))
    G2[2, 1] = h.g2
    if h.mode == "simultaneous":
        fwd = expm(t * (G1 + G2))
    else:
        fwd = expm(t * G2) @ expm(t * G1)
    pull = np.linalg.inv(fwd)
    return FlowMap(pull, np.zeros(3), t, float(pull[0, 1]))


def _tail_check(P, grid):
    mass = float(np.sum(P) * grid.cell_volume)
    lost = 1.0 - mass
    if lost > TAIL_TOL:
        raise GridExtentError(f"support escapes the grid: lost mass {lost:.3e}", lost_mass=lost)
    return mass


def evolve(e0: Ensemble, h, t: float, grid: Optional[Grid] = None) -> Ensemble:
    """Exact flow of ``e0`` under ``h`` for time ``t``.

    Analytic generators are composed with the pulled-back coordinates and
    re-evaluated (on ``grid`` if given). Without generators the arrays are
    resampled by cubic spline interpolation with clamped boundaries and the
    density renormalized; the correction is recorded in the metadata.
    """
    if isinstance(h, ObservableHamiltonian):
        raise PreconditionError("observable-generated Hamiltonians have no closed-form flow")
    target = grid or e0.grid
    md = dict(e0.metadata)
    md["t"] = float(md.get("t", 0.0)) + float(t)
    if t == 0 and target == e0.grid:
        return e0
    fm = flow_map(h, t)
    if e0.generator is not None:
        gen = e0.generator.pulled_back(fm)
        q1, q2, x = target.mesh()
        P = np.broadcast_to(gen.P(q1, q2, x), target.shape)
        S = np.broadcast_to(gen.S(q1, q2, x), target.shape)
        _tail_check(P, target)
        return Ensemble(target, P, S, e0.hbar, gen, None, md)
    if target != e0.grid:
        raise PreconditionError("regridding during evolution requires analytic generators")
    q1, q2, x = (np.asarray(c) for c in np.meshgrid(*(a.points for a in target.axes), indexing="ij"))
    src = fm(q1, q2, x)
    coords = [(c - a.lower) / a.spacing for c, a in zip(src, e0.grid.axes)]
    P = ndimage.map_coordinates(np.asarray(e0.P), coords, order=3, mode="nearest")
    S = ndimage.map_coordinates(np.asarray(e0.S_on_support()), coords, order=3, mode="nearest")
    # mass that maps from outside the grid is lost
    outside = np.zeros(target.shape, dtype=bool)
    for c, a in zip(coords, e0.grid.axes):
        outside |= (c < 0) | (c > a.n - 1)
    P = np.where(outside, 0.0, np.clip(P, 0.0, None))
    mass = _tail_check(P, target)
    md["mass_correction"] = 1.0 - mass
    return Ensemble(target, P / mass, S, e0.hbar, None, None, md)


# --- split-step propagation ----------------------------------------------------------------

def _translate(psi, axis, h, shift):
    """psi(.. s - shift ..) along ``axis`` via FFT; ``shift`` broadcasts against psi."""
    n = psi.shape[axis]
    kappa = 2 * np.pi * np.fft.fftfreq(n, d=h)
    shape = [1] * psi.ndim
    shape[axis] = n
    kappa = kappa.reshape(shape)
    return np.fft.ifft(np.fft.fft(psi, axis=axis) * np.exp(-1j * kappa * shift), axis=axis)


def _spectral_tail(psi, axis, band=0.9):
    n = psi.shape[axis]
    spec = np.abs(np.fft.fft(psi, axis=axis)) ** 2
    f = np.abs(np.fft.fftfreq(n))
    shape = [1] * psi.ndim
    shape[axis] = n
    hi = (f >= band * 0.5).reshape(shape)
    return float(np.sum(spec * hi) / np.sum(spec))


def evolve_split_step(w0: HybridWavefunction, h, t: float, n_steps: int, scheme: str = "strang") -> HybridWavefunction:
    """Propagate the hybrid wavefunction by alternating translation factors.

    The g1 factor translates q1 by ``g1 dt x`` (diagonal in the q1-momentum
    and x representation), the g2 factor translates x by ``g2 dt q2``.
    ``scheme="strang"`` uses half steps of the g1 factor around full g2
    steps; ``scheme="lie"`` applies them once each per step. Sequential mode
    applies the whole g1 stage before the g2 stage.
    """
    if not isinstance(h, (HybridBilinear, ClassicalAnalog)):
        raise PreconditionError("split-step propagation needs a bilinear Hamiltonian")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if scheme not in ("strang", "lie"):
        raise ValueError(f"unknown scheme {scheme!r}")
    g = w0.grid
    hq1, _, hx = g.spacings
    xv = g.x.points[None, None, :]
    q2v = g.q2.points[None, :, None]
    psi = np.array(w0.psi)
    for ax in (0, 2):
        tail = _spectral_tail(psi, ax)
        if tail > SPECTRAL_TAIL_TOL:
            raise ResolutionError(f"initial state aliases along axis {ax}: tail {tail:.3e}", tail)

    def A(psi, tau):
        return _translate(psi, 0, hq1, h.g1 * tau * xv) if h.g1 else psi

    def B(psi, tau):
        return _translate(psi, 2, hx, h.g2 * tau * q2v) if h.g2 else psi

    dt = t / n_steps
    if h.mode == "sequential":
        for _ in range(n_steps):
            psi = A(psi, dt)
        for _ in range(n_steps):
            psi = B(psi, dt)
    elif scheme == "lie":
        for _ in range(n_steps):
            psi = B(A(psi, dt), dt)
    else:
        psi = A(psi, dt / 2)
        for i in range(n_steps):
            psi = B(psi, dt)
            psi = A(psi, dt if i < n_steps - 1 else dt / 2)
    for ax in (0, 2):
        tail = _spectral_tail(psi, ax)
        if tail > SPECTRAL_TAIL_TOL:
            raise ResolutionError(f"aliasing along axis {ax}: spectral tail {tail:.3e}", tail)
    # periodic wrap-around shows up as mass in the outer cells
    k = max(1, g.q1.n // 20)
    dens = np.abs(psi) ** 2
    edge = float((dens[:k].sum() + dens[-k:].sum() + dens[:, :, :k].sum() + dens[:, :, -k:].sum())
                 * g.cell_volume)
    if edge > TAIL_TOL:
        raise GridExtentError(f"split-step state reaches the grid edge: mass {edge:.3e}", edge)
    return HybridWavefunction(g, psi, w0.hbar)


# --- Hamiltonian as a functional and the rate law -----------------------------------------

def hamiltonian_functional(h) -> Custom:
    """H[P, S] for a bilinear Hamiltonian, with analytic functional derivatives."""
    if isinstance(h, ObservableHamiltonian):
        return h.functional
    if not isinstance(h, (HybridBilinear, ClassicalAnalog)):
        raise PreconditionError(f"unsupported Hamiltonian {h!r}")
    if h.mode != "simultaneous":
        raise PreconditionError("the sequential protocol is time dependent; use its stages separately")
    g1, g2 = h.g1, h.g2

    def parts(e):
        gr = e.grid
        x = gr.x.points[None, None, :]
        q2 = gr.q2.points[None, :, None]
        supp = e.P > SUPPORT_REL * e.P.max()
        dq1S = support_gradient(e.S, supp, 0, gr.q1.spacing)
        dxS = support_gradient(e.S, supp, 2, gr.x.spacing)
        return gr, x, q2, supp, dq1S, dxS

    def val(e):
        gr, x, q2, supp, dq1S, dxS = parts(e)
        dens = np.where(supp, e.P * (g1 * x * dq1S + g2 * q2 * dxS), 0.0)
        return float(np.sum(dens) * gr.cell_volume)

    def dP(e):
        gr, x, q2, supp, dq1S, dxS = parts(e)
        return np.where(supp, g1 * x * dq1S + g2 * q2 * dxS, 0.0)

    def dS(e):
        gr = e.grid
        x = gr.x.points[None, None, :]
        q2 = gr.q2.points[None, :, None]
        P = np.asarray(e.P)
        return -(g1 * x * ops.d1(P, 0, gr.q1.spacing) + g2 * q2 * ops.d1(P, 2, gr.x.spacing))

    name = f"H[g1={g1}, g2={g2}]"
    return Custom(val, dP, dS, name, scale=1.0)


def hamiltonian_terms(h):
    """The one-sided pieces (H_Q1C, H_Q2C) as separate functionals."""
    kind = type(h)
    return (hamiltonian_functional(kind(h.g1, 0.0, "simultaneous")),
            hamiltonian_functional(kind(0.0, h.g2, "simultaneous")))


@dataclass(frozen=True)
class RateReport:
    label: str
    bracket_rate: float
    finite_difference_rate: float
    abs_error: float


def rate_check(h, V, e: Ensemble, dt: float = 1e-3) -> RateReport:
    """Compare {V, H} with a centered difference of V along the exact flow."""
    H = hamiltonian_functional(h)
    bracket_rate = poisson_bracket(V, H, e)
    vp = value(V, evolve(e, h, dt))
    vm = value(V, evolve(e, h, -dt))
    fd = (vp - vm) / (2 * dt)
    return RateReport(getattr(V, "label", str(V)), bracket_rate, fd, abs(bracket_rate - fd))


def nondimensionalize(g1, g2, t, length_scale=1.0, coordinates=None):
    """Couplings and time in units where g1 = 1, lengths in units of ``length_scale``.

    Returns ``(g1', g2', t', coordinates')``; time is left unscaled when g1 = 0.
    """
    T = 1.0 / abs(g1) if g1 else 1.0
    coords = None if coordinates is None else np.asarray(coordinates) / length_scale
    return g1 * T, g2 * T, t / T, coords


def redimensionalize(g1n, g2n, tn, time_unit, length_scale=1.0, coordinates=None):
    coords = None if coordinates is None else np.asarray(coordinates) * length_scale
    return g1n / time_unit, g2n / time_unit, tn * time_unit, coords
