"""Named initial data and grid heuristics.

``SG`` is the standard scenario: unit Gaussian quantum wavepackets, a
classical Gaussian ensemble with zero action, hbar = 1 and
g1 = g2 = t = 1 with a simultaneous interaction.
"""

import numpy as np

from .dynamics import HybridBilinear, flow_map
from .ensemble import (
    AnalyticGenerator,
    ClassicalGaussian,
    GaussianWavepacket,
    ProductData,
    from_generator,
    make_product_ensemble,
)
from .grid import Axis, Grid

DEFAULT_N = 96
DEFAULT_SIGMAS = 8.0

SG_HAMILTONIAN = HybridBilinear(1.0, 1.0, "simultaneous")
SG_TIME = 1.0


def sg_data(classical=None) -> ProductData:
    return ProductData.gaussian(classical=classical)


def product_moments(data: ProductData):
    """Mean vector and covariance of the initial density (q1, q2, x)."""
    if not data.is_gaussian():
        raise ValueError("moments are only available for Gaussian product data")
    mean = np.array([data.psi1.center, data.psi2.center, data.P0.center])
    cov = np.diag([data.psi1.variance, data.psi2.variance, data.P0.variance])
    return mean, cov


def default_grid(data: ProductData, hamiltonian=None, times=(0.0,), n=DEFAULT_N, sigmas=DEFAULT_SIGMAS) -> Grid:
    """Axis extents covering ``sigmas`` standard deviations at every requested time.

    The evolved covariance is ``F C F^T`` with ``F`` the forward flow
    matrix, so the sheared support is covered exactly rather than by a
    worst-case displacement bound.
    """
    mean, cov = product_moments(data)
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for t in times:
        F = np.eye(3) if hamiltonian is None or t == 0 else flow_map(hamiltonian, t).forward
        m = F @ mean
        sd = np.sqrt(np.diag(F @ cov @ F.T))
        lo = np.minimum(lo, m - sigmas * sd)
        hi = np.maximum(hi, m + sigmas * sd)
    return Grid(*(Axis(a, b, n) for a, b in zip(lo, hi)))


def sg_ensemble(grid=None, n=DEFAULT_N, times=(0.0, SG_TIME), hbar=1.0):
    data = sg_data()
    grid = grid or default_grid(data, SG_HAMILTONIAN, times, n)
    e = make_product_ensemble(data.psi1, data.psi2, data.P0, data.S0, grid, hbar)
    return e.with_metadata(scenario="SG", t=0.0)


def shifted_sg_ensemble(x_mean=1.0, grid=None, n=DEFAULT_N, times=(0.0,)):
    """SG with the classical ensemble centred at ``x_mean``."""
    data = sg_data(ClassicalGaussian(center=x_mean))
    grid = grid or default_grid(data, SG_HAMILTONIAN, times, n)
    e = make_product_ensemble(data.psi1, data.psi2, data.P0, data.S0, grid)
    return e.with_metadata(scenario="SG-shifted", t=0.0)


# --- non-product ensembles -----------------------------------------------------------------

def gaussian_generator(mean, cov, S):
    """Analytic generator for a normal density and an action callable."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    prec = np.linalg.inv(cov)
    logc = -0.5 * np.log((2 * np.pi) ** 3 * np.linalg.det(cov))

    def P(q1, q2, x):
        d = (q1 - mean[0], q2 - mean[1], x - mean[2])
        quad = sum(prec[i, j] * d[i] * d[j] for i in range(3) for j in range(3))
        return np.exp(logc - 0.5 * quad)

    return AnalyticGenerator(P, S)


def correlated_ensemble(cov_q1x=0.5, phase_coupling=0.5, n=DEFAULT_N, grid=None, hbar=1.0):
    """Gaussian ensemble with a q1-x covariance and an action term ``b q1 x``.

    Both correlations are needed for a nonzero cross bracket between a
    classical and a quantum observable; either alone leaves every corpus
    bracket at zero.
    """
    cov = np.array([[1.0, 0.0, cov_q1x],
                    [0.0, 0.5, 0.0],
                    [cov_q1x, 0.0, 1.0]])
    b = float(phase_coupling)
    gen = gaussian_generator(np.zeros(3), cov, lambda q1, q2, x: b * q1 * x + 0.0 * q2)
    if grid is None:
        sd = np.sqrt(np.diag(cov))
        grid = Grid(*(Axis.symmetric(DEFAULT_SIGMAS * s, n) for s in sd))
    return from_generator(gen, grid, hbar, metadata={"scenario": "correlated", "cov_q1x": cov_q1x,
                                                    "phase_coupling": b, "t": 0.0})


def random_ensemble(rng: np.random.Generator, n=DEFAULT_N, hbar=1.0):
    """Correlated Gaussian density with a random smooth non-polynomial action.

    Used as a regression corpus: the action mixes a random quadratic form
    with sine ripples so discretization errors are generic.
    """
    A = rng.normal(scale=0.3, size=(3, 3))
    cov = 0.5 * np.eye(3) + A @ A.T
    mean = rng.normal(scale=0.3, size=3)
    Q = rng.normal(scale=0.4, size=(3, 3))
    Q = 0.5 * (Q + Q.T)
    lin = rng.normal(scale=0.5, size=3)
    amp = rng.uniform(0.1, 0.3, size=2)
    freq = rng.uniform(0.5, 1.0, size=(2, 3))

    def S(q1, q2, x):
        v = (q1, q2, x)
        out = sum(lin[i] * v[i] for i in range(3))
        out = out + sum(0.5 * Q[i, j] * v[i] * v[j] for i in range(3) for j in range(3))
        for a, w in zip(amp, freq):
            out = out + a * np.sin(w[0] * q1 + w[1] * q2 + w[2] * x)
        return out

    gen = gaussian_generator(mean, cov, S)
    sd = np.sqrt(np.diag(cov))
    grid = Grid(*(Axis(m - DEFAULT_SIGMAS * s, m + DEFAULT_SIGMAS * s, n) for m, s in zip(mean, sd)))
    return from_generator(gen, grid, hbar, metadata={"scenario": "random"})
