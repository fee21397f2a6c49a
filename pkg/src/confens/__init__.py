"""Configuration-ensemble simulations of hybrid quantum-classical systems."""

from .grid import Axis, Grid
from .ensemble import (
    Ensemble,
    HybridWavefunction,
    make_product_ensemble,
    classical_marginal,
    conditional_wavefunction,
    quantum_density_operator,
    expectation_product,
    classical_phase_density,
)
from .observables import (
    PhasePolynomial,
    Classical,
    Quantum,
    Custom,
    value,
    functional_derivative,
    poisson_bracket,
    verify_classical_isomorphism,
    verify_quantum_isomorphism,
)
from .dynamics import HybridBilinear, ClassicalAnalog, evolve, evolve_split_step, rate_check

__version__ = "0.1.0"
