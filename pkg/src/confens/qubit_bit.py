"""Two qubits entangled through a classical bit, and a gravity-style contrast.

A source emits one of two orthogonal Bell states, rho_0 or rho_1, and
records which in a classical bit c. Averaged over c the pair is separable.
Sending c to party A, who applies X^c, maps both branches to rho_0, so
the averaged state becomes maximally entangled. Every step is a local
operation or classical communication.

The contrast model couples two qubits through h1 (x) h2 with a small
coefficient; unlike the hybrid ensembles, that term changes local
observables of each party unless h1 and h2 are multiples of the identity.

Conventions: basis |00>, |01>, |10>, |11> with party A the first factor;
the partial transpose is taken on party B.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import DensityMatrixError, HermiticityError, PreconditionError

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"X": X, "Y": Y, "Z": Z}

HERM_TOL = 1e-12
TRACE_TOL = 1e-12
EIG_TOL = 1e-10

TAGS = ("initial-state", "local-preparation", "local-unitary", "classical-communication", "joint-operation")
LOCC_TAGS = frozenset(TAGS[1:4])


@dataclass(frozen=True)
class QubitDensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise DensityMatrixError(f"two-qubit density matrix must be 4x4, got {m.shape}")
        anti = float(np.abs(m - m.conj().T).max())
        if anti > HERM_TOL:
            raise DensityMatrixError(f"density matrix not Hermitian (deviation {anti:.3e})")
        tr = np.trace(m).real
        if abs(tr - 1) > TRACE_TOL:
            raise DensityMatrixError(f"density matrix trace {tr!r}")
        lo = float(np.linalg.eigvalsh(m).min())
        if lo < -EIG_TOL:
            raise DensityMatrixError(f"density matrix has negative eigenvalue {lo:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other):
        return self.matrix @ (other.matrix if isinstance(other, QubitDensityMatrix) else other)

    def expectation(self, op) -> float:
        return float(np.trace(self.matrix @ op).real)

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


def kron(a, b):
    return np.kron(a, b)


def bell_pair_states() -> Tuple[QubitDensityMatrix, QubitDensityMatrix]:
    """rho_c = (1 - X X + (-1)^c (Y Y + Z Z)) / 4 for c = 0, 1."""
    out = []
    for c in (0, 1):
        s = (-1) ** c
        out.append(QubitDensityMatrix(0.25 * (kron(I2, I2) - kron(X, X) + s * kron(Y, Y) + s * kron(Z, Z))))
    return tuple(out)


def partial_transpose_B(rho) -> np.ndarray:
    m = rho.matrix if isinstance(rho, QubitDensityMatrix) else np.asarray(rho)
    return m.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


def negativity(rho) -> float:
    """Sum of |negative eigenvalues| of the party-B partial transpose."""
    if not isinstance(rho, QubitDensityMatrix):
        rho = QubitDensityMatrix(rho)
    ev = np.linalg.eigvalsh(partial_transpose_B(rho))
    return float(np.abs(ev[ev < 0]).sum())


def separable_decomposition() -> np.ndarray:
    """(1/2)[(1+X)/2 (x) (1-X)/2 + (1-X)/2 (x) (1+X)/2]."""
    plus = 0.5 * (I2 + X)
    minus = 0.5 * (I2 - X)
    return 0.5 * (kron(plus, minus) + kron(minus, plus))


@dataclass(frozen=True)
class SeparabilityReport:
    max_deviation: float
    min_pt_eigenvalue: float
    negativity: float
    eigenvalues: tuple
    ppt: bool


def mixture_and_separability() -> SeparabilityReport:
    r0, r1 = bell_pair_states()
    mix = 0.5 * (r0.matrix + r1.matrix)
    dev = float(np.abs(mix - separable_decomposition()).max())
    pt = np.linalg.eigvalsh(partial_transpose_B(mix))
    return SeparabilityReport(dev, float(pt.min()), negativity(mix), tuple(np.linalg.eigvalsh(mix)),
                              bool(pt.min() >= -EIG_TOL))


# --- the protocol -------------------------------------------------------------------------

@dataclass(frozen=True)
class TranscriptEntry:
    tag: str
    party: str
    description: str

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown transcript tag {self.tag!r}")


@dataclass(frozen=True)
class ProtocolState:
    """Outcome of the protocol: per-branch states and the c-averaged state."""

    p0: float
    communicated: bool
    branches: tuple          # ((c, p(c), QubitDensityMatrix), ...)
    state: QubitDensityMatrix
    transcript: tuple = field(default_factory=tuple)

    @property
    def bit_probabilities(self):
        return {c: p for c, p, _ in self.branches}


def _local(U, party):
    return kron(U, I2) if party == "A" else kron(I2, U)


def run_protocol(p0: float, communicate: bool = True, U_A=X) -> ProtocolState:
    """Prepare rho_c with probability p(c), optionally send c to A who applies U_A^c."""
    if not 0.0 <= p0 <= 1.0:
        raise PreconditionError(f"bit probability must lie in [0, 1], got {p0}")
    rhos = bell_pair_states()
    probs = (float(p0), 1.0 - float(p0))
    transcript = [
        TranscriptEntry("initial-state", "source", "emit rho_c and record the classical bit c"),
    ]
    branches = []
    if communicate:
        transcript.append(TranscriptEntry("classical-communication", "source->A", "send c to A"))
        transcript.append(TranscriptEntry("local-unitary", "A", "apply U_A^c"))
    for c, (p, rho) in enumerate(zip(probs, rhos)):
        m = rho.matrix
        if communicate and c == 1:
            U = _local(U_A, "A")
            m = U @ m @ U.conj().T
        branches.append((c, p, QubitDensityMatrix(0.5 * (m + m.conj().T))))
    avg = sum(p * r.matrix for _, p, r in branches)
    return ProtocolState(float(p0), bool(communicate), tuple(branches), QubitDensityMatrix(avg), tuple(transcript))


def check_locc(transcript) -> bool:
    """True when the transcript starts from a state and then uses only LOCC steps."""
    entries = list(transcript)
    if not entries or entries[0].tag != "initial-state":
        return False
    return all(e.tag in LOCC_TAGS for e in entries[1:])


# --- gravity-style coupling ---------------------------------------------------------------

def _check_hermitian(h, name):
    h = np.asarray(h, dtype=complex)
    if h.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2")
    anti = float(np.abs(h - h.conj().T).max())
    if anti > HERM_TOL:
        raise HermiticityError(f"{name} is not Hermitian (deviation {anti:.3e})", anti)
    return h


def joint_hamiltonian(h1, h2, lam):
    h1 = _check_hermitian(h1, "h1")
    h2 = _check_hermitian(h2, "h2")
    return kron(h1, I2) + kron(I2, h2) - lam * kron(h1, h2)


def propagator(H, t):
    """exp(-i H t) by eigendecomposition."""
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def single_qubit_expectations(h, psi, t, op):
    U = propagator(_check_hermitian(h, "h"), t)
    phi = U @ psi
    return float(np.real(np.conj(phi) @ op @ phi))


DEMO_FIELDS = ("t", "lambda", "observable", "party", "value")


@dataclass(frozen=True)
class GravityDemo:
    rows: tuple                 # dicts with DEMO_FIELDS
    deviations: dict            # (observable, party) -> max |value(lambda) - value(0)|
    flagged: tuple              # observables deviating by more than the threshold


def semiclassical_gravity_demo(lam, t_samples, h1, h2, initial, threshold=1e-6) -> GravityDemo:
    """Probe expectations of X, Y, Z for each party under the coupled and uncoupled dynamics.

    ``initial`` is a pair of single-qubit state vectors (product pure state)
    or a 4-vector.
    """
    if isinstance(initial, (tuple, list)) and len(initial) == 2:
        a, b = (np.asarray(v, dtype=complex) for v in initial)
        psi0 = kron(a / np.linalg.norm(a), b / np.linalg.norm(b))
    else:
        psi0 = np.asarray(initial, dtype=complex)
        psi0 = psi0 / np.linalg.norm(psi0)
    Hs = {float(lam): joint_hamiltonian(h1, h2, lam), 0.0: joint_hamiltonian(h1, h2, 0.0)}
    rows = []
    traj = {}
    for t in t_samples:
        for l in sorted(Hs, reverse=True):
            phi = propagator(Hs[l], t) @ psi0
            for name, P in PAULI.items():
                for party in ("A", "B"):
                    v = float(np.real(np.conj(phi) @ _local(P, party) @ phi))
                    rows.append({"t": float(t), "lambda": float(l), "observable": name, "party": party, "value": v})
                    traj.setdefault((name, party, l), []).append(v)
    dev = {}
    for name in PAULI:
        for party in ("A", "B"):
            a = np.array(traj[(name, party, float(lam))])
            b = np.array(traj[(name, party, 0.0)])
            dev[(name, party)] = float(np.abs(a - b).max())
    flagged = tuple(k for k, v in dev.items() if v > threshold)
    return GravityDemo(tuple(rows), dev, flagged)


def ket(label):
    """Single-qubit state vectors: '0', '1', '+', '-', '+i', '-i'."""
    s = 1 / np.sqrt(2)
    table = {"0": [1, 0], "1": [0, 1], "+": [s, s], "-": [s, -s], "+i": [s, 1j * s], "-i": [s, -1j * s]}
    if label not in table:
        raise ValueError(f"unknown single-qubit state {label!r}")
    return np.array(table[label], dtype=complex)
