"""Dense complex linear algebra over spin x time-bin-slot registers.

Basis conventions used by every module in the package:

* register order: spin first, then photon slots in emission order
* spin basis: index 0 = spin-down (pumped ground state), index 1 = spin-up
* slot basis: 0 = vacuum, 1 = early photon, 2 = late photon, and with
  slot_dim = 6 the double-occupancy labels 3 = ee, 4 = el, 5 = ll

Logical qubits (the witness convention) are |0> = spin-up / late photon and
|1> = spin-down / early photon; see :mod:`timebin.witness`.

Register dimensions stay at or below 2 * 6**3, so everything is dense
complex128 with explicit tolerance checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, LayoutError

SPIN_DOWN = 0
SPIN_UP = 1

SLOT_VACUUM = 0
SLOT_EARLY = 1
SLOT_LATE = 2
SLOT_EE = 3
SLOT_EL = 4
SLOT_LL = 5

NORM_TOL = 1e-12
CHANNEL_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class RegisterLayout:
    """Shape of the composite register: one spin plus photon_slots time-bin slots."""

    photon_slots: int
    slot_dim: int = 3
    spin_dim: int = 2

    def __post_init__(self):
        if self.spin_dim != 2:
            raise LayoutError("spin register must be two-dimensional")
        if self.slot_dim not in (3, 6):
            raise LayoutError(f"slot_dim must be 3 or 6, got {self.slot_dim}")
        if self.photon_slots < 0:
            raise LayoutError("photon_slots must be non-negative")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.spin_dim,) + (self.slot_dim,) * self.photon_slots

    @property
    def total_dim(self) -> int:
        return self.spin_dim * self.slot_dim**self.photon_slots

    @property
    def n_registers(self) -> int:
        return 1 + self.photon_slots

    def register_dim(self, index: int) -> int:
        return self.dims[index]

    def basis_index(self, labels: Sequence[int]) -> int:
        """Flat index of a product basis state given per-register labels."""
        if len(labels) != self.n_registers:
            raise LayoutError("one label per register required")
        idx = 0
        for label, dim in zip(labels, self.dims):
            if not 0 <= label < dim:
                raise LayoutError(f"label {label} out of range for dim {dim}")
            idx = idx * dim + label
        return idx


def _as_vector(amplitudes, dim: int) -> np.ndarray:
    vec = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    if vec.shape != (dim,):
        raise LayoutError(f"amplitude vector has length {vec.size}, expected {dim}")
    return vec


@dataclass(frozen=True)
class QuditState:
    """Normalized pure state over a register layout."""

    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        vec = _as_vector(self.amplitudes, self.layout.total_dim).copy()
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > 1e-6:
            raise ContractError(f"state norm {norm} too far from 1 to be a state")
        vec /= norm
        vec.flags.writeable = False
        object.__setattr__(self, "amplitudes", vec)

    @classmethod
    def basis(cls, layout: RegisterLayout, labels: Sequence[int]) -> "QuditState":
        vec = np.zeros(layout.total_dim, dtype=np.complex128)
        vec[layout.basis_index(labels)] = 1.0
        return cls(layout, vec)

    def norm_error(self) -> float:
        return abs(np.vdot(self.amplitudes, self.amplitudes).real - 1.0)

    def to_density(self) -> "DensityOperator":
        return DensityOperator(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "QuditState") -> complex:
        _require_same_layout(self.layout, other.layout)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, unit-trace, positive-semidefinite operator on a register."""

    layout: RegisterLayout
    matrix: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        dim = self.layout.total_dim
        mat = np.asarray(self.matrix, dtype=np.complex128)
        if mat.shape != (dim, dim):
            raise LayoutError(f"matrix shape {mat.shape} does not match dim {dim}")
        mat = mat.copy()
        if self.validate:
            if np.max(np.abs(mat - mat.conj().T)) > 1e-9:
                raise ContractError("density matrix is not Hermitian")
            if abs(np.trace(mat).real - 1.0) > 1e-9:
                raise ContractError(f"trace {np.trace(mat)} is not 1")
            if np.min(np.linalg.eigvalsh(mat)) < -PSD_TOL:
                raise ContractError("density matrix has a significantly negative eigenvalue")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_mixture(cls, weights, states) -> "DensityOperator":
        layout = states[0].layout
        mat = np.zeros((layout.total_dim, layout.total_dim), dtype=np.complex128)
        for w, s in zip(weights, states):
            mat += w * np.outer(s.amplitudes, s.amplitudes.conj())
        return cls(layout, mat)


@dataclass(frozen=True)
class LinearOperator:
    """Labeled square operator on a register layout."""

    layout: RegisterLayout
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        dim = self.layout.total_dim
        mat = np.asarray(self.matrix, dtype=np.complex128)
        if mat.shape != (dim, dim):
            raise LayoutError(f"operator shape {mat.shape} does not match layout dim {dim}")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    def is_hermitian(self, tol: float = CHANNEL_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) < tol)

    def dagger(self) -> "LinearOperator":
        return LinearOperator(self.layout, self.matrix.conj().T, self.label + "^+")


def _require_same_layout(a: RegisterLayout, b: RegisterLayout) -> None:
    if a != b:
        raise LayoutError(f"layouts differ: {a} vs {b}")


def tensor_embed(op: np.ndarray | LinearOperator, target: int, layout: RegisterLayout,
                 label: str = "") -> LinearOperator:
    """Embed a single-register operator as op (x) identity on all other registers."""
    mat = op.matrix if isinstance(op, LinearOperator) else np.asarray(op, dtype=np.complex128)
    dims = layout.dims
    if not 0 <= target < layout.n_registers:
        raise LayoutError(f"register index {target} out of range")
    if mat.shape != (dims[target], dims[target]):
        raise LayoutError(
            f"operator dim {mat.shape} does not match register {target} dim {dims[target]}")
    full = np.eye(1, dtype=np.complex128)
    for i, d in enumerate(dims):
        full = np.kron(full, mat if i == target else np.eye(d, dtype=np.complex128))
    if not label and isinstance(op, LinearOperator):
        label = f"{op.label}@{target}"
    return LinearOperator(layout, full, label)


def expectation(state: QuditState | DensityOperator, op: LinearOperator) -> float:
    """<psi|O|psi> or Tr(rho O) for a Hermitian operator."""
    _require_same_layout(state.layout, op.layout)
    if not op.is_hermitian():
        raise ContractError(f"operator {op.label!r} is not Hermitian")
    if isinstance(state, QuditState):
        val = complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    else:
        val = complex(np.trace(op.matrix @ state.matrix))
    if abs(val.imag) > 1e-9:
        raise ContractError(f"expectation has imaginary residue {val.imag}")
    return val.real


def apply_channel(state: DensityOperator, kraus_set: Sequence[LinearOperator | np.ndarray],
                  check: bool = True) -> DensityOperator:
    """Apply rho -> sum_k K rho K^+ for a trace-preserving Kraus set."""
    dim = state.layout.total_dim
    mats = [k.matrix if isinstance(k, LinearOperator) else np.asarray(k, dtype=np.complex128)
            for k in kraus_set]
    if check:
        total = sum(m.conj().T @ m for m in mats)
        if np.max(np.abs(total - np.eye(dim))) > CHANNEL_TOL:
            raise ContractError("Kraus set is not trace preserving")
    out = np.zeros((dim, dim), dtype=np.complex128)
    rho = state.matrix
    for m in mats:
        out += m @ rho @ m.conj().T
    return DensityOperator(state.layout, out, validate=False)


def sample_projective(state: QuditState, projectors: Sequence[LinearOperator],
                      rng: np.random.Generator) -> tuple[int, QuditState]:
    """Born-rule sample over a complete orthogonal projector set.

    Returns the outcome index and the renormalized post-measurement state.
    Deterministic for a given generator state.
    """
    dim = state.layout.total_dim
    mats = [p.matrix for p in projectors]
    total = sum(mats)
    if np.max(np.abs(total - np.eye(dim))) > CHANNEL_TOL:
        raise ContractError("projector set is not complete")
    probs = np.array([np.vdot(state.amplitudes, m @ state.amplitudes).real for m in mats])
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    outcome = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    outcome = min(outcome, len(mats) - 1)
    post = mats[outcome] @ state.amplitudes
    post /= np.linalg.norm(post)
    return outcome, QuditState(state.layout, post)


def direct_fidelity(rho: DensityOperator, target: QuditState) -> float:
    """<target|rho|target>; the exact oracle the witness decomposition is tested against."""
    _require_same_layout(rho.layout, target.layout)
    val = np.vdot(target.amplitudes, rho.matrix @ target.amplitudes).real
    return float(val)


def sample_channel_trajectories(state: QuditState,
                                kraus_sets: Sequence[Sequence[np.ndarray]],
                                projectors: Sequence[np.ndarray],
                                n: int, master_seed: int) -> np.ndarray:
    """Unravel a channel sequence plus a projective measurement into n trajectories.

    Each repetition samples one Kraus branch per channel and then a projective
    outcome; draws come from the counter-based stream so the result is
    independent of batching.  Returns the outcome index per repetition.

    Used to validate that stochastic unraveling reproduces exact
    DensityOperator evolution (total variation distance checks).
    """
    from . import rng as crng

    reps = np.arange(n, dtype=np.uint64)
    # state table: branch tree of normalized pure states
    states = [np.asarray(state.amplitudes, dtype=np.complex128)]
    ids = np.zeros(n, dtype=np.int64)
    for op_i, kraus in enumerate(kraus_sets):
        u = crng.uniforms(master_seed, reps, stream=op_i + 1)
        new_ids = np.empty_like(ids)
        table: dict[tuple[int, int], int] = {}
        new_states: list[np.ndarray] = []
        for sid in np.unique(ids):
            psi = states[sid]
            branches = []
            for k_i, K in enumerate(kraus):
                phi = K @ psi
                p = float(np.vdot(phi, phi).real)
                if p > 1e-15:
                    branches.append((p, k_i, phi / np.sqrt(p)))
            cum = np.cumsum([b[0] for b in branches])
            cum /= cum[-1]
            mask = ids == sid
            choice = np.searchsorted(cum, u[mask], side="right")
            choice = np.minimum(choice, len(branches) - 1)
            local = np.empty(len(branches), dtype=np.int64)
            for b_i, (_, k_i, phi) in enumerate(branches):
                key = (int(sid), k_i)
                if key not in table:
                    table[key] = len(new_states)
                    new_states.append(phi)
                local[b_i] = table[key]
            new_ids[mask] = local[choice]
        states = new_states
        ids = new_ids
    u = crng.uniforms(master_seed, reps, stream=10_000)
    outcomes = np.empty(n, dtype=np.int64)
    for sid in np.unique(ids):
        psi = states[sid]
        probs = np.array([np.vdot(psi, P @ psi).real for P in projectors])
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        cum = np.cumsum(probs)
        mask = ids == sid
        outcomes[mask] = np.minimum(np.searchsorted(cum, u[mask], side="right"),
                                    len(projectors) - 1)
    return outcomes


# Pauli matrices in the package spin ordering (index 0 = down, 1 = up).
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
