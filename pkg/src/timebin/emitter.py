"""Quantum-dot spin-photon interface model.

Implements optical pumping, noisy ground-state rotations, conditional
time-bin photon emission with finite cyclicity, and the protocol pulse
sequences (Bell, GHZ, two-photon indistinguishability).

Error model
-----------
* Pumping is a reset channel leaving residual up population p_init_error.
* A rotation by angle theta is the ideal unitary followed, with
  angle-proportional probabilities, by an incoherent spin flip (sigma_x)
  or a dephasing kick (sigma_z).  The flip probability is pinned by the
  measured pi-pulse fidelity: a pi pulse on the pumped state transfers
  exactly f_pi of the population, independent of the dephasing share,
  which is a separate calibration constant anchored to the entanglement
  ceiling of imperfect rotations (NoiseParams.rot_dephasing_ratio).
* Excitation drives the up-spin component only.  The trion decays
  spin-preservingly with probability C/(C+1) (photon collected) and
  flips the spin with probability 1/(C+1) (photon cross-polarized and
  filtered away: modeled as loss).  Re-excitation scatters one extra,
  temporally distinguishable photon into the driven bin (p_double) and
  the detuned transition of the down-spin component can scatter a
  background photon (p_wrong_transition); both are classical flagged
  clicks that live outside the register.

Evolution modes
---------------
Exact mode propagates density operators through the same Kraus sets and
returns the pre-detection mixture.  Trajectory mode samples one noise
branch per repetition with counter-based randomness, so a repetition's
record is reproducible regardless of how the run is chunked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import rng as crng
from .errors import ConfigurationError, ContractError
from .hilbert import (SIGMA_X, SIGMA_Y, SIGMA_Z, SLOT_EARLY, SLOT_EE, SLOT_EL,
                      SLOT_LATE, SLOT_LL, SLOT_VACUUM, SPIN_DOWN, SPIN_UP,
                      DensityOperator, RegisterLayout, tensor_embed)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class EmitterParams:
    """Physical constants of the emitter and protocol timing."""

    gamma_y: float = 2.54 * 14.7 / 15.7   # spin-preserving decay rate (1/ns)
    gamma_x: float = 2.54 / 15.7          # spin-flipping decay rate (1/ns)
    delta0: float = TWO_PI * 17.0         # trion Zeeman splitting sum (rad/ns)
    t_opt: float = 0.035                  # optical pi-pulse FWHM (ns)
    t_inf: float = 11.8                   # time-bin separation / long arm delay (ns)
    rotation_ns: float = 7.0              # Raman pi-rotation duration (ns)
    photon_spacing_ns: float = 28.0       # emission block spacing for extra photons (ns)
    repetition_rate_mhz: float = 1.65

    def __post_init__(self):
        if self.gamma_y <= 0 or self.gamma_x < 0:
            raise ConfigurationError("decay rates must be positive (gamma_x may be 0)")
        if self.gamma_x > 0 and self.gamma_y / self.gamma_x <= 1.0:
            raise ConfigurationError("cyclicity gamma_y/gamma_x must exceed 1")

    @property
    def cyclicity(self) -> float:
        return math.inf if self.gamma_x == 0 else self.gamma_y / self.gamma_x

    @property
    def gamma0(self) -> float:
        return self.gamma_x + self.gamma_y

    @property
    def spin_preserving_probability(self) -> float:
        c = self.cyclicity
        return 1.0 if math.isinf(c) else c / (c + 1.0)

    @property
    def repetition_period_ns(self) -> float:
        return 1e3 / self.repetition_rate_mhz


@dataclass(frozen=True)
class NoiseParams:
    """Calibrated error probabilities and efficiencies.

    All fields are probabilities in [0, 1] except p_leak, a background click
    rate per nanosecond (both detectors combined) at unit photon-path
    efficiency; the detection layer scales it with the applied efficiency so
    the background-to-signal ratio is independent of thinning mode.
    """

    f_pi: float = 0.885
    rot_dephasing_ratio: float = 0.458     # dephasing share relative to 1 - f_pi
    p_init_error: float = 0.005
    p_wrong_transition: float = 0.0
    p_double: float = 0.0
    p_leak: float = 0.0
    p_wait_dephasing: float = 0.0          # spin sigma_z kick in the pre-readout wait
    eta_total: float = 1.0
    eta_readout: float = 1.0
    readout_fidelity: float = 1.0
    readout_dark: float = 0.0
    indistinguishability: float = 1.0
    blink_block_len: int = 0               # 0 disables charge blinking
    blink_on_fraction: float = 1.0

    def __post_init__(self):
        for name in ("p_init_error", "p_wrong_transition", "p_double", "eta_total",
                     "eta_readout", "readout_fidelity", "readout_dark",
                     "indistinguishability", "blink_on_fraction", "p_wait_dephasing"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} outside [0, 1]")
        if not 0.5 < self.f_pi <= 1.0:
            raise ConfigurationError(f"f_pi={self.f_pi} outside (0.5, 1]")
        if self.p_leak < 0:
            raise ConfigurationError("p_leak must be non-negative")
        if self.rot_dephasing_ratio < 0:
            raise ConfigurationError("rot_dephasing_ratio must be non-negative")

    def flip_probability(self, angle: float) -> float:
        return (1.0 - self.f_pi) * abs(angle) / math.pi

    def dephasing_probability(self, angle: float) -> float:
        return self.rot_dephasing_ratio * (1.0 - self.f_pi) * abs(angle) / math.pi

    @property
    def needs_double_slots(self) -> bool:
        # rotation flips can leave the spin excited with a photon already in
        # the bin, so the next pulse fills the second occupation level
        return self.f_pi < 1.0


def ideal_noise() -> NoiseParams:
    return NoiseParams(f_pi=1.0, p_init_error=0.0)


def ideal_emitter() -> EmitterParams:
    return EmitterParams(gamma_y=2.54, gamma_x=0.0)


# ---------------------------------------------------------------------------
# pulse sequences
# ---------------------------------------------------------------------------

AXIS_ANGLES = {"x": 0.0, "y": math.pi / 2.0}


def _axis_angle(axis) -> float:
    if isinstance(axis, str):
        try:
            return AXIS_ANGLES[axis]
        except KeyError:
            raise ContractError(f"unsupported rotation axis {axis!r}") from None
    return float(axis)


@dataclass(frozen=True)
class PulseOp:
    """One protocol step.

    kind: pump | rotate | excite | readout.  Rotations carry an axis (either
    'x'/'y' or an equatorial azimuth in radians) and an angle; excitations
    carry the slot index, bin ('early'/'late') and optical phase.
    """

    kind: str
    axis: object = "y"
    angle: float = 0.0
    slot: int = 0
    bin: str = "early"
    phase: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("pump", "rotate", "excite", "wait", "readout"):
            raise ContractError(f"unknown pulse kind {self.kind!r}")
        if self.kind == "rotate":
            if not -TWO_PI <= self.angle <= TWO_PI:
                raise ContractError("rotation angle outside [-2pi, 2pi]")
            _axis_angle(self.axis)
        if self.kind == "excite" and self.bin not in ("early", "late"):
            raise ContractError(f"unknown time bin {self.bin!r}")


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple[PulseOp, ...]
    repetition_period: float = 606.06
    name: str = ""

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        readouts = [i for i, s in enumerate(steps) if s.kind == "readout"]
        if len(readouts) != 1 or readouts[0] != len(steps) - 1:
            raise ContractError("sequence must end with exactly one readout step")
        bins = [(s.slot, s.bin) for s in steps if s.kind == "excite"]
        if len(bins) != len(set(bins)):
            raise ContractError("excitation steps must target distinct time bins")

    @property
    def n_slots(self) -> int:
        slots = [s.slot for s in self.steps if s.kind == "excite"]
        return max(slots) + 1 if slots else 0

    def excite_steps(self) -> list[PulseOp]:
        return [s for s in self.steps if s.kind == "excite"]

    def with_readout_rotation(self, axis, angle: float) -> "PulseSequence":
        """Insert the basis-selection rotation R_i just before readout.

        A wait step precedes R_i: the interval between the last emission and
        the basis rotation is the only unechoed idle time of the protocol,
        so residual spin dephasing is attached here.
        """
        wait = PulseOp("wait", duration=WAIT_REFERENCE_NS)
        rot = PulseOp("rotate", axis=axis, angle=angle, duration=7.0)
        steps = self.steps[:-1] + (wait, rot) + self.steps[-1:]
        return PulseSequence(steps, self.repetition_period, self.name)


def build_bell_sequence(params: EmitterParams, phase_e: float = 0.0) -> PulseSequence:
    """Pump, half rotation, early excitation, pi swap, late excitation, readout.

    phase_e is the relative phase between the late and early pulses; the
    readout rotation R_i is inserted per measurement setting.
    """
    steps = (
        PulseOp("pump", duration=100.0),
        PulseOp("rotate", axis="y", angle=math.pi / 2, duration=params.rotation_ns),
        PulseOp("excite", slot=0, bin="early", phase=0.0, duration=params.t_opt),
        PulseOp("rotate", axis="y", angle=math.pi, duration=params.rotation_ns),
        PulseOp("excite", slot=0, bin="late", phase=phase_e, duration=params.t_opt),
        PulseOp("readout", duration=50.0),
    )
    return PulseSequence(steps, params.repetition_period_ns, name="bell")


def build_ghz_sequence(n_photons: int, params: EmitterParams,
                       phase_e: float = 0.0) -> PulseSequence:
    """Bell sequence extended by one (pi swap, excitation pair) block per photon."""
    if n_photons < 2:
        raise ContractError("GHZ generation requires at least 2 photons")
    steps = [
        PulseOp("pump", duration=100.0),
        PulseOp("rotate", axis="y", angle=math.pi / 2, duration=params.rotation_ns),
    ]
    for slot in range(n_photons):
        if slot > 0:
            # each further emission block adds two unechoed idle segments
            # (trailing the previous block and leading this one)
            steps.append(PulseOp("wait", duration=2 * WAIT_REFERENCE_NS))
            steps.append(PulseOp("rotate", axis="y", angle=math.pi,
                                 duration=params.rotation_ns))
        steps.append(PulseOp("excite", slot=slot, bin="early", phase=0.0,
                             duration=params.t_opt))
        steps.append(PulseOp("rotate", axis="y", angle=math.pi,
                             duration=params.rotation_ns))
        steps.append(PulseOp("excite", slot=slot, bin="late", phase=phase_e,
                             duration=params.t_opt))
    steps.append(PulseOp("readout", duration=50.0))
    return PulseSequence(tuple(steps), params.repetition_period_ns, name="ghz")


def build_hom_sequence(params: EmitterParams) -> PulseSequence:
    """Prepare up, then emit two separable photons into the early and late bins."""
    steps = (
        PulseOp("pump", duration=100.0),
        PulseOp("rotate", axis="y", angle=math.pi, duration=params.rotation_ns),
        PulseOp("excite", slot=0, bin="early", phase=0.0, duration=params.t_opt),
        PulseOp("excite", slot=0, bin="late", phase=0.0, duration=params.t_opt),
        PulseOp("readout", duration=50.0),
    )
    return PulseSequence(steps, params.repetition_period_ns, name="hom")


def sequence_layout(seq: PulseSequence, noise: NoiseParams) -> RegisterLayout:
    """Smallest register that can hold the sequence output under this noise."""
    slot_dim = 6 if (noise.needs_double_slots or seq.name == "hom") else 3
    return RegisterLayout(photon_slots=max(seq.n_slots, 1), slot_dim=slot_dim)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------


def rotation_unitary(axis, angle: float) -> np.ndarray:
    alpha = _axis_angle(axis)
    n_sigma = math.cos(alpha) * SIGMA_X + math.sin(alpha) * SIGMA_Y
    return (math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * n_sigma)


def rotation_kraus(axis, angle: float, noise: NoiseParams) -> list[tuple[str, np.ndarray]]:
    """Branches of one noisy rotation: ideal, flip-after, dephase-after."""
    u = rotation_unitary(axis, angle)
    eps = noise.flip_probability(angle)
    delta = noise.dephasing_probability(angle)
    if eps + delta >= 1.0:
        raise ConfigurationError("rotation error probabilities exceed 1")
    branches = [("ideal", math.sqrt(1.0 - eps - delta) * u)]
    if eps > 0:
        branches.append(("flip", math.sqrt(eps) * (SIGMA_X @ u)))
    if delta > 0:
        branches.append(("dephase", math.sqrt(delta) * (SIGMA_Z @ u)))
    return branches


WAIT_REFERENCE_NS = 7.0


def wait_kraus(noise: NoiseParams, duration: float = WAIT_REFERENCE_NS
               ) -> list[tuple[str, np.ndarray]]:
    """Idle-interval dephasing channel on the spin.

    The kick probability p_wait_dephasing refers to one 7 ns idle segment
    (the gap between the last emission and the readout rotation) and scales
    linearly with the interval duration.
    """
    d = min(noise.p_wait_dephasing * duration / WAIT_REFERENCE_NS, 0.5)
    branches = [("idle", math.sqrt(1.0 - d) * np.eye(2, dtype=np.complex128))]
    if d > 0:
        branches.append(("dephase", math.sqrt(d) * SIGMA_Z))
    return branches


def pump_kraus(p_init_error: float) -> list[tuple[str, np.ndarray]]:
    """Reset channel: down with probability 1-p, up with probability p."""
    p = p_init_error
    k = [("reset[down<-down]", math.sqrt(1 - p) * _spin_matrix({(SPIN_DOWN, SPIN_DOWN): 1})),
         ("reset[down<-up]", math.sqrt(1 - p) * _spin_matrix({(SPIN_DOWN, SPIN_UP): 1}))]
    if p > 0:
        k += [("reset[up<-down]", math.sqrt(p) * _spin_matrix({(SPIN_UP, SPIN_DOWN): 1})),
              ("reset[up<-up]", math.sqrt(p) * _spin_matrix({(SPIN_UP, SPIN_UP): 1}))]
    return k


_BIN_INDEX = {"early": SLOT_EARLY, "late": SLOT_LATE}
_SINGLE_ADD = {"early": {SLOT_VACUUM: SLOT_EARLY, SLOT_EARLY: SLOT_EE, SLOT_LATE: SLOT_EL},
               "late": {SLOT_VACUUM: SLOT_LATE, SLOT_EARLY: SLOT_EL, SLOT_LATE: SLOT_LL}}


def _slot_matrix(mapping: dict[int, int], slot_dim: int) -> np.ndarray:
    m = np.zeros((slot_dim, slot_dim), dtype=np.complex128)
    for src, dst in mapping.items():
        if dst < slot_dim and src < slot_dim:
            m[dst, src] = 1.0
    return m


def _slot_projector(indices: Iterable[int], slot_dim: int) -> np.ndarray:
    m = np.zeros((slot_dim, slot_dim), dtype=np.complex128)
    for i in indices:
        if i < slot_dim:
            m[i, i] = 1.0
    return m


def _spin_matrix(entries: dict[tuple[int, int], complex]) -> np.ndarray:
    m = np.zeros((2, 2), dtype=np.complex128)
    for (i, j), v in entries.items():
        m[i, j] = v
    return m


def _embed_pair(spin_m: np.ndarray, slot_m: np.ndarray, layout: RegisterLayout,
                slot: int) -> np.ndarray:
    full = spin_m
    for k in range(layout.photon_slots):
        full = np.kron(full, slot_m if k == slot else np.eye(layout.slot_dim))
    return full


def excite_kraus(bin_label: str, phase: float, params: EmitterParams,
                 noise: NoiseParams, layout: RegisterLayout, slot: int,
                 emitting: bool = True) -> list[tuple[str, np.ndarray, bool]]:
    """Branches of one excitation pulse on the full register: (label, K, extra).

    'emit' keeps the down component untouched and appends a photon to the
    driven bin of the up component (spin preserved); 'jump' is the
    cross-polarized decay (photon lost, spin flipped).  Re-excitation
    ('emit_double', probability p_double) scatters one additional photon
    that is temporally distinguishable from the coherent one: it is flagged
    as a classical click in the driven bin (extra=True) rather than stored
    in the register, which also records the which-path information it
    carries.  Fully occupied bins ('sat_*') cannot accept the coherent
    photon, so the whole emission becomes a flagged click there.  The
    down-spin wrong-transition click is a separate classical flag handled
    by the callers.
    """
    slot_dim = layout.slot_dim
    if not emitting:
        return [("blink", np.eye(layout.total_dim, dtype=np.complex128), False)]
    p_keep = params.spin_preserving_probability
    p_d = noise.p_double
    proj_single = _slot_projector((SLOT_VACUUM, SLOT_EARLY, SLOT_LATE), slot_dim)
    add1 = _slot_matrix(_SINGLE_ADD[bin_label], slot_dim)
    if slot_dim < 6:
        add1 = _slot_matrix({SLOT_VACUUM: _BIN_INDEX[bin_label]}, slot_dim)

    spin_down = _spin_matrix({(SPIN_DOWN, SPIN_DOWN): 1.0})
    spin_up = _spin_matrix({(SPIN_UP, SPIN_UP): 1.0})
    spin_flip = _spin_matrix({(SPIN_DOWN, SPIN_UP): 1.0})
    phase_f = np.exp(1j * phase)
    emit_op = _embed_pair(spin_up, add1 @ proj_single, layout, slot)

    branches = [("emit",
                 _embed_pair(spin_down, np.eye(slot_dim), layout, slot)
                 + math.sqrt(p_keep * (1.0 - p_d)) * phase_f * emit_op,
                 False)]
    if p_d > 0:
        branches.append(("emit_double",
                         math.sqrt(p_keep * p_d) * phase_f * emit_op, True))
    if slot_dim == 6:
        proj_double = _slot_projector((SLOT_EE, SLOT_EL, SLOT_LL), slot_dim)
        if p_keep > 0:
            branches.append(("sat_emit", math.sqrt(p_keep)
                             * _embed_pair(spin_up, proj_double, layout, slot), True))
        if p_keep < 1.0:
            branches.append(("sat_jump", math.sqrt(1.0 - p_keep)
                             * _embed_pair(spin_flip, proj_double, layout, slot), False))
    if p_keep < 1.0:
        branches.append(("jump", math.sqrt(1.0 - p_keep)
                         * _embed_pair(spin_flip, proj_single, layout, slot), False))
    return branches


def verify_kraus_complete(branches: Sequence[tuple], dim: int) -> float:
    total = sum(b[1].conj().T @ b[1] for b in branches)
    return float(np.max(np.abs(total - np.eye(dim))))


# ---------------------------------------------------------------------------
# exact evolution
# ---------------------------------------------------------------------------


@dataclass
class ExactComponent:
    """One classically-flagged branch of the exact mixture.

    flag_clicks lists (slot, bin) labels of distinguishable photons that
    accompany this branch (wrong-transition scatter or re-excitation); they
    produce detector clicks but live outside the register.
    """

    weight: float
    rho: np.ndarray          # may carry trace < 1; branch mass = weight * trace
    flag_clicks: tuple[tuple[int, str], ...] = ()
    blink_off: bool = False


@dataclass
class ExactResult:
    layout: RegisterLayout
    components: list[ExactComponent]
    sequence: PulseSequence

    def density(self) -> DensityOperator:
        """Pre-detection density operator, traced over classical flags."""
        mat = sum(c.weight * c.rho for c in self.components)
        return DensityOperator(self.layout, mat, validate=False)


def _apply_kraus_rho(rho: np.ndarray, branches) -> np.ndarray:
    out = np.zeros_like(rho)
    for _, k in branches:
        out += k @ rho @ k.conj().T
    return out


def _initial_vector(layout: RegisterLayout) -> np.ndarray:
    psi = np.zeros(layout.total_dim, dtype=np.complex128)
    psi[layout.basis_index([SPIN_DOWN] + [SLOT_VACUUM] * layout.photon_slots)] = 1.0
    return psi


def run_sequence_exact(seq: PulseSequence, params: EmitterParams, noise: NoiseParams,
                       layout: RegisterLayout | None = None) -> ExactResult:
    """Propagate the exact pre-detection mixture through the sequence."""
    if layout is None:
        layout = sequence_layout(seq, noise)
    psi0 = _initial_vector(layout)
    rho0 = np.outer(psi0, psi0.conj())
    comps = [ExactComponent(1.0, rho0)]
    if noise.blink_block_len > 0 and noise.blink_on_fraction < 1.0:
        comps = [ExactComponent(noise.blink_on_fraction, rho0),
                 ExactComponent(1.0 - noise.blink_on_fraction, rho0, blink_off=True)]

    proj_down = _embed_pair(_spin_matrix({(SPIN_DOWN, SPIN_DOWN): 1.0}),
                            np.eye(layout.slot_dim), layout, -1)
    proj_up = np.eye(layout.total_dim) - proj_down

    for op in seq.steps:
        if op.kind == "readout":
            continue
        new_comps: list[ExactComponent] = []
        for comp in comps:
            if op.kind == "pump":
                branches = [(lbl, tensor_embed(k, 0, layout).matrix)
                            for lbl, k in pump_kraus(noise.p_init_error)]
                new_comps.append(replace(comp, rho=_apply_kraus_rho(comp.rho, branches)))
            elif op.kind in ("rotate", "wait"):
                kraus = (rotation_kraus(op.axis, op.angle, noise)
                         if op.kind == "rotate" else wait_kraus(noise, op.duration))
                branches = [(lbl, tensor_embed(k, 0, layout).matrix)
                            for lbl, k in kraus]
                new_comps.append(replace(comp, rho=_apply_kraus_rho(comp.rho, branches)))
            elif op.kind == "excite":
                rho = comp.rho
                p_w = noise.p_wrong_transition if not comp.blink_off else 0.0
                w_rest = 1.0
                if p_w > 0:
                    down_pop = float(np.trace(proj_down @ rho).real)
                    w_click = p_w * down_pop
                    if w_click > 1e-15:
                        rho_click = proj_down @ rho @ proj_down / down_pop
                        new_comps.append(ExactComponent(
                            comp.weight * w_click, rho_click,
                            comp.flag_clicks + ((op.slot, op.bin),), comp.blink_off))
                    k0 = math.sqrt(1 - p_w) * proj_down + proj_up
                    rho = k0 @ rho @ k0.conj().T
                    w_rest = float(np.trace(rho).real)
                    if w_rest <= 1e-15:
                        continue
                    rho = rho / w_rest
                if layout.slot_dim == 3:
                    _check_overflow_rho(rho, layout, op)
                branches = excite_kraus(op.bin, op.phase, params, noise, layout,
                                        op.slot, emitting=not comp.blink_off)
                plain = np.zeros_like(rho)
                for _, k, extra in branches:
                    out = k @ rho @ k.conj().T
                    if extra:
                        w = float(np.trace(out).real)
                        if w > 1e-15:
                            new_comps.append(ExactComponent(
                                comp.weight * w_rest * w, out / w,
                                comp.flag_clicks + ((op.slot, op.bin),),
                                comp.blink_off))
                    else:
                        plain += out
                new_comps.append(ExactComponent(comp.weight * w_rest, plain,
                                                comp.flag_clicks, comp.blink_off))
        comps = _merge_components(new_comps)
    return ExactResult(layout, comps, seq)


def _merge_components(comps: list[ExactComponent]) -> list[ExactComponent]:
    """Sum components sharing the same classical record (flag multiset, blink)."""
    merged: dict[tuple, ExactComponent] = {}
    for c in comps:
        key = (tuple(sorted(c.flag_clicks)), c.blink_off)
        if key in merged:
            m = merged[key]
            m.rho = m.rho + c.weight * c.rho
        else:
            merged[key] = ExactComponent(1.0, c.weight * c.rho,
                                         tuple(sorted(c.flag_clicks)), c.blink_off)
    return list(merged.values())


def _check_overflow_rho(rho: np.ndarray, layout: RegisterLayout, op: PulseOp) -> None:
    """slot_dim = 3 cannot represent a second photon in an occupied slot."""
    occ = _slot_projector((SLOT_EARLY, SLOT_LATE), layout.slot_dim)
    full = _embed_pair(_spin_matrix({(SPIN_UP, SPIN_UP): 1.0}), occ, layout, op.slot)
    if float(np.trace(full @ rho).real) > 1e-9:
        raise ConfigurationError(
            "excitation would doubly occupy a time bin; enable slot_dim = 6")


# ---------------------------------------------------------------------------
# trajectory evolution
# ---------------------------------------------------------------------------

_STREAM_BLINK = 7001


def group_by_id(ids: np.ndarray) -> list[tuple[int, np.ndarray]]:
    """Index arrays of equal-id repetitions, in ascending id order."""
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    uniq, starts = np.unique(sorted_ids, return_index=True)
    bounds = list(starts) + [ids.size]
    return [(int(uniq[k]), order[bounds[k]:bounds[k + 1]]) for k in range(uniq.size)]


@dataclass
class TrajectoryResult:
    """Per-repetition branch outcomes of a trajectory run.

    state_ids maps each repetition to an entry of state_table (the pure
    pre-detection state conditioned on that repetition's sampled noise
    branches).  Record arrays hold one row per repetition; emission codes
    are 0 none, 1 emit, 2 jump (cross-polarized loss + spin flip), 3 double.
    """

    layout: RegisterLayout
    sequence: PulseSequence
    rep_indices: np.ndarray
    state_table: list[np.ndarray]
    state_ids: np.ndarray
    rotation_flips: np.ndarray
    emission_results: np.ndarray
    wrong_clicks: np.ndarray     # detuned-transition background photon per excite op
    extra_clicks: np.ndarray     # re-excitation / saturated-bin photon per excite op
    blink_off: np.ndarray
    excite_ops: list[PulseOp]

    def flag_click_matrix(self) -> np.ndarray:
        """All classical background photons: columns [wrong ops..., extra ops...]."""
        return np.concatenate([self.wrong_clicks, self.extra_clicks], axis=1)


def _canonical_key(vec: np.ndarray) -> bytes:
    idx = int(np.argmax(np.abs(vec) > 1e-9))
    phase = vec[idx] / abs(vec[idx])
    canon = np.round(vec / phase, 10) + 0.0
    return canon.tobytes()


class _StateTable:
    def __init__(self):
        self.states: list[np.ndarray] = []
        self._index: dict[bytes, int] = {}

    def add(self, vec: np.ndarray) -> int:
        key = _canonical_key(vec)
        sid = self._index.get(key)
        if sid is None:
            sid = len(self.states)
            self.states.append(vec)
            self._index[key] = sid
        return sid


_EMISSION_CODE = {"wrong": 0, "emit": 1, "jump": 2, "emit_double": 3,
                  "sat_emit": 1, "sat_jump": 2, "blink": 0}
_ROTATION_CODE = {"ideal": 0, "flip": 1, "dephase": 2}


def run_sequence_trajectory(seq: PulseSequence, params: EmitterParams,
                            noise: NoiseParams, master_seed: int,
                            rep_indices: np.ndarray,
                            layout: RegisterLayout | None = None) -> TrajectoryResult:
    """Sample one noise-branch path per repetition.

    Randomness is addressed by (master_seed, repetition index, step), so the
    result is identical however repetitions are batched across workers.
    """
    if layout is None:
        layout = sequence_layout(seq, noise)
    reps = np.asarray(rep_indices, dtype=np.uint64)
    n = reps.size

    table = _StateTable()
    ids = np.full(n, table.add(_initial_vector(layout)), dtype=np.int64)

    if noise.blink_block_len > 0 and noise.blink_on_fraction < 1.0:
        blocks = reps // np.uint64(noise.blink_block_len)
        blink_off = crng.uniforms(master_seed, blocks, _STREAM_BLINK) >= noise.blink_on_fraction
    else:
        blink_off = np.zeros(n, dtype=bool)

    n_rot = sum(1 for s in seq.steps if s.kind == "rotate")
    excite_ops = [s for s in seq.steps if s.kind == "excite"]
    rotation_flips = np.zeros((n, max(n_rot, 1)), dtype=np.int8)
    emission_results = np.zeros((n, max(len(excite_ops), 1)), dtype=np.int8)
    wrong_clicks = np.zeros((n, max(len(excite_ops), 1)), dtype=bool)
    extra_clicks = np.zeros((n, max(len(excite_ops), 1)), dtype=bool)

    proj_down = _embed_pair(_spin_matrix({(SPIN_DOWN, SPIN_DOWN): 1.0}),
                            np.eye(layout.slot_dim), layout, -1)

    rot_i = 0
    exc_i = 0
    for step_i, op in enumerate(seq.steps):
        if op.kind == "readout":
            continue
        u = crng.uniforms(master_seed, reps, stream=100 + step_i)
        new_ids = np.empty_like(ids)
        groups = group_by_id(ids)
        if op.kind in ("pump", "rotate", "wait"):
            if op.kind == "pump":
                kraus = pump_kraus(noise.p_init_error)
            elif op.kind == "wait":
                kraus = wait_kraus(noise, op.duration)
            else:
                kraus = rotation_kraus(op.axis, op.angle, noise)
            emb = [(lbl, tensor_embed(k, 0, layout).matrix) for lbl, k in kraus]
            for sid, idx in groups:
                psi = table.states[sid]
                outs, probs, labels = [], [], []
                for lbl, k in emb:
                    phi = k @ psi
                    p = float(np.vdot(phi, phi).real)
                    if p > 1e-14:
                        outs.append(phi / math.sqrt(p))
                        probs.append(p)
                        labels.append(lbl)
                cum = np.cumsum(probs)
                cum /= cum[-1]
                choice = np.minimum(np.searchsorted(cum, u[idx], "right"), len(outs) - 1)
                local_ids = np.array([table.add(v) for v in outs], dtype=np.int64)
                new_ids[idx] = local_ids[choice]
                if op.kind == "rotate":
                    codes = np.array([_ROTATION_CODE[l] for l in labels], dtype=np.int8)
                    rotation_flips[idx, rot_i] = codes[choice]
            ids = new_ids
            if op.kind == "rotate":
                rot_i += 1
        elif op.kind == "excite":
            for sid, idx in groups:
                psi = table.states[sid]
                outs, probs, labels, wflags, eflags = [], [], [], [], []
                p_w = noise.p_wrong_transition
                down_pop = float(np.vdot(psi, proj_down @ psi).real)
                base, base_w = psi, 1.0
                if p_w > 0 and down_pop > 1e-14:
                    phi = proj_down @ psi
                    outs.append(phi / np.linalg.norm(phi))
                    probs.append(p_w * down_pop)
                    labels.append("wrong")
                    wflags.append(True)
                    eflags.append(False)
                    k0 = (math.sqrt(1 - p_w) * proj_down
                          + (np.eye(layout.total_dim) - proj_down))
                    base = k0 @ psi
                    base_w = float(np.vdot(base, base).real)
                    base = base / math.sqrt(base_w)
                if layout.slot_dim == 3:
                    _check_overflow_rho(np.outer(base, base.conj()), layout, op)
                for lbl, k, extra in excite_kraus(op.bin, op.phase, params, noise,
                                                  layout, op.slot, emitting=True):
                    phi = k @ base
                    p = float(np.vdot(phi, phi).real)
                    if p > 1e-14:
                        outs.append(phi / math.sqrt(p))
                        probs.append(base_w * p)
                        labels.append(lbl)
                        wflags.append(False)
                        eflags.append(extra)
                cum = np.cumsum(probs)
                cum /= cum[-1]
                choice = np.minimum(np.searchsorted(cum, u[idx], "right"), len(outs) - 1)
                active = ~blink_off[idx]
                local_ids = np.array([table.add(v) for v in outs], dtype=np.int64)
                new_ids[idx] = np.where(active, local_ids[choice], sid)
                codes = np.array([_EMISSION_CODE[l] for l in labels], dtype=np.int8)
                emitted = np.where(active, codes[choice], 0)
                if down_pop > 1 - 1e-12:
                    # a pure down state never emits in the 'emit' branch
                    emitted = np.where(emitted == 1, 0, emitted)
                emission_results[idx, exc_i] = emitted
                wfl = np.array([wflags[c] for c in choice], dtype=bool)
                efl = np.array([eflags[c] for c in choice], dtype=bool)
                wrong_clicks[idx, exc_i] = wfl & active
                extra_clicks[idx, exc_i] = efl & active
            ids = new_ids
            exc_i += 1
    return TrajectoryResult(layout, seq, reps, table.states, ids, rotation_flips,
                            emission_results, wrong_clicks, extra_clicks,
                            blink_off, excite_ops)


# ---------------------------------------------------------------------------
# functional channel surface
# ---------------------------------------------------------------------------


def _to_density(state) -> DensityOperator:
    from .hilbert import QuditState

    if isinstance(state, QuditState):
        return state.to_density()
    return state


def optical_pump(state, noise: NoiseParams) -> DensityOperator:
    """Reset channel: spin pumped to down with residual p_init_error up."""
    rho = _to_density(state)
    branches = [(lbl, tensor_embed(k, 0, rho.layout).matrix)
                for lbl, k in pump_kraus(noise.p_init_error)]
    return DensityOperator(rho.layout, _apply_kraus_rho(rho.matrix, branches),
                           validate=False)


def raman_rotate(state, axis, angle: float, noise: NoiseParams) -> DensityOperator:
    """Noisy ground-state rotation applied to the spin register."""
    rho = _to_density(state)
    branches = [(lbl, tensor_embed(k, 0, rho.layout).matrix)
                for lbl, k in rotation_kraus(axis, angle, noise)]
    return DensityOperator(rho.layout, _apply_kraus_rho(rho.matrix, branches),
                           validate=False)


def excite_timebin(state, bin_label: str, phase_e: float, params: EmitterParams,
                   noise: NoiseParams, rng: np.random.Generator | None = None,
                   slot: int = 0):
    """One excitation pulse.

    Density-operator input (or rng=None): returns the channel output.
    Pure-state input with an rng: samples one branch and returns
    (post QuditState, branch label) the way the trajectory engine does.
    Wrong-transition clicks are classical flags and are not sampled here.
    """
    from .hilbert import QuditState

    if rng is not None and isinstance(state, QuditState):
        layout = state.layout
        if layout.slot_dim == 3:
            _check_overflow_rho(np.outer(state.amplitudes, state.amplitudes.conj()),
                                layout, PulseOp("excite", slot=slot, bin=bin_label))
        branches = excite_kraus(bin_label, phase_e, params, noise, layout, slot)
        outs, probs, labels = [], [], []
        for lbl, k, _extra in branches:
            phi = k @ state.amplitudes
            p = float(np.vdot(phi, phi).real)
            if p > 1e-14:
                outs.append(phi / math.sqrt(p))
                probs.append(p)
                labels.append(lbl)
        idx = int(np.searchsorted(np.cumsum(probs) / sum(probs), rng.random(),
                                  "right"))
        idx = min(idx, len(outs) - 1)
        return QuditState(layout, outs[idx]), labels[idx]
    rho = _to_density(state)
    if rho.layout.slot_dim == 3:
        _check_overflow_rho(rho.matrix, rho.layout,
                            PulseOp("excite", slot=slot, bin=bin_label))
    branches = excite_kraus(bin_label, phase_e, params, noise, rho.layout, slot)
    return DensityOperator(rho.layout,
                           _apply_kraus_rho(rho.matrix,
                                            [(l, k) for l, k, _ in branches]),
                           validate=False)


def run_sequence(seq: PulseSequence, params: EmitterParams, noise: NoiseParams,
                 mode: str = "exact", n_repetitions: int = 1,
                 master_seed: int = 0, rep_indices=None,
                 layout: RegisterLayout | None = None):
    """Dispatch to exact density-operator or sampled trajectory evolution."""
    if mode == "exact":
        return run_sequence_exact(seq, params, noise, layout)
    if mode == "trajectory":
        reps = (np.arange(n_repetitions, dtype=np.uint64)
                if rep_indices is None else rep_indices)
        return run_sequence_trajectory(seq, params, noise, master_seed, reps, layout)
    raise ContractError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# calibration helpers
# ---------------------------------------------------------------------------


def rabi_population(angle: float, noise: NoiseParams) -> float:
    """Exact up population after one rotation of given pulse area on the pumped state."""
    psi = np.zeros(2, dtype=np.complex128)
    psi[SPIN_DOWN] = 1.0
    pop = 0.0
    for _, k in rotation_kraus("y", angle, noise):
        phi = k @ psi
        pop += abs(phi[SPIN_UP]) ** 2
    return float(pop)


def rabi_curve(angles: np.ndarray, noise: NoiseParams) -> np.ndarray:
    return np.array([rabi_population(a, noise) for a in np.asarray(angles, float)])
