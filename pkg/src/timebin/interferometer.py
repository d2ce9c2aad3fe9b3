"""Double-pass time-bin interferometer model.

The photon enters an unbalanced interferometer: the short arm maps an early
photon to the early detection window and a late photon to the middle window,
the long arm maps early -> middle and late -> late.  Both middle-window paths
recombine on a beamsplitter feeding detectors D1 and D2, so the middle window
measures the time-bin qubit in an equatorial basis set by the phase between
the excitation pulses and the analysis pass.

Because the excitation pulses are themselves derived from a pass through the
same interferometer, only the phase difference 2*(theta_pol - theta0) is
observable; the absolute arm phase cancels and is exposed here only as a
test knob (`drift_phase`).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError
from .hilbert import (SLOT_EARLY, SLOT_LATE, LinearOperator, RegisterLayout)


class Window(str, Enum):
    EARLY = "early"
    MIDDLE = "middle"
    LATE = "late"
    READOUT = "readout"


class Detector(str, Enum):
    D1 = "D1"
    D2 = "D2"


@dataclass(frozen=True)
class DetectionEvent:
    detector: Detector
    window: Window
    repetition: int


@dataclass(frozen=True)
class TBIParams:
    """Interferometer settings and imperfections."""

    theta0: float = 0.0            # polarizer angle at which phi_d = phi_e (rad)
    theta_pol: float = 0.0         # polarizer setting (rad)
    classical_visibility: float = 0.99
    splitting_ratio: float = 0.5   # routing splitter transmission
    detector_efficiency: float = 1.0
    drift_phase: float = 0.0       # common drift of phi_e and phi_d; unobservable

    def __post_init__(self):
        if not 0.0 < self.splitting_ratio < 1.0:
            raise ConfigurationError("splitting_ratio must lie strictly in (0, 1)")
        if not 0.0 <= self.classical_visibility <= 1.0:
            raise ConfigurationError("classical_visibility must lie in [0, 1]")

    def with_theta_pol(self, theta_pol: float) -> "TBIParams":
        return TBIParams(self.theta0, theta_pol, self.classical_visibility,
                         self.splitting_ratio, self.detector_efficiency, self.drift_phase)


def effective_phase(params: TBIParams) -> float:
    """Observable phase difference phi_e - phi_d = 2*(theta_pol - theta0)."""
    return 2.0 * (params.theta_pol - params.theta0)


def excitation_phase(params: TBIParams) -> float:
    """Phase imprinted between late and early excitation pulses.

    Equals the detection-pass phase plus the polarizer offset, so downstream
    probabilities depend only on their difference.
    """
    return params.drift_phase + effective_phase(params)


def detection_phase(params: TBIParams) -> float:
    return params.drift_phase


def middle_window_amplitudes(params: TBIParams) -> tuple[np.ndarray, np.ndarray]:
    """Analysis vectors (e, l amplitudes) for a D1 / D2 middle-window click.

    D1 corresponds to (|e> + e^{i phi_d}|l>)/sqrt(2) up to the arm imbalance
    set by splitting_ratio.
    """
    s = params.splitting_ratio
    phi_d = detection_phase(params)
    a_e = np.sqrt(1.0 - s)          # early photon reaches the middle via the long arm
    a_l = np.sqrt(s) * np.exp(1j * phi_d)
    d1 = np.array([a_e, a_l]) / np.sqrt(a_e**2 + s)
    d2 = np.array([a_e, -a_l]) / np.sqrt(a_e**2 + s)
    return d1, d2


def middle_window_projectors(params: TBIParams, layout: RegisterLayout | None = None,
                             slot: int = 0) -> tuple[LinearOperator, LinearOperator]:
    """POVM elements for D1/D2 clicks in the middle window on the {e, l} span.

    Imperfect interference mixes the ideal projectors with weight
    (1 - classical_visibility)/2.
    """
    if layout is None:
        layout = RegisterLayout(photon_slots=1, slot_dim=3)
    d1, d2 = middle_window_amplitudes(params)
    dim = layout.slot_dim
    p1 = np.zeros((dim, dim), dtype=np.complex128)
    p2 = np.zeros((dim, dim), dtype=np.complex128)
    idx = [SLOT_EARLY, SLOT_LATE]
    for i, gi in enumerate(idx):
        for j, gj in enumerate(idx):
            p1[gi, gj] = d1[i] * d1[j].conjugate()
            p2[gi, gj] = d2[i] * d2[j].conjugate()
    v = params.classical_visibility
    m1 = 0.5 * (1 + v) * p1 + 0.5 * (1 - v) * p2
    m2 = 0.5 * (1 + v) * p2 + 0.5 * (1 - v) * p1
    from .hilbert import tensor_embed
    op1 = tensor_embed(m1, 1 + slot, layout, label="mid_D1")
    op2 = tensor_embed(m2, 1 + slot, layout, label="mid_D2")
    return op1, op2


def slot_window_povm(params: TBIParams, slot_dim: int = 3) -> dict[tuple[Window, Detector], np.ndarray]:
    """Click POVM on the single-photon span {vacuum, e, l} of one slot.

    Keys are (window, detector); elements sum to the identity on span{e, l}
    (a photon is always detected somewhere before efficiency losses).
    Double-occupancy states are handled combinatorially by the detection
    layer, not by this POVM.
    """
    s = params.splitting_ratio
    v = params.classical_visibility
    povm: dict[tuple[Window, Detector], np.ndarray] = {}

    def slot_mat(fill) -> np.ndarray:
        m = np.zeros((slot_dim, slot_dim), dtype=np.complex128)
        for (i, j), val in fill.items():
            m[i, j] = val
        return m

    for det, w in ((Detector.D1, 0.5), (Detector.D2, 0.5)):
        povm[(Window.EARLY, det)] = slot_mat({(SLOT_EARLY, SLOT_EARLY): s * w})
        povm[(Window.LATE, det)] = slot_mat({(SLOT_LATE, SLOT_LATE): (1.0 - s) * w})
    # middle-window elements: the early photon arrives through the long arm
    # (weight 1-s), the late one through the short arm (weight s)
    chi1 = np.array([np.sqrt(1.0 - s), np.sqrt(s) * np.exp(1j * detection_phase(params))])
    chi2 = np.array([chi1[0], -chi1[1]])
    half = 0.5
    e_idx = [SLOT_EARLY, SLOT_LATE]
    raw1 = np.zeros((slot_dim, slot_dim), dtype=np.complex128)
    raw2 = np.zeros((slot_dim, slot_dim), dtype=np.complex128)
    for i, gi in enumerate(e_idx):
        for j, gj in enumerate(e_idx):
            raw1[gi, gj] = half * chi1[i] * chi1[j].conjugate()
            raw2[gi, gj] = half * chi2[i] * chi2[j].conjugate()
    povm[(Window.MIDDLE, Detector.D1)] = (1 + v) / 2 * raw1 + (1 - v) / 2 * raw2
    povm[(Window.MIDDLE, Detector.D2)] = (1 + v) / 2 * raw2 + (1 - v) / 2 * raw1
    return povm


def route_photon(component: str, params: TBIParams, rng: np.random.Generator) -> Window:
    """Sample the passive routing of a definite early or late photon."""
    s = params.splitting_ratio
    u = rng.random()
    if component == "e":
        return Window.EARLY if u < s else Window.MIDDLE
    if component == "l":
        return Window.MIDDLE if u < s else Window.LATE
    raise ConfigurationError(f"unknown photon component {component!r}")


def classical_fringe(theta_pol, params: TBIParams) -> np.ndarray:
    """Normalized intensity difference of the two detectors for a classical input.

    Follows V_c * cos(2*(theta_pol - theta0)).
    """
    theta = np.atleast_1d(np.asarray(theta_pol, dtype=float))
    return params.classical_visibility * np.cos(2.0 * (theta - params.theta0))


def fit_fringe(theta: np.ndarray, contrast: np.ndarray) -> tuple[float, float]:
    """Least-squares fit of contrast = V*cos(2*(theta - theta0)).

    Linearizes to A cos(2 theta) + B sin(2 theta); returns (V, theta0) with
    V >= 0 and theta0 in (-pi/2, pi/2].
    """
    theta = np.asarray(theta, dtype=float)
    contrast = np.asarray(contrast, dtype=float)
    design = np.column_stack([np.cos(2 * theta), np.sin(2 * theta)])
    (a, b), *_ = np.linalg.lstsq(design, contrast, rcond=None)
    amp = float(np.hypot(a, b))
    theta0 = float(0.5 * np.arctan2(b, a))
    return amp, theta0
