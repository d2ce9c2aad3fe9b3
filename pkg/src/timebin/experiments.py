"""Experiment orchestration: entanglement witness runs, photon-purity runs,
fringe scans and the rotation calibration sweep.

Each witness run loops over the n+1 measurement settings; every setting has
two spin sub-settings (the toggled readout rotation), each compiled into its
own pulse sequence and detection model.  Repetitions are assigned to
sub-runs round-robin by repetition index, so a run can be partitioned into
arbitrary chunks without changing any outcome.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import coincidence as coin
from . import witness as wit
from .coincidence import WindowConfig
from .detection import DetectionModel, RunClicks
from .emitter import (EmitterParams, NoiseParams, PulseSequence,
                      build_bell_sequence, build_ghz_sequence,
                      build_hom_sequence, run_sequence_exact,
                      run_sequence_trajectory)
from .hilbert import DensityOperator
from .interferometer import TBIParams, Window, excitation_phase
from .witness import (MeasurementSetting, SettingCounts, ghz_fidelity,
                      ghz_settings, pattern_outcomes)


@dataclass
class SubRun:
    setting: MeasurementSetting
    sub_index: int
    sequence: PulseSequence
    tbi: TBIParams
    windows: WindowConfig


def _witness_subruns(n_qubits: int, params: EmitterParams, tbi: TBIParams
                     ) -> list[SubRun]:
    n_photons = n_qubits - 1
    windows = WindowConfig.for_sequence(n_photons, t_inf=params.t_inf,
                                        slot_spacing=params.photon_spacing_ns,
                                        repetition_period=params.repetition_period_ns)
    subruns = []
    for setting in ghz_settings(n_qubits):
        tbi_s = tbi.with_theta_pol(tbi.theta0 + setting.theta_pol_offset)
        phase_e = excitation_phase(tbi_s)
        if n_photons == 1:
            base = build_bell_sequence(params, phase_e=phase_e)
        else:
            base = build_ghz_sequence(n_photons, params, phase_e=phase_e)
        for sub_i, sub in enumerate(setting.subsettings):
            seq = base.with_readout_rotation(sub.axis, sub.angle)
            subruns.append(SubRun(setting, sub_i, seq, tbi_s, windows))
    return subruns


@dataclass
class WitnessOutcome:
    """Per-setting estimates and the assembled fidelity."""

    n_qubits: int
    counts: dict                      # label -> SettingCounts
    population: tuple[float, float]
    correlators: dict                 # label -> (value, err)
    fidelity: float
    fidelity_err: float
    witness_violated: bool
    n_heralded: dict
    leak_event_fraction: float = 0.0
    corrected_fidelity: float | None = None
    corrected_fidelity_err: float | None = None

    @classmethod
    def from_counts(cls, n_qubits: int, counts: dict,
                    leak_event_fraction: float = 0.0) -> "WitnessOutcome":
        settings = ghz_settings(n_qubits)
        pop_counts = counts[settings[0].label]
        pop, pop_err = pop_counts.population()
        correlators = {}
        mks, mk_errs = [], []
        for setting in settings[1:]:
            e, err = counts[setting.label].expectation()
            correlators[setting.label] = (e, err)
            mks.append(e)
            mk_errs.append(err)
        f, f_err = ghz_fidelity(n_qubits, pop, mks, pop_err, mk_errs)
        outcome = cls(n_qubits, counts, (pop, pop_err), correlators, f, f_err,
                      f > 0.5, {k: c.total for k, c in counts.items()},
                      leak_event_fraction)
        outcome._apply_background_correction()
        return outcome

    def _apply_background_correction(self) -> None:
        if self.leak_event_fraction <= 0.0:
            self.corrected_fidelity = self.fidelity
            self.corrected_fidelity_err = self.fidelity_err
            return
        settings = ghz_settings(self.n_qubits)
        corr_counts = {}
        for setting in settings:
            acc = self.counts[setting.label]
            corrected, _ = wit.background_correct(acc.counts, self.leak_event_fraction)
            fixed = SettingCounts(setting, self.n_qubits - 1)
            for k, v in corrected.items():
                fixed.add(k, v)
            corr_counts[setting.label] = fixed
        pop, pop_err = corr_counts[settings[0].label].population()
        mks, mk_errs = [], []
        for setting in settings[1:]:
            e, err = corr_counts[setting.label].expectation()
            mks.append(e)
            mk_errs.append(err)
        f, f_err = ghz_fidelity(self.n_qubits, pop, mks, pop_err, mk_errs)
        self.corrected_fidelity = f
        self.corrected_fidelity_err = f_err


# ---------------------------------------------------------------------------
# exact-mode witness
# ---------------------------------------------------------------------------


def witness_exact(n_qubits: int, params: EmitterParams, noise: NoiseParams,
                  tbi: TBIParams, thinned: bool = False) -> WitnessOutcome:
    """Expected-count witness estimate from exact density-operator evolution."""
    subruns = _witness_subruns(n_qubits, params, tbi)
    counts: dict[str, SettingCounts] = {}
    for run in subruns:
        exact = run_sequence_exact(run.sequence, params, noise)
        model = DetectionModel(exact.layout, run.tbi, noise, run.windows, thinned)
        acc = counts.setdefault(run.setting.label,
                                SettingCounts(run.setting, n_qubits - 1))
        sub = run.setting.subsettings[run.sub_index]
        for comp in exact.components:
            for pattern, readout, p in model.full_distribution(comp.rho,
                                                               comp.flag_clicks):
                if not readout or p <= 0:
                    continue
                for outcome in pattern_outcomes(run.setting, sub, pattern,
                                                n_qubits - 1):
                    acc.add(outcome, comp.weight * p / len(run.setting.subsettings))
    return WitnessOutcome.from_counts(n_qubits, counts)


def bell_fidelity_exact(params: EmitterParams, noise: NoiseParams,
                        tbi: TBIParams) -> float:
    return witness_exact(2, params, noise, tbi).fidelity


def exact_predetection_state(n_qubits: int, params: EmitterParams,
                             noise: NoiseParams, tbi: TBIParams
                             ) -> DensityOperator:
    """Pre-detection density operator of the generation sequence (no readout
    rotation), mainly for direct-fidelity oracle checks."""
    phase_e = excitation_phase(tbi)
    if n_qubits == 2:
        seq = build_bell_sequence(params, phase_e=phase_e)
    else:
        seq = build_ghz_sequence(n_qubits - 1, params, phase_e=phase_e)
    return run_sequence_exact(seq, params, noise).density()


# ---------------------------------------------------------------------------
# trajectory-mode witness
# ---------------------------------------------------------------------------


# the assembled per-run estimate record also answers to its domain name
WitnessEstimate = WitnessOutcome


@dataclass
class WitnessRun:
    outcome: WitnessOutcome
    subruns: list[SubRun]
    clicks: list[RunClicks]
    rep_slices: list[np.ndarray]
    n_repetitions: int
    coincidence_rate_hz: float


def _count_clicks(acc: SettingCounts, run: SubRun, clicks: RunClicks,
                  n_slots: int) -> tuple[float, float]:
    """Accumulate heralded events; returns (leak events, total events)."""
    from .interferometer import Detector

    sub = run.setting.subsettings[run.sub_index]
    readout = clicks.readout_clicks
    plain = ~(clicks.leak_clicks.any(axis=1) | (clicks.flag_ids >= 0).any(axis=1))
    leak_events = 0.0
    total_events = 0.0
    # fast path: catalog patterns only, grouped by pattern id
    rows = np.nonzero(plain & readout)[0]
    ids = clicks.pattern_ids[rows]
    leakread_ids = clicks.pattern_ids[plain & clicks.readout_leak
                                      & ~clicks.readout_signal]
    for pid in np.unique(ids):
        n_rows = int(np.sum(ids == pid))
        outs = pattern_outcomes(run.setting, sub, clicks.pattern_catalog[pid], n_slots)
        for outcome in outs:
            acc.add(outcome, float(n_rows))
        total_events += n_rows * len(outs)
        leak_events += int(np.sum(leakread_ids == pid)) * len(outs)
    # slow path: repetitions with background or wrong-transition clicks
    slow = np.nonzero(~plain & readout)[0]
    for row in slow:
        base = clicks.pattern_catalog[clicks.pattern_ids[row]]
        extras = []
        for k, (slot, w) in enumerate(clicks.leak_windows):
            if clicks.leak_clicks[row, k]:
                d = Detector.D1 if clicks.leak_detectors[row, k] == 0 else Detector.D2
                extras.append(((slot, w, d), True))
        for e_i in range(clicks.flag_ids.shape[1]):
            fid = clicks.flag_ids[row, e_i]
            if fid >= 0:
                for c in clicks.flag_patterns[fid]:
                    extras.append((c, False))
        all_clicks = [(c, False, True) for c in base] \
            + [(c, is_leak, False) for c, is_leak in extras]
        outs = _flagged_outcomes(run.setting, sub, all_clicks, n_slots)
        readout_is_leak = bool(clicks.readout_leak[row] and not clicks.readout_signal[row])
        for outcome, uses_leak in outs:
            acc.add(outcome, 1.0)
            total_events += 1
            if uses_leak or readout_is_leak:
                leak_events += 1
    return leak_events, total_events


def clicks_sub_index(run: SubRun) -> int:
    return run.sub_index


def _flagged_outcomes(setting: MeasurementSetting, sub, flagged_clicks,
                      n_slots: int):
    """pattern_outcomes with leak provenance carried through combinations."""
    per_slot: list[list[tuple[int, bool]]] = [[] for _ in range(n_slots)]
    for (slot, window, det), is_leak, _signal in flagged_clicks:
        eig = setting.photon_eigenvalue(window, det)
        if eig is not None and slot < n_slots:
            per_slot[slot].append((eig, is_leak))
    if any(not s for s in per_slot):
        return []
    combos = [((sub.eigenvalue, ()), False)]
    for slot_list in per_slot:
        combos = [(((s, ph + (e,))), leak or is_leak)
                  for (s, ph), leak in combos for e, is_leak in slot_list]
    return combos


def witness_trajectory(n_qubits: int, params: EmitterParams, noise: NoiseParams,
                       tbi: TBIParams, n_repetitions: int, master_seed: int,
                       thinned: bool = False, keep_clicks: bool = False,
                       workers: int = 1) -> WitnessRun:
    """Monte Carlo witness estimate over n_repetitions sampled repetitions.

    Repetition r runs sub-setting r mod (2n+2); post-selected counts merge
    across sub-runs.  The workers argument only partitions each sub-run
    into repetition-range chunks (merging is a commutative count sum), so
    outputs are bit-identical for any worker count.  With thinned=True all
    efficiencies are applied and the post-selected coincidence rate is
    physical.
    """
    subruns = _witness_subruns(n_qubits, params, tbi)
    all_reps = np.arange(n_repetitions, dtype=np.uint64)
    counts: dict[str, SettingCounts] = {}
    clicks_list: list[RunClicks] = []
    slices: list[np.ndarray] = []
    leak_events = 0.0
    total_events = 0.0
    coincident_reps = 0
    for k, run in enumerate(subruns):
        reps = all_reps[all_reps % len(subruns) == k]
        slices.append(reps)
        acc = counts.setdefault(run.setting.label,
                                SettingCounts(run.setting, n_qubits - 1))
        for chunk in np.array_split(reps, max(min(workers, reps.size), 1)):
            if chunk.size == 0:
                continue
            traj = run_sequence_trajectory(run.sequence, params, noise,
                                           master_seed, chunk)
            model = DetectionModel(traj.layout, run.tbi, noise, run.windows, thinned)
            clicks = model.sample_run(traj, master_seed)
            lk, tot = _count_clicks(acc, run, clicks, n_qubits - 1)
            leak_events += lk
            total_events += tot
            coincident_reps += _count_coincident(clicks)
            if keep_clicks:
                clicks_list.append(clicks)
    leak_fraction = leak_events / total_events if total_events > 0 else 0.0
    outcome = WitnessOutcome.from_counts(n_qubits, counts, leak_fraction)
    duration_s = n_repetitions / (params.repetition_rate_mhz * 1e6)
    rate = coincident_reps / duration_s if duration_s > 0 else 0.0
    return WitnessRun(outcome, subruns, clicks_list, slices, n_repetitions, rate)


def _count_coincident(clicks: RunClicks) -> int:
    """Repetitions with a click in any photonic window plus a readout click."""
    has_pattern = np.array([len(p) > 0 for p in clicks.pattern_catalog], dtype=bool)
    photonic = has_pattern[clicks.pattern_ids]
    photonic |= clicks.leak_clicks.any(axis=1)
    if clicks.flag_patterns:
        flag_click = np.array([len(p) > 0 for p in clicks.flag_patterns], dtype=bool)
        flag_click = np.concatenate([flag_click, [False]])  # -1 indexes the sentinel
        photonic |= flag_click[clicks.flag_ids].any(axis=1)
    return int(np.sum(photonic & clicks.readout_clicks))


def trajectory_exact_tvd(n_qubits: int, params: EmitterParams, noise: NoiseParams,
                         tbi: TBIParams, n_repetitions: int, master_seed: int,
                         thinned: bool = True, setting_index: int = 1,
                         sub_index: int = 0) -> float:
    """Total variation distance between sampled and exact outcome distributions.

    Runs one sub-setting's sequence for all repetitions and compares the
    empirical frequencies of (click pattern, readout flag) outcomes against
    the exact-mode distribution of the same sequence.
    """
    subruns = _witness_subruns(n_qubits, params, tbi)
    run = subruns[2 * setting_index + sub_index]
    reps = np.arange(n_repetitions, dtype=np.uint64)
    traj = run_sequence_trajectory(run.sequence, params, noise, master_seed, reps)
    model = DetectionModel(traj.layout, run.tbi, noise, run.windows, thinned)
    clicks = model.sample_run(traj, master_seed)
    codes, mapping = clicks.outcome_codes()
    empirical: dict = {}
    uniq, counts_arr = np.unique(codes, return_counts=True)
    for code, cnt in zip(uniq, counts_arr):
        key = mapping[int(code)]
        empirical[key] = empirical.get(key, 0.0) + cnt / n_repetitions
    exact = run_sequence_exact(run.sequence, params, noise)
    model_e = DetectionModel(exact.layout, run.tbi, noise, run.windows, thinned)
    predicted: dict = {}
    for comp in exact.components:
        for pattern, readout, p in model_e.full_distribution(comp.rho,
                                                             comp.flag_clicks):
            key = (pattern, readout)
            predicted[key] = predicted.get(key, 0.0) + comp.weight * p
    total = sum(predicted.values())
    predicted = {k: v / total for k, v in predicted.items()}
    keys = set(empirical) | set(predicted)
    return 0.5 * sum(abs(empirical.get(k, 0.0) - predicted.get(k, 0.0))
                     for k in keys)


# ---------------------------------------------------------------------------
# photon purity (g2 / HOM)
# ---------------------------------------------------------------------------


@dataclass
class HomRun:
    tags: coin.TagArrays
    windows: WindowConfig
    g2: float
    g2_err: float
    g2_detail: dict
    hom_counts: coin.HomCounts
    v_raw: float
    v_raw_err: float
    v_corrected: float
    n_repetitions: int


def simulate_hom(params: EmitterParams, noise: NoiseParams, tbi: TBIParams,
                 n_repetitions: int, master_seed: int, thinned: bool = False,
                 v_classical_assumed: float | None = None) -> HomRun:
    """Run the two-photon sequence and analyze g2(0) and HOM visibility."""
    windows = WindowConfig.for_sequence(1, t_inf=params.t_inf,
                                        repetition_period=params.repetition_period_ns)
    seq = build_hom_sequence(params)
    reps = np.arange(n_repetitions, dtype=np.uint64)
    traj = run_sequence_trajectory(seq, params, noise, master_seed, reps)
    model = DetectionModel(traj.layout, tbi, noise, windows, thinned)
    clicks = model.sample_run(traj, master_seed)
    tags = clicks.to_tags(gamma0=params.gamma0)
    g2, g2_err, detail = coin.g2_zero(tags, windows)
    hom_counts = coin.hom_counts_from_tags(tags, windows)
    v_raw, v_err = coin.hom_visibility(hom_counts)
    v_cl = tbi.classical_visibility if v_classical_assumed is None else v_classical_assumed
    v_corr = coin.hom_correct(v_raw, g2, v_cl)
    return HomRun(tags, windows, g2, g2_err, detail, hom_counts, v_raw, v_err,
                  v_corr, n_repetitions)


# ---------------------------------------------------------------------------
# fringe scans
# ---------------------------------------------------------------------------


@dataclass
class FringeScan:
    theta: np.ndarray
    contrast: dict            # curve label -> contrast array
    fits: dict                # curve label -> (amplitude, theta0)


def classical_fringe_scan(tbi: TBIParams, theta_values: np.ndarray,
                          photons_per_point: int, master_seed: int) -> FringeScan:
    """Middle-window contrast of a classical double-pass input, with shot noise."""
    from . import rng as crng

    theta_values = np.asarray(theta_values, dtype=float)
    contrast = np.empty_like(theta_values)
    for i, th in enumerate(theta_values):
        p1 = 0.5 * (1.0 + tbi.classical_visibility * math.cos(2.0 * (th - tbi.theta0)))
        u = crng.uniforms(master_seed, np.arange(photons_per_point, dtype=np.uint64)
                          + np.uint64(i * photons_per_point), stream=41)
        n1 = int(np.sum(u < p1))
        contrast[i] = (2.0 * n1 - photons_per_point) / photons_per_point
    fit = _fit(theta_values, contrast)
    return FringeScan(theta_values, {"classical": contrast}, {"classical": fit})


def _fit(theta, contrast):
    from .interferometer import fit_fringe
    return fit_fringe(theta, contrast)


def spin_conditioned_fringe_scan(params: EmitterParams, noise: NoiseParams,
                                 tbi: TBIParams, theta_values: np.ndarray,
                                 reps_per_point: int, master_seed: int) -> FringeScan:
    """Middle-window contrast of the Bell photon conditioned on spin +-X.

    Uses the readout rotations R_y(+-pi/2); each angle point is an
    independent pair of sub-runs.
    """
    theta_values = np.asarray(theta_values, dtype=float)
    curves = {"+X": np.empty_like(theta_values), "-X": np.empty_like(theta_values)}
    for i, th in enumerate(theta_values):
        tbi_th = tbi.with_theta_pol(th)
        phase_e = excitation_phase(tbi_th)
        windows = WindowConfig.for_sequence(1, t_inf=params.t_inf,
                                            repetition_period=params.repetition_period_ns)
        for label, angle in (("+X", math.pi / 2), ("-X", -math.pi / 2)):
            seq = build_bell_sequence(params, phase_e=phase_e).with_readout_rotation(
                "y", angle)
            reps = np.arange(reps_per_point, dtype=np.uint64) \
                + np.uint64(2_000_000 * i + (1_000_000 if label == "-X" else 0))
            traj = run_sequence_trajectory(seq, params, noise, master_seed, reps)
            model = DetectionModel(traj.layout, tbi_th, noise, windows, thinned=False)
            clicks = model.sample_run(traj, master_seed)
            n1 = n2 = 0
            readout = clicks.readout_clicks
            for pid, pattern in enumerate(clicks.pattern_catalog):
                rows = (clicks.pattern_ids == pid) & readout
                n = int(np.sum(rows))
                if n == 0:
                    continue
                for slot, window, det in pattern:
                    if window == Window.MIDDLE:
                        from .interferometer import Detector
                        if det == Detector.D1:
                            n1 += n
                        else:
                            n2 += n
            total = n1 + n2
            curves[label][i] = (n1 - n2) / total if total else 0.0
    fits = {label: _fit(theta_values, c) for label, c in curves.items()}
    return FringeScan(theta_values, curves, fits)


# ---------------------------------------------------------------------------
# rotation calibration
# ---------------------------------------------------------------------------


@dataclass
class RabiCalibration:
    angles: np.ndarray
    population: np.ndarray
    pi_population: float
    target: float

    @property
    def matches_target(self) -> bool:
        return abs(self.pi_population - self.target) < 1e-6


def rabi_calibration(noise: NoiseParams, n_points: int = 41) -> RabiCalibration:
    """Sweep pulse area 0..2pi and verify the pi-point transfer equals f_pi."""
    from .emitter import rabi_curve, rabi_population

    angles = np.linspace(0.0, 2.0 * math.pi, n_points)
    pops = rabi_curve(angles, noise)
    return RabiCalibration(angles, pops, rabi_population(math.pi, noise), noise.f_pi)
