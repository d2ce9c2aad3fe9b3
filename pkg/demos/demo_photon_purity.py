"""Single-photon purity and indistinguishability from one two-photon run.

The emitter is prepared spin-up and pulsed twice, so each repetition sends
an early and a late photon through the interferometer.  The same time-tag
stream yields both the pulsed autocorrelation g2(0) (early/late window
classes, normalized at long repetition delays) and the two-photon
interference visibility (same-repetition delay histogram gated on a
middle-window click).
"""
import dataclasses

from timebin.config import V_CLASSICAL_BACKSOLVED, paper_emitter, paper_noise, paper_tbi
from timebin.experiments import simulate_hom

REPS = 300_000
SEED = 7


def main():
    emitter, noise, tbi = paper_emitter(), paper_noise(), paper_tbi()
    run = simulate_hom(emitter, noise, tbi, REPS, SEED,
                       v_classical_assumed=V_CLASSICAL_BACKSOLVED)

    print(f"two-photon run, {REPS} repetitions")
    print(f"\ng2(0) averaged over early/late: {run.g2:.4f} +- {run.g2_err:.4f}")
    for cls, d in run.g2_detail.items():
        print(f"  {cls}: g2 = {d['g2']:.4f} (same-rep {d['same']:.0f}, "
              f"long-delay mean {d['far_mean']:.1f})")

    leak_only = dataclasses.replace(noise, f_pi=1.0, p_init_error=0.0,
                                    p_double=0.0, p_wrong_transition=0.0,
                                    p_wait_dephasing=0.0)
    run_leak = simulate_hom(emitter, leak_only, tbi, REPS, SEED + 1)
    print(f"background-only g2: {run_leak.g2:.4f} "
          f"(the rest is multi-photon emission)")

    c = run.hom_counts
    print(f"\ndelay-histogram counts N1/N2/N3 = {c.n1}/{c.n2}/{c.n3}")
    print(f"raw visibility    1 - 2 N2/(N1+N3) = {run.v_raw:.4f} +- {run.v_raw_err:.4f}")
    print(f"corrected for multi-photon (x(1+2 g2)) and the interferometer "
          f"(/{V_CLASSICAL_BACKSOLVED}):")
    print(f"  V = {run.v_corrected:.4f}")
    print("(the interferometer divisor is back-solved, not independently "
          "measured; reports label it accordingly)")


if __name__ == "__main__":
    main()
