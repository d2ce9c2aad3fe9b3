"""Error budget of the Bell-state fidelity.

Switches the error channels on one at a time (exact mode, so the numbers
carry no statistical noise) and sweeps the rotation quality to show the
ceiling imperfect spin control imposes on the achievable entanglement.
"""
from timebin.config import paper_emitter, paper_noise, paper_tbi
from timebin.emitter import NoiseParams, ideal_emitter, ideal_noise
from timebin.experiments import witness_exact
from timebin.interferometer import TBIParams


def fidelity(emitter, noise, tbi):
    return witness_exact(2, emitter, noise, tbi).fidelity


def main():
    tbi_clean = TBIParams(classical_visibility=1.0)
    print("cumulative error budget (exact mode)")
    print(f"{'configuration':44s} fidelity")
    rows = [
        ("no errors at all", ideal_emitter(), ideal_noise(), tbi_clean),
        ("rotation errors only (f_pi = 0.885)", ideal_emitter(),
         NoiseParams(f_pi=0.885, p_init_error=0.0), tbi_clean),
        ("+ finite cyclicity (C = 14.7)", paper_emitter(),
         NoiseParams(f_pi=0.885, p_init_error=0.0), tbi_clean),
        ("+ idle dephasing", paper_emitter(),
         NoiseParams(f_pi=0.885, p_init_error=0.0, p_wait_dephasing=0.105),
         tbi_clean),
        ("full calibrated budget", paper_emitter(), paper_noise(), paper_tbi()),
    ]
    for label, emitter, noise, tbi in rows:
        print(f"  {label:42s} {fidelity(emitter, noise, tbi):.4f}")

    print("\nrotation-quality sweep (all other errors off):")
    print("  f_pi     Bell fidelity")
    for f_pi in (0.885, 0.92, 0.95, 0.988, 1.0):
        noise = NoiseParams(f_pi=f_pi, p_init_error=0.0) if f_pi < 1 \
            else ideal_noise()
        f = fidelity(ideal_emitter(), noise, tbi_clean)
        print(f"  {f_pi:.3f}    {f:.4f}")
    print("\nA pi-pulse fidelity of 0.885 caps the Bell state near 0.77;"
          "\nimproving the rotations to 0.988 lifts the ceiling to ~0.97.")


if __name__ == "__main__":
    main()
