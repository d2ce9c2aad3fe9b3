"""Calibrating the photonic readout basis with polarizer fringes.

A classical double-pass input traces the fringe V cos(2(theta_pol - theta0))
on the middle-window contrast; the Bell photon conditioned on the spin
projected onto +-X traces the same fringe exactly in phase or in anti-phase.
The polarizer angle where the classical fringe peaks defines the photonic
X basis.
"""
import math

import numpy as np

from timebin.emitter import ideal_emitter, ideal_noise
from timebin.experiments import classical_fringe_scan, spin_conditioned_fringe_scan
from timebin.interferometer import TBIParams

THETA0 = 0.35


def bar(value, width=31):
    n = int(round((value + 1) / 2 * (width - 1)))
    return " " * n + "*"


def main():
    tbi = TBIParams(theta0=THETA0, classical_visibility=0.989)
    theta = np.linspace(0, math.pi, 13)

    classical = classical_fringe_scan(tbi, theta, photons_per_point=40_000,
                                      master_seed=3)
    spin = spin_conditioned_fringe_scan(ideal_emitter(), ideal_noise(), tbi,
                                        theta, reps_per_point=4000, master_seed=4)

    print(f"true theta0 = {THETA0:.3f} rad")
    amp, th0 = classical.fits["classical"]
    print(f"classical fit: amplitude {amp:.3f}, theta0 {th0:.4f} rad "
          f"({math.degrees(abs(th0 - THETA0)):.2f} deg off)\n")

    print(f"{'theta':>7s} {'classical':>10s} {'spin +X':>9s} {'spin -X':>9s}")
    for i, th in enumerate(theta):
        print(f"{th:7.3f} {classical.contrast['classical'][i]:>10.3f} "
              f"{spin.contrast['+X'][i]:>9.3f} {spin.contrast['-X'][i]:>9.3f}")

    print("\ncontrast of the -X-conditioned fringe (in phase with classical):")
    for i, th in enumerate(theta):
        print(f"  {th:5.2f} |{bar(spin.contrast['-X'][i])}")
    print("\nthe +X fringe is the mirror image (anti-phase): a middle-window")
    print("click on D1 at theta_pol = theta0 heralds the photon in +X, and")
    print("the Bell state anti-correlates the X readings of spin and photon.")


if __name__ == "__main__":
    main()
