"""Mantle state-equation tables and plateau summary at a list of temperatures.

    python3 scripts/mantle_table.py [--thetas 1600,1800,2000] [--out DIR]
"""
import argparse
import os

import numpy as np

from genericmech.cli import density_table, pressure_table
from genericmech.materials import mantle_energy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--thetas", default="1600,1800,2000")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--out", default="mantle_out")
    args = ap.parse_args()
    thetas = [float(t) for t in args.thetas.split(",")]
    en = mantle_energy().energy
    J = np.linspace(0.70, 1.02, args.n)
    os.makedirs(args.out, exist_ok=True)
    np.savetxt(os.path.join(args.out, "pressure_J.csv"), pressure_table(en, J, thetas),
               delimiter=",", header="theta,J,rho,p", comments="")
    pr = np.linspace(5e9, 30e9, args.n)
    np.savetxt(os.path.join(args.out, "density_p.csv"), density_table(en, J, thetas, pr),
               delimiter=",", header="theta,p,rho", comments="")
    (a1, b1), (a2, b2) = en.plateaus()
    print(f"plateau J intervals [{a1:.4f}, {b1:.4f}] and [{a2:.4f}, {b2:.4f}]; "
          f"density jumps {b1 / a1 - 1:.2%} and {b2 / a2 - 1:.2%}")
    for th in thetas:
        p1, p2 = en.plateau_pressures(th)
        print(f"theta {th:7.1f} K: {p1 / 1e9:.3f} GPa, {p2 / 1e9:.3f} GPa")


if __name__ == "__main__":
    main()
