"""Structure residuals against resolution and gauge, plus the corrupted controls.

Hamiltonian cancellation is a pointwise identity between products of
fields, so it converges with N rather than holding at roundoff.

    python3 scripts/structure_survey.py [--trials 3]
"""
import argparse

from genericmech import generic_structure as gs
from genericmech.field_grid import Grid
from genericmech.materials import DissipationSpec, quadratic_test_model

SPEC = DissipationSpec(bulk_viscosity=0.01, heat_conductivity=0.03, diff_alpha=0.01,
                       diff_beta=0.02)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=3)
    args = ap.parse_args()
    checks = ("skew", "nic1", "nic2", "jacobi", "onsager", "hamiltonian")
    for d, Ns in ((1, (32, 64, 128)), (2, (16, 32))):
        for N in Ns:
            for gauge in ("theta", "e", "s"):
                rep = gs.verify_structure(Grid(d, N, 1.0), quadratic_test_model(gauge), SPEC,
                                          trials=args.trials, checks=checks, kmax=2)
                w = " ".join(f"{k}={v:.1e}" for k, v in sorted(rep.worst().items()))
                over = sorted({r["check"] for r in rep.failures()})
                print(f"d={d} N={N:3d} {gauge:5s} over tol: {','.join(over) or '-'}  {w}")
    g = Grid(1, 64, 1.0)
    for c in gs.CORRUPTIONS:
        rep = gs.verify_structure(g, quadratic_test_model("e"), SPEC, trials=args.trials,
                                  corrupt=(c,), checks=("skew", "nic1", "jacobi"))
        w = " ".join(f"{k}={v:.1e}" for k, v in sorted(rep.worst().items()))
        print(f"control {c:10s} {'detected' if not rep.passed else 'MISSED'} {w}")


if __name__ == "__main__":
    main()
