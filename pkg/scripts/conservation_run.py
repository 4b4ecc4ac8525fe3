"""Energy and entropy history of a 1-D run, with and without dissipation.

    python3 scripts/conservation_run.py [--steps 1000] [--out DIR]
"""
import argparse
import os

from genericmech import simulator as sim
from genericmech.field_grid import Grid
from genericmech.materials import DissipationSpec, quadratic_test_model


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--N", type=int, default=64)
    ap.add_argument("--out", default="conservation_out")
    args = ap.parse_args()
    ic = sim.InitialCondition(kmax=1, amp_p=0.015, amp_F=0.006, amp_alpha=0.015, amp_beta=0.015,
                              amp_theta=0.015)
    base = sim.SceneConfig(grid=Grid(1, args.N, 1.0), model=quadratic_test_model(),
                           steps=args.steps, initial=ic)
    on = DissipationSpec(bulk_viscosity=0.01, heat_conductivity=0.01, diff_alpha=0.01,
                         diff_beta=0.01)
    for name, spec in (("dissipative", on), ("inviscid", DissipationSpec())):
        out = os.path.join(args.out, name)
        _, d = sim.run(sim.replace(base, dissipation=spec), out_dir=out)
        print(f"{name:12s} energy drift {d.energy_drift():.3e}  "
              f"entropy change {(d.S_tot[-1] - d.S_tot[0]) / d.entropy_scale:+.3e}  "
              f"worst step {d.entropy_worst_step():+.3e}  -> {out}")


if __name__ == "__main__":
    main()
