"""Block-Jacobi criterion on random finite-dimensional instances.

    python3 scripts/block_jacobi_survey.py [--trials 200] [--csv FILE]
"""
import argparse

from genericmech import jacobi_block as jb


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default="block_jacobi_survey.csv")
    args = ap.parse_args()
    kinds = ("conforming", "violate_A", "violate_B", "violate_C", "quadratic", "flip_n1")
    rep = jb.equivalence_theorem_test(trials=args.trials, seed=args.seed, kinds=kinds)
    for kind, (ok, tot) in rep.summary().items():
        jac = [r["jacobi"] for r in rep.rows if r["kind"] == kind]
        print(f"{kind:12s} {ok:4d}/{tot:<4d} jacobi residual min {min(jac):.2e} max {max(jac):.2e}")
    rep.to_csv(args.csv)
    print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
