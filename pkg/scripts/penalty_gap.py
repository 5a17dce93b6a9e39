"""Gap between the continuous sparse-group penalty of the true coefficient
functions and its interval-sum approximation, as the number of intervals grows.

    python3 scripts/penalty_gap.py --scenario I --lambda1 0.05 0.2 0.5 1
"""
import argparse

from lsqfi.penalty import PenaltyConfig, lemma1_gap
from lsqfi.simbench import scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", default="I", choices=["I", "II", "III"])
    ap.add_argument("--lambda1", type=float, nargs="+", default=[0.05, 0.2, 0.5, 1.0])
    ap.add_argument("--intervals", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    a = ap.parse_args()
    sc = scenario(a.scenario)
    print("lambda1  " + "  ".join(f"M={m:<9d}" for m in a.intervals))
    for lam in a.lambda1:
        gaps = [lemma1_gap(sc.beta_fns, PenaltyConfig.from_rule(lam, sc.q), m) for m in a.intervals]
        print(f"{lam:<8g} " + "  ".join(f"{g:.4e}" for g in gaps))


if __name__ == "__main__":
    main()
