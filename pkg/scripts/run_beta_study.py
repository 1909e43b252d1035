"""Vanishing-inertia study: boundary-plane gap between inertial and quasi-static runs."""
import argparse
from pathlib import Path

from fkpn.convergence import StudyOptions, beta_study
from fkpn.scenarios import screw_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=0.2)
    ap.add_argument("--beta", type=float, nargs="+", default=[1.0, 0.3, 0.1, 0.03])
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", type=Path, default=Path("out/beta_study"))
    args = ap.parse_args()

    times = [round(args.T * k / 10, 12) for k in range(1, 10)]
    rep = beta_study(screw_scenario(), args.eps, args.beta, args.T, times,
                     opts=StudyOptions(workers=args.workers))
    args.out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(args.out / "report.csv")
    rep.write_plot_data(args.out / "plot.dat")
    rep.write_manifest(args.out / "report.json")
    for beta, err, ratio in zip(rep.values, rep.errors, rep.ratios):
        print(f"beta={beta:<6g} gap={err:.4e} ratio={ratio:.3f}")
    print("decreasing (10% slack):", rep.decreasing(0.1))


if __name__ == "__main__":
    main()
