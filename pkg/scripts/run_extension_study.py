"""Lattice harmonic extension versus the kernel extension of an arctan profile."""
import argparse
from pathlib import Path

import numpy as np

from fkpn.convergence import StudyOptions, extension_study
from fkpn.harmonic import decay_report
from fkpn.lattice import Window
from fkpn.scenarios import arctan_profile


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    ap.add_argument("--width", type=float, default=1.0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", type=Path, default=Path("out/extension_study"))
    args = ap.parse_args()

    p = arctan_profile(args.width, 2)
    rep = extension_study(p, Window(2.0, 1.0), args.eps, opts=StudyOptions(workers=args.workers))
    args.out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(args.out / "report.csv")
    rep.write_plot_data(args.out / "plot.dat")
    (args.out / "decay.csv").write_text(decay_report(p, np.geomspace(0.5, 64, 8)).to_csv())
    for eps, err, ratio in zip(rep.values, rep.errors, rep.ratios):
        print(f"eps={eps:<6g} difference={err:.4e} ratio={ratio:.3f}")


if __name__ == "__main__":
    main()
