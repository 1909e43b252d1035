"""Command-line entry point: ``fkpn <command> --config run.json [--out DIR] [--workers K]``.

Exit status: 0 when every audit passes, 1 when an audit exceeds its tolerance,
2 for configuration errors, 3 for run or I/O failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .convergence import ConvergenceReport, beta_study, epsilon_study, extension_study, residual_report
from .dynamics import barrier_audit, barriers_for, simulate
from .harmonic import Closure, continuous_extension, decay_report, discrete_extension
from .io import write_csv, write_field, write_json
from .lattice import BoundaryField, LatticeField

log = logging.getLogger("fkpn")

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_RUN = 0, 1, 2, 3
ORDERING_TOL = 1e-12
SLACK = 0.1


def _versions() -> dict:
    return {"fkpn": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# --- commands: each writes into ``d`` and returns (passed, audits) ----------------

def _cmd_simulate(cfg: RunConfig, d: Path, table: bool = False) -> tuple[bool, dict]:
    dom = cfg.domain()
    tr = simulate(cfg.build_scenario(), dom, cfg.beta, cfg.T, cfg.snapshot_times,
                  closure=cfg.closure, safety=cfg.safety, elliptic_tol=cfg.elliptic_tol,
                  quad=cfg.quadrature(), dt_max=cfg.dt_max, step_order=cfg.step_order,
                  method=cfg.elliptic_method)
    snaps = d / "snapshots"
    snaps.mkdir()
    rows = []
    for k, s in enumerate(tr.snapshots):
        write_field(snaps / f"snapshot_{k:04d}.bin", LatticeField(dom, s.values, s.time))
        b = s.values[0]
        rows.append((s.time, s.step, float(np.max(np.abs(s.values))), float(b.min()), float(b.max())))
    write_csv(d / "trajectory.csv", ["time", "step", "sup_norm", "boundary_min", "boundary_max"], rows)
    audit = barrier_audit(tr, barriers_for(tr))
    if table:
        write_csv(d / "barriers.csv", ["time", "upper", "lower", "flat", "beta_bound"],
                  zip(audit.times, audit.upper, audit.lower, audit.flat, audit.beta_bound))
    audits = {"barrier": audit.summary(), "steps": tr.steps, "dt": tr.dt_max}
    ok = audit.passed
    if tr.steps:
        audits["residual"] = residual_report(tr.final_state).as_dict()
    if cfg.beta == 0:
        res = tr.final_state.bulk_residual
        audits["bulk_residual"] = res
        ok = ok and res <= cfg.elliptic_tol
    return ok, audits


def _cmd_barriers(cfg: RunConfig, d: Path) -> tuple[bool, dict]:
    return _cmd_simulate(cfg, d, table=True)


def _cmd_extend(cfg: RunConfig, d: Path) -> tuple[bool, dict]:
    dom = cfg.domain()
    prof = cfg.build_profile()
    cont = continuous_extension(prof, dom.coords(), cfg.quadrature())
    g = BoundaryField(dom, cont[0, ...])
    disc = discrete_extension(g, cfg.closure, cfg.elliptic_tol, faces=cont, method=cfg.elliptic_method)
    write_field(d / "continuous.bin", LatticeField(dom, cont))
    write_field(d / "discrete.bin", disc)
    data = cont[0] if cfg.closure == Closure.NEUMANN.value else cont[~dom.interior_mask()]
    lo, hi = float(data.min()), float(data.max())
    spill = max(float(disc.values.max()) - hi, lo - float(disc.values.min()), 0.0)
    audits = {"sup_difference": float(np.max(np.abs(disc.values - cont))),
              "max_principle_violation": spill}
    if cfg.n > 1:
        heights = [h for h in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0) if h >= cfg.eps]
        rep = decay_report(prof, heights, cfg.quadrature(), eps=cfg.eps)
        (d / "extension.csv").write_text(rep.to_csv())
        audits["decay_constant"] = rep.constant
        audits["decay_growth"] = rep.growth
    return spill <= 1e-12, audits


def _write_report(rep: ConvergenceReport, d: Path) -> None:
    rep.write_csv(d / "report.csv")
    rep.write_timings(d / "timings.csv")
    rep.write_plot_data(d / "plot.dat")
    rep.write_manifest(d / "report.json")


def _study_ok(rep: ConvergenceReport) -> bool:
    ok = rep.decreasing(SLACK)
    for a in rep.audits + [rep.reference]:
        b = a.get("barrier") or a.get("reference_barrier")
        if b is not None and not b["passed"]:
            ok = False
        if a.get("ordering", 0.0) > ORDERING_TOL:
            ok = False
    return ok


def _cmd_converge(cfg: RunConfig, d: Path) -> tuple[bool, dict]:
    times = cfg.snapshot_times or (cfg.T,)
    rep = epsilon_study(cfg.build_scenario(), cfg.build_window(), cfg.eps_list, cfg.eps_ref,
                        (*times, cfg.T), beta=cfg.beta, opts=cfg.study_options(),
                        ordering_gap=cfg.ordering_gap)
    _write_report(rep, d)
    return _study_ok(rep), {"errors": rep.errors, "decreasing": rep.decreasing(SLACK)}


def _cmd_beta_study(cfg: RunConfig, d: Path) -> tuple[bool, dict]:
    rep = beta_study(cfg.build_scenario(), cfg.eps, cfg.beta_list, cfg.T, cfg.snapshot_times,
                     opts=cfg.study_options())
    _write_report(rep, d)
    return _study_ok(rep), {"errors": rep.errors, "decreasing": rep.decreasing(SLACK)}


def _cmd_extension_study(cfg: RunConfig, d: Path) -> tuple[bool, dict]:
    rep = extension_study(cfg.build_profile(), cfg.build_window(), cfg.eps_list,
                          opts=cfg.study_options())
    _write_report(rep, d)
    return _study_ok(rep), {"errors": rep.errors, "decreasing": rep.decreasing(SLACK)}


_COMMANDS = {
    "simulate": _cmd_simulate,
    "barriers": _cmd_barriers,
    "extend": _cmd_extend,
    "converge": _cmd_converge,
    "beta-study": _cmd_beta_study,
    "extension-study": _cmd_extension_study,
}


def run(cfg: RunConfig, out: str | Path | None = None, *, seedless: bool = False) -> tuple[int, Path]:
    """Execute ``cfg`` and publish its artifacts atomically; returns (exit status, directory)."""
    target = Path(out or cfg.out or f"runs/{cfg.command}-{cfg.hash}")
    if target.exists() and not (target / "manifest.json").exists():
        raise FileExistsError(f"{target} exists and is not a previous run directory")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.tmp-", dir=target.parent))
    t0 = time.perf_counter()
    try:
        passed, audits = _COMMANDS[cfg.command](cfg, tmp)
        status = EXIT_OK if passed else EXIT_AUDIT
        write_json(tmp / "manifest.json", {
            "command": cfg.command,
            "config": cfg.canonical(),
            "config_hash": cfg.hash,
            "versions": _versions(),
            "seedless": seedless,
            "audits": audits,
            "status": status,
            "timing_file": "timing.json",
        })
        write_json(tmp / "timing.json", {"wall_time_s": time.perf_counter() - t0,
                                         "workers": cfg.workers})
        if target.exists():
            shutil.rmtree(target)
        os.rename(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return status, target


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fkpn", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS,
                   help="overrides the command named in the config")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="artifact directory (default runs/<command>-<config hash>)")
    p.add_argument("--workers", type=int, help="parallel runs inside a study")
    p.add_argument("--seedless", action="store_true",
                   help="record in the manifest that the run uses no random numbers")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        doc = json.loads(Path(args.config).read_text())
        if args.command:
            doc["command"] = args.command
        if args.workers is not None:
            doc["workers"] = args.workers
        cfg = parse_config(doc)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"fkpn: cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"fkpn: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status, path = run(cfg, args.out, seedless=args.seedless)
    except OSError as exc:
        print(f"fkpn: I/O failure at {getattr(exc, 'filename', None) or '?'}: {exc}", file=sys.stderr)
        return EXIT_RUN
    except Exception as exc:
        print(f"fkpn: run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(f"{path} {'ok' if status == EXIT_OK else 'AUDIT FAILURE'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
