"""Command line interface.

Exit status: 0 when every check passes, 1 when a check fails, 2 on a
runtime or IO error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .errors import MCFError
from .kernels import BACKEND
from .pipeline import EXIT_RUNTIME, STAGES, collect_report, run_pipeline
from .scenarios import bundled_names, load_scenario
from .verify import CHECK_IDS, TOLERANCE_PROFILES

log = logging.getLogger("mcflab")


def _common(p, out_help="output directory"):
    p.add_argument("--out", type=Path, default=None, help=out_help)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--tolerance-profile", choices=sorted(TOLERANCE_PROFILES), default="default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcflab", description="Mean curvature flow singularity lab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the flow of a scenario and store the trajectory")
    p.add_argument("scenario", help=f"scenario file or bundled name ({', '.join(bundled_names())})")
    p.add_argument("--stages", default="simulate",
                   help=f"comma list from {','.join(STAGES)} or 'all' (default: simulate)")
    _common(p, "output directory (default: the scenario's output or out/<name>)")

    p = sub.add_parser("analyze", help="fit blow-up rates of a stored trajectory")
    p.add_argument("traj_dir", type=Path)
    _common(p, "directory for analysis.json (default: parent of traj_dir)")

    p = sub.add_parser("verify", help="run estimate checks on a stored trajectory")
    p.add_argument("traj_dir", type=Path)
    p.add_argument("--checks", default=None,
                   help=f"comma list of check ids from {','.join(CHECK_IDS)}")
    _common(p, "directory for verification.json (default: parent of traj_dir)")

    p = sub.add_parser("rescale", help="parabolic rescaling at geometric curvature levels")
    p.add_argument("traj_dir", type=Path)
    p.add_argument("--levels", type=int, default=6, help="number of levels J")
    _common(p, "directory for rescale.json (default: parent of traj_dir)")

    p = sub.add_parser("report", help="summarize the artifacts of an output directory")
    p.add_argument("dir", type=Path)
    _common(p, "directory for report.json (default: dir)")
    return parser


def _out_for(traj_dir: Path, out):
    return out if out is not None else traj_dir.resolve().parent


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    log.info("kernel backend: %s", BACKEND)
    try:
        if args.command == "simulate":
            spec = load_scenario(args.scenario)
            stages = STAGES if args.stages == "all" else [s.strip() for s in args.stages.split(",")]
            bad = [s for s in stages if s not in STAGES]
            if bad:
                raise ValueError(f"unknown stages {bad}")
            res = run_pipeline(spec, stages, out=args.out, seed=args.seed,
                               tolerance_profile=args.tolerance_profile)
        elif args.command == "analyze":
            res = run_pipeline(None, ["analyze"], out=_out_for(args.traj_dir, args.out),
                               traj_dir=args.traj_dir, seed=args.seed)
        elif args.command == "verify":
            checks = None if args.checks is None else [c.strip() for c in args.checks.split(",")]
            res = run_pipeline(None, ["verify"], out=_out_for(args.traj_dir, args.out),
                               traj_dir=args.traj_dir, seed=args.seed,
                               tolerance_profile=args.tolerance_profile, checks=checks)
        elif args.command == "rescale":
            res = run_pipeline(None, ["rescale"], out=_out_for(args.traj_dir, args.out),
                               traj_dir=args.traj_dir, seed=args.seed, levels=args.levels)
        else:
            rep = collect_report(args.dir)
            out = args.out if args.out is not None else args.dir
            Path(out).mkdir(parents=True, exist_ok=True)
            io.write_json(Path(out) / "report.json", rep)
            print(io.dumps(rep), end="")
            return 0 if rep["all_pass"] else 1
    except (MCFError, OSError, ValueError) as exc:
        print(f"mcflab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name, path in sorted(res.artifacts.items()):
        print(f"{name}: {path}")
    for msg in res.messages:
        print(msg, file=sys.stderr)
    return res.status


if __name__ == "__main__":
    sys.exit(main())
