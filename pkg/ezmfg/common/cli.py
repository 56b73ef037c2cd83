import argparse
import os
import subprocess
import sys
from pathlib import Path
from typing import List, Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3

# cli.py lives at ezmfg/common/cli.py; the project root is three levels up.
DIR = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

CHECKS = ("riccati", "fixed-point", "best-response", "recursion", "nplayer-limit", "power-reduction")


def _eps_list(raw: str) -> List[float]:
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--eps expects comma-separated numbers, got {raw!r}")


def _parser(command: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f"ezmfg {command}")
    if command == "verify":
        parser.add_argument("check", choices=CHECKS + ("all",))
    parser.add_argument("--config", required=True, help="run config (JSON)")
    parser.add_argument("--out", default=None, help="output directory (default: config `out` or ./out)")
    parser.add_argument("--dt", type=float, default=None, help="override the grid step")
    parser.add_argument("--paths", type=int, default=None, help="override sim.n_paths")
    parser.add_argument("--seed", type=int, default=None, help="override sim.seed")
    parser.add_argument("--eps", type=_eps_list, default=None, help="best-response perturbations, e.g. 0.05,-0.05")
    return parser


def _load(args):
    from ezmfg.core.run_config import load_config, with_overrides
    cfg = with_overrides(load_config(args.config), dt=args.dt, n_paths=args.paths, seed=args.seed)
    out_dir = Path(args.out or cfg.out or "out")
    return cfg, out_dir


def _cmd_solve_mfg(args) -> int:
    from ezmfg.core.pipeline import RunService
    from ezmfg.utils.output import equilibrium_frame, write_csv, write_meta

    cfg, out_dir = _load(args)
    eq = RunService(cfg).equilibrium()
    path = write_csv(out_dir / "equilibrium.csv", equilibrium_frame(eq))
    write_meta(out_dir, cfg.to_dict(), cfg.sim.seed)
    print(f"✓ wrote {path}")
    return EXIT_OK


def _cmd_solve_nplayer(args) -> int:
    from ezmfg.core.pipeline import RunService
    from ezmfg.utils.output import nplayer_frame, write_csv, write_meta

    cfg, out_dir = _load(args)
    eq = RunService(cfg).nplayer()
    path = write_csv(out_dir / "nplayer.csv", nplayer_frame(eq))
    write_meta(out_dir, cfg.to_dict(), cfg.sim.seed)
    print(f"✓ wrote {path}")
    return EXIT_OK


def _cmd_verify(args, names: Optional[List[str]] = None) -> int:
    from ezmfg.core.pipeline import RunService
    from ezmfg.utils.output import write_json, write_meta

    cfg, out_dir = _load(args)
    service = RunService(cfg)
    if names is None:
        names = service.applicable_checks() if args.check == "all" else [args.check]
    report = service.run_checks(names, eps=args.eps)
    write_json(out_dir / "verify.json", report.to_dict())
    write_meta(out_dir, cfg.to_dict(), cfg.sim.seed)
    for name, check in report.checks.items():
        mark = "✓" if check.passed else "✗"
        print(f"{mark} {name}: estimate={check.estimate:.6g} se={check.std_error:.3g}")
    return EXIT_OK if report.passed else EXIT_VERIFY


def _usage() -> None:
    print("Usage: ezmfg <command>\n")
    print("  solve-mfg      --config FILE [--out DIR] [--dt DT]   Solve the mean-field equilibrium")
    print("  solve-nplayer  --config FILE [--out DIR] [--dt DT]   Solve the N-player equilibrium")
    print("  verify CHECK   --config FILE [--paths N] [--seed S] [--eps LIST]")
    print(f"                 CHECK: {'|'.join(CHECKS)}|all")
    print("  report         --config FILE                         Run every applicable check")
    print("  check          Lint Python + run unit tests")
    print("  test [pytest args]  Run pytest (default: tests/unit). Use")
    print("                      `ezmfg test -m integration` for full-size Monte Carlo runs.")


def run(argv: List[str]) -> int:
    """Dispatch one command; returns the process exit code."""
    cmd = argv[0] if argv else None
    rest = argv[1:]

    if cmd in ("solve-mfg", "solve-nplayer", "verify", "report"):
        from ezmfg.core.run_config import ConfigError
        from ezmfg.model import ModelValidationError
        from ezmfg.solver import SolverError

        try:
            args = _parser(cmd).parse_args(rest)
        except SystemExit as exc:
            return EXIT_CONFIG if exc.code else EXIT_OK
        try:
            if cmd == "solve-mfg":
                return _cmd_solve_mfg(args)
            if cmd == "solve-nplayer":
                return _cmd_solve_nplayer(args)
            if cmd == "verify":
                return _cmd_verify(args)
            args.check = "all"
            return _cmd_verify(args)
        except (ConfigError, ModelValidationError, SolverError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    elif cmd == "check":
        subprocess.run(["uv", "run", "ruff", "check", "."], cwd=DIR, check=True)
        print("✓ ruff check passed")
        subprocess.run(
            ["uv", "run", "pytest", "-m", "not integration", "ezmfg/tests/unit"],
            cwd=DIR, check=True,
        )
        print("✓ unit tests passed")
        return EXIT_OK

    elif cmd == "test":
        # Pass-through: everything after `ezmfg test` goes to pytest.
        extra = rest or ["ezmfg/tests/unit"]
        return subprocess.run(["uv", "run", "pytest", *extra], cwd=DIR).returncode

    _usage()
    return EXIT_OK if cmd is None else 1


def main():
    sys.exit(run(sys.argv[1:]))
