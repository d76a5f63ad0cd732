"""Command line entry point: prandtl-robin <experiment> --config <path> [--out <dir>] [--seed <n>].

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical failure.  manifest.json is written in every case once the
output directory is known.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
import traceback
from pathlib import Path

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("prandtl_robin")


def _cap_threads():
    n = os.environ.get("PRANDTL_THREADS")
    if not n:
        return None
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(int(n))
    except (ImportError, ValueError):
        return None


def _versions() -> dict:
    import numpy
    import scipy

    from . import __version__
    out = {"python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__,
           "prandtl_robin": __version__}
    try:
        import sympy
        out["sympy"] = sympy.__version__
    except ImportError:
        pass
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        from .config import EXPERIMENTS
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\nvalid experiments: {', '.join(EXPERIMENTS)}\n")


def build_parser() -> argparse.ArgumentParser:
    from .config import EXPERIMENTS
    p = _Parser(prog="prandtl-robin", description="Prandtl/Robin boundary-layer experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS, metavar="experiment",
                   help="one of: " + ", ".join(EXPERIMENTS))
    p.add_argument("--config", required=True, help="JSON config file ({} gives all defaults)")
    p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    p.add_argument("--seed", type=int, default=None, help="seed for random test fields")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def write_manifest(out: Path, manifest: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg, out_dir=None) -> tuple[int, dict]:
    """Run cfg.experiment, write manifest.json and return (exit code, manifest)."""
    from .errors import ConfigError, GridError, NumericalError
    from .experiments import RUNNERS, Context

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    ctx = Context(out, seed=cfg.seed)
    manifest = {"experiment": cfg.experiment, "config": cfg.to_dict(), "versions": _versions(),
                "status": "running", "partial": True}
    code = EXIT_OK
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.experiment](cfg, ctx)
        failed = [k for k, v in ctx.checks.items() if not v["passed"]]
        manifest["status"] = "failed-checks" if failed else "passed"
        manifest["partial"] = False
        code = EXIT_CHECK if failed else EXIT_OK
    except (ConfigError, GridError) as exc:
        manifest["status"] = "config-error"
        manifest["error"] = str(exc)
        code = EXIT_CONFIG
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        manifest["status"] = "numerical-failure"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_NUMERIC
    except Exception as exc:  # noqa: BLE001 - any crash still gets a manifest
        manifest["status"] = "numerical-failure"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        code = EXIT_NUMERIC
    finally:
        manifest["checks"] = ctx.checks
        manifest["timing"] = {"phases": ctx.phases, "total": time.perf_counter() - t0}
        manifest["files"] = sorted(ctx.files) + ["manifest.json"]
        write_manifest(out, manifest)
    return code, manifest


def main(argv=None) -> int:
    limiter = _cap_threads()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    from .config import load_config
    from .errors import ConfigError, GridError

    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config, args.experiment)
    except (ConfigError, GridError) as exc:
        kind = "structural error" if isinstance(exc, GridError) else "configuration error"
        print(f"prandtl-robin: {kind}: {exc}", file=sys.stderr)
        if out is not None:
            write_manifest(out, {"experiment": args.experiment, "status": "config-error", "partial": True,
                                 "error": str(exc), "checks": {}, "files": ["manifest.json"]})
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    code, manifest = run_experiment(cfg, out)
    for name, chk in manifest["checks"].items():
        print(f"{name}: {'PASS' if chk['passed'] else 'FAIL'}")
    if "error" in manifest:
        print(f"prandtl-robin: {manifest['status']}: {manifest['error']}", file=sys.stderr)
    del limiter
    return code


if __name__ == "__main__":
    sys.exit(main())
