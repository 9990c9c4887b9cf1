"""Command-line entry point.

::

    gndiff simulate --preset fig1-im --out out/
    gndiff simulate --config run.json --method im
    gndiff drift-study --preset fig1-fe --h 1/50,1/100,1/200 --eps 0.2,0.1,0.05
    gndiff identities --trials 100 --seed 7

Results go to stdout as one JSON document.  Failures print a single JSON
line ``{"status": "error", "code": ..., "message": ...}`` to stderr and exit
with status 2 (bad input) or 1 (numerical failure).
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, GndiffError, GraphError, UnsupportedVariant

METHOD_CHOICES = ("fe", "be", "im", "im-left")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message)
        self.exit(2)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gndiff", description="Regularised graph diffusion: runs, drift studies, identity checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def source(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--config", help="JSON experiment configuration")
        g.add_argument("--preset", help="fig1-fe, fig1-im, fig2-fe or fig2-im")
        p.add_argument("--method", choices=METHOD_CHOICES, help="override the configured method")
        p.add_argument("--seed", type=_u64, help="override the configured seed")
        p.add_argument("--out", help="output directory (default: config output.dir or ./out)")

    sim = sub.add_parser("simulate", help="integrate one configuration and write CSV/SVG")
    source(sim)
    sim.add_argument("--no-plots", action="store_true", help="skip the SVG figures")

    ds = sub.add_parser("drift-study", help="one-step charge drift over h and eps grids")
    source(ds)
    ds.add_argument("--h", default="1/50,1/100,1/200,1/400", help="comma list of step sizes (fractions allowed)")
    ds.add_argument("--eps", default="0.2,0.1,0.05", help="comma list of regularisation values")

    idt = sub.add_parser("identities", help="randomised residuals of the block-matrix identities")
    idt.add_argument("--trials", type=int, default=100)
    idt.add_argument("--seed", type=_u64, default=0)
    return ap


def _load(args):
    from .experiments import ExperimentConfig, preset

    cfg = preset(args.preset) if args.preset else ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict(dict(cfg.raw, seed=args.seed))
    if args.method:
        cfg = cfg.with_overrides(method=args.method)
    return cfg


def _out_dir(args, cfg) -> str:
    return args.out or cfg.raw.get("output", {}).get("dir", "out")


def cmd_simulate(args) -> dict:
    from .experiments import run

    cfg = _load(args)
    art = run(cfg, _out_dir(args, cfg), plots=not args.no_plots)
    return {"status": "ok", "csv": str(art.csv_path), "svg": [str(p) for p in art.svg_paths], "summary": art.summary}


def cmd_drift_study(args) -> dict:
    from .experiments import drift_study, parse_fraction_list, write_study

    cfg = _load(args)
    hs = parse_fraction_list(args.h)
    epss = parse_fraction_list(args.eps)
    study = drift_study(cfg, hs, epss)
    drift_path, slope_path = write_study(study, _out_dir(args, cfg), cfg.name)
    return {
        "status": "ok",
        "method": study.method,
        "drift_csv": str(drift_path),
        "slopes_csv": str(slope_path),
        "slope_h": {repr(e): s for e, s in study.slopes_h.items()},
        "slope_eps": {repr(h): s for h, s in study.slopes_eps.items()},
    }


def cmd_identities(args) -> dict:
    from .checks import identity_suite

    if args.trials < 1:
        raise ConfigError("--trials must be at least 1")
    return {"status": "ok", "trials": args.trials, "seed": args.seed, "max_residual": identity_suite(args.trials, args.seed)}


COMMANDS = {"simulate": cmd_simulate, "drift-study": cmd_drift_study, "identities": cmd_identities}


def _fail(code: str, message: str, **extra) -> None:
    line = {"status": "error", "code": code, "message": message}
    line.update(extra)
    print(json.dumps(line, default=str), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (ConfigError, GraphError, UnsupportedVariant) as err:
        _fail(**err.as_dict())
        return 2
    except GndiffError as err:
        _fail(**err.as_dict())
        return 1
    except OSError as err:
        _fail("io-error", str(err))
        return 1
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
