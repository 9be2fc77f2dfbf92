"""Command line entry point: ``mixdg run | sweep | diverge``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..divergediag import ProbeConfig, bound_terms_report
from .config import GRAD_MODES, ConfigError, RunConfig
from .report import emit_report
from .runner import run_experiment
from .sweep import AXES, ablation_sweep


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags below override its keys")
    p.add_argument("--seed", type=int, action="append", dest="seeds", help="repeatable; replaces config seeds")
    p.add_argument("--method", choices=["dann", "coral", "erm", "erm-per-source"])
    p.add_argument("--pareto", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--selection", choices=["trainsplit", "vald", "oracle"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--B", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--grad-mode", choices=GRAD_MODES, dest="grad_mode")
    p.add_argument("--diag", action="store_true", default=None)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixdg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="train one configuration over its seeds"))
    sw = sub.add_parser("sweep", help="ablation sweep along one axis")
    _common(sw)
    sw.add_argument("--axis", choices=AXES, required=True)
    sw.add_argument("--values", nargs="+", help="axis values (defaults depend on the axis)")
    dv = sub.add_parser("diverge", help="train, then report measurable bound terms")
    _common(dv)
    dv.add_argument("--probe-epochs", type=int, default=ProbeConfig.epochs)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    keys = ("seeds", "method", "pareto", "selection", "alpha", "epsilon", "B", "lr", "epochs", "grad_mode",
            "diag", "out")
    return cfg.replace(**{k: getattr(args, k) for k in keys})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        cfg.validate()
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    out = Path(cfg.out)
    if args.command == "run":
        result = run_experiment(cfg)
        written = emit_report(result, out)
        print((out / "report.md").read_text(), end="")
    elif args.command == "sweep":
        values = args.values
        if values is not None and args.axis == "alpha":
            values = [float(v) for v in values]
        table = ablation_sweep(cfg, args.axis, values)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "sweep.csv")
        written = emit_report(list(table.results.values()), out)
        for value, med in table.medians().items():
            print(f"{args.axis}={value}: median target acc {100 * med:.2f}")
    else:
        result = run_experiment(cfg)
        out.mkdir(parents=True, exist_ok=True)
        reports = {}
        for t in result.trials:
            a = t.artifacts
            rep = bound_terms_report(a["task"].sources, a["task"].target, a["bundle"], a["val"], a["vald"],
                                     ProbeConfig(epochs=args.probe_epochs), seed=t.seed)
            reports[f"seed{t.seed}/{t.target}"] = rep.to_dict()
        path = out / "divergence.json"
        path.write_text(json.dumps(reports, indent=2, sort_keys=True))
        written = {"divergence": path}
        print(json.dumps(reports, indent=2, sort_keys=True))
    for name, path in written.items():
        print(f"wrote {name}: {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
