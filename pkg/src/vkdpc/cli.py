"""Command line entry point: ``vkdpc <verb> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 for solver
failures; the failing step, if any, is printed on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .learning import VelocityKernelModel
from .optim import RiccatiError
from .plant import Dataset
from .polytope import hausdorff
from .terminal import TerminalError, check_assumption1

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="scenario TOML (default: shipped scenario)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override one scenario field")
    p.add_argument("--seed", type=int, help="shorthand for --set scenario.seed=SEED")


def _outdir(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--out-dir", default="out", help="output directory")


def _model_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="fitted model JSON; refit from the scenario when omitted")
    p.add_argument("--data", help="training dataset CSV used when fitting")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vkdpc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate-data", help="record identification data")
    _common(p)
    p.add_argument("--kind", choices=("train", "test"), default="train")
    p.add_argument("-o", "--out", default="data.csv")

    p = sub.add_parser("fit", help="fit the velocity kernel model")
    _common(p)
    p.add_argument("--data", help="training dataset CSV (generated when omitted)")
    p.add_argument("-o", "--out", default="model.json")

    p = sub.add_parser("validate", help="multi-step open-loop prediction on test data")
    _common(p)
    _model_arg(p)
    _outdir(p)
    p.add_argument("--test-data", help="test dataset CSV (generated when omitted)")
    p.add_argument("--stamp", action="store_true", help="embed a date in SVG metadata")

    p = sub.add_parser("terminal", help="terminal ingredients for one reference")
    _common(p)
    _model_arg(p)
    _outdir(p)
    p.add_argument("--yr", type=float, default=0.5, help="output reference")
    p.add_argument("--stamp", action="store_true")

    for verb, text in (("simulate", "closed-loop run of one controller"),
                       ("compare", "both controllers on one disturbance realisation")):
        p = sub.add_parser(verb, help=text)
        _common(p)
        _model_arg(p)
        _outdir(p)
        if verb == "simulate":
            p.add_argument("--variant", choices=harness.VARIANTS, default="vkdpc")
        p.add_argument("--timing", action="store_true",
                       help="record wall times (outputs are then not reproducible)")
        p.add_argument("--stamp", action="store_true")
    return ap


def _scenario(args) -> harness.Scenario:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"scenario.seed={args.seed}")
    return harness.load_scenario(args.config, overrides)


def _model(args, scenario) -> VelocityKernelModel:
    if getattr(args, "model", None):
        try:
            return VelocityKernelModel.load(args.model)
        except (OSError, KeyError, ValueError) as exc:
            raise harness.ScenarioError(f"cannot load model {args.model}: {exc}") from exc
    data = None
    if getattr(args, "data", None):
        try:
            data = Dataset.from_csv(args.data)
        except (OSError, KeyError, ValueError) as exc:
            raise harness.ScenarioError(f"cannot read dataset {args.data}: {exc}") from exc
    return harness.fit_model(scenario, data)


def cmd_generate_data(args) -> int:
    sc = _scenario(args)
    data = harness.training_data(sc) if args.kind == "train" else harness.test_data(sc)
    data.to_csv(args.out)
    print(f"wrote {data.s} samples to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    sc = _scenario(args)
    model = _model(args, sc)
    model.save(args.out)
    r = model.report
    print(f"fit {r.status}: rank {r.rank_x}/{min(r.shape_x)} and {r.rank_y}/{min(r.shape_y)}, "
          f"residuals {r.residual_x:.3e} {r.residual_y:.3e}, {r.wall_time:.2f} s")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args)
    model = _model(args, sc)
    data = None
    if args.test_data:
        try:
            data = Dataset.from_csv(args.test_data)
        except (OSError, KeyError, ValueError) as exc:
            raise harness.ScenarioError(f"cannot read dataset {args.test_data}: {exc}") from exc
    res = harness.validate(sc, model, data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "validation.csv")
    harness.plot_validation(res, out / "validation.svg", args.stamp)
    print(f"{res.N}-step rmse {res.rmse:.6e} rad over {len(res.k)} samples")
    return EXIT_OK


def cmd_terminal(args) -> int:
    sc = _scenario(args)
    model = _model(args, sc)
    c = sc.controller
    sets, summary = {}, {"y_r": args.yr}
    for variant in harness.VARIANTS:
        mdl = harness.controller_model(sc, variant, model)
        ti = harness.terminal_cache(sc, mdl)(args.yr)
        cert = check_assumption1(ti, c.Q, c.R, c.Z, c.dU)
        sets[variant] = ti.Z_T
        summary[variant] = {
            "K": ti.K.tolist(),
            "rows": ti.Z_T.n_rows,
            "iterations": ti.iterations,
            "certificate": {x.name: x.worst_slack for x in cert.conditions},
            "passed": cert.passed,
        }
        print(f"[{variant}]\n{cert.summary()}")
    summary["hausdorff"] = hausdorff(sets["vkdpc"], sets["vnmpc"])
    summary["vnmpc_diameter"] = sets["vnmpc"].diameter()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sets["vkdpc"].to_csv(out / "terminal_set.csv")
    sets["vkdpc"].vertices_to_csv(out / "terminal_vertices.csv")
    sets["vnmpc"].to_csv(out / "terminal_set_vnmpc.csv")
    harness.plot_terminal_sets({"kernel model": sets["vkdpc"], "analytic model": sets["vnmpc"]},
                               out / "terminal_set.svg", stamp=args.stamp)
    harness.write_json(summary, out / "terminal.json")
    print(f"hausdorff distance {summary['hausdorff']:.3e}, "
          f"analytic diameter {summary['vnmpc_diameter']:.3f}")
    return EXIT_OK


def _run(args, variants) -> int:
    sc = _scenario(args)
    model = _model(args, sc) if "vkdpc" in variants else None
    logs = [harness.run_closed_loop(sc, v, model) for v in variants]
    validation = terminal = None
    if model is not None:
        validation = harness.validate(sc, model)
        y_r = sc.references[0][1]
        terminal = {"kernel model": harness.terminal_cache(sc, model)(y_r)}
        if "vnmpc" in variants:
            an = harness.controller_model(sc, "vnmpc")
            terminal["analytic model"] = harness.terminal_cache(sc, an)(y_r)
        terminal = {k: ti.Z_T for k, ti in terminal.items()}
    metrics = harness.emit_artifacts(sc, logs, args.out_dir, validation=validation,
                                     terminal=terminal, timing=args.timing, stamp=args.stamp)
    print(json.dumps(harness.json_safe(metrics), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run(args, (args.variant,))


def cmd_compare(args) -> int:
    return _run(args, harness.VARIANTS)


COMMANDS = {
    "generate-data": cmd_generate_data,
    "fit": cmd_fit,
    "validate": cmd_validate,
    "terminal": cmd_terminal,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except harness.ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except harness.SimulationError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (TerminalError, RiccatiError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
