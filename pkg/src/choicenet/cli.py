"""``choicenet`` command line: train, search, interpret, synth."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, Schema, default_schema, load_csv, split, write_csv
from .experiments import pooled
from .hpo import HyperSpace, hyperparameter_report, random_search, reportable, sorted_curves
from .interpret import elasticity_matrix, average_elasticity, iia_report, probability_sweep
from .models import ArchSpec
from .synth import DgpSpec, generate
from .training import HyperConfig, TrainedModel, TrainingDivergence, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class StageError(Exception):
    """Wraps a failure with the workflow stage it happened in."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.exc = exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (TrainingDivergence, UsageError):
        raise
    except (DataError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------- manifest

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, args: argparse.Namespace, config, inputs: dict,
                   outputs: list) -> dict:
    """Record everything needed to rerun; written before any other output."""
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "choicenet",
        "version": __version__,
        "command": command,
        # --out and --parallel do not change results; leaving them out keeps manifests comparable
        "argv": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
                 if k not in ("func", "out", "parallel")},
        "config": config,
        "seed": args.seed,
        "inputs": {name: {"path": str(p), "sha256": sha256(p)} for name, p in inputs.items() if p},
        "outputs": sorted(outputs),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def _write_rows(path: Path, rows: list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


# ---------------------------------------------------------------- config helpers

def _preset_json(name: str) -> dict:
    return json.loads(resources.files("choicenet.presets").joinpath(name).read_text("utf-8"))


def resolve_config(family: str, config: str | None, seed: int, nests=None) -> HyperConfig:
    """--config may be a JSON file, a preset name (e.g. asudnn-top1) or omitted."""
    if config is None:
        d = _preset_json("default_configs.json")[family]
    elif Path(config).is_file():
        d = json.loads(Path(config).read_text(encoding="utf-8"))
    else:
        presets = _preset_json("top5_configs.json")
        if config not in presets:
            raise DataError(f"config file not found and no preset named {config!r}: {config}")
        d = presets[config]
    d = dict(d)
    arch = dict(d.get("arch", {"family": family}))
    if arch.get("family", family) != family:
        raise UsageError(f"config is for family {arch['family']!r}, not {family!r}")
    arch["family"] = family
    if family == "nl" and arch.get("nests") is None:
        if nests is None:
            raise DataError("nested logit needs nests in the schema or config")
        arch["nests"] = nests
    d["arch"] = ArchSpec.from_dict(arch)
    d["seed"] = seed
    return HyperConfig.from_dict(d)


def _load_space(space: str) -> HyperSpace:
    if Path(space).is_file():
        return HyperSpace.load(space)
    try:
        return HyperSpace.preset(space)
    except FileNotFoundError:
        raise DataError(f"space file not found and no preset named {space!r}: {space}") from None


def _load_data(args):
    schema = Schema.load(args.schema)
    return schema, load_csv(args.data, schema)


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    out = Path(args.out)
    schema, ds = _stage("data", _load_data, args)
    cfg = _stage("config", resolve_config, args.family, args.config, args.seed, schema.nest_indices())
    outputs = ["weights.json", "history.csv", "eval.json"]
    write_manifest(out, "train", args, cfg.to_dict(),
                   {"data": args.data, "schema": args.schema,
                    "config": args.config if args.config and Path(args.config).is_file() else None},
                   outputs)
    tr, va, te = _stage("split", split, ds, args.seed)
    model = _stage("train", train, args.family, tr, va, cfg)
    model.meta = {"split_seed": args.seed, "alternatives": list(ds.alternatives)}
    model.save(out / "weights.json")
    model.history.to_csv(out / "history.csv")
    report = {name: evaluate(model, part).to_dict() for name, part in
              (("train", tr), ("validation", va), ("test", te))}
    report["accuracy"] = report["test"]["accuracy"]
    report["num_params"] = model.model.num_params()
    _dump_json(out / "eval.json", report)
    print(f"test accuracy {report['accuracy']:.4f}")
    return EXIT_OK


def cmd_search(args) -> int:
    out = Path(args.out)
    families = [f.strip() for f in args.family.split(",") if f.strip()]
    for f in families:
        if f not in ("mnl", "nl", "fdnn", "asudnn"):
            raise UsageError(f"unknown family {f!r}")
    if args.trials < 1 or args.parallel < 1:
        raise UsageError("--trials and --parallel must be >= 1")
    schema, ds = _stage("data", _load_data, args)
    space = _stage("space", _load_space, args.space)
    outputs = ["sorted_curves.csv"]
    for f in families:
        outputs += [f"{f}_folds.csv", f"{f}_summary.csv", f"{f}_reports.json"]
    write_manifest(out, "search", args, {"space": space.to_dict(), "families": families},
                   {"data": args.data, "schema": args.schema,
                    "space": args.space if Path(args.space).is_file() else None}, outputs)
    tr, va, te = _stage("split", split, ds, args.seed)
    trainval = pooled(tr, va)
    boards = {}
    for f in families:
        board = _stage("search", random_search, space, f, ds, args.trials, parallelism=args.parallel,
                       seed=args.seed, nests=schema.nest_indices() if f == "nl" else None,
                       keep_top=0, splits=(trainval, te))
        boards[f] = board
        board.to_csv(out / f"{f}_folds.csv", out / f"{f}_summary.csv")
        reports = {name: hyperparameter_report(board, name).to_dict() for name in reportable(f)}
        _dump_json(out / f"{f}_reports.json", reports)
        print(f"{f}: best cv {board.best.cv_accuracy:.4f}, top-10 mean test {board.top_mean(10):.4f}")
    _write_rows(out / "sorted_curves.csv", sorted_curves(boards))
    return EXIT_OK


def _parse_sweep(spec: str):
    parts = spec.split(":")
    if len(parts) != 5:
        raise UsageError(f"--sweep expects alt:attr:lo:hi:steps, got {spec!r}")
    alt, attr, lo, hi, steps = parts
    try:
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise UsageError(f"--sweep bounds must be numbers and steps an integer: {spec!r}") from None
    if steps < 1:
        raise UsageError("--sweep needs at least one step")
    return alt, attr, np.linspace(lo, hi, steps)


def cmd_interpret(args) -> int:
    out = Path(args.out)
    sweep = _parse_sweep(args.sweep) if args.sweep else None
    models = [_stage("model", TrainedModel.load, p) for p in args.model]
    schema, ds = _stage("data", _load_data, args)
    seed = models[0].meta.get("split_seed")
    reference = _stage("split", split, ds, seed)[0] if seed is not None else ds
    if sweep:
        outputs = ["sweep.csv", "sweep.json"]
    elif args.elasticity:
        outputs = ["elasticity.csv", "elasticity.json"]
    else:
        outputs = ["iia.json"]
    write_manifest(out, "interpret", args, None,
                   {**{f"model{i}": p for i, p in enumerate(args.model)},
                    "data": args.data, "schema": args.schema}, outputs)
    if sweep:
        if len(models) != 1:
            raise UsageError("--sweep takes a single --model")
        alt, attr, grid = sweep
        res = _stage("sweep", probability_sweep, models[0], reference, alt, attr, grid)
        res.to_csv(out / "sweep.csv")
        res.to_json(out / "sweep.json")
    elif args.elasticity:
        if len(models) == 1:
            em = _stage("elasticity", elasticity_matrix, models[0], reference)
        else:
            em = _stage("elasticity", average_elasticity, models, reference)
        em.to_csv(out / "elasticity.csv")
        em.to_json(out / "elasticity.json")
    else:
        if len(models) != 1:
            raise UsageError("--iia takes a single --model")
        rep = _stage("iia", iia_report, models[0], ds, args.probes, args.seed)
        _dump_json(out / "iia.json", rep.to_dict())
        print(f"max |delta log ratio| {rep.max_deviation:.3e}: "
              f"{'IIA-consistent' if rep.consistent else 'not IIA-consistent'}")
    return EXIT_OK


def _load_dgp(dgp: str) -> DgpSpec:
    if Path(dgp).is_file():
        return DgpSpec.load(dgp)
    name = f"dgp_{dgp.replace('-', '_')}.json"
    try:
        return DgpSpec.from_dict(_preset_json(name))
    except FileNotFoundError:
        raise DataError(f"DGP file not found and no preset named {dgp!r}: {dgp}") from None


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    spec = _stage("dgp", _load_dgp, args.dgp).resolve()
    write_manifest(out, "synth", args, spec.to_dict(),
                   {"dgp": args.dgp if Path(args.dgp).is_file() else None},
                   ["data.csv", "schema.json", "dgp.json"])
    ds = _stage("generate", generate, spec, args.n, args.seed)
    schema = default_schema(ds, spec.nests)
    write_csv(ds, out / "data.csv", schema)
    _dump_json(out / "schema.json", schema.to_dict())
    spec.save(out / "dgp.json")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="choicenet", description=__doc__)
    p.add_argument("--version", action="version", version=f"choicenet {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="fit one model on a 4:1:1 split")
    t.add_argument("--data", required=True)
    t.add_argument("--schema", required=True)
    t.add_argument("--family", required=True, choices=("mnl", "nl", "fdnn", "asudnn"))
    t.add_argument("--config", help="HyperConfig JSON file or preset name (e.g. asudnn-top1)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("search", help="random hyperparameter search with 5-fold CV")
    s.add_argument("--data", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--family", required=True, help="comma-separated families")
    s.add_argument("--space", default="table1", help="space JSON file or preset (table1, desk)")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    i = sub.add_parser("interpret", help="probability sweeps, elasticities, IIA probes")
    i.add_argument("--model", required=True, nargs="+", help="weights file(s); several are averaged")
    i.add_argument("--data", required=True)
    i.add_argument("--schema", required=True)
    what = i.add_mutually_exclusive_group(required=True)
    what.add_argument("--sweep", metavar="ALT:ATTR:LO:HI:STEPS")
    what.add_argument("--elasticity", action="store_true")
    what.add_argument("--iia", action="store_true")
    i.add_argument("--probes", type=int, default=1000)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interpret)

    y = sub.add_parser("synth", help="sample a dataset from a known DGP")
    y.add_argument("--dgp", required=True, help="DgpSpec JSON file or preset (nonlinear-asu, linear)")
    y.add_argument("--n", type=int, required=True)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"choicenet {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"choicenet {args.command}: {exc.stage} stage failed: {exc.exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as exc:
        print(f"choicenet {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
