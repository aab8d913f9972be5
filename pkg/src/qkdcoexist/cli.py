"""``qkdcoexist`` command line: generate data, train, compare, run the scenario, report.

Every subcommand writes into ``--out`` and leaves a
``config_echo_<subcommand>.json`` with all effective parameters. Outputs
are staged in a temporary directory and moved into place only when the
run succeeds, so a failed run leaves nothing behind.

Exit codes: 0 ok, 1 usage, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import Config, ConfigError, load_config
from .controller import (
    PLAN_PRESETS,
    Action,
    ScenarioError,
    ScenarioScript,
    load_script,
    run_scenario,
)
from .dataset import DatasetError, generate_campaign
from .dataset import load as load_dataset
from .dataset import save as save_dataset
from .grid import GridSpec
from .ml import KINDS, ModelSpec, Predictor, compare_models, fit_predictor, with_overrides
from .plotting import plot_mse, plot_scenario
from .wire import CorruptLogError, RecordLog, WireError, replay

log = logging.getLogger("qkdcoexist")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_SCENARIO_MODEL = "RF"

DATASET_FILE = "dataset.csv"
PREDICTOR_FILE = "predictor.json"
RECORD_FILE = "records.jsonl"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        # argparse exits 2 after a full usage dump; keep to one line and the usage code
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message} (see --help)\n")


@dataclass(frozen=True)
class RunConfig:
    """Effective parameters of one invocation, echoed next to the outputs."""

    subcommand: str
    seed: int | None
    out: Path
    config_path: Path | None = None
    paths: dict[str, str] = field(default_factory=dict)
    model: dict[str, Any] = field(default_factory=dict)
    threshold: dict[str, Any] = field(default_factory=dict)
    plans: dict[str, list[int]] = field(default_factory=dict)

    def echo(self, config: Config | None) -> dict[str, Any]:
        return {
            "version": __version__,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "out": str(self.out),
            "config_path": None if self.config_path is None else str(self.config_path),
            "paths": self.paths,
            "model": self.model,
            "threshold": self.threshold,
            "plans": self.plans,
            "config": None if config is None else config.to_dict(),
        }


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _need_seed(args: argparse.Namespace, why: str) -> int:
    if args.seed is None:
        raise UsageError(f"--seed is required {why}")
    return args.seed


def _model_spec(args: argparse.Namespace, kind: str, seed: int | None) -> ModelSpec:
    overrides: dict[str, Any] = {}
    if kind == "KN":
        overrides["k"] = args.k
    if kind in ("Ridge", "Lasso"):
        overrides["lam"] = args.lam
    if kind == "RF":
        overrides["n_trees"] = args.trees
        overrides["bootstrap_seed"] = seed
    try:
        return with_overrides(ModelSpec(kind), **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_plan(text: str) -> tuple[str, tuple[int, ...]]:
    label, sep, value = text.partition("=")
    if not sep or not label or not value:
        raise UsageError(f"--plan expects LABEL=PRESET or LABEL=i,j,...; got {text!r}")
    if value in PLAN_PRESETS:
        return label, PLAN_PRESETS[value]
    try:
        return label, tuple(int(v) for v in value.split(","))
    except ValueError:
        raise UsageError(f"--plan {text!r}: {value!r} is neither a preset {sorted(PLAN_PRESETS)} nor a channel list") from None


def _write_csv(path: Path, rows: Sequence[dict[str, Any]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------- subcommands


def cmd_gen_data(args, config: Config, stage: Path) -> tuple[RunConfig, str]:
    seed = _need_seed(args, "for gen-data")
    bundle = generate_campaign(config, seed)
    save_dataset(bundle, stage / DATASET_FILE)
    n_train = sum(map(len, bundle.training_sets))
    n_val = sum(map(len, bundle.validation_sets))
    run = RunConfig("gen-data", seed, args.out, args.config, paths={"dataset": DATASET_FILE})
    return run, f"wrote {n_train} training and {n_val} validation instances in {bundle.set_count} sets"


def cmd_train(args, config: Config, stage: Path) -> tuple[RunConfig, str]:
    data = _existing(args.data, "dataset")
    kind = args.model or DEFAULT_SCENARIO_MODEL
    seed = _need_seed(args, "to train RF") if kind == "RF" else args.seed
    spec = _model_spec(args, kind, seed)
    bundle = load_dataset(data)
    predictor = fit_predictor(spec, bundle.training)
    predictor.save(stage / PREDICTOR_FILE)
    run = RunConfig("train", seed, args.out, args.config, paths={"data": str(data), "predictor": PREDICTOR_FILE}, model=asdict(spec))
    return run, f"trained {kind} on {len(bundle.training)} pooled training instances"


def cmd_eval(args, config: Config, stage: Path) -> tuple[RunConfig, str]:
    data = _existing(args.data, "dataset")
    kinds = [args.model] if args.model else list(KINDS)
    seed = _need_seed(args, "to evaluate RF") if "RF" in kinds else args.seed
    specs = [_model_spec(args, k, seed) for k in kinds]
    table = compare_models(load_dataset(data), specs)
    rows = table.rows
    _write_csv(stage / "eval.csv", rows)
    per_set = [
        {"model": m, "target": t, "set": i, "mse": v}
        for m in table.models
        for t, values in table.per_set[m].items()
        for i, v in enumerate(values)
    ]
    _write_csv(stage / "eval_per_set.csv", per_set)
    text = table.format()
    (stage / "eval.txt").write_text(text + "\n")
    plot_mse(rows, stage / "eval_mse.png")
    run = RunConfig(
        "eval", seed, args.out, args.config,
        paths={"data": str(data), "table": "eval.csv", "figure": "eval_mse.png"},
        model={s.kind: asdict(s) for s in specs},
    )
    return run, text


def _scenario_predictor(args, config: Config) -> tuple[Predictor, dict[str, Any], int | None]:
    models = _existing(args.models, "predictor file")
    if models is not None:
        try:
            predictor = Predictor.load(models)
        except (ValueError, KeyError) as exc:
            raise DatasetError(f"{models}: {exc}") from None
        if args.model and args.model != predictor.kind:
            raise UsageError(f"--model {args.model} does not match the {predictor.kind} predictor in {models}")
        return predictor, {"predictor": str(models), "kind": predictor.kind}, args.seed
    kind = args.model or DEFAULT_SCENARIO_MODEL
    seed = _need_seed(args, "when the scenario trains its own model")
    spec = _model_spec(args, kind, seed)
    if args.data:
        bundle = load_dataset(_existing(args.data, "dataset"))
    else:
        bundle = generate_campaign(config, seed)
    return fit_predictor(spec, bundle.training), asdict(spec), seed


def cmd_scenario(args, config: Config, stage: Path) -> tuple[RunConfig, str]:
    script_path = _existing(args.script, "scenario script")
    script: ScenarioScript = load_script(script_path)
    if args.plan:
        plans = dict(script.plans)
        plans.update(_parse_plan(p) for p in args.plan)
        script = replace(script, plans=plans)
    predictor, model, seed = _scenario_predictor(args, config)
    store = RecordLog(stage / RECORD_FILE)
    report = run_scenario(
        script, predictor, config, store=store,
        min_skr=args.threshold_skr, max_qber=args.threshold_qber, greedy=args.greedy,
    )
    rows = report.rows()
    _write_csv(stage / "scenario.csv", rows)
    text = report.format()
    (stage / "scenario.txt").write_text(text + "\n")
    threshold = asdict(report.threshold)
    plot_scenario(rows, threshold, stage / "scenario.png", _quantum_index(config))
    run = RunConfig(
        "scenario", seed, args.out, args.config,
        paths={"script": str(script_path or "<packaged>"), "log": RECORD_FILE, "table": "scenario.csv", "figure": "scenario.png"},
        model=model,
        threshold=threshold,
        plans={k: list(v) for k, v in script.plans.items()},
    )
    return run, text


def _quantum_index(config: Config) -> float:
    return config.grid.index_of(config.quantum.center_frequency)


def report_rows(records, grid: GridSpec) -> tuple[list[dict[str, Any]], dict[str, float]]:
    """Per-stage table rebuilt from a record log alone."""
    stages: dict[str, dict[str, Any]] = {}
    threshold: dict[str, float] = {}
    for r in records:
        p = r.payload
        row = stages.setdefault(p["stage"], {"stage": p["stage"], "messages": 0})
        if r.kind == "snapshot":
            threshold = p["threshold"]
            row["path"] = p["link"]
            row["channels"] = "-".join(str(round(grid.index_of(f))) for f in p["frequencies_thz"])
            for t in ("noise_rate", "skr", "qber"):
                row[f"monitored_{t}"] = p["monitored"][t]
        elif r.kind == "prediction":
            for t in ("noise_rate", "skr", "qber"):
                row[f"predicted_{t}"] = p[t]
        elif r.kind == "action":
            row["action"] = Action.from_dict({k: v for k, v in p.items() if k != "stage"}).label()
            row["warning"] = p["warning"]
            row["reason"] = p["reason"]
        elif r.kind == "message":
            row["messages"] += 1
    required = ("path", "monitored_skr", "predicted_skr", "action")
    for name, row in stages.items():
        missing = [k for k in required if k not in row]
        if missing:
            raise CorruptLogError(f"stage {name!r} lacks {missing} in the log")
    return list(stages.values()), threshold


def cmd_report(args, config: Config, stage: Path) -> tuple[RunConfig, str]:
    log_path = _existing(args.log, "record log")
    if log_path is None:
        raise UsageError("--log is required for report")
    records = replay(log_path)
    if not records:
        raise DatasetError(f"{log_path}: no records")
    rows, threshold = report_rows(records, config.grid)
    wires = [r.payload["wire"] for r in records if r.kind == "message"]
    lines = [
        f"record log {log_path}: {len(records)} records, {len(rows)} stages, {len(wires)} switch messages",
        f"threshold: skr >= {threshold['min_skr']:.1f} b/s, qber <= {threshold['max_qber']:.3f}, "
        f"noise <= {threshold['max_noise_rate']:.1f} ph/s",
        "",
        f"{'stage':<8}{'path':<9}{'noise mon/pred':>20}{'SKR mon/pred':>20}{'QBER mon/pred':>18}  action",
    ]
    for r in rows:
        lines.append(
            f"{r['stage']:<8}{r['path']:<9}{r['monitored_noise_rate']:>10.1f}/{r['predicted_noise_rate']:<9.1f}"
            f"{r['monitored_skr']:>10.1f}/{r['predicted_skr']:<9.1f}"
            f"{r['monitored_qber']:>9.4f}/{r['predicted_qber']:<8.4f}  {r['action']}{' (!)' if r['warning'] else ''}"
        )
    lines += ["", "switch messages:"] + [f"  {w.rstrip()}" for w in wires]
    text = "\n".join(lines)
    (stage / "report.txt").write_text(text + "\n")
    _write_csv(stage / "report.csv", rows)
    plot_scenario(rows, threshold, stage / "report.png", _quantum_index(config))
    run = RunConfig("report", args.seed, args.out, args.config, paths={"log": str(log_path), "figure": "report.png"}, threshold=threshold)
    return run, text


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "scenario": cmd_scenario,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (required for gen-data and whenever RF is fitted)")
    common.add_argument("--config", help="YAML config layered over the shipped defaults")
    common.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
    common.add_argument("-v", "--verbose", action="store_true")

    models = _Parser(add_help=False)
    models.add_argument("--model", choices=KINDS, help="regressor kind")
    models.add_argument("--k", type=int, help="KN neighbour count")
    models.add_argument("--lambda", dest="lam", type=float, help="Ridge/Lasso penalty")
    models.add_argument("--trees", type=int, help="RF tree count")

    parser = _Parser(prog="qkdcoexist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    sub.add_parser("gen-data", parents=[common], help="generate the synthetic measurement campaign")

    p = sub.add_parser("train", parents=[common, models], help=f"fit one model kind (default {DEFAULT_SCENARIO_MODEL}) on all training sets")
    p.add_argument("--data", required=True, help=f"dataset CSV ({DATASET_FILE} from gen-data)")

    p = sub.add_parser("eval", parents=[common, models], help="per-set validation MSE for all models against the mean baseline")
    p.add_argument("--data", required=True, help="dataset CSV")

    p = sub.add_parser("scenario", parents=[common, models], help="run the staged re-allocation scenario")
    p.add_argument("--models", help=f"trained predictor ({PREDICTOR_FILE}); trains one when omitted")
    p.add_argument("--data", help="dataset used to train when --models is omitted; generated from --seed otherwise")
    p.add_argument("--script", help="scenario YAML (default: the shipped field-trial scenario)")
    p.add_argument("--threshold-skr", type=float, help="minimum SKR in b/s (default: half the initial prediction)")
    p.add_argument("--threshold-qber", type=float, help="maximum QBER")
    p.add_argument(
        "--plan", action="append", metavar="LABEL=PLAN",
        help=f"add or replace a plan: a preset {sorted(PLAN_PRESETS)} or comma-separated grid indices; repeatable",
    )
    p.add_argument("--greedy", action="store_true", help="also offer a greedily constructed plan")

    p = sub.add_parser("report", parents=[common], help="summarize a scenario record log")
    p.add_argument("--log", required=True, help=f"record log ({RECORD_FILE} from scenario)")
    return parser


def _publish(stage: Path, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    moved = []
    for item in sorted(stage.iterdir()):
        target = out / item.name
        shutil.move(str(item), target)
        moved.append(target)
    return moved


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    stage = None
    try:
        config_path = _existing(args.config, "config file")
        args.config = config_path
        config = load_config(config_path)
        args.out.parent.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=f".{args.out.name}.", dir=args.out.parent))
        run, text = COMMANDS[args.subcommand](args, config, stage)
        (stage / f"config_echo_{args.subcommand}.json").write_text(json.dumps(run.echo(config), indent=2, default=str) + "\n")
        _publish(stage, args.out)
        print(text)
        return EXIT_OK
    except UsageError as exc:
        print(f"qkdcoexist {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DatasetError, ScenarioError, WireError, CorruptLogError, OSError) as exc:
        print(f"qkdcoexist {args.subcommand}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal exit code
        log.debug("internal error", exc_info=True)
        print(f"qkdcoexist {args.subcommand}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        if stage is not None and stage.exists():
            shutil.rmtree(stage, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main())
