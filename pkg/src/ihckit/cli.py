"""Unified command-line entry point.

Subcommands cover the whole pipeline: ``curate build``, ``train``,
``predict``, ``eval``, ``perturb``, ``sweep``, ``serve``, ``report``,
and ``plot``. Every run writes a :class:`RunManifest` JSON next to its
primary output (override with ``--manifest``). Exit codes: 0 success,
1 domain error, 2 usage error.

Hyperparameter-style options follow a three-level precedence: explicit
command-line flags beat values from the ``--config`` YAML file, which
beat built-in defaults. Relative input paths are also tried against
``$IHCKIT_DATA_ROOT`` when set.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob as globlib
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .exceptions import IHCKitError, SchemaError, UsageError
from .records import IHCRecord, METADATA_SCHEMA_VERSION
from .vocab import ALL_TASKS, TaskId, default_registry

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "IHCKIT_DATA_ROOT"
BUNDLED_STUDIES = ("labeled", "external")


# -- manifest -------------------------------------------------------------


@dataclasses.dataclass
class RunManifest:
    """Reproducibility sidecar emitted by every command."""

    command: str
    version: str
    seed: Optional[int]
    config_hash: str
    inputs: dict
    outputs: list
    started_at: str
    finished_at: str

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=1, sort_keys=True)


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _md5_of_path(path) -> str:
    path = Path(path)
    if path.is_dir():
        return "<directory>"
    digest = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(args, command, effective, inputs, outputs, seed, started_at) -> None:
    manifest = RunManifest(
        command=command,
        version=__version__,
        seed=seed,
        config_hash=hashlib.md5(
            json.dumps(effective, sort_keys=True, default=str).encode()
        ).hexdigest(),
        inputs={str(p): _md5_of_path(p) for p in inputs if Path(p).exists()},
        outputs=[str(p) for p in outputs],
        started_at=started_at,
        finished_at=_utcnow(),
    )
    path = getattr(args, "manifest", None)
    if path is None:
        anchor = outputs[0] if outputs else inputs[0]
        path = f"{anchor}.manifest.json"
    manifest.save(path)


# -- shared helpers ---------------------------------------------------------


def _resolve_input(path_str: str) -> Path:
    """A path as given, else relative to $IHCKIT_DATA_ROOT."""
    path = Path(path_str)
    if path.exists():
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not path.is_absolute():
        candidate = Path(root) / path
        if candidate.exists():
            return candidate
    return path


def _load_yaml_config(path) -> dict:
    import yaml

    with open(path) as fh:
        loaded = yaml.safe_load(fh)
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    return loaded


def _effective_params(defaults: dict, args) -> dict:
    """Merge defaults <- config file <- explicitly passed flags."""
    effective = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        overrides = _load_yaml_config(_resolve_input(config_path))
        unknown = sorted(set(overrides) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys {unknown}; valid: {sorted(defaults)}")
        effective.update(overrides)
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            effective[key] = flag_value
    return effective


def _shard_paths(spec: str) -> list[Path]:
    root = _resolve_input(spec)
    if root.is_dir():
        paths = sorted(root.glob("*.tar"))
    else:
        paths = sorted(Path(p) for p in globlib.glob(str(root)))
    if not paths:
        raise UsageError(f"no shard files match {spec!r}")
    return paths


def _load_records(spec: str) -> list[IHCRecord]:
    from .curate import read_shards

    return list(read_shards(_shard_paths(spec)))


def _resolve_study_path(spec: str) -> Path:
    if spec in BUNDLED_STUDIES:
        return Path(str(resources.files("ihckit.study") / "data" / f"{spec}_study.json"))
    return _resolve_input(spec)


def _resolve_events_path(spec: Optional[str], study_spec: str) -> Optional[Path]:
    if spec is None:
        if study_spec in BUNDLED_STUDIES:
            return Path(
                str(resources.files("ihckit.study") / "data" / f"{study_spec}_events.jsonl")
            )
        return None
    return _resolve_input(spec)


def _labels_from_records(records, task: TaskId) -> np.ndarray:
    return np.array([r.labels[task] for r in records], dtype=np.int64)


# -- curate -----------------------------------------------------------------


def _record_from_entry(entry: dict, in_dir: Path, registry) -> IHCRecord:
    from .curate import compute_image_hash

    if not isinstance(entry, dict):
        raise SchemaError("each metadata line must be a JSON object")
    entry = dict(entry)
    image_rel = entry.pop("image_path", None)
    if not image_rel:
        raise SchemaError(f"metadata entry {entry.get('md5', '?')} lacks image_path")
    image_bytes = (in_dir / image_rel).read_bytes()
    entry["md5"] = compute_image_hash(image_bytes)
    entry.setdefault("schema_version", METADATA_SCHEMA_VERSION)
    labels = {}
    for key, value in (entry.get("labels") or {}).items():
        task = TaskId(key)
        labels[key] = value if isinstance(value, int) else registry[task].index_of(str(value))
    entry["labels"] = labels
    return IHCRecord.from_metadata(entry, image_ref=image_bytes)


def cmd_curate(args) -> None:
    from .curate import deduplicate, export_metadata_table, split_dataset, write_shards

    started = _utcnow()
    registry = default_registry()
    in_dir = _resolve_input(args.in_dir)
    meta_path = in_dir / "metadata.jsonl"
    if not meta_path.exists():
        raise UsageError(f"{meta_path} not found")
    records = []
    with open(meta_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{meta_path}:{line_no}: invalid JSON ({exc})") from exc
            records.append(_record_from_entry(entry, in_dir, registry))
    kept, merged = deduplicate(records, strict=args.strict)
    logger.info("curate: %d records, %d kept after dedup", len(records), len(kept))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    subsets = {"all": kept}
    if args.test_size:
        split = split_dataset(kept, args.test_size, seed=args.seed, strategy=args.strategy)
        by_md5 = {r.md5: r for r in kept}
        subsets = {
            "train": [by_md5[m] for m in split.train],
            "test": [by_md5[m] for m in split.test],
        }
        split_path = out_dir / "split.json"
        with open(split_path, "w") as fh:
            json.dump(dataclasses.asdict(split), fh, indent=1, sort_keys=True)
        outputs.append(split_path)
    for name, subset in subsets.items():
        subset_dir = out_dir / name
        subset_dir.mkdir(parents=True, exist_ok=True)
        shards = write_shards(subset, args.shard_size, subset_dir)
        outputs.extend(s.path for s in shards)
        table = subset_dir / "metadata.csv"
        export_metadata_table(subset, table)
        outputs.append(table)
    if merged:
        merged_path = out_dir / "merged.json"
        with open(merged_path, "w") as fh:
            json.dump(merged, fh, indent=1, sort_keys=True)
        outputs.append(merged_path)
    _write_manifest(
        args, "curate build", {"shard_size": args.shard_size, "test_size": args.test_size,
                               "strategy": args.strategy, "strict": args.strict},
        [in_dir], outputs, args.seed, started,
    )


# -- train / predict / eval --------------------------------------------------


TRAIN_DEFAULTS = {
    "learning_rate": 1e-6,
    "weight_decay": 1e-5,
    "epochs": 1,
    "batch_size": 2,
    "seed": 0,
    "caption_probability": 0.5,
    "encoder": "tiny",
    "embed_dim": 128,
}


def cmd_train(args) -> None:
    from .model.encoder import build_encoder_config
    from .train import TrainConfig, train

    started = _utcnow()
    effective = _effective_params(TRAIN_DEFAULTS, args)
    if args.toy:
        from .synthetic import toy_corpus

        records = toy_corpus(args.toy, seed=int(effective["seed"]))
        inputs = []
    else:
        if not args.shards:
            raise UsageError("provide --shards or --toy N")
        records = _load_records(args.shards)
        inputs = _shard_paths(args.shards)
    config = TrainConfig(
        learning_rate=float(effective["learning_rate"]),
        weight_decay=float(effective["weight_decay"]),
        epochs=int(effective["epochs"]),
        batch_size=int(effective["batch_size"]),
        seed=int(effective["seed"]),
        caption_probability=float(effective["caption_probability"]),
        encoder=build_encoder_config(str(effective["encoder"])),
        embed_dim=int(effective["embed_dim"]),
    )
    checkpoint = train(records, config)
    checkpoint.save(args.out)
    logger.info("train: %d records, %d steps -> %s", len(records), checkpoint.step, args.out)
    _write_manifest(args, "train", effective, inputs, [args.out], config.seed, started)


def cmd_predict(args) -> None:
    from .train import Checkpoint, predict_batch

    started = _utcnow()
    registry = default_registry()
    checkpoint_path = _resolve_input(args.checkpoint)
    checkpoint = Checkpoint.load(checkpoint_path)
    records = _load_records(args.shards)
    predictions = predict_batch(checkpoint, records, registry=registry, batch_size=args.batch_size)
    with open(args.out, "w") as fh:
        for record, pred in zip(records, predictions):
            row = {"md5": record.md5, **pred.to_json(registry)}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_manifest(
        args, "predict", {"batch_size": args.batch_size},
        [checkpoint_path, *_shard_paths(args.shards)], [args.out], None, started,
    )


def cmd_eval(args) -> None:
    from .metrics import MetricsReport, evaluate_task, export_calibration_csv, export_confusion_csv
    from .train import Checkpoint, predict_batch

    started = _utcnow()
    registry = default_registry()
    checkpoint_path = _resolve_input(args.checkpoint)
    checkpoint = Checkpoint.load(checkpoint_path)
    records = _load_records(args.shards)
    predictions = predict_batch(checkpoint, records, registry=registry)
    per_task = {}
    outputs = [Path(args.out)]
    csv_dir = Path(args.csv_dir) if args.csv_dir else None
    if csv_dir:
        csv_dir.mkdir(parents=True, exist_ok=True)
    for task in ALL_TASKS:
        probs = np.stack([np.asarray(p.probs[task]) for p in predictions])
        labels = _labels_from_records(records, task)
        metrics = evaluate_task(
            task, probs, labels, registry,
            ci_seed=args.seed, replicates=args.replicates,
        )
        per_task[task] = metrics
        if csv_dir:
            calibration_csv = csv_dir / f"calibration_{task.value}.csv"
            confusion_csv = csv_dir / f"confusion_{task.value}.csv"
            export_calibration_csv(metrics.calibration, calibration_csv)
            export_confusion_csv(metrics.confusion, registry[task].classes, confusion_csv)
            outputs.extend([calibration_csv, confusion_csv])
    report = MetricsReport(per_task=per_task, total=len(records))
    report.save(args.out)
    _write_manifest(
        args, "eval", {"replicates": args.replicates},
        [checkpoint_path, *_shard_paths(args.shards)], outputs, args.seed, started,
    )


# -- perturb / sweep ----------------------------------------------------------


def cmd_perturb(args) -> None:
    from PIL import Image

    from .robustness import perturb

    started = _utcnow()
    in_path = _resolve_input(args.in_path)
    image = np.asarray(Image.open(in_path).convert("RGB"))
    out_image = perturb(image, args.kind, args.level, args.seed)
    Image.fromarray(out_image).save(args.out)
    _write_manifest(
        args, "perturb", {"kind": args.kind, "level": args.level},
        [in_path], [args.out], args.seed, started,
    )


def cmd_sweep(args) -> None:
    from .robustness import export_sweep_csv, robustness_sweep
    from .train import Checkpoint

    started = _utcnow()
    checkpoint_path = _resolve_input(args.checkpoint)
    checkpoint = Checkpoint.load(checkpoint_path)
    records = _load_records(args.shards)
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    levels = tuple(int(v) for v in args.levels.split(",") if v.strip())
    rows = robustness_sweep(checkpoint, records, kinds=kinds, levels=levels, seed=args.seed)
    export_sweep_csv(rows, args.out)
    _write_manifest(
        args, "sweep", {"kinds": kinds, "levels": levels},
        [checkpoint_path, *_shard_paths(args.shards)], [args.out], args.seed, started,
    )


# -- study commands -----------------------------------------------------------


def cmd_serve(args) -> None:
    import uvicorn

    from .study.events import EventLog, load_study_config
    from .study.service import StudyService, create_app

    started = _utcnow()
    study_path = _resolve_study_path(args.study)
    config = load_study_config(study_path)
    log = EventLog(args.events) if args.events else EventLog(None)
    service = StudyService(config, log=log, seed=args.seed)
    app = create_app(service)
    if args.manifest:
        _write_manifest(
            args, "serve", {"host": args.host, "port": args.port},
            [study_path], [args.events] if args.events else [], args.seed, started,
        )
    logger.info("serving study %s on %s:%d", config.study_id, args.host, args.port)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def cmd_report(args) -> None:
    from .study.analysis import study_report
    from .study.events import EventLog, load_study_config

    started = _utcnow()
    study_path = _resolve_study_path(args.study)
    events_path = _resolve_events_path(args.events, args.study)
    if events_path is None:
        raise UsageError("provide --events (bundled studies default to their own logs)")
    config = load_study_config(study_path)
    log = EventLog(events_path)
    report = study_report(config, log.events())
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    _write_manifest(args, "report", {}, [study_path, events_path], [args.out], None, started)


def cmd_plot(args) -> None:
    from .plotting import render_all

    started = _utcnow()
    sources = {
        "calibration": args.calibration,
        "confusion": args.confusion,
        "sweep": args.sweep,
    }
    provided = {k: _resolve_input(v) for k, v in sources.items() if v}
    if not provided:
        raise UsageError("nothing to plot; pass --calibration/--confusion/--sweep")
    written = render_all(args.out_dir, **provided)
    _write_manifest(args, "plot", {}, list(provided.values()), written, None, started)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ihckit",
        description="Slide scoring pipeline: curation, training, evaluation, "
        "robustness, and reader-study tooling.",
    )
    parser.add_argument("--version", action="version", version=f"ihckit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="build tar shards from raw images + metadata")
    curate_sub = p.add_subparsers(dest="curate_command", required=True)
    b = curate_sub.add_parser("build")
    b.add_argument("--in", dest="in_dir", required=True)
    b.add_argument("--out", dest="out_dir", required=True)
    b.add_argument("--shard-size", type=int, default=64)
    b.add_argument("--test-size", type=int, default=0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--strategy", choices=("stratified", "random"), default="stratified")
    b.add_argument("--strict", action="store_true", help="fail on conflicting duplicate labels")
    b.add_argument("--manifest")
    b.set_defaults(handler=cmd_curate)

    p = sub.add_parser("train", help="train a checkpoint from shards")
    p.add_argument("--shards")
    p.add_argument("--toy", type=int, help="train on N synthetic quadrant-coded images")
    p.add_argument("--config", help="YAML file with hyperparameters")
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--caption-probability", type=float, dest="caption_probability")
    p.add_argument("--encoder")
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="write per-record predictions as JSONL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shards", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=32)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("eval", help="metrics report (accuracy, CI, ordinal, ECE, confusion)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shards", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--csv-dir", dest="csv_dir", help="also write calibration/confusion CSVs here")
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("perturb", help="apply one perturbation to one image")
    p.add_argument("--kind", choices=("salt_pepper", "cutout"), required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_perturb)

    p = sub.add_parser("sweep", help="accuracy vs perturbation level, CSV output")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shards", required=True)
    p.add_argument("--kinds", default="salt_pepper,cutout")
    p.add_argument("--levels", default="1,2,3,4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("serve", help="run the reader-study HTTP service")
    p.add_argument("--study", required=True, help="study config path, or bundled name "
                   f"({'/'.join(BUNDLED_STUDIES)})")
    p.add_argument("--events", help="JSONL event log path (omit for in-memory)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("report", help="analysis report from a study's event log")
    p.add_argument("--study", required=True)
    p.add_argument("--events")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("plot", help="render PNG figures from exported CSVs")
    p.add_argument("--calibration")
    p.add_argument("--confusion")
    p.add_argument("--sweep")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--manifest")
    p.set_defaults(handler=cmd_plot)
    return parser


def dispatch(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (IHCKitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
