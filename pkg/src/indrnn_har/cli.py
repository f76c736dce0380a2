"""Command-line entry point: ``indrnn-har <command> [options]``.

Every command reads one YAML config (``--config``), applies ``--set
section.key=value`` overrides, and writes the fully resolved config plus a
version stamp into ``--out`` next to its outputs.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import sys
import zlib
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import BadConfig, HarError
from .features import FeatureConfig, WindowSpec, load_feature_file, save_feature_file
from .nn import LRSchedule, NetworkConfig
from .pipeline.data import Dataset, SyntheticSpec, ingest, synthesize, write_dataset
from .pipeline.location import recognize_location_group
from .pipeline.model import Classifier, evaluate
from .pipeline.train import TrainConfig, train
from .pipeline.transfer import FusedPredictor, TransferConfig, transfer_and_fuse

log = logging.getLogger("indrnn_har")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "synth": {"n_per_class": 50, "noise": 1.0, "users": [1], "locations": ["Hips"], "role": "train"},
    "window": dataclasses.asdict(WindowSpec()),
    "features": dataclasses.asdict(FeatureConfig()),
    "network": NetworkConfig().to_dict(),
    "train": {
        "target": "activity",
        "epochs": 60,
        "batch_size": 128,
        "base_lr": 8e-5,
        "warmup_lr": 2e-5,
        "warmup_epochs": 10,
        "patience": 100,
        "decay_factor": 10.0,
        "max_drops": 2,
        "early_stop_patience": None,
    },
    "transfer": {"lr": 2e-5, "epochs": 100, "batch_size": 128, "patience": 20},
}


def derive_seed(seed: int, stage: str) -> int:
    """Deterministic per-stage seed."""
    return zlib.crc32(f"{seed}:{stage}".encode()) & 0x7FFFFFFF


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (update or {}).items():
        where = f"{path}{k}"
        if k not in out:
            raise BadConfig(f"unknown config key {where!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise BadConfig(f"config key {where!r} must be a mapping")
            # Open sections: keys are checked by the consuming dataclass.
            out[k] = {**out[k], **v} if k in ("synth", "dropout") else _merge(out[k], v, where + ".")
        else:
            out[k] = v
    return out


def resolve_config(config_path=None, overrides=(), seed=None, threads=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if config_path:
        loaded = yaml.safe_load(Path(config_path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise BadConfig(f"{config_path}: top level must be a mapping")
        cfg = _merge(cfg, loaded)
    for item in overrides:
        if "=" not in item:
            raise BadConfig(f"override {item!r} must look like section.key=value")
        key, raw = item.split("=", 1)
        node = {}
        cur = node
        parts = key.split(".")
        for p in parts[:-1]:
            cur[p] = {}
            cur = cur[p]
        cur[parts[-1]] = yaml.safe_load(raw)
        cfg = _merge(cfg, node)
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    return cfg


def _network_config(cfg: dict) -> NetworkConfig:
    try:
        return NetworkConfig.from_dict(cfg["network"])
    except TypeError as exc:
        raise BadConfig(f"network config: {exc}") from None


def _write_provenance(out: Path, cfg: dict, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(yaml.safe_dump({"command": command, **cfg}, sort_keys=True))
    (out / "VERSION").write_text(f"indrnn_har {__version__}\n")


def _load_data(path, cfg: dict, role: str, window=None, features=None) -> Dataset:
    """Featurized dataset from a feature file or an ingestion directory."""
    p = Path(path)
    if p.is_dir():
        window = window or WindowSpec(**cfg["window"])
        features = features or FeatureConfig(**cfg["features"])
        return ingest(p, role).featurize(window, features)
    feats, labels, meta = load_feature_file(p)
    return Dataset(activity=labels.get("activity", np.zeros(len(feats), np.int64)), role=role,
                   location=labels.get("location"), user=labels.get("user"), features=feats, meta=meta)


def _load_predictor(path):
    p = Path(path)
    if p.suffix == ".json":
        members = json.loads(p.read_text())["members"]
        return FusedPredictor([Classifier.load(p.parent / m)[0] for m in members])
    return Classifier.load(p)[0]


def _save_report(out: Path, name: str, rep) -> None:
    (out / f"{name}.txt").write_text(rep.to_text())
    (out / f"{name}.json").write_text(rep.to_json() + "\n")


# ------------------------------------------------------------------ commands

def cmd_synth(args, cfg):
    spec_dict = dict(cfg["synth"])
    spec_dict.setdefault("seed", derive_seed(cfg["seed"], "synth"))
    spec = SyntheticSpec.from_dict(spec_dict)
    ds = synthesize(spec)
    files = write_dataset(ds, args.out)
    (Path(args.out) / "synthetic_spec.yaml").write_text(yaml.safe_dump(spec.to_dict(), sort_keys=True))
    print(f"wrote {len(ds)} samples in {len(files)} files to {args.out}")


def cmd_features(args, cfg):
    window = WindowSpec(**cfg["window"])
    fcfg = FeatureConfig(**cfg["features"])
    ds = ingest(args.input, args.role).featurize(window, fcfg)
    path = Path(args.out) / "features.bin"
    save_feature_file(path, ds.features, ds.label_columns(),
                      {"window": dataclasses.asdict(window), "features": dataclasses.asdict(fcfg)})
    n, steps, f = ds.features.shape
    print(f"samples={n} steps={steps} F={f}")


def _train_config(cfg: dict, stage: str) -> TrainConfig:
    t = cfg["train"]
    sched = LRSchedule(base_lr=t["base_lr"], warmup_lr=t["warmup_lr"], warmup_epochs=t["warmup_epochs"],
                       patience=t["patience"], decay_factor=t["decay_factor"], max_drops=t["max_drops"])
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"], schedule=sched,
                       early_stop_patience=t["early_stop_patience"], seed=derive_seed(cfg["seed"], stage))


def cmd_train(args, cfg):
    tr = _load_data(args.train, cfg, "train")
    va = _load_data(args.val, cfg, "validation")
    ncfg = _network_config(cfg)
    target = cfg["train"]["target"]
    window = WindowSpec(**tr.meta.get("window", cfg["window"]))
    fcfg = FeatureConfig(**tr.meta.get("features", tr.meta.get("feature_config", cfg["features"])))
    model = Classifier.create(ncfg, tr.features, window=window, features=fcfg, target=target,
                              seed=derive_seed(cfg["seed"], "init"))
    result = train(model, tr, va, _train_config(cfg, "train"))
    out = Path(args.out)
    model.save(out / "model.ckpt", result.optimizer, {"best_epoch": result.best_epoch, "best_val_f1": result.best_f1})
    (out / "history.csv").write_text(result.history_csv())
    print(f"best epoch {result.best_epoch} val macro F1 {result.best_f1:.4f}")


def cmd_eval(args, cfg):
    pred = _load_predictor(args.model)
    first = pred.models[0] if isinstance(pred, FusedPredictor) else pred
    ds = _load_data(args.data, cfg, "test", first.window, first.features)
    rep = evaluate(pred, ds)
    _save_report(Path(args.out), "report", rep)
    print(f"macro F1 {rep.macro_f1:.4f}")


def cmd_transfer(args, cfg):
    base = Classifier.load(args.model)[0]
    va = _load_data(args.val, cfg, "validation", base.window, base.features)
    te = _load_data(args.test, cfg, "test", base.window, base.features) if args.test else None
    t = cfg["transfer"]
    tcfg = TransferConfig(lr=t["lr"], epochs=t["epochs"], batch_size=t["batch_size"], patience=t["patience"],
                          seed=derive_seed(cfg["seed"], "transfer"))
    res = transfer_and_fuse(base, va, tcfg, te)
    out = Path(args.out)
    res.model_a.save(out / "transferA.ckpt")
    res.model_b.save(out / "transferB.ckpt")
    (out / "fused.json").write_text(json.dumps({"members": ["transferA.ckpt", "transferB.ckpt"],
                                                "rule": "mean_softmax"}, indent=2) + "\n")
    (out / "transferA_history.csv").write_text(res.history_a.history_csv())
    (out / "transferB_history.csv").write_text(res.history_b.history_csv())
    for name, rep in res.reports.items():
        _save_report(out, name, rep)
        print(f"{name} macro F1 {rep.macro_f1:.4f}")


def cmd_predict(args, cfg):
    pred = _load_predictor(args.model)
    first = pred.models[0] if isinstance(pred, FusedPredictor) else pred
    ds = _load_data(args.data, cfg, "test", first.window, first.features)
    labels = pred.predict(ds.features)
    names = first.class_names
    (Path(args.out) / "predictions.txt").write_text("".join(f"{names[i]}\n" for i in labels))
    print(f"wrote {len(labels)} predictions")


def cmd_locate(args, cfg):
    model = Classifier.load(args.model)[0]
    ds = _load_data(args.data, cfg, "test", model.window, model.features)
    decision = recognize_location_group(ds, model)
    out = Path(args.out)
    (out / "location.json").write_text(json.dumps({"group": decision.group, "counts": decision.counts()},
                                                  indent=2, sort_keys=True) + "\n")
    (out / "location_per_sample.txt").write_text("".join(f"{g}\n" for g in decision.per_sample))
    print(f"location group {decision.group}")


COMMANDS = {
    "synth": cmd_synth, "features": cmd_features, "train": cmd_train, "eval": cmd_eval,
    "transfer": cmd_transfer, "predict": cmd_predict, "locate": cmd_locate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. network.growth_rate=16")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--threads", type=int, help="BLAS threads (default 1, deterministic)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="indrnn-har", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p = sub.add_parser("features", parents=[common], help="featurize an ingestion directory")
    p.add_argument("input")
    p.add_argument("--role", default="train", choices=("train", "validation", "test"))
    p = sub.add_parser("train", parents=[common], help="train a classifier")
    p.add_argument("--train", required=True, help="feature file or data directory")
    p.add_argument("--val", required=True)
    for name, what in (("eval", "write an evaluation report"), ("predict", "write one label per sample"),
                       ("locate", "recognize the dataset's location group")):
        p = sub.add_parser(name, parents=[common], help=what)
        p.add_argument("--model", required=True, help="checkpoint (or fused.json)")
        p.add_argument("--data", required=True)
    p = sub.add_parser("transfer", parents=[common], help="fine-tune TransferA/TransferB and fuse")
    p.add_argument("--model", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args.config, args.overrides, args.seed, args.threads)
        out = Path(args.out)
        _write_provenance(out, cfg, args.command)
        with threadpool_limits(limits=int(cfg["threads"])):
            COMMANDS[args.command](args, cfg)
    except HarError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
