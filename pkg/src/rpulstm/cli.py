"""Command-line front end: train, eval, throughput, dump-config.

Configuration is a JSON document with sections model / training / rpu /
data / output; every field has a default equal to the hardware baseline
where one exists, unknown keys are rejected by name. Precedence, lowest to
highest: built-in defaults, config file, --preset, explicit flags/--set.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from rpulstm.checkpoint import CheckpointError, load_checkpoint
from rpulstm.device import PRESETS, RpuConfig
from rpulstm.lstm import LstmShape
from rpulstm.perf import DEFAULT_T_MEAS, TileInventory, throughput
from rpulstm.training import (
    MetricsCsv,
    TrainConfig,
    Trainer,
    evaluate,
    load_corpus,
)


class ConfigError(ValueError):
    """Invalid configuration document or flag."""


@dataclass(frozen=True)
class ModelConfig:
    depth: int = 1
    hidden: int = 64
    name: str = ""

    def __post_init__(self) -> None:
        for name in ("depth", "hidden"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.name, str):
            raise ValueError(f"name must be a string, got {self.name!r}")


@dataclass(frozen=True)
class DataConfig:
    path: str = ""
    test_chars: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.path, str):
            raise ValueError(f"path must be a string, got {self.path!r}")
        if isinstance(self.test_chars, bool) or not isinstance(self.test_chars, int) or self.test_chars < 0:
            raise ValueError(f"test_chars must be a non-negative integer, got {self.test_chars!r}")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"

    def __post_init__(self) -> None:
        if not isinstance(self.dir, str) or not self.dir:
            raise ValueError(f"dir must be a non-empty string, got {self.dir!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    rpu: RpuConfig = field(default_factory=RpuConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return {
            "model": dataclasses.asdict(self.model),
            "training": dataclasses.asdict(self.training),
            "rpu": dataclasses.asdict(self.rpu),
            "data": dataclasses.asdict(self.data),
            "output": dataclasses.asdict(self.output),
        }


_SECTIONS = {
    "model": ModelConfig,
    "training": TrainConfig,
    "rpu": RpuConfig,
    "data": DataConfig,
    "output": OutputConfig,
}


def _build_section(name: str, cls, mapping: dict):
    known = {f.name for f in fields(cls)}
    for key in mapping:
        if key not in known:
            raise ConfigError(f"unknown config key '{name}.{key}'")
    try:
        return cls(**mapping)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid value in section '{name}': {exc}") from exc


def parse_config(path=None, preset: str | None = None,
                 overrides: dict | None = None) -> ExperimentConfig:
    """Resolve an ExperimentConfig from a JSON file plus overrides.

    `overrides` is a nested {section: {key: value}} mapping (already typed);
    it wins over the preset, which wins over the file.
    """
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    for key, value in doc.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key '{key}'")
        if not isinstance(value, dict):
            raise ConfigError(f"config section '{key}' must be an object")

    merged = {name: dict(doc.get(name, {})) for name in _SECTIONS}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        merged["rpu"].update(PRESETS[preset])
    for name, section_overrides in (overrides or {}).items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown config key '{name}'")
        merged[name].update(section_overrides)

    built = {name: _build_section(name, cls, merged[name]) for name, cls in _SECTIONS.items()}
    return ExperimentConfig(**built)


# ----------------------------------------------------------------------
# commands

def _require_data(cfg: ExperimentConfig) -> tuple[str, int]:
    if not cfg.data.path:
        raise ConfigError("no corpus: set data.path (or --data)")
    if cfg.data.test_chars < 1:
        raise ConfigError("data.test_chars must be >= 1 (or pass --test-chars)")
    return cfg.data.path, cfg.data.test_chars


def cmd_train(cfg: ExperimentConfig, resume: str | None) -> int:
    path, test_chars = _require_data(cfg)
    corpus = load_corpus(path, test_chars)
    outdir = Path(cfg.output.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if resume is not None:
        trainer = Trainer.resume(resume, corpus)
        # training settings come from the checkpoint; only the epoch target
        # is taken from the current invocation
        trainer.cfg = dataclasses.replace(trainer.cfg, epochs=cfg.training.epochs)
        metrics = MetricsCsv(outdir / "metrics.csv", append=True)
        print(f"resumed from {resume} at epoch {trainer.epoch}", flush=True)
    else:
        trainer = Trainer.build(corpus, cfg.model.hidden, cfg.model.depth,
                                cfg.training, cfg.rpu)
        metrics = MetricsCsv(outdir / "metrics.csv")
    with metrics:
        while trainer.epoch < cfg.training.epochs:
            summary = trainer.train_epoch(metrics)
            ckpt_path = outdir / f"checkpoint-epoch{summary.epoch:03d}.bin"
            trainer.save(ckpt_path)
            print(
                f"epoch {summary.epoch}: train {summary.train_loss:.4f} "
                f"test {summary.test_loss:.4f} nats/char "
                f"({summary.wall_seconds:.1f}s) -> {ckpt_path.name}",
                flush=True,
            )
    return 0


def cmd_eval(cfg: ExperimentConfig, checkpoint_path: str) -> int:
    network, state = load_checkpoint(checkpoint_path)
    path, test_chars = _require_data(cfg)
    corpus = load_corpus(path, test_chars)
    if list(corpus.vocab) != state["vocab"]:
        raise CheckpointError("corpus vocabulary does not match checkpoint")
    train_cfg = TrainConfig(**state["training"])
    loss = evaluate(network, corpus, train_cfg,
                    epoch=state["epoch"], windows_seen=state["windows_seen"])
    print(json.dumps({
        "checkpoint": str(checkpoint_path),
        "epoch": state["epoch"],
        "windows_seen": state["windows_seen"],
        "test_loss_nats": loss,
    }))
    return 0


def cmd_throughput(cfg: ExperimentConfig, vocab: int | None, t_meas: float) -> int:
    if vocab is None:
        if not cfg.data.path:
            raise ConfigError("throughput needs --vocab or a data.path to read the vocabulary from")
        vocab = load_corpus(cfg.data.path, max(1, cfg.data.test_chars)).vocab_size
    shape = LstmShape(n=vocab, m=cfg.model.hidden, depth=cfg.model.depth, vocab=vocab)
    inventory = TileInventory.from_shape(shape, t_meas)
    ops = throughput(inventory.total_devices, inventory.t_meas)
    print(json.dumps({
        "tiles": [list(t) for t in inventory.tiles],
        "total_devices": inventory.total_devices,
        "t_meas_seconds": inventory.t_meas,
        "ops_per_second": ops,
        "tera_ops_per_second": ops / 1e12,
    }))
    return 0


def cmd_dump_config(cfg: ExperimentConfig) -> int:
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


# ----------------------------------------------------------------------
# argument parsing

def _parse_set(items: list[str]) -> dict:
    overrides: dict = {}
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides.setdefault(section, {})[key] = value
    return overrides


_SHORTCUTS = (
    # (flag, section, key, type)
    ("--seed", "training", "seed", int),
    ("--lr", "training", "lr", float),
    ("--epochs", "training", "epochs", int),
    ("--mode", "training", "mode", str),
    ("--bptt", "training", "bptt", int),
    ("--dropout", "training", "dropout_p", float),
    ("--hidden", "model", "hidden", int),
    ("--depth", "model", "depth", int),
    ("--data", "data", "path", str),
    ("--test-chars", "data", "test_chars", int),
    ("--out", "output", "dir", str),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="JSON experiment config")
    parser.add_argument("--preset", metavar="NAME",
                        help=f"device ablation preset: {', '.join(sorted(PRESETS))}")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config value (JSON-parsed); repeatable")
    for flag, _, _, kind in _SHORTCUTS:
        parser.add_argument(flag, type=kind, default=None)


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    overrides = _parse_set(args.set)
    for flag, section, key, _ in _SHORTCUTS:
        value = getattr(args, flag.lstrip("-").replace("-", "_"))
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    return parse_config(args.config, preset=args.preset, overrides=overrides)


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rpulstm",
        description="Character-level LSTM training on simulated resistive cross-point arrays",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model, writing metrics and checkpoints")
    _add_config_flags(p_train)
    p_train.add_argument("--resume", metavar="CHECKPOINT",
                         help="continue a previous run from a checkpoint file")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test range")
    _add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True, metavar="FILE")

    p_tp = sub.add_parser("throughput", help="device count and parallel-throughput estimate")
    _add_config_flags(p_tp)
    p_tp.add_argument("--vocab", type=int, default=None,
                      help="vocabulary size (otherwise read from data.path)")
    p_tp.add_argument("--t-meas", type=float, default=DEFAULT_T_MEAS,
                      help="array cycle time in seconds")

    p_dump = sub.add_parser("dump-config", help="print the fully resolved config")
    _add_config_flags(p_dump)

    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "train":
            return cmd_train(cfg, args.resume)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if args.command == "throughput":
            return cmd_throughput(cfg, args.vocab, args.t_meas)
        return cmd_dump_config(cfg)
    except (ConfigError, CheckpointError, ValueError, OSError, RuntimeError) as exc:
        print(f"rpulstm: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
