"""Corpus handling and the sequential SGD training loop.

Training is plain SGD with mini-batch one, a fixed learning rate and
truncated backpropagation through 100-step windows. This is not a
simplification of convenience: the arrays apply rank-1 outer-product
updates in place in constant time, while any history-dependent optimizer
(momentum, RMSProp, Adagrad, ...) needs the gradient read out first and a
per-weight state applied column-serially, which forfeits the parallel
update. The fp mode uses the same loop so it is a like-for-like baseline.

Hidden state carries across consecutive windows within an epoch and is
zeroed at epoch boundaries and at the start of the test stream.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from rpulstm import checkpoint as ckpt
from rpulstm.device import RpuConfig
from rpulstm.lstm import HiddenState, LstmNetwork, LstmShape, window_pass

MODES = ("fp", "analog")

_SEED_MASK = (1 << 64) - 1
_EVAL_TAG = 0x45564131  # distinguishes evaluation seed material from training


@dataclass(frozen=True)
class Corpus:
    """Character stream with vocabulary and a trailing train/test split."""

    text: str
    vocab: tuple[str, ...]
    train_range: tuple[int, int]
    test_range: tuple[int, int]
    encoded: np.ndarray

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


def load_corpus(path, test_chars: int) -> Corpus:
    """Read a UTF-8 text file; the last test_chars characters are the test
    range, everything before is the train range. The vocabulary covers the
    whole file in order of first appearance."""
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        raise ValueError(f"corpus file {path} is empty")
    if not 1 <= test_chars < len(text):
        raise ValueError(
            f"test_chars must be in [1, {len(text) - 1}] for this corpus, got {test_chars}"
        )
    vocab = tuple(dict.fromkeys(text))
    index = {ch: k for k, ch in enumerate(vocab)}
    encoded = np.fromiter((index[ch] for ch in text), dtype=np.int64, count=len(text))
    split = len(text) - test_chars
    return Corpus(
        text=text,
        vocab=vocab,
        train_range=(0, split),
        test_range=(split, len(text)),
        encoded=encoded,
    )


def windows(corpus: Corpus, index_range: tuple[int, int], bptt: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Consecutive non-overlapping bptt-length (inputs, targets) windows.

    Targets are inputs shifted by one; a trailing window without a full
    target is dropped, so a range of bptt characters yields nothing.
    """
    start, end = index_range
    if not 0 <= start <= end <= len(corpus.encoded):
        raise ValueError(f"range {index_range} outside corpus of {len(corpus.encoded)} chars")
    if bptt < 1:
        raise ValueError(f"bptt must be >= 1, got {bptt}")
    for k in range((end - start - 1) // bptt):
        s = start + k * bptt
        yield corpus.encoded[s : s + bptt], corpus.encoded[s + 1 : s + bptt + 1]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings: fixed-rate SGD, mini-batch one, bptt 100.

    lr == 0 disables weight updates (useful for loss probes). In analog
    mode, evaluation reads the arrays with output noise active — the
    realistic hardware readout; eval_analog_noise=False turns it off for
    debugging.
    """

    lr: float = 0.01
    dropout_p: float = 0.0
    bptt: int = 100
    epochs: int = 1
    seed: int = 0
    mode: str = "analog"
    eval_analog_noise: bool = True

    def __post_init__(self) -> None:
        if not (self.lr >= 0.0 and math.isfinite(self.lr)):
            raise ValueError(f"lr must be >= 0 and finite, got {self.lr}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.bptt < 1 or int(self.bptt) != self.bptt:
            raise ValueError(f"bptt must be a positive integer, got {self.bptt}")
        if self.epochs < 1 or int(self.epochs) != self.epochs:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if int(self.seed) != self.seed:
            raise ValueError(f"seed must be an integer, got {self.seed}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


class EpochSummary(NamedTuple):
    epoch: int
    windows_seen: int
    train_loss: float
    test_loss: float
    wall_seconds: float


class MetricsCsv:
    """Append-only metrics sink, one flushed row per evaluation point."""

    HEADER = "epoch,windows_seen,train_loss_nats,test_loss_nats,wall_seconds"

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        new_file = not (append and self.path.exists())
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8")
        if new_file:
            self._fh.write(self.HEADER + "\n")
            self._fh.flush()

    def write(self, row: EpochSummary) -> None:
        self._fh.write(
            f"{row.epoch},{row.windows_seen},{row.train_loss!r},"
            f"{row.test_loss!r},{row.wall_seconds:.3f}\n"
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def evaluate(network: LstmNetwork, corpus: Corpus, cfg: TrainConfig,
             epoch: int = 0, windows_seen: int = 0) -> float:
    """Mean test loss in nats per character, forward-only with dropout off.

    Analog evaluation runs on a frozen clone whose read noise is seeded by
    (cfg.seed, epoch, windows_seen), so re-evaluating the same checkpoint
    reproduces the same loss while distinct evaluation points draw
    independent noise. fp evaluation is exact and needs no cloning.
    """
    if network.mode == "analog":
        ss = np.random.SeedSequence(
            [cfg.seed & _SEED_MASK, _EVAL_TAG, epoch & _SEED_MASK, windows_seen & _SEED_MASK]
        )
        eval_cfg = None
        if not cfg.eval_analog_noise:
            eval_cfg = replace(network.tiles[0].cfg, noise_sigma=0.0)
        net = network.clone_for_eval(ss, cfg=eval_cfg)
    else:
        net = network
    hidden = HiddenState.zeros(net.shape)
    total = 0.0
    chars = 0
    for inputs, targets in windows(corpus, corpus.test_range, cfg.bptt):
        loss, hidden = window_pass(net, inputs, targets, hidden, train=False)
        total += loss
        chars += inputs.size
    if chars == 0:
        raise ValueError("test range holds no full bptt window")
    return total / chars


def build_network(vocab_size: int, hidden: int, depth: int, cfg: TrainConfig,
                  rpu_cfg: RpuConfig) -> LstmNetwork:
    """Network for a character model: input and output width = vocab size.

    The seed tree is rooted at cfg.seed; see LstmNetwork.build for the
    child order.
    """
    shape = LstmShape(n=vocab_size, m=hidden, depth=depth, vocab=vocab_size)
    master = np.random.SeedSequence(cfg.seed & _SEED_MASK)
    return LstmNetwork.build(shape, cfg.mode, rpu_cfg, master)


class Trainer:
    """Strictly sequential training loop over one corpus.

    Evaluation happens at every epoch end and its loss is recorded next to
    the epoch's running-mean train loss. (config, seed, corpus) determine
    every metric value; wall_seconds is measured and therefore the one
    non-reproducible column.
    """

    def __init__(self, network: LstmNetwork, corpus: Corpus, cfg: TrainConfig,
                 rpu_cfg: RpuConfig, epoch: int = 0, windows_seen: int = 0,
                 wall_seconds: float = 0.0):
        if network.shape.vocab != corpus.vocab_size:
            raise ValueError(
                f"network vocab {network.shape.vocab} != corpus vocab {corpus.vocab_size}"
            )
        self.network = network
        self.corpus = corpus
        self.cfg = cfg
        self.rpu_cfg = rpu_cfg
        self.epoch = epoch
        self.windows_seen = windows_seen
        self._wall_base = wall_seconds
        self._t0 = time.monotonic()

    @classmethod
    def build(cls, corpus: Corpus, hidden: int, depth: int, cfg: TrainConfig,
              rpu_cfg: RpuConfig) -> "Trainer":
        network = build_network(corpus.vocab_size, hidden, depth, cfg, rpu_cfg)
        return cls(network, corpus, cfg, rpu_cfg)

    @property
    def wall_seconds(self) -> float:
        return self._wall_base + (time.monotonic() - self._t0)

    def train_epoch(self, metrics: MetricsCsv | None = None) -> EpochSummary:
        """One pass over all training windows, then an evaluation point."""
        cfg = self.cfg
        hidden = HiddenState.zeros(self.network.shape)
        loss_total = 0.0
        chars = 0
        for inputs, targets in windows(self.corpus, self.corpus.train_range, cfg.bptt):
            loss, hidden = window_pass(
                self.network, inputs, targets, hidden,
                train=True, lr=cfg.lr, dropout_p=cfg.dropout_p,
            )
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {self.epoch + 1}, "
                    f"window {self.windows_seen + 1} (diverged; lower the learning rate?)"
                )
            loss_total += loss
            chars += inputs.size
            self.windows_seen += 1
        if chars == 0:
            raise ValueError("train range holds no full bptt window")
        self.epoch += 1
        summary = EpochSummary(
            epoch=self.epoch,
            windows_seen=self.windows_seen,
            train_loss=loss_total / chars,
            test_loss=self.evaluate(),
            wall_seconds=self.wall_seconds,
        )
        if metrics is not None:
            metrics.write(summary)
        return summary

    def evaluate(self) -> float:
        return evaluate(
            self.network, self.corpus, self.cfg,
            epoch=self.epoch, windows_seen=self.windows_seen,
        )

    # ------------------------------------------------------------------
    # persistence

    def state_dict(self) -> dict:
        # wall time lives only in the metrics CSV: keeping it out of the
        # checkpoint makes same-seed runs produce byte-identical files
        return {
            "epoch": self.epoch,
            "windows_seen": self.windows_seen,
            "training": dataclasses.asdict(self.cfg),
            "vocab": list(self.corpus.vocab),
        }

    def save(self, path) -> None:
        ckpt.save_checkpoint(self.network, self.state_dict(), path)

    @classmethod
    def resume(cls, path, corpus: Corpus) -> "Trainer":
        """Rebuild a trainer from a checkpoint; the corpus must match the
        stored vocabulary exactly."""
        network, state = ckpt.load_checkpoint(path)
        if list(corpus.vocab) != state["vocab"]:
            raise ckpt.CheckpointError("corpus vocabulary does not match checkpoint")
        cfg = TrainConfig(**state["training"])
        rpu_cfg = network.tiles[0].cfg if network.mode == "analog" else RpuConfig()
        return cls(
            network, corpus, cfg, rpu_cfg,
            epoch=state["epoch"],
            windows_seen=state["windows_seen"],
        )


def lr_sweep(corpus: Corpus, hidden: int, depth: int, cfg: TrainConfig,
             rpu_cfg: RpuConfig, rates=(0.3, 0.1, 0.03, 0.01), epochs: int = 1):
    """Short log-spaced learning-rate sweep for desk-scale runs.

    Trains a fresh network per rate for `epochs` epochs and returns
    [(lr, final test loss)] sorted by loss (diverged rates sort last with
    loss = inf).
    """
    results = []
    for lr in rates:
        sweep_cfg = replace(cfg, lr=lr, epochs=epochs)
        trainer = Trainer.build(corpus, hidden, depth, sweep_cfg, rpu_cfg)
        try:
            for _ in range(epochs):
                summary = trainer.train_epoch()
            results.append((lr, summary.test_loss))
        except RuntimeError:
            results.append((lr, math.inf))
    return sorted(results, key=lambda item: item[1])
