"""Stacked LSTM blocks mapped onto cross-point tiles, plus a softmax head.

All trainable parameters of one block live in a single 4m x (inputs + m + 1)
tile; one tile read per time step yields the four gate pre-activations in
the fixed slice order [forget; input; output; candidate]. The block input is
the concatenation [x_t; h_prev; 1], the trailing 1 feeding the bias column.
Gate nonlinearities, the cell recursion, dropout, the softmax head and the
backpropagation-through-time recursion are computed digitally in float64
outside the tiles.

Dropout is non-recurrent only: masks are resampled every time step on each
block input and on the head input, never on the h recurrence, and survivors
are scaled by 1/(1-p) so the mask has unit mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from rpulstm.device import RpuConfig, sample_device_array
from rpulstm.tile import AnalogTile

_EMPTY = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class LstmShape:
    """Network topology: input width n, hidden width m, stacked depth,
    vocabulary (output classes)."""

    n: int
    m: int
    depth: int
    vocab: int

    def __post_init__(self) -> None:
        for name in ("n", "m", "depth", "vocab"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")

    def tile_shapes(self) -> list[tuple[int, int]]:
        """(rows, cols) per tile: first block 4m x (n+m+1), deeper blocks
        4m x (m+m+1), head vocab x (m+1)."""
        shapes = [(4 * self.m, self.n + self.m + 1)]
        shapes += [(4 * self.m, 2 * self.m + 1)] * (self.depth - 1)
        shapes.append((self.vocab, self.m + 1))
        return shapes


@dataclass
class HiddenState:
    """Per-block hidden and cell vectors carried between time steps."""

    h: list[np.ndarray]
    c: list[np.ndarray]

    @classmethod
    def zeros(cls, shape: LstmShape) -> "HiddenState":
        return cls(
            h=[np.zeros(shape.m) for _ in range(shape.depth)],
            c=[np.zeros(shape.m) for _ in range(shape.depth)],
        )

    def copy(self) -> "HiddenState":
        return HiddenState([v.copy() for v in self.h], [v.copy() for v in self.c])


@dataclass
class BlockCache:
    """Forward-pass values of one block at one time step, kept for BPTT."""

    x_tilde: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def concat_input(x, h_prev) -> np.ndarray:
    """Tile input [x; h_prev; 1]; the trailing component is the bias input."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.size + h_prev.size == 0:
        raise ValueError("concat_input needs at least one non-empty part")
    out = np.empty(x.size + h_prev.size + 1)
    out[: x.size] = x
    out[x.size : -1] = h_prev
    out[-1] = 1.0
    return out


def lstm_step_forward(tile: AnalogTile, x_tilde, c_prev):
    """One block step: gates from a single tile read, then the cell update.

    Returns (h, c, cache). f, i, o are sigmoids of the first three row
    slices, g the tanh of the last; c = f*c_prev + i*g, h = o*tanh(c).
    """
    c_prev = np.asarray(c_prev, dtype=np.float64)
    y = tile.forward(x_tilde)
    m = c_prev.size
    if y.shape != (4 * m,):
        raise ValueError(f"tile produced {y.shape}, expected ({4 * m},)")
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite gate pre-activations")
    gates = expit(y[: 3 * m])  # f, i, o slices share one sigmoid call
    f = gates[:m]
    i = gates[m : 2 * m]
    o = gates[2 * m :]
    g = np.tanh(y[3 * m :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = BlockCache(np.asarray(x_tilde, dtype=np.float64), f, i, o, g, c_prev, c, tanh_c)
    return h, c, cache


def lstm_step_backward(tile: AnalogTile, cache: BlockCache, dh, dc_in):
    """Backward through one block step.

    dh/dc_in are the incoming derivatives w.r.t. h_t and c_t (the chain is
    linear in them, so a negated seed yields negated outputs throughout).
    Returns (delta, dx, dh_prev, dc_prev) where delta is the derivative
    w.r.t. the gate pre-activations in tile row order [f; i; o; g] — the
    row vector of the subsequent rank-1 weight update — and dx/dh_prev are
    the splits of the tile-transpose read, the bias component dropped.
    """
    if cache is None:
        raise ValueError("missing forward cache for backward step")
    dh = np.asarray(dh, dtype=np.float64)
    dc_in = np.asarray(dc_in, dtype=np.float64)
    do = dh * cache.tanh_c * cache.o * (1.0 - cache.o)
    dc = dc_in + dh * cache.o * (1.0 - cache.tanh_c * cache.tanh_c)
    df = dc * cache.c_prev * cache.f * (1.0 - cache.f)
    di = dc * cache.g * cache.i * (1.0 - cache.i)
    dg = dc * cache.i * (1.0 - cache.g * cache.g)
    delta = np.concatenate([df, di, do, dg])
    z = tile.backward(delta)
    m = dh.size
    n_in = z.size - m - 1
    dx = z[:n_in]
    dh_prev = z[n_in:-1]
    dc_prev = dc * cache.f
    return delta, dx, dh_prev, dc_prev


def sample_dropout_mask(length: int, p: float, rng) -> np.ndarray:
    """Dropout mask: 0 with probability p, else 1/(1-p) (unit mean).

    p == 0 returns ones without consuming the generator. Evaluation-mode
    passes skip masking entirely (callers only sample during training).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(length)
    keep = rng.random(length) >= p
    return keep / (1.0 - p)


def softmax_xent(logits, target_index: int):
    """Cross-entropy in nats against a one-hot target.

    Returns (loss, dlogits) with dlogits = softmax(logits) - onehot(target).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    if not 0 <= target_index < logits.size:
        raise IndexError(f"target index {target_index} outside [0, {logits.size})")
    z = logits - logits.max()
    e = np.exp(z)
    total = e.sum()
    loss = float(np.log(total) - z[target_index])
    dlogits = e / total
    dlogits[target_index] -= 1.0
    return loss, dlogits


class LstmNetwork:
    """depth stacked LSTM blocks plus a linear softmax head, one tile each.

    Single-writer during training. All tiles share one mode ("analog" or
    "fp"); the dropout generator is owned by the network, each tile owns its
    read/update generator.
    """

    def __init__(self, shape: LstmShape, tiles: list[AnalogTile], dropout_rng):
        expected = shape.tile_shapes()
        got = [(t.rows, t.cols) for t in tiles]
        if got != expected:
            raise ValueError(f"tile shapes {got} do not match topology {expected}")
        self.shape = shape
        self.block_tiles = tiles[:-1]
        self.head_tile = tiles[-1]
        self.dropout_rng = dropout_rng

    @property
    def tiles(self) -> list[AnalogTile]:
        return [*self.block_tiles, self.head_tile]

    @property
    def mode(self) -> str:
        return self.head_tile.mode

    @classmethod
    def build(cls, shape: LstmShape, mode: str, cfg: RpuConfig, seed_seq) -> "LstmNetwork":
        """Construct and initialize a network from a seed tree.

        Child-seed order is fixed: weight init, dropout, then one (devices,
        stream) pair per tile. Block weights start uniform on
        [-1/sqrt(fan_in), 1/sqrt(fan_in)] (clipped to device bounds in
        analog mode); the head starts at zero so an untrained network emits
        uniform class probabilities.
        """
        tile_shapes = shape.tile_shapes()
        children = seed_seq.spawn(2 + 2 * len(tile_shapes))
        init_rng = np.random.default_rng(children[0])
        dropout_rng = np.random.default_rng(children[1])
        tiles = []
        for k, (rows, cols) in enumerate(tile_shapes):
            head = k == len(tile_shapes) - 1
            if head:
                w = np.zeros((rows, cols))
            else:
                bound = 1.0 / np.sqrt(cols)
                w = init_rng.uniform(-bound, bound, size=(rows, cols))
            if mode == "analog":
                devices = sample_device_array(rows, cols, cfg, children[2 + 2 * k])
                rng = np.random.default_rng(children[3 + 2 * k])
                tiles.append(AnalogTile(w, "analog", cfg, devices, rng))
            else:
                tiles.append(AnalogTile(w, "fp"))
        return cls(shape, tiles, dropout_rng)

    def clone_for_eval(self, seed_seq, cfg: RpuConfig | None = None) -> "LstmNetwork":
        """Frozen copy for evaluation: same weights, shared devices, fresh
        tile generators from seed_seq (fp networks are returned as copies
        without generators)."""
        if self.mode == "fp":
            tiles = [t.clone() for t in self.tiles]
        else:
            children = seed_seq.spawn(len(self.tiles))
            tiles = [
                t.clone(rng=np.random.default_rng(ch), cfg=cfg)
                for t, ch in zip(self.tiles, children)
            ]
        return LstmNetwork(self.shape, tiles, dropout_rng=None)


def window_pass(net: LstmNetwork, inputs, targets, hidden: HiddenState,
                train: bool, lr: float = 0.0, dropout_p: float = 0.0):
    """Run one truncated-BPTT window of the character model.

    inputs/targets: equal-length index sequences (targets are inputs shifted
    by one). Forward always; when train is true, a full backward sweep from
    the last step to the first accumulates the (dh, dc) chains, then the
    update series runs in reverse time order — head tile first, then blocks
    top-down within each step. Analog tiles take one stochastic pulse update
    per (x_tilde, delta) pair; fp tiles accumulate the outer products over
    the window and apply the sum once. The tiles receive error signals
    (negative loss gradients), so adding lr * outer(delta, x) descends.
    lr == 0 skips the update phase.

    Returns (summed loss over the window, carried hidden state).
    """
    inputs = np.asarray(inputs, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if inputs.shape != targets.shape or inputs.ndim != 1 or inputs.size == 0:
        raise ValueError("inputs and targets must be equal-length non-empty sequences")
    shape = net.shape
    depth, m, vocab = shape.depth, shape.m, shape.vocab

    h = [v.copy() for v in hidden.h]
    c = [v.copy() for v in hidden.c]
    steps = []  # per step: (block caches, block masks, head x_tilde, head mask, dlogits)
    loss_sum = 0.0

    for t in range(inputs.size):
        x_vec = np.zeros(vocab)
        x_vec[inputs[t]] = 1.0
        inp = x_vec
        caches = []
        masks = []
        for layer, tile in enumerate(net.block_tiles):
            if train and dropout_p > 0.0:
                mask = sample_dropout_mask(inp.size, dropout_p, net.dropout_rng)
                inp = inp * mask
            else:
                mask = None
            x_tilde = concat_input(inp, h[layer])
            h[layer], c[layer], cache = lstm_step_forward(tile, x_tilde, c[layer])
            caches.append(cache)
            masks.append(mask)
            inp = h[layer]
        if train and dropout_p > 0.0:
            head_mask = sample_dropout_mask(m, dropout_p, net.dropout_rng)
            inp = inp * head_mask
        else:
            head_mask = None
        x_head = concat_input(inp, _EMPTY)
        logits = net.head_tile.forward(x_head)
        loss, dlogits = softmax_xent(logits, int(targets[t]))
        loss_sum += loss
        if train:
            steps.append((caches, masks, x_head, head_mask, dlogits))

    hidden_out = HiddenState(h, c)
    if not train:
        return loss_sum, hidden_out

    # Backward sweep (error-signal convention: seeds are negated gradients).
    carry_dh = [np.zeros(m) for _ in range(depth)]
    carry_dc = [np.zeros(m) for _ in range(depth)]
    block_deltas = [[None] * depth for _ in range(inputs.size)]
    head_deltas = [None] * inputs.size
    for t in reversed(range(inputs.size)):
        caches, masks, x_head, head_mask, dlogits = steps[t]
        e_out = -dlogits
        head_deltas[t] = e_out
        z = net.head_tile.backward(e_out)
        dh_above = z[:m] if head_mask is None else head_mask * z[:m]
        for layer in reversed(range(depth)):
            dh = carry_dh[layer] + dh_above
            delta, dx, dh_prev, dc_prev = lstm_step_backward(
                net.block_tiles[layer], caches[layer], dh, carry_dc[layer]
            )
            block_deltas[t][layer] = delta
            carry_dh[layer] = dh_prev
            carry_dc[layer] = dc_prev
            if layer > 0:
                dh_above = dx if masks[layer] is None else masks[layer] * dx

    if lr == 0.0:
        return loss_sum, hidden_out

    if net.mode == "analog":
        for t in reversed(range(inputs.size)):
            net.head_tile.stochastic_update(steps[t][2], head_deltas[t], lr)
            for layer in reversed(range(depth)):
                net.block_tiles[layer].stochastic_update(
                    steps[t][0][layer].x_tilde, block_deltas[t][layer], lr
                )
    else:
        # one stacked matmul per tile instead of bptt rank-1 outers
        delta_stack = np.array(head_deltas)
        x_stack = np.array([s[2] for s in steps])
        net.head_tile.fp_apply_delta(delta_stack.T @ x_stack, lr)
        for layer, tile in enumerate(net.block_tiles):
            delta_stack = np.array([block_deltas[t][layer] for t in range(inputs.size)])
            x_stack = np.array([steps[t][0][layer].x_tilde for t in range(inputs.size)])
            tile.fp_apply_delta(delta_stack.T @ x_stack, lr)

    return loss_sum, hidden_out
