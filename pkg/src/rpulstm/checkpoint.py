"""Single-file binary checkpoints.

Layout:
    8 bytes   magic "RPULSTM1"
    4 bytes   little-endian uint32, JSON header length
    N bytes   UTF-8 JSON header
    M bytes   raw array payload: little-endian float64, C order, arrays in
              the order declared by header["tiles"] (per tile: w, then for
              analog tiles dw_plus, dw_minus, w_max, w_min)
    4 bytes   little-endian uint32 CRC-32 of everything between the magic
              and the CRC (header length, header, payload)

The header carries the schema version, mode, topology, full training and
device configuration, the vocabulary, the epoch counters and every
generator state, so a load -> save round trip reproduces the file byte for
byte and resumed training continues the exact run.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import zlib

import numpy as np

from rpulstm.device import DeviceArray, RpuConfig
from rpulstm.lstm import LstmNetwork, LstmShape
from rpulstm.tile import AnalogTile

MAGIC = b"RPULSTM1"
VERSION = 1

_ANALOG_ARRAYS = ("w", "dw_plus", "dw_minus", "w_max", "w_min")
_FP_ARRAYS = ("w",)


class CheckpointError(ValueError):
    """Malformed, corrupt or incompatible checkpoint file."""


def _rng_state(rng) -> dict:
    return rng.bit_generator.state


def _restore_rng(state: dict):
    rng = np.random.default_rng()
    if rng.bit_generator.state["bit_generator"] != state.get("bit_generator"):
        bit_gen = getattr(np.random, state.get("bit_generator", ""), None)
        if bit_gen is None:
            raise CheckpointError(f"unknown bit generator {state.get('bit_generator')!r}")
        rng = np.random.Generator(bit_gen())
    rng.bit_generator.state = state
    return rng


def _tile_arrays(tile: AnalogTile) -> list[np.ndarray]:
    if tile.mode == "analog":
        d = tile.devices
        return [tile.w, d.dw_plus, d.dw_minus, d.w_max, d.w_min]
    return [tile.w]


def save_checkpoint(network: LstmNetwork, state: dict, path) -> None:
    """Write the network plus trainer state to path.

    state is a JSON-compatible dict (epoch, windows_seen, wall_seconds,
    training/device config, ...); it is stored verbatim under "trainer".
    """
    shape = network.shape
    arrays = _ANALOG_ARRAYS if network.mode == "analog" else _FP_ARRAYS
    header = {
        "version": VERSION,
        "mode": network.mode,
        "shape": {"n": shape.n, "m": shape.m, "depth": shape.depth, "vocab": shape.vocab},
        "tiles": [
            {"rows": t.rows, "cols": t.cols, "arrays": list(arrays)}
            for t in network.tiles
        ],
        "rng": {
            "dropout": _rng_state(network.dropout_rng) if network.dropout_rng is not None else None,
            "tiles": [
                _rng_state(t.rng) if t.mode == "analog" else None for t in network.tiles
            ],
        },
        "rpu": dataclasses.asdict(network.tiles[0].cfg) if network.mode == "analog" else None,
        "trainer": state,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for tile in network.tiles
        for arr in _tile_arrays(tile)
    )
    body = struct.pack("<I", len(header_bytes)) + header_bytes + payload
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(body)
        fh.write(struct.pack("<I", crc))


def load_checkpoint(path) -> tuple[LstmNetwork, dict]:
    """Read a checkpoint; returns (network, trainer state dict).

    Raises CheckpointError on bad magic, version mismatch, checksum failure
    or any shape inconsistency between header and payload.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, crc_bytes = blob[len(MAGIC) : -4], blob[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise CheckpointError("checksum mismatch (corrupt checkpoint)")
    (header_len,) = struct.unpack("<I", body[:4])
    if len(body) < 4 + header_len:
        raise CheckpointError("truncated header")
    try:
        header = json.loads(body[4 : 4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(
            f"checkpoint version {header.get('version')} not supported (expected {VERSION})"
        )

    payload = body[4 + header_len :]
    mode = header["mode"]
    shape = LstmShape(**header["shape"])
    rpu_cfg = RpuConfig(**header["rpu"]) if header.get("rpu") else None
    rng_states = header["rng"]

    offset = 0
    tiles = []
    for k, spec in enumerate(header["tiles"]):
        rows, cols = spec["rows"], spec["cols"]
        count = rows * cols
        arrays = {}
        for name in spec["arrays"]:
            nbytes = count * 8
            if offset + nbytes > len(payload):
                raise CheckpointError("payload shorter than declared arrays")
            arrays[name] = (
                np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
                .reshape(rows, cols)
                .astype(np.float64)
            )
            offset += nbytes
        if mode == "analog":
            if set(arrays) != set(_ANALOG_ARRAYS):
                raise CheckpointError(f"tile {k} is missing device arrays")
            devices = DeviceArray(
                rows=rows,
                cols=cols,
                dw_plus=arrays["dw_plus"],
                dw_minus=arrays["dw_minus"],
                w_max=arrays["w_max"],
                w_min=arrays["w_min"],
            )
            rng = _restore_rng(rng_states["tiles"][k])
            tiles.append(AnalogTile(arrays["w"], "analog", rpu_cfg, devices, rng))
        else:
            tiles.append(AnalogTile(arrays["w"], "fp"))
    if offset != len(payload):
        raise CheckpointError("payload longer than declared arrays")

    dropout_rng = (
        _restore_rng(rng_states["dropout"]) if rng_states.get("dropout") is not None else None
    )
    try:
        network = LstmNetwork(shape, tiles, dropout_rng)
    except ValueError as exc:
        raise CheckpointError(f"tile shapes do not match topology: {exc}") from exc
    return network, header["trainer"]
