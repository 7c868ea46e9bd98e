"""Array inventory and the parallel-throughput estimate.

Every device in a cross-point array performs one multiplication and one
summation per measurement cycle, and all devices of all arrays work at once
in a fully pipelined design — hence throughput = 2 * device count / t_meas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from rpulstm.lstm import LstmShape

DEFAULT_T_MEAS = 80e-9  # seconds per array measurement cycle


@dataclass(frozen=True)
class TileInventory:
    """Sizes of the arrays making up one network, plus the cycle time."""

    tiles: tuple[tuple[int, int], ...]
    t_meas: float = DEFAULT_T_MEAS

    def __post_init__(self) -> None:
        if not self.tiles:
            raise ValueError("inventory needs at least one tile")
        for rows, cols in self.tiles:
            if rows < 1 or cols < 1:
                raise ValueError(f"invalid tile shape {rows}x{cols}")
        if not (self.t_meas > 0.0 and math.isfinite(self.t_meas)):
            raise ValueError(f"t_meas must be positive and finite, got {self.t_meas}")
        object.__setattr__(self, "tiles", tuple((int(r), int(c)) for r, c in self.tiles))

    @classmethod
    def from_shape(cls, shape: LstmShape, t_meas: float = DEFAULT_T_MEAS) -> "TileInventory":
        return cls(tuple(shape.tile_shapes()), t_meas)

    @property
    def total_devices(self) -> int:
        return sum(r * c for r, c in self.tiles)


def count_devices(shape: LstmShape) -> int:
    """Total cross-point devices over all tiles implied by the topology."""
    return TileInventory.from_shape(shape).total_devices


def throughput(total_devices: int, t_meas: float = DEFAULT_T_MEAS) -> float:
    """Operations per second: 2 * total_devices / t_meas (multiply + add
    per device per cycle)."""
    if total_devices < 1:
        raise ValueError(f"device count must be positive, got {total_devices}")
    if not (t_meas > 0.0 and math.isfinite(t_meas)):
        raise ValueError(f"t_meas must be positive and finite, got {t_meas}")
    return 2.0 * total_devices / t_meas
