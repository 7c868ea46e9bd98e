"""Character-level LSTM training on simulated resistive cross-point arrays.

The package models networks of analog weight tiles: quantized, noisy,
saturating matrix-vector reads; parallel stochastic pulse-coincidence
updates against imperfect devices; and an exact floating-point twin path
used for baselines and oracles.
"""

from rpulstm.device import (
    DeviceArray,
    PRESETS,
    RpuConfig,
    preset_config,
    sample_device_array,
    states_stats,
)
from rpulstm.lstm import (
    HiddenState,
    LstmNetwork,
    LstmShape,
    concat_input,
    lstm_step_backward,
    lstm_step_forward,
    sample_dropout_mask,
    softmax_xent,
    window_pass,
)
from rpulstm.kernels import USING_COMPILED_KERNEL
from rpulstm.perf import TileInventory, count_devices, throughput
from rpulstm.tile import AnalogTile, ManagedResult, quantize_vector
from rpulstm.training import (
    Corpus,
    MetricsCsv,
    TrainConfig,
    Trainer,
    evaluate,
    load_corpus,
    lr_sweep,
    windows,
)

__version__ = "0.1.0"

__all__ = [
    "AnalogTile",
    "Corpus",
    "DeviceArray",
    "HiddenState",
    "LstmNetwork",
    "LstmShape",
    "ManagedResult",
    "MetricsCsv",
    "PRESETS",
    "RpuConfig",
    "TileInventory",
    "TrainConfig",
    "Trainer",
    "USING_COMPILED_KERNEL",
    "concat_input",
    "count_devices",
    "evaluate",
    "load_corpus",
    "lr_sweep",
    "lstm_step_backward",
    "lstm_step_forward",
    "preset_config",
    "quantize_vector",
    "sample_device_array",
    "sample_dropout_mask",
    "softmax_xent",
    "states_stats",
    "throughput",
    "window_pass",
    "windows",
]
