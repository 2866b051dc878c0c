"""Model names used by experiments and the CLI, and a common fit/predict wrapper."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ingest import SampleSet, ScaleParams
from ..ndtensor import ConfigError
from .baselines import ArimaModel, HistoricalAverage
from .nets import CNNNet, ConvLSTMNet, HConvLSTMConfig, LSTMNet, NeuralModel
from .training import TrainConfig, TrainResult, predict, train_model

# model -> partition shapes it applies to
MODEL_SHAPES = {
    "ha": ("hex", "square"),
    "arima": ("hex", "square"),
    "cnn": ("hex", "square"),
    "lstm": ("hex", "square"),
    "convlstm": ("hex", "square"),
    "hcnn": ("hex",),
    "hconvlstm": ("hex",),
}
MODEL_NAMES = tuple(MODEL_SHAPES)
NEURAL_MODELS = ("cnn", "lstm", "convlstm", "hcnn", "hconvlstm")


@dataclass
class ModelSpec:
    """Architecture and training settings shared by all neural models of a run."""

    layers: tuple[int, ...] = (8, 16, 32, 32)
    lstm_hidden: int = 128
    h: int = 8
    dropout_p: float = 0.2
    use_batch_norm: bool = True
    kernel_size: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    arima_orders: tuple[int, ...] = tuple(range(1, 9))


def build_network(name: str, shape: str, spec: ModelSpec, seed: int) -> NeuralModel:
    local = 19 if shape == "hex" else 25
    if name == "lstm":
        return LSTMNet(local, spec.lstm_hidden, seed=seed, use_batch_norm=spec.use_batch_norm)
    if name in ("cnn", "hcnn"):
        variant = "hexconv" if name == "hcnn" else ("hex59" if shape == "hex" else "square")
        return CNNNet(variant, spec.layers, spec.h, spec.kernel_size, spec.dropout_p, spec.use_batch_norm, seed=seed)
    if name in ("convlstm", "hconvlstm"):
        if name == "hconvlstm":
            cfg = HConvLSTMConfig(spec.layers, "hex", spec.h, spec.dropout_p, spec.use_batch_norm)
        else:
            cfg = HConvLSTMConfig(spec.layers, "square", spec.h, spec.dropout_p, spec.use_batch_norm,
                                  spec.kernel_size, layout="hex59" if shape == "hex" else "square55")
        return ConvLSTMNet(cfg, seed=seed)
    raise ConfigError(f"{name!r} is not a neural model")


class Forecaster:
    """fit(train, scale) then predict(samples) in raw demand units."""

    name = ""
    history: TrainResult | None = None

    def fit(self, train: SampleSet, scale_params: ScaleParams) -> "Forecaster":
        raise NotImplementedError

    def predict(self, samples: SampleSet) -> np.ndarray:
        raise NotImplementedError


class BaselineForecaster(Forecaster):
    def __init__(self, name: str, model):
        self.name = name
        self.model = model

    def fit(self, train, scale_params):
        self.model.fit(train, scale_params)
        return self

    def predict(self, samples):
        return self.model.predict(samples)


class NeuralForecaster(Forecaster):
    def __init__(self, name: str, net: NeuralModel, config: TrainConfig):
        self.name = name
        self.net = net
        self.config = config
        self.scale_params: ScaleParams | None = None

    def fit(self, train, scale_params):
        self.scale_params = scale_params
        self.history = train_model(self.net, train, scale_params, self.config)
        return self

    def predict(self, samples):
        if self.scale_params is None:
            raise RuntimeError("forecaster used before fit()")
        return predict(self.net, samples, self.scale_params)


def make_forecaster(name: str, shape: str, spec: ModelSpec | None = None, seed: int = 0) -> Forecaster:
    spec = spec or ModelSpec()
    if name not in MODEL_SHAPES:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    if shape not in MODEL_SHAPES[name]:
        raise ConfigError(f"model {name!r} does not apply to {shape} partitions")
    if name == "ha":
        return BaselineForecaster(name, HistoricalAverage())
    if name == "arima":
        return BaselineForecaster(name, ArimaModel(spec.arima_orders))
    net = build_network(name, shape, spec, seed)
    train_cfg = TrainConfig(**{**spec.train.__dict__, "seed": seed})
    return NeuralForecaster(name, net, train_cfg)
