"""Neural forecasters: (H-)ConvLSTM stacks, plain LSTM and (H-)CNN.

All networks take a batch of history windows already scaled to model space
and return one prediction per sample in (0, 1) through a sigmoid head.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .. import hexconv
from .. import ndtensor as nd
from ..ndtensor import BatchNormState, ConfigError, Param, ShapeError, Tensor


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# Input layouts: how a (h, L) window of local maps becomes network input.
LAYOUTS = {
    "hex55": (5, 5),  # two-ring map in the 5x5 hexagonal embedding
    "hex59": (5, 9),  # doubled-coordinate 5x9 matrix
    "square55": (5, 5),  # 5x5 square neighbourhood
    "flat": None,  # flattened vector
}


def encode_windows(windows: np.ndarray, layout: str) -> np.ndarray:
    """(B, h, L) -> (B, h, R, C) maps, or (B, h, L) for the flat layout."""
    if layout == "hex55":
        return hexconv.EMBEDDING55.embed(windows)
    if layout == "hex59":
        return hexconv.EMBEDDING59.embed(windows)
    if layout == "square55":
        if windows.shape[-1] != 25:
            raise ShapeError("square layout needs 25-cell local maps")
        return windows.reshape(windows.shape[:-1] + (5, 5))
    if layout == "flat":
        return windows
    raise ConfigError(f"unknown layout {layout!r}")


class NeuralModel:
    """Parameters, batch-norm state and an input layout; subclasses implement forward()."""

    layout = "flat"

    def __init__(self):
        self.params: "OrderedDict[str, Param]" = OrderedDict()
        self.bn: "OrderedDict[str, BatchNormState]" = OrderedDict()

    def _param(self, name: str, value: np.ndarray) -> Param:
        p = Param(value, name=name)
        self.params[name] = p
        return p

    def parameters(self) -> list[Param]:
        return list(self.params.values())

    def encode(self, windows: np.ndarray) -> np.ndarray:
        return encode_windows(windows, self.layout)

    def forward(self, x: np.ndarray, mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    # checkpoint support: parameters first (canonical order), then BN running stats
    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        out: OrderedDict[str, np.ndarray] = OrderedDict((k, p.data) for k, p in self.params.items())
        for k, st in self.bn.items():
            out[f"{k}.running_mean"] = st.running_mean
            out[f"{k}.running_var"] = st.running_var
        return out

    def load_state_arrays(self, arrays) -> None:
        for k, p in self.params.items():
            if k not in arrays:
                raise KeyError(f"checkpoint lacks {k}")
            if arrays[k].shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {arrays[k].shape} vs model {p.shape}")
            p.data = np.array(arrays[k], dtype=np.float64)
        for k, st in self.bn.items():
            st.running_mean = np.array(arrays[f"{k}.running_mean"])
            st.running_var = np.array(arrays[f"{k}.running_var"])


def predict_head(h_final: Tensor, w_fu: Tensor, b_fu: Tensor) -> Tensor:
    """sigmoid(W_fu . flatten(H) + b_fu) -> (B,) (or scalar for an unbatched map)."""
    if h_final.ndim in (1, 3):
        flat = nd.reshape(h_final, (1, h_final.size))
        out = nd.sigmoid(nd.linear(flat, w_fu, b_fu))
        return nd.reshape(out, (1,))
    flat = nd.reshape(h_final, (h_final.shape[0], -1))
    if flat.shape[1] != w_fu.shape[0]:
        raise ShapeError(f"head expects {w_fu.shape[0]} features, got {flat.shape[1]}")
    out = nd.sigmoid(nd.linear(flat, w_fu, b_fu))
    return nd.reshape(out, (flat.shape[0],))


# ---------------------------------------------------------------- ConvLSTM

GATES = ("f", "i", "c", "o")


@dataclass
class HConvLSTMConfig:
    layers: tuple[int, ...] = (8, 16, 32, 32)
    conv_kind: str = "hex"  # "hex" (size-1 hex kernel) | "square" (k x k)
    h: int = 8
    dropout_p: float = 0.2
    use_batch_norm: bool = True
    kernel_size: int = 3
    layout: str | None = None  # defaults: hex -> hex55, square -> square55

    def __post_init__(self):
        self.layers = tuple(int(c) for c in self.layers)
        if not self.layers:
            raise ConfigError("need at least one ConvLSTM layer")
        if self.h < 1:
            raise ConfigError("history length must be >= 1")
        if self.conv_kind not in ("hex", "square"):
            raise ConfigError(f"unknown conv kind {self.conv_kind!r}")
        if self.layout is None:
            self.layout = "hex55" if self.conv_kind == "hex" else "square55"
        if self.conv_kind == "hex" and self.layout != "hex55":
            raise ConfigError("hexagonal convolution runs on the 5x5 embedding only")


@dataclass
class LayerParams:
    """Gate kernels W_f, W_i, W_c, W_o and biases b_f, b_i, b_c, b_o of one layer."""

    w: dict[str, Param]
    b: dict[str, Param]
    conv_kind: str
    hidden: int
    gamma: Param | None = None
    beta: Param | None = None
    bn_state: BatchNormState | None = None
    _fused: tuple | None = field(default=None, repr=False)

    def fused(self) -> tuple[Tensor, Tensor]:
        """All four gates as one kernel (output channels in f, i, c, o order)."""
        axis = 0 if self.conv_kind == "hex" else -1
        w = nd.concat([self.w[g] for g in GATES], axis=axis)
        b = nd.concat([self.b[g] for g in GATES], axis=0)
        return w, b


@dataclass
class CellState:
    H: Tensor
    C: Tensor


def _gate_conv(x: Tensor, w: Tensor, b: Tensor, conv_kind: str, mask) -> Tensor:
    if conv_kind == "hex":
        return hexconv.hex_conv(x, w, b, mask=mask, check=False)
    return nd.conv2d(x, w, b)


def cell_step(v_t, state: CellState, layer: LayerParams, mask=None, fused=None) -> CellState:
    """One ConvLSTM update on channel-last maps (B, R, C, ch).

    f, i, o = sigmoid(conv([H, V]) + b); C~ = tanh(conv([H, V]) + b);
    C = f * C_prev + i * C~; H = o * tanh(C).
    """
    v_t = nd.as_tensor(v_t)
    if v_t.shape[:-1] != state.H.shape[:-1]:
        raise ShapeError(f"cell_step: input {v_t.shape} vs state {state.H.shape}")
    w, b = fused if fused is not None else layer.fused()
    z = _gate_conv(nd.concat_channels(state.H, v_t), w, b, layer.conv_kind, mask)
    zf, zi, zc, zo = nd.split_last(z, 4)
    f = nd.sigmoid(zf)
    i = nd.sigmoid(zi)
    c_tilde = nd.tanh(zc)
    o = nd.sigmoid(zo)
    c_new = f * state.C + i * c_tilde
    # off-mask conv outputs are 0, so f = i = o = 0.5 and C~ = 0 there: C and H stay 0
    h_new = o * nd.tanh(c_new)
    return CellState(h_new, c_new)


class ConvLSTMNet(NeuralModel):
    """Stacked ConvLSTM with hexagonal (H-ConvLSTM) or square gate convolutions."""

    def __init__(self, config: HConvLSTMConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.layout = config.layout
        self.rows, self.cols = LAYOUTS[config.layout]
        self.mask = hexconv.MASK55 if config.conv_kind == "hex" else None
        rng = np.random.default_rng(seed)
        self.layers: list[LayerParams] = []
        c_in = 1
        k = config.kernel_size
        for li, hid in enumerate(config.layers):
            w, b = {}, {}
            for g in GATES:
                if config.conv_kind == "hex":
                    shape = (hid, hid + c_in, 7)
                    val = glorot(rng, shape, 7 * (hid + c_in), 7 * hid)
                else:
                    shape = (k, k, hid + c_in, hid)
                    val = glorot(rng, shape, k * k * (hid + c_in), k * k * hid)
                w[g] = self._param(f"layer{li}.W_{g}", val)
                b[g] = self._param(f"layer{li}.b_{g}", np.zeros(hid))
            layer = LayerParams(w, b, config.conv_kind, hid)
            if config.use_batch_norm:
                layer.gamma = self._param(f"layer{li}.bn.gamma", np.ones(c_in))
                layer.beta = self._param(f"layer{li}.bn.beta", np.zeros(c_in))
                layer.bn_state = BatchNormState.create(c_in)
                self.bn[f"layer{li}.bn"] = layer.bn_state
            self.layers.append(layer)
            c_in = hid
        n_feat = self.rows * self.cols * config.layers[-1]
        self.w_fu = self._param("head.W_fu", glorot(rng, (n_feat, 1), n_feat, 1))
        self.b_fu = self._param("head.b_fu", np.zeros(1))

    def zero_state(self, batch: int, hidden: int) -> CellState:
        z = Tensor(np.zeros((batch, self.rows, self.cols, hidden)))
        return CellState(z, z)

    def encode(self, windows: np.ndarray) -> np.ndarray:
        return encode_windows(windows, self.layout)[..., None]

    def forward_hidden(self, x: np.ndarray, mode: str = "eval", rng=None) -> Tensor:
        """Top-layer hidden map after the last step; x is (B, h, R, C, 1)."""
        if x.ndim != 5 or x.shape[1] != self.config.h:
            raise ShapeError(f"expected (B, {self.config.h}, R, C, 1) input, got {x.shape}")
        batch, steps = x.shape[0], x.shape[1]
        seq: list[Tensor] = [Tensor(x[:, t]) for t in range(steps)]
        state = None
        for li, layer in enumerate(self.layers):
            if layer.gamma is not None:
                stacked = nd.stack(seq, axis=1)
                normed = nd.batch_norm(stacked, layer.gamma, layer.beta, layer.bn_state, mode=mode,
                                       mask=self.mask)
                seq = [nd.take(normed, t, axis=1) for t in range(steps)]
            fused = layer.fused()
            state = self.zero_state(batch, layer.hidden)
            outs = []
            for t in range(steps):
                state = cell_step(seq[t], state, layer, mask=self.mask, fused=fused)
                outs.append(state.H)
            if li + 1 < len(self.layers):
                seq = [nd.dropout(o, self.config.dropout_p, mode, rng) for o in outs]
        return state.H

    def forward(self, x: np.ndarray, mode: str = "eval", rng=None) -> Tensor:
        return predict_head(self.forward_hidden(x, mode, rng), self.w_fu, self.b_fu)


def model_forward(sample: np.ndarray, model: ConvLSTMNet, mode: str = "eval", rng=None) -> Tensor:
    """Final top-layer H for one encoded sample (h, R, C, 1) or a batch."""
    x = sample[None] if sample.ndim == 4 else sample
    if mode == "train" and x.shape[0] < 2 and model.config.use_batch_norm:
        raise ConfigError("train-mode batch norm needs at least two samples")
    return model.forward_hidden(x, mode, rng)


# -------------------------------------------------------------------- LSTM


class LSTMNet(NeuralModel):
    """Fully connected LSTM on flattened local maps, sigmoid head on the last hidden state.

    With ``use_batch_norm`` the input vectors are batch-normalised per feature
    (statistics shared over time steps), as the convolutional models do.
    """

    layout = "flat"

    def __init__(self, input_size: int, hidden: int = 128, seed: int = 0, use_batch_norm: bool = False):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.input_size = input_size
        self.hidden = hidden
        self.w = {g: self._param(f"lstm.W_{g}", glorot(rng, (hidden + input_size, hidden), hidden + input_size,
                                                        hidden)) for g in GATES}
        self.b = {g: self._param(f"lstm.b_{g}", np.zeros(hidden)) for g in GATES}
        self.norm = None
        if use_batch_norm:
            self.norm = (self._param("lstm.bn.gamma", np.ones(input_size)),
                         self._param("lstm.bn.beta", np.zeros(input_size)), BatchNormState.create(input_size))
            self.bn["lstm.bn"] = self.norm[2]
        self.w_fu = self._param("head.W_fu", glorot(rng, (hidden, 1), hidden, 1))
        self.b_fu = self._param("head.b_fu", np.zeros(1))

    def forward_hidden(self, x: np.ndarray, mode: str = "eval") -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(f"expected (B, h, {self.input_size}) input, got {x.shape}")
        batch = x.shape[0]
        xs = Tensor(x)
        if self.norm is not None:
            xs = nd.batch_norm(xs, *self.norm, mode=mode)
        w = nd.concat([self.w[g] for g in GATES], axis=1)
        b = nd.concat([self.b[g] for g in GATES], axis=0)
        h = Tensor(np.zeros((batch, self.hidden)))
        c = h
        for t in range(x.shape[1]):
            z = nd.linear(nd.concat([h, nd.take(xs, t, axis=1)], axis=1), w, b)
            zf, zi, zc, zo = nd.split_last(z, 4)
            c = nd.sigmoid(zf) * c + nd.sigmoid(zi) * nd.tanh(zc)
            h = nd.sigmoid(zo) * nd.tanh(c)
        return h

    def forward(self, x: np.ndarray, mode: str = "eval", rng=None) -> Tensor:
        return predict_head(self.forward_hidden(x, mode), self.w_fu, self.b_fu)


def lstm_forward(sample: np.ndarray, model: LSTMNet) -> Tensor:
    x = sample[None] if sample.ndim == 2 else sample
    return model.forward(x)


# --------------------------------------------------------------------- CNN

CNN_VARIANTS = {"square": "square55", "hex59": "hex59", "hexconv": "hex55"}


class CNNNet(NeuralModel):
    """History steps as input channels; conv -> ReLU layers; sigmoid head.

    The ``hexconv`` variant (H-CNN) uses size-1 hexagonal kernels on the 5x5
    embedding and keeps the non-cell slots at zero after every layer.
    """

    def __init__(self, variant: str, channels=(8, 16, 32, 32), h: int = 8, kernel_size: int = 3,
                 dropout_p: float = 0.2, use_batch_norm: bool = True, seed: int = 0):
        super().__init__()
        if variant not in CNN_VARIANTS:
            raise ConfigError(f"unknown CNN variant {variant!r}")
        self.variant = variant
        self.layout = CNN_VARIANTS[variant]
        self.rows, self.cols = LAYOUTS[self.layout]
        self.h = h
        self.dropout_p = dropout_p
        self.mask = hexconv.MASK55 if variant == "hexconv" else None
        rng = np.random.default_rng(seed)
        self.convs: list[tuple[Param, Param]] = []
        self.norms: list[tuple[Param, Param, BatchNormState] | None] = []
        c_in = h
        k = kernel_size
        for li, c_out in enumerate(channels):
            if variant == "hexconv":
                w = glorot(rng, (c_out, c_in, 7), 7 * c_in, 7 * c_out)
            else:
                w = glorot(rng, (k, k, c_in, c_out), k * k * c_in, k * k * c_out)
            self.convs.append((self._param(f"conv{li}.weight", w), self._param(f"conv{li}.bias", np.zeros(c_out))))
            if use_batch_norm:
                st = BatchNormState.create(c_in)
                self.bn[f"conv{li}.bn"] = st
                self.norms.append((self._param(f"conv{li}.bn.gamma", np.ones(c_in)),
                                   self._param(f"conv{li}.bn.beta", np.zeros(c_in)), st))
            else:
                self.norms.append(None)
            c_in = c_out
        n_feat = self.rows * self.cols * c_in
        self.w_fu = self._param("head.W_fu", glorot(rng, (n_feat, 1), n_feat, 1))
        self.b_fu = self._param("head.b_fu", np.zeros(1))

    def encode(self, windows: np.ndarray) -> np.ndarray:
        # (B, h, R, C) -> channels last (B, R, C, h)
        return np.moveaxis(encode_windows(windows, self.layout), 1, -1)

    def forward_hidden(self, x: np.ndarray, mode: str = "eval", rng=None) -> Tensor:
        if x.ndim != 4 or x.shape[-1] != self.h:
            raise ShapeError(f"expected (B, R, C, {self.h}) input, got {x.shape}")
        a = Tensor(x)
        for li, ((w, b), norm) in enumerate(zip(self.convs, self.norms)):
            if norm is not None:
                a = nd.batch_norm(a, norm[0], norm[1], norm[2], mode=mode, mask=self.mask)
            if self.variant == "hexconv":
                a = hexconv.hex_conv(a, w, b, mask=self.mask, check=False)
            else:
                a = nd.conv2d(a, w, b)
            a = nd.relu(a)
            if li + 1 < len(self.convs):
                a = nd.dropout(a, self.dropout_p, mode, rng)
        return a

    def forward(self, x: np.ndarray, mode: str = "eval", rng=None) -> Tensor:
        return predict_head(self.forward_hidden(x, mode, rng), self.w_fu, self.b_fu)


def cnn_forward(sample: np.ndarray, model: CNNNet, mode: str = "eval", rng=None) -> Tensor:
    x = sample[None] if sample.ndim == 3 else sample
    return model.forward(x, mode, rng)
