"""The trajectory forecaster: conv blocks, Bi-LSTM encoder/decoder, attention.

Ablation variants rewire the same parts:

* ``c1`` -- full model
* ``c2`` -- no convolution blocks
* ``c3`` -- no attention (last encoder state repeated as context)
* ``c4`` -- neither convolutions nor attention
* ``c5`` -- unidirectional recurrence only
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import (
    BiLSTM,
    ConvBlock,
    Dense,
    Dropout,
    Param,
    PositionAwareAttention,
    sigmoid,
)

ABLATIONS = ("c1", "c2", "c3", "c4", "c5")


@dataclass
class ModelConfig:
    ablation: str = "c1"
    input_features: int = 30
    input_rows: int = 19
    output_steps: int = 72
    conv_filters: tuple[int, ...] = (256, 256, 128)
    conv_kernels: tuple[int, ...] = (7, 5, 5)
    dilation: int = 2
    pool_h: int = 2
    dropout: float = 0.10
    lstm_units: int = 128
    attention_omega: float = 0.25
    dense_units: tuple[int, ...] = (128, 128, 64)
    l2: float = 0.0005
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    # decode ranges for the rescaling output head (lat, lon)
    lat_range: tuple[float, float] = (-68.0, 45.0)
    lon_range: tuple[float, float] = (-58.0, 50.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.attention_omega < 0.0:
            raise ValueError("attention time factor must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("conv_filters", "conv_kernels", "dense_units", "lat_range", "lon_range"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kw = dict(d)
        for key in ("conv_filters", "conv_kernels", "dense_units", "lat_range", "lon_range"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class _Wiring:
    conv: bool
    attention: bool
    bidirectional: bool


def _wiring(ablation: str) -> _Wiring:
    return {
        "c1": _Wiring(True, True, True),
        "c2": _Wiring(False, True, True),
        "c3": _Wiring(True, False, True),
        "c4": _Wiring(False, False, True),
        "c5": _Wiring(False, False, False),
    }[ablation]


class Forecaster:
    """End-to-end model producing normalized (lat, lon) pairs in (0, 1)."""

    SCHEMA = "model.v1"

    def __init__(self, config: ModelConfig):
        self.config = config
        wiring = _wiring(config.ablation)
        self.wiring = wiring
        init_seed, dropout_seed = np.random.SeedSequence(config.seed).spawn(2)
        rng = np.random.default_rng(init_seed)
        self._dropout_rng = np.random.default_rng(dropout_seed)

        width = config.input_features
        self.blocks: list[ConvBlock] = []
        if wiring.conv:
            for filters, kernel in zip(config.conv_filters, config.conv_kernels):
                self.blocks.append(
                    ConvBlock(rng, width, filters, kernel, config.dilation, config.pool_h)
                )
                width = filters
        self.dropout = Dropout(config.dropout, self._dropout_rng)
        self.encoder = BiLSTM(rng, width, config.lstm_units, wiring.bidirectional)
        self.encoder_dense = Dense(rng, config.lstm_units, config.lstm_units, relu=True)
        self.attention = (
            PositionAwareAttention(rng, config.lstm_units, config.attention_omega)
            if wiring.attention
            else None
        )
        self.decoder = BiLSTM(rng, config.lstm_units, config.lstm_units, wiring.bidirectional)
        self.dense_stack: list[Dense] = []
        width = config.lstm_units
        for units in config.dense_units:
            self.dense_stack.append(Dense(rng, width, units, relu=True))
            width = units
        self.head = Dense(rng, width, 2)
        self._head_out = None
        self._ctx_shape = None

    # -- parameter registry ---------------------------------------------------

    def named_params(self) -> list[tuple[str, Param]]:
        out: list[tuple[str, Param]] = []
        for i, block in enumerate(self.blocks):
            out += [(f"block{i}.{n}", p) for n, p in block.params()]
        out += [(f"encoder.{n}", p) for n, p in self.encoder.params()]
        out += [(f"encoder_dense.{n}", p) for n, p in self.encoder_dense.params()]
        if self.attention is not None:
            out += [(f"attention.{n}", p) for n, p in self.attention.params()]
        out += [(f"decoder.{n}", p) for n, p in self.decoder.params()]
        for i, layer in enumerate(self.dense_stack):
            out += [(f"dense{i}.{n}", p) for n, p in layer.params()]
        out += [(f"head.{n}", p) for n, p in self.head.params()]
        return out

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, block in enumerate(self.blocks):
            out += [(f"block{i}.{n}", b) for n, b in block.buffers()]
        return out

    def param_count(self) -> int:
        return sum(p.value.size for _, p in self.named_params())

    def zero_grad(self) -> None:
        for _, p in self.named_params():
            p.grad[...] = 0.0

    # -- forward / backward -----------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.config.input_features:
            raise ValueError(
                f"expected (batch, rows, {self.config.input_features}) input, got {x.shape}"
            )
        z = self.config.output_steps
        out = x.astype(np.float64, copy=False)
        for block in self.blocks:
            out = block.forward(out, train)
        out = self.dropout.forward(out, train)
        out = self.encoder.forward(out)
        out = self.encoder_dense.forward(out)
        self._ctx_shape = out.shape
        if self.attention is not None:
            ctx = self.attention.forward(out, z)
        else:
            ctx = np.repeat(out[:, -1:, :], z, axis=1)
        out = self.decoder.forward(ctx)
        for layer in self.dense_stack:
            out = layer.forward(out)
        pre = self.head.forward(out)
        y = sigmoid(pre)
        self._head_out = y
        return y

    def backward(self, dy: np.ndarray) -> None:
        y = self._head_out
        d = dy * y * (1.0 - y)  # through the logistic squash
        d = self.head.backward(d)
        for layer in reversed(self.dense_stack):
            d = layer.backward(d)
        d = self.decoder.backward(d)
        if self.attention is not None:
            d = self.attention.backward(d)
        else:
            back = np.zeros(self._ctx_shape)
            back[:, -1, :] = d.sum(axis=1)
            d = back
        d = self.encoder_dense.backward(d)
        d = self.encoder.backward(d)
        d = self.dropout.backward(d)
        for block in reversed(self.blocks):
            d = block.backward(d)

    # -- loss --------------------------------------------------------------------

    def loss(self, pred: np.ndarray, target: np.ndarray) -> float:
        """Normalized-space MAE per coordinate plus the L2 penalty."""
        if pred.shape != target.shape:
            raise ValueError("prediction/target shape mismatch")
        data = float(
            np.mean(np.abs(pred[..., 0] - target[..., 0]))
            + np.mean(np.abs(pred[..., 1] - target[..., 1]))
        )
        return data + self.penalty()

    def penalty(self) -> float:
        if self.config.l2 == 0.0:
            return 0.0
        return self.config.l2 * sum(
            float(np.sum(p.value * p.value)) for _, p in self.named_params() if p.penalized
        )

    def loss_grad(self, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
        n = pred[..., 0].size
        return np.sign(pred - target) / n

    def penalty_grads(self) -> None:
        if self.config.l2 == 0.0:
            return
        for _, p in self.named_params():
            if p.penalized:
                p.grad += 2.0 * self.config.l2 * p.value

    def train_step_gradients(self, x: np.ndarray, target: np.ndarray, train: bool = True) -> float:
        """Forward, loss, and full backward including the penalty term."""
        self.zero_grad()
        pred = self.forward(x, train=train)
        loss = self.loss(pred, target)
        self.backward(self.loss_grad(pred, target))
        self.penalty_grads()
        return loss

    # -- rescaling output head ------------------------------------------------------

    def decode(self, y_norm: np.ndarray) -> np.ndarray:
        """Affine map from (0,1) outputs to configured (lat, lon) ranges."""
        lat_lo, lat_hi = self.config.lat_range
        lon_lo, lon_hi = self.config.lon_range
        out = np.empty_like(y_norm)
        out[..., 0] = lat_lo + y_norm[..., 0] * (lat_hi - lat_lo)
        out[..., 1] = lon_lo + y_norm[..., 1] * (lon_hi - lon_lo)
        return out

    def decode_grad(self, d_decoded: np.ndarray) -> np.ndarray:
        lat_lo, lat_hi = self.config.lat_range
        lon_lo, lon_hi = self.config.lon_range
        out = np.empty_like(d_decoded)
        out[..., 0] = d_decoded[..., 0] * (lat_hi - lat_lo)
        out[..., 1] = d_decoded[..., 1] * (lon_hi - lon_lo)
        return out

    # -- checkpointing -----------------------------------------------------------------

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        arrays = [(name, p.value) for name, p in self.named_params()]
        arrays += [(f"buffer.{name}", b) for name, b in self.named_buffers()]
        return arrays

    def save(self, json_path, bin_path) -> None:
        manifest = []
        offset = 0
        blobs = []
        for name, arr in self.state_arrays():
            blob = arr.astype("<f8").tobytes()
            manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
            blobs.append(blob)
            offset += len(blob)
        doc = {
            "schema": self.SCHEMA,
            "config": self.config.to_dict(),
            "param_count": self.param_count(),
            "tensors": manifest,
        }
        with open(json_path, "w") as fh:
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))
        with open(bin_path, "wb") as fh:
            for blob in blobs:
                fh.write(blob)

    @classmethod
    def load(cls, json_path, bin_path) -> "Forecaster":
        with open(json_path) as fh:
            doc = json.load(fh)
        if doc.get("schema") != cls.SCHEMA:
            raise ValueError(f"unexpected model schema {doc.get('schema')!r}")
        model = cls(ModelConfig.from_dict(doc["config"]))
        raw = open(bin_path, "rb").read()
        by_name = {m["name"]: m for m in doc["tensors"]}
        for name, arr in model.state_arrays():
            meta = by_name[name]
            size = int(np.prod(meta["shape"])) if meta["shape"] else 1
            values = np.frombuffer(
                raw, dtype="<f8", count=size, offset=meta["offset"]
            ).reshape(meta["shape"])
            arr[...] = values
        return model

    def set_state(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, arr in self.state_arrays():
            arr[...] = snapshot[name]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.state_arrays()}
