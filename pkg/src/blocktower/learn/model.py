"""Fall+mask predictors and their binary checkpoint format.

FallMaskNet: a small from-scratch convnet with a coarse 7x7 trunk, a
logistic fall head, and four mask heads that alternate nearest upsampling
with convolution up to full resolution, one per future time step.
LogRegModel: logistic regression on raw pixels with an optionally factored
linear mask head, trained with the same joint loss.
"""

from __future__ import annotations

import struct

import numpy as np

from ..rng import Pcg32, derive_seed
from .layers import (
    Conv2d,
    GlobalAvgPool,
    Linear,
    Relu,
    ShapeMismatchError,
    UpsampleConv3x3,
)
from .numerics import sigmoid

CHECKPOINT_MAGIC = b"MPHN"
CHECKPOINT_VERSION = 1
N_CLASSES = 5
N_MASK_TIMES = 4
KINDS = ("mini", "logreg", "logreg-factored")
FACTOR_DIM = 128


class FallMaskNet:
    """Trunk 3->16->32->64 (stride-2 convs) to (hw/8)^2 features; fall head
    is global average pooling into a single logistic unit; each mask head is
    [upsample x2, conv, relu] x2 then [upsample x2, conv] to 5 class logits.
    """

    kind = "mini"

    def __init__(self, input_hw: int = 56, share_heads: bool = False,
                 dtype=np.float32):
        if input_hw % 8 != 0 or input_hw <= 0:
            raise ValueError(f"input size must be a positive multiple of 8, got {input_hw}")
        self.input_hw = input_hw
        self.share_heads = share_heads
        self.dtype = dtype
        self.conv1 = Conv2d(3, 16, 5, stride=2, pad=2, dtype=dtype)
        self.conv2 = Conv2d(16, 32, 3, stride=2, pad=1, dtype=dtype)
        self.conv3 = Conv2d(32, 64, 3, stride=2, pad=1, dtype=dtype)
        self.relu1, self.relu2, self.relu3 = Relu(), Relu(), Relu()
        self.pool = GlobalAvgPool()
        self.fall = Linear(64, 1, dtype=dtype)
        n_heads = 1 if share_heads else N_MASK_TIMES
        self.heads = [self._make_head(dtype) for _ in range(n_heads)]

    @staticmethod
    def _make_head(dtype):
        # each stage is nearest-upsample x2 followed by a 3x3 conv, run fused
        return {
            "convA": UpsampleConv3x3(64, 32, dtype=dtype),
            "reluA": Relu(),
            "convB": UpsampleConv3x3(32, 16, dtype=dtype),
            "reluB": Relu(),
            "convC": UpsampleConv3x3(16, N_CLASSES, dtype=dtype),
        }

    def parameters(self):
        out = (self.conv1.parameters() + self.conv2.parameters()
               + self.conv3.parameters() + self.fall.parameters())
        for head in self.heads:
            for name in ("convA", "convB", "convC"):
                out += head[name].parameters()
        return out

    def _trunk(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1:] != (3, self.input_hw, self.input_hw):
            raise ShapeMismatchError(
                f"expected (N,3,{self.input_hw},{self.input_hw}), got {x.shape}")
        # center [0,1] inputs; all-positive features make SGD zigzag
        h = x.astype(self.dtype, copy=False) - self.dtype(0.5)
        h = self.relu1.forward(self.conv1.forward(h))
        h = self.relu2.forward(self.conv2.forward(h))
        return self.relu3.forward(self.conv3.forward(h))

    def forward(self, x: np.ndarray):
        """Returns (fall logits (N,), mask logits list of (N,5,hw,hw)).

        All heads read the same upsampled trunk features, so that upsample
        and its patch matrix are computed once and shared.
        """
        feat = self._trunk(x)
        fall = self.fall.forward(self.pool.forward(feat))[:, 0]
        cols_a = UpsampleConv3x3.make_cols(feat)
        masks = []
        for t in range(N_MASK_TIMES):
            head = self.heads[t % len(self.heads)]
            h = head["reluA"].forward(head["convA"].forward(feat, cols=cols_a))
            h = head["reluB"].forward(head["convB"].forward(h))
            masks.append(head["convC"].forward(h))
        self._feat = feat
        return fall, masks

    def backward(self, dfall: np.ndarray, dmasks) -> None:
        """Accumulates parameter gradients from loss gradients on the heads.

        The four heads' input gradients are summed in patch-matrix space and
        scattered back through the shared upsample once. With a shared head
        all four time steps see the same forward pass, so its caches stay
        valid and the gradients simply accumulate.
        """
        dcols_a = None
        for t in reversed(range(N_MASK_TIMES)):
            head = self.heads[t % len(self.heads)]
            d = head["convC"].backward(dmasks[t])
            d = head["reluB"].backward(d)
            d = head["convB"].backward(d)
            d = head["reluA"].backward(d)
            dc = head["convA"].backward_to_cols(d)
            if dcols_a is None:
                dcols_a = dc
            else:
                dcols_a = [a + b for a, b in zip(dcols_a, dc)]
        dfeat = UpsampleConv3x3.scatter_cols(dcols_a, self._feat.shape)
        dfeat += self.pool.backward(self.fall.backward(dfall[:, None]))
        d = self.conv3.backward(self.relu3.backward(dfeat))
        d = self.conv2.backward(self.relu2.backward(d))
        self.conv1.backward(self.relu1.backward(d))

    def forward_fall(self, x: np.ndarray) -> np.ndarray:
        """Fall probabilities only; skips the mask heads."""
        feat = self._trunk(x)
        z = self.fall.forward(self.pool.forward(feat))[:, 0]
        return sigmoid(z)


class LogRegModel:
    """Pixel logistic regression for fall plus a linear mask head.

    The mask head maps pixels to 5*hw*hw logits per time step, either as a
    single matrix or factored through a 128-dim bottleneck shared across
    time steps.
    """

    def __init__(self, input_hw: int = 56, factored: bool = True,
                 dtype=np.float32):
        if input_hw % 8 != 0 or input_hw <= 0:
            raise ValueError(f"input size must be a positive multiple of 8, got {input_hw}")
        self.input_hw = input_hw
        self.factored = factored
        self.dtype = dtype
        self.n_pixels = 3 * input_hw * input_hw
        self.mask_out = N_CLASSES * input_hw * input_hw * N_MASK_TIMES
        self.fall = Linear(self.n_pixels, 1, dtype=dtype)
        if factored:
            self.mask1 = Linear(self.n_pixels, FACTOR_DIM, dtype=dtype)
            self.mask2 = Linear(FACTOR_DIM, self.mask_out, dtype=dtype)
        else:
            self.mask1 = None
            self.mask2 = Linear(self.n_pixels, self.mask_out, dtype=dtype)

    @property
    def kind(self) -> str:
        return "logreg-factored" if self.factored else "logreg"

    def parameters(self):
        out = self.fall.parameters()
        if self.mask1 is not None:
            out += self.mask1.parameters()
        out += self.mask2.parameters()
        return out

    def forward(self, x: np.ndarray):
        n = x.shape[0]
        if x.shape[1:] != (3, self.input_hw, self.input_hw):
            raise ShapeMismatchError(
                f"expected (N,3,{self.input_hw},{self.input_hw}), got {x.shape}")
        flat = x.reshape(n, -1).astype(self.dtype, copy=False) - self.dtype(0.5)
        self._flat_shape = x.shape
        fall = self.fall.forward(flat)[:, 0]
        h = self.mask1.forward(flat) if self.mask1 is not None else flat
        logits = self.mask2.forward(h)
        hw = self.input_hw
        per_t = logits.reshape(n, N_MASK_TIMES, N_CLASSES, hw, hw)
        return fall, [np.ascontiguousarray(per_t[:, t]) for t in range(N_MASK_TIMES)]

    def backward(self, dfall: np.ndarray, dmasks) -> None:
        n = dfall.shape[0]
        dlogits = np.stack(dmasks, axis=1).reshape(n, self.mask_out)
        dh = self.mask2.backward(dlogits)
        dflat = self.mask1.backward(dh) if self.mask1 is not None else dh
        dflat = dflat + self.fall.backward(dfall[:, None])
        return dflat.reshape(self._flat_shape)

    def forward_fall(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        flat = x.reshape(n, -1).astype(self.dtype, copy=False) - self.dtype(0.5)
        z = self.fall.forward(flat)[:, 0]
        return sigmoid(z)


def init_weights(model, seed: int) -> None:
    """He-normal weights (std sqrt(2/fan_in)), zero biases, fixed order."""
    rng = Pcg32(derive_seed(seed, 0xD06))
    for layer in _layers_of(model):
        std = np.sqrt(2.0 / layer.fan_in)
        flat = rng.normals(layer.w.size) * std
        layer.w[:] = flat.reshape(layer.w.shape).astype(layer.w.dtype)
        layer.b[:] = 0


def _layers_of(model):
    if isinstance(model, FallMaskNet):
        layers = [model.conv1, model.conv2, model.conv3, model.fall]
        for head in model.heads:
            layers += [head["convA"], head["convB"], head["convC"]]
        return layers
    layers = [model.fall]
    if model.mask1 is not None:
        layers.append(model.mask1)
    layers.append(model.mask2)
    return layers


def trunk_features(model: FallMaskNet, x: np.ndarray) -> np.ndarray:
    """Pooled 64-dim trunk activations (kNN feature space)."""
    feat = model._trunk(x)
    return feat.mean(axis=(2, 3))


def build_model(kind: str, input_hw: int = 56, share_heads: bool = False,
                dtype=np.float32):
    if kind == "mini":
        return FallMaskNet(input_hw=input_hw, share_heads=share_heads, dtype=dtype)
    if kind == "logreg":
        return LogRegModel(input_hw=input_hw, factored=False, dtype=dtype)
    if kind == "logreg-factored":
        return LogRegModel(input_hw=input_hw, factored=True, dtype=dtype)
    raise ValueError(f"unknown model kind {kind!r}")


def save_checkpoint(model, path) -> None:
    """MPHN container: magic, version, kind, flags, shape table, f32 data."""
    tensors = [w for w, _ in model.parameters()]
    flags = 1 if getattr(model, "share_heads", False) else 0
    head = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<BB", KINDS.index(model.kind), flags),
        struct.pack("<I", model.input_hw),
        struct.pack("<I", len(tensors)),
    ]
    for t in tensors:
        head.append(struct.pack("<I", t.ndim))
        head.append(struct.pack(f"<{t.ndim}I", *t.shape))
    body = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors)
    with open(path, "wb") as fh:
        fh.write(b"".join(head) + body)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    kind_id, flags = struct.unpack_from("<BB", data, 8)
    input_hw = struct.unpack_from("<I", data, 10)[0]
    n_tensors = struct.unpack_from("<I", data, 14)[0]
    pos = 18
    shapes = []
    for _ in range(n_tensors):
        ndim = struct.unpack_from("<I", data, pos)[0]
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        shapes.append(shape)
    model = build_model(KINDS[kind_id], input_hw=input_hw, share_heads=bool(flags & 1))
    params = model.parameters()
    if len(params) != n_tensors:
        raise ValueError(f"{path}: tensor count mismatch")
    for (w, _), shape in zip(params, shapes):
        if w.shape != shape:
            raise ValueError(f"{path}: shape table mismatch {w.shape} vs {shape}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        w[:] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
    if pos != len(data):
        raise ValueError(f"{path}: trailing or missing weight bytes")
    return model
