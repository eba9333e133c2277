"""Dense-array layers with hand-written backward passes.

Convolution runs as one GEMM per layer over an im2col patch matrix; the
patch gather/scatter and activation repacking are small numba kernels so
the BLAS call dominates. dtype is float32 for training and float64 for
finite-difference gradient checking (the kernels specialize on either).
"""

from __future__ import annotations

import numpy as np
from numba import njit


class ShapeMismatchError(ValueError):
    pass


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatchError(msg)


@njit(cache=True)
def _gather_cols(xp, k, stride, ho, wo, out):
    """Padded input (N,C,Hp,Wp) -> patch matrix (C*k*k, N*ho*wo).

    Parallel over channels: every thread writes a disjoint row block, so
    the result is bit-deterministic.
    """
    n, c, _, _ = xp.shape
    l = ho * wo
    for ci in range(c):
        for i in range(k):
            for j in range(k):
                row = (ci * k + i) * k + j
                for ni in range(n):
                    base = ni * l
                    for oh in range(ho):
                        src_h = i + oh * stride
                        for ow in range(wo):
                            out[row, base + oh * wo + ow] = xp[ni, ci, src_h, j + ow * stride]
    return out


@njit(cache=True)
def _scatter_cols(dcols, k, stride, ho, wo, dxp):
    """Transpose of _gather_cols: accumulate (C*k*k, N*ho*wo) into (N,C,Hp,Wp).

    Parallel over channels: each thread accumulates into its own channel
    slice in a fixed order, so the result is bit-deterministic.
    """
    n, c, _, _ = dxp.shape
    l = ho * wo
    for ci in range(c):
        for i in range(k):
            for j in range(k):
                row = (ci * k + i) * k + j
                for ni in range(n):
                    base = ni * l
                    for oh in range(ho):
                        dst_h = i + oh * stride
                        for ow in range(wo):
                            dxp[ni, ci, dst_h, j + ow * stride] += dcols[row, base + oh * wo + ow]
    return dxp


@njit(cache=True)
def _pack_channels_first(x, out):
    """(N, C, H, W) -> (C, N*H*W) so GEMMs see one wide matrix."""
    n, c, h, w = x.shape
    l = h * w
    for ci in range(c):
        for ni in range(n):
            for hi in range(h):
                for wi in range(w):
                    out[ci, ni * l + hi * w + wi] = x[ni, ci, hi, wi]
    return out


@njit(cache=True)
def _unpack_channels_first(packed, out):
    """(C, N*H*W) -> (N, C, H, W)."""
    n, c, h, w = out.shape
    l = h * w
    for ci in range(c):
        for ni in range(n):
            for hi in range(h):
                for wi in range(w):
                    out[ni, ci, hi, wi] = packed[ci, ni * l + hi * w + wi]
    return out


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (C*k*k, N*Ho*Wo) patch matrix."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if pad:
        xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, :, pad : pad + h, pad : pad + w] = x
    else:
        xp = np.ascontiguousarray(x)
    out = np.empty((c * k * k, n * ho * wo), dtype=x.dtype)
    return _gather_cols(xp, k, stride, ho, wo, out)


def col2im(dcols: np.ndarray, x_shape, k: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add inverse of im2col."""
    n, c, h, w = x_shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    _scatter_cols(np.ascontiguousarray(dcols), k, stride, ho, wo, dxp)
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + w])
    return dxp


class Conv2d:
    def __init__(self, c_in: int, c_out: int, k: int, stride: int = 1,
                 pad: int = 0, dtype=np.float32):
        self.c_in, self.c_out, self.k, self.stride, self.pad = c_in, c_out, k, stride, pad
        self.w = np.zeros((c_out, c_in, k, k), dtype=dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    @property
    def fan_in(self) -> int:
        return self.c_in * self.k * self.k

    def forward(self, x: np.ndarray, cols: np.ndarray | None = None) -> np.ndarray:
        """cols may carry a precomputed im2col of x, shared across layers
        that consume the same input."""
        _check(x.ndim == 4 and x.shape[1] == self.c_in,
               f"conv expects (N,{self.c_in},H,W), got {x.shape}")
        n = x.shape[0]
        ho = (x.shape[2] + 2 * self.pad - self.k) // self.stride + 1
        wo = (x.shape[3] + 2 * self.pad - self.k) // self.stride + 1
        if cols is None:
            cols = im2col(x, self.k, self.stride, self.pad)
        out2 = self.w.reshape(self.c_out, self.fan_in) @ cols
        out = np.empty((n, self.c_out, ho, wo), dtype=x.dtype)
        _unpack_channels_first(out2, out)
        out += self.b[None, :, None, None]
        self._cache = (x.shape, cols)
        return out

    def backward_to_cols(self, dout: np.ndarray) -> np.ndarray:
        """Parameter gradients plus the patch-matrix input gradient; callers
        that share cols across layers sum these before one col2im."""
        _, cols = self._cache
        n, _, ho, wo = dout.shape
        d2 = np.empty((self.c_out, n * ho * wo), dtype=dout.dtype)
        _pack_channels_first(np.ascontiguousarray(dout), d2)
        self.dw += (d2 @ cols.T).reshape(self.w.shape)
        self.db += dout.sum(axis=(0, 2, 3))
        return self.w.reshape(self.c_out, self.fan_in).T @ d2

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x_shape = self._cache[0]
        dcols = self.backward_to_cols(dout)
        return col2im(dcols, x_shape, self.k, self.stride, self.pad)

    def parameters(self):
        return [(self.w, self.dw), (self.b, self.db)]


class Linear:
    def __init__(self, n_in: int, n_out: int, dtype=np.float32):
        self.n_in, self.n_out = n_in, n_out
        self.w = np.zeros((n_out, n_in), dtype=dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    @property
    def fan_in(self) -> int:
        return self.n_in

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check(x.ndim == 2 and x.shape[1] == self.n_in,
               f"linear expects (N,{self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.dw += dout.T @ self._x
        self.db += dout.sum(axis=0)
        return dout @ self.w

    def parameters(self):
        return [(self.w, self.dw), (self.b, self.db)]


class Relu:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._mask

    def parameters(self):
        return []


class GlobalAvgPool:
    def __init__(self):
        self._shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        n, c, h, w = self._shape
        return np.broadcast_to(dout[:, :, None, None], self._shape) / (h * w)

    def parameters(self):
        return []


def upsample2x(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2x_backward(dout: np.ndarray) -> np.ndarray:
    return (dout[:, :, 0::2, 0::2] + dout[:, :, 0::2, 1::2]
            + dout[:, :, 1::2, 0::2] + dout[:, :, 1::2, 1::2])


class UpsampleNearest2x:
    def forward(self, x: np.ndarray) -> np.ndarray:
        return upsample2x(x)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return upsample2x_backward(dout)

    def parameters(self):
        return []


# -- fused upsample + 3x3 convolution ------------------------------------------

# Nearest 2x upsampling followed by a pad-1 3x3 convolution touches only a
# 2x2 neighbourhood of the low-resolution grid per output pixel. Folding the
# 3x3 kernel into four 2x2 kernels (one per output parity) computes the same
# function with 2.25x fewer multiplies and no upsampled intermediates.
# Row/column tap groups: output parity 0 reads source cells {i-1, i} with
# kernel indices {0} and {1,2}; parity 1 reads {i, i+1} with {0,1} and {2}.
_FOLD_GROUPS = (((0,), (1, 2)), ((0, 1), (2,)))


@njit(cache=True)
def _unpack_interleaved(packed, out, di, dj):
    """(C, N*H*W) -> out[n, c, 2i+di, 2j+dj] for one output parity."""
    n, c, h2, w2 = out.shape
    h = h2 // 2
    w = w2 // 2
    l = h * w
    for ci in range(c):
        for ni in range(n):
            for hi in range(h):
                row = 2 * hi + di
                for wi in range(w):
                    out[ni, ci, row, 2 * wi + dj] = packed[ci, ni * l + hi * w + wi]
    return out


@njit(cache=True)
def _pack_interleaved(dout, packed, di, dj):
    """Inverse gather of _unpack_interleaved."""
    n, c, h2, w2 = dout.shape
    h = h2 // 2
    w = w2 // 2
    l = h * w
    for ci in range(c):
        for ni in range(n):
            for hi in range(h):
                row = 2 * hi + di
                for wi in range(w):
                    packed[ci, ni * l + hi * w + wi] = dout[ni, ci, row, 2 * wi + dj]
    return packed


class UpsampleConv3x3:
    """Nearest 2x upsample fused with a 3x3 pad-1 convolution.

    Holds ordinary (c_out, c_in, 3, 3) weights, so checkpoints and gradient
    semantics match the unfused [upsample, conv] pair; only the execution
    strategy differs.
    """

    def __init__(self, c_in: int, c_out: int, dtype=np.float32):
        self.c_in, self.c_out = c_in, c_out
        self.k = 3
        self.w = np.zeros((c_out, c_in, 3, 3), dtype=dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    @property
    def fan_in(self) -> int:
        return self.c_in * 9

    def _folded(self, di: int, dj: int) -> np.ndarray:
        """2x2 kernel for one output parity, flattened to (c_out, 4*c_in)."""
        rows = _FOLD_GROUPS[di]
        cols = _FOLD_GROUPS[dj]
        k = np.empty((self.c_out, self.c_in, 2, 2), dtype=self.w.dtype)
        for a in range(2):
            for b in range(2):
                k[:, :, a, b] = sum(
                    self.w[:, :, u, v] for u in rows[a] for v in cols[b]
                )
        return k.reshape(self.c_out, 4 * self.c_in)

    @staticmethod
    def make_cols(x: np.ndarray) -> list:
        """Four parity patch matrices of x; shareable across layers."""
        n, c, h, w = x.shape
        xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
        xp[:, :, 1 : 1 + h, 1 : 1 + w] = x
        cols = []
        for di in range(2):
            for dj in range(2):
                view = np.ascontiguousarray(
                    xp[:, :, di : di + h + 1, dj : dj + w + 1])
                out = np.empty((c * 4, n * h * w), dtype=x.dtype)
                cols.append(_gather_cols(view, 2, 1, h, w, out))
        return cols

    def forward(self, x: np.ndarray, cols=None) -> np.ndarray:
        _check(x.ndim == 4 and x.shape[1] == self.c_in,
               f"upconv expects (N,{self.c_in},H,W), got {x.shape}")
        n, _, h, w = x.shape
        if cols is None:
            cols = self.make_cols(x)
        out = np.empty((n, self.c_out, 2 * h, 2 * w), dtype=x.dtype)
        for p, (di, dj) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            _unpack_interleaved(self._folded(di, dj) @ cols[p], out, di, dj)
        out += self.b[None, :, None, None]
        self._cache = (x.shape, cols)
        return out

    def backward_to_cols(self, dout: np.ndarray) -> list:
        """Parameter gradients plus per-parity patch-matrix input gradients."""
        x_shape, cols = self._cache
        n, _, h, w = x_shape
        self.db += dout.sum(axis=(0, 2, 3))
        dout = np.ascontiguousarray(dout)
        dcols = []
        for p, (di, dj) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            d2 = np.empty((self.c_out, n * h * w), dtype=dout.dtype)
            _pack_interleaved(dout, d2, di, dj)
            dk = (d2 @ cols[p].T).reshape(self.c_out, self.c_in, 2, 2)
            rows = _FOLD_GROUPS[di]
            colg = _FOLD_GROUPS[dj]
            for a in range(2):
                for b in range(2):
                    for u in rows[a]:
                        for v in colg[b]:
                            self.dw[:, :, u, v] += dk[:, :, a, b]
            dcols.append(self._folded(di, dj).T @ d2)
        return dcols

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x_shape = self._cache[0]
        dcols = self.backward_to_cols(dout)
        return self.scatter_cols(dcols, x_shape)

    @staticmethod
    def scatter_cols(dcols, x_shape) -> np.ndarray:
        n, c, h, w = x_shape
        dxp = np.zeros((n, c, h + 2, w + 2), dtype=dcols[0].dtype)
        for p, (di, dj) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            view = dxp[:, :, di : di + h + 1, dj : dj + w + 1]
            contiguous = np.zeros_like(view)
            _scatter_cols(np.ascontiguousarray(dcols[p]), 2, 1, h, w, contiguous)
            view += contiguous
        return np.ascontiguousarray(dxp[:, :, 1 : 1 + h, 1 : 1 + w])

    def parameters(self):
        return [(self.w, self.dw), (self.b, self.db)]
