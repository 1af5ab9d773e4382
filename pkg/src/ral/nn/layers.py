"""Layer forward/backward kernels.

All image tensors are NHWC float arrays: (batch, height, width, channels).
Layers keep their parameters but no per-call state: ``forward`` returns a
cache that the matching ``backward`` consumes, so read-only passes can run
concurrently over the same layer.
"""

from __future__ import annotations

import numpy as np

SUPPORTED_KERNELS = (1, 3)


def _relu(z):
    return np.maximum(z, 0)


class Conv2d:
    """Stride-1 convolution with zero "same" padding and optional fused ReLU.

    Weights have shape (k, k, in_channels, out_channels); spatial size is
    preserved, so only pooling layers downsample.
    """

    def __init__(self, kernel, in_channels, out_channels, activation="relu",
                 rng=None, dtype=np.float32):
        if kernel not in SUPPORTED_KERNELS:
            raise ValueError(f"conv kernel must be one of {SUPPORTED_KERNELS}, got {kernel}")
        self.kernel = kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = kernel * kernel * in_channels
        limit = np.sqrt(6.0 / fan_in)
        self.w = rng.uniform(-limit, limit, size=(kernel, kernel, in_channels, out_channels)).astype(dtype)
        self.b = np.zeros(out_channels, dtype=dtype)

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ValueError(
                f"conv input shape {tuple(x.shape)} does not match weights "
                f"{tuple(self.w.shape)} (expected {self.in_channels} channels)")
        B, H, W, _ = x.shape
        k = self.kernel
        p = k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        z = np.broadcast_to(self.b, (B, H, W, self.out_channels)).astype(x.dtype, copy=True)
        for di in range(k):
            for dj in range(k):
                z += xp[:, di:di + H, dj:dj + W, :] @ self.w[di, dj]
        if self.activation == "relu":
            y = _relu(z)
            return y, (xp, z > 0, H, W)
        return z, (xp, None, H, W)

    def backward(self, dy, cache):
        xp, mask, H, W = cache
        dz = dy * mask if mask is not None else dy
        k = self.kernel
        p = k // 2
        dw = np.empty_like(self.w)
        db = dz.sum(axis=(0, 1, 2))
        dxp = np.zeros_like(xp)
        for di in range(k):
            for dj in range(k):
                xs = xp[:, di:di + H, dj:dj + W, :]
                dw[di, dj] = np.tensordot(xs, dz, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, di:di + H, dj:dj + W, :] += dz @ self.w[di, dj].T
        dx = dxp[:, p:p + H, p:p + W, :] if p else dxp
        return dx, [dw, db]

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} input channels, layer input is {in_shape}")
        return (h, w, self.out_channels)


class MaxPool2x2:
    """Disjoint 2x2 max pooling, stride 2. Input height/width must be even.

    The backward pass routes each upstream gradient to exactly one input
    cell per window (the argmax; ties broken to the first position).
    """

    @property
    def params(self):
        return []

    def forward(self, x):
        B, H, W, C = x.shape
        if H % 2 or W % 2:
            raise ValueError(f"maxpool2x2 requires even spatial dims, got {H}x{W}")
        H2, W2 = H // 2, W // 2
        # (B, H2, 2, W2, 2, C) -> window axis last: (B, H2, W2, C, 4)
        win = x.reshape(B, H2, 2, W2, 2, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, H2, W2, C, 4)
        arg = win.argmax(axis=4)
        y = np.take_along_axis(win, arg[..., None], axis=4)[..., 0]
        return y, (arg, (B, H, W, C))

    def backward(self, dy, cache):
        arg, (B, H, W, C) = cache
        H2, W2 = H // 2, W // 2
        dwin = np.zeros((B, H2, W2, C, 4), dtype=dy.dtype)
        np.put_along_axis(dwin, arg[..., None], dy[..., None], axis=4)
        dx = dwin.reshape(B, H2, W2, C, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(B, H, W, C)
        return dx, []

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool2x2 requires even spatial dims, got {h}x{w}")
        return (h // 2, w // 2, c)


class GlobalAvgPool:
    """Channel-wise mean over all spatial positions: (B,H,W,C) -> (B,C)."""

    @property
    def params(self):
        return []

    def forward(self, x):
        B, H, W, C = x.shape
        return x.mean(axis=(1, 2)), (H, W)

    def backward(self, dy, cache):
        H, W = cache
        dx = np.repeat(np.repeat(dy[:, None, None, :], H, axis=1), W, axis=2) / (H * W)
        return dx, []

    def output_shape(self, in_shape):
        return (in_shape[2],)


class Dense:
    """Fully-connected layer. Flattens any non-batch dims of its input."""

    def __init__(self, in_features, units, activation="none", rng=None, dtype=np.float32):
        self.in_features = in_features
        self.units = units
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        limit = np.sqrt(6.0 / in_features)
        self.w = rng.uniform(-limit, limit, size=(in_features, units)).astype(dtype)
        self.b = np.zeros(units, dtype=dtype)

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.in_features:
            raise ValueError(
                f"dense input shape {tuple(x.shape)} flattens to {x2.shape[1]} features, "
                f"weights expect {self.in_features}")
        z = x2 @ self.w + self.b
        if self.activation == "relu":
            return _relu(z), (x2, x.shape, z > 0)
        return z, (x2, x.shape, None)

    def backward(self, dy, cache):
        x2, in_shape, mask = cache
        dz = dy * mask if mask is not None else dy
        dw = x2.T @ dz
        db = dz.sum(axis=0)
        dx = (dz @ self.w.T).reshape(in_shape)
        return dx, [dw, db]

    def output_shape(self, in_shape):
        flat = int(np.prod(in_shape))
        if flat != self.in_features:
            raise ValueError(f"dense expects {self.in_features} features, layer input is {in_shape}")
        return (self.units,)
