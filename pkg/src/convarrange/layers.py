"""Minimal conv-net layers with explicit forward/backward passes.

Convolution is implemented as an im2col patch gather followed by one matmul;
its gradient scatters patch gradients back with the transposed gather. All
layers keep whatever dtype the parameters carry (float32 for training,
float64 for finite-difference verification).
"""

import numpy as np

from .checkpoints import LayerEntry
from .errors import ShapeMismatch, StaleCache, UnsupportedGeometry
from .vectorize import ConvGeometry


def im2col(x, kernel: int, stride: int, padding: int):
    """(N, C, H, W) -> ((N*oh*ow, C*k*k) patch matrix, (oh, ow))."""
    N, C, H, W = x.shape
    k, s, p = kernel, stride, padding
    oh = (H + 2 * p - k) // s + 1
    ow = (W + 2 * p - k) // s + 1
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    cols = np.empty((N, C, k, k, oh, ow), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            cols[:, :, u, v] = xp[:, :, u : u + (oh - 1) * s + 1 : s, v : v + (ow - 1) * s + 1 : s]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(N * oh * ow, C * k * k), (oh, ow)


def col2im(dpatches, x_shape, kernel: int, stride: int, padding: int, oh: int, ow: int):
    """Adjoint of im2col: scatter-add patch gradients back onto the input."""
    N, C, H, W = x_shape
    k, s, p = kernel, stride, padding
    dcols = dpatches.reshape(N, oh, ow, C, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((N, C, H + 2 * p, W + 2 * p), dtype=dpatches.dtype)
    for u in range(k):
        for v in range(k):
            dxp[:, :, u : u + (oh - 1) * s + 1 : s, v : v + (ow - 1) * s + 1 : s] += dcols[:, :, u, v]
    return dxp[:, :, p : p + H, p : p + W] if p else dxp


class Conv2D:
    kind = "conv"

    def __init__(self, geom: ConvGeometry, filters: int, dtype=np.float32):
        if geom.padding_mode != "zero":
            raise UnsupportedGeometry("trainer convolutions use zero padding")
        self.geom = geom
        self.filters = filters
        self.weight = np.zeros((filters, geom.in_channels, geom.kernel, geom.kernel), dtype)
        self.bias = np.zeros(filters, dtype)

    def out_shape(self, in_shape):
        g = self.geom
        if in_shape != (g.in_channels, g.in_height, g.in_width):
            raise ShapeMismatch(f"conv expects {g.filter_shape[0]}x{g.in_height}x{g.in_width} input, got {in_shape}")
        return (self.filters, g.out_height, g.out_width)

    def forward(self, x):
        g = self.geom
        if x.shape[1:] != (g.in_channels, g.in_height, g.in_width):
            raise ShapeMismatch(f"conv input {x.shape[1:]}, geometry wants {(g.in_channels, g.in_height, g.in_width)}")
        patches, (oh, ow) = im2col(x, g.kernel, g.stride, g.padding)
        out = patches @ self.weight.reshape(self.filters, -1).T
        out += self.bias
        y = np.ascontiguousarray(
            out.reshape(x.shape[0], oh, ow, self.filters).transpose(0, 3, 1, 2)
        )
        return y, (x.shape, patches)

    def backward(self, dy, cache):
        x_shape, patches = cache
        g = self.geom
        N = x_shape[0]
        oh, ow = g.out_height, g.out_width
        dout = dy.transpose(0, 2, 3, 1).reshape(N * oh * ow, self.filters)
        dw = (dout.T @ patches).reshape(self.weight.shape)
        db = dout.sum(axis=0)
        dpatches = dout @ self.weight.reshape(self.filters, -1)
        dx = col2im(dpatches, x_shape, g.kernel, g.stride, g.padding, oh, ow)
        return dx, {"weight": dw, "bias": db}


class ReLU:
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        return np.maximum(x, 0), x > 0

    def backward(self, dy, mask):
        return dy * mask, None


class MaxPool2x2:
    kind = "maxpool"

    def out_shape(self, in_shape):
        C, H, W = in_shape
        if H % 2 or W % 2:
            raise ShapeMismatch(f"max-pool needs even spatial extents, got {H}x{W}")
        return (C, H // 2, W // 2)

    def forward(self, x):
        N, C, H, W = x.shape
        if H % 2 or W % 2:
            raise ShapeMismatch(f"max-pool needs even spatial extents, got {H}x{W}")
        win = (
            x.reshape(N, C, H // 2, 2, W // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(N, C, H // 2, W // 2, 4)
        )
        # argmax keeps the first maximum, so ties route to the earliest
        # window position in row-major order
        idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, dy, cache):
        x_shape, idx = cache
        N, C, H, W = x_shape
        dwin = np.zeros((N, C, H // 2, W // 2, 4), dtype=dy.dtype)
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        dx = (
            dwin.reshape(N, C, H // 2, W // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(x_shape)
        )
        return dx, None


class Flatten:
    kind = "flatten"

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, x_shape):
        return dy.reshape(x_shape), None


class Dense:
    kind = "dense"

    def __init__(self, in_features: int, out_features: int, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = np.zeros((out_features, in_features), dtype)
        self.bias = np.zeros(out_features, dtype)

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeMismatch(f"dense expects ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def forward(self, x):
        return x @ self.weight.T + self.bias, x

    def backward(self, dy, x):
        dw = dy.T @ x
        db = dy.sum(axis=0)
        dx = dy @ self.weight
        return dx, {"weight": dw, "bias": db}


_PARAMETERIZED = (Conv2D, Dense)


class Model:
    """Feed-forward stack of the layers above.

    Parameterized layers are named conv1..convN / fc1..fcM in forward order
    and get consecutive layer ids starting at 1 (convs first in all the
    architectures built here). `_version` increments on every parameter
    mutation so gradients from a stale forward cache are refused.
    """

    def __init__(self, input_shape, layers, spec=None):
        self.input_shape = tuple(input_shape)
        self.layers = list(layers)
        self.spec = spec
        self._version = 0
        self._names = []
        conv_n = dense_n = 0
        for layer in self.layers:
            if isinstance(layer, Conv2D):
                conv_n += 1
                self._names.append(f"conv{conv_n}")
            elif isinstance(layer, Dense):
                dense_n += 1
                self._names.append(f"fc{dense_n}")
            else:
                self._names.append(None)

    @classmethod
    def build(cls, spec: dict, dtype=np.float32) -> "Model":
        """Construct from a plain dict:

        {"input_shape": [C, H, W],
         "layers": [{"kind": "conv", "filters": 16, "kernel": 3,
                     "stride": 1, "padding": 1},
                    {"kind": "relu"}, {"kind": "maxpool"},
                    {"kind": "flatten"}, {"kind": "dense", "out": 10}]}
        """
        shape = tuple(int(d) for d in spec["input_shape"])
        layers = []
        for entry in spec["layers"]:
            kind = entry["kind"]
            if kind == "conv":
                geom = ConvGeometry(
                    in_channels=shape[0],
                    in_height=shape[1],
                    in_width=shape[2],
                    kernel=int(entry["kernel"]),
                    stride=int(entry.get("stride", 1)),
                    padding=int(entry.get("padding", 0)),
                )
                layer = Conv2D(geom, int(entry["filters"]), dtype=dtype)
            elif kind == "relu":
                layer = ReLU()
            elif kind == "maxpool":
                layer = MaxPool2x2()
            elif kind == "flatten":
                layer = Flatten()
            elif kind == "dense":
                layer = Dense(shape[0], int(entry["out"]), dtype=dtype)
            else:
                raise ValueError(f"unknown layer kind {kind!r}")
            shape = layer.out_shape(shape)
            layers.append(layer)
        return cls(tuple(int(d) for d in spec["input_shape"]), layers, spec=spec)

    def bump(self):
        self._version += 1

    def forward(self, x):
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"model input {x.shape[1:]}, wants {self.input_shape}")
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, (self._version, caches)

    def backward(self, tagged_caches, dlogits):
        version, caches = tagged_caches
        if version != self._version:
            raise StaleCache("parameters changed since this forward pass")
        grads = [None] * len(self.layers)
        dy = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            dy, g = self.layers[i].backward(dy, caches[i])
            grads[i] = g
        return grads

    def parameters(self):
        out = []
        for name, layer in zip(self._names, self.layers):
            if isinstance(layer, _PARAMETERIZED):
                out.append((name + ".weight", layer.weight))
                out.append((name + ".bias", layer.bias))
        return out

    def flat_grads(self, grads):
        """Flatten a backward() result to align with parameters()."""
        out = []
        for layer, g in zip(self.layers, grads):
            if isinstance(layer, _PARAMETERIZED):
                out.append(g["weight"])
                out.append(g["bias"])
        return out

    def state_dict(self):
        return {name: arr for name, arr in self.parameters()}

    def load_state_dict(self, arrays: dict):
        for name, param in self.parameters():
            if name not in arrays:
                raise ShapeMismatch(f"missing parameter {name!r}")
            src = np.asarray(arrays[name])
            if src.shape != param.shape:
                raise ShapeMismatch(f"{name}: shape {src.shape} != {param.shape}")
            param[...] = src.astype(param.dtype, copy=False)
        self.bump()

    def checkpoint_layers(self) -> list[LayerEntry]:
        entries = []
        layer_id = 0
        for name, layer in zip(self._names, self.layers):
            if not isinstance(layer, _PARAMETERIZED):
                continue
            layer_id += 1
            if isinstance(layer, Conv2D):
                entries.append(
                    LayerEntry(
                        layer_id=layer_id,
                        kind="conv",
                        weight=name + ".weight",
                        bias=name + ".bias",
                        geometry=layer.geom,
                        filters=layer.filters,
                    )
                )
            else:
                entries.append(
                    LayerEntry(layer_id=layer_id, kind="dense", weight=name + ".weight", bias=name + ".bias")
                )
        return entries

    def conv_layers(self):
        """[(layer_id, Conv2D)] with ids matching checkpoint_layers()."""
        out = []
        layer_id = 0
        for layer in self.layers:
            if isinstance(layer, _PARAMETERIZED):
                layer_id += 1
                if isinstance(layer, Conv2D):
                    out.append((layer_id, layer))
        return out

    def dtype(self):
        for _, p in self.parameters():
            return p.dtype
        return np.float32

    def astype(self, dtype) -> "Model":
        clone = Model.build(self.spec, dtype=dtype)
        for (_, dst), (_, src) in zip(clone.parameters(), self.parameters()):
            dst[...] = src.astype(dtype)
        return clone

    def copy(self) -> "Model":
        return self.astype(self.dtype())
