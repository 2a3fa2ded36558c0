"""Order-invariant edge convolution.

For edge ``e`` with stored neighbours ``(a, b, c, d)`` the receptive field is
``(e, |a - c|, a + c, |b - d|, b + d)``. Swapping the two faces turns
``(a, b, c, d)`` into ``(c, d, a, b)`` and leaves every slot unchanged.
The kernel is applied as one GEMM over the unwrapped ``(E, 5 * C)`` matrix.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

__all__ = ["ConvKernel", "build_symmetric_neighborhood", "mesh_conv_forward", "conv_reference"]


class ConvKernel:
    """Weights ``(out, in, 5)`` and bias ``(out,)``; slot 0 weighs the centre edge."""

    def __init__(self, weight, bias=None, name="conv"):
        self.weight = weight if isinstance(weight, Tensor) else Tensor(weight, requires_grad=True, name=f"{name}.weight")
        if bias is None:
            bias = np.zeros(self.weight.shape[0])
        self.bias = bias if isinstance(bias, Tensor) else Tensor(bias, requires_grad=True, name=f"{name}.bias")
        if self.weight.ndim != 3 or self.weight.shape[2] != 5:
            raise ShapeError(f"kernel weight must be (out, in, 5), got {self.weight.shape}")

    @classmethod
    def init(cls, c_in, c_out, rng, name="conv"):
        std = np.sqrt(2.0 / (5 * c_in))
        return cls(rng.normal(0.0, std, size=(c_out, c_in, 5)), np.zeros(c_out), name=name)

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def parameters(self):
        return [self.weight, self.bias]


def _neighborhood_rows(x, topo):
    """``(E, C, 5)`` receptive-field tensor from a ``(C, E)`` input."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2 or x.shape[1] != topo.n_edges:
        raise ShapeError(f"features {x.shape} do not match {topo.n_edges} edges")
    rows = ad.transpose(x)
    nb = topo.neighbors
    a, b, c, d = (ad.gather_rows(rows, nb[:, k]) for k in range(4))
    slots = [
        rows,
        ad.abs(ad.sub(a, c)),
        ad.add(a, c),
        ad.abs(ad.sub(b, d)),
        ad.add(b, d),
    ]
    return ad.stack(slots, axis=-1)


def build_symmetric_neighborhood(features, topo):
    """Return the ``(C, E, 5)`` symmetric receptive-field tensor."""
    return ad.transpose(_neighborhood_rows(features, topo), (1, 0, 2))


def mesh_conv_forward(kernel, features, topo):
    """Apply ``kernel`` to ``(C_in, E)`` features; returns ``(C_out, E)``."""
    x = features if isinstance(features, Tensor) else Tensor(features)
    if x.shape[0] != kernel.in_channels:
        raise ShapeError(f"kernel expects {kernel.in_channels} channels, got {x.shape[0]}")
    n_edges = topo.n_edges
    unwrapped = ad.reshape(_neighborhood_rows(x, topo), (n_edges, 5 * kernel.in_channels))
    w = ad.reshape(kernel.weight, (kernel.out_channels, 5 * kernel.in_channels))
    out = ad.add(ad.matmul(unwrapped, ad.transpose(w)), kernel.bias)
    return ad.transpose(out)


def conv_reference(weight, bias, features, neighbors):
    """Per-edge loop evaluating ``sum_j k_j . e^j`` directly (test oracle)."""
    w = np.asarray(weight, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    c_in, n_edges = f.shape
    padded = np.concatenate([f, np.zeros((c_in, 1))], axis=1)
    out = np.zeros((w.shape[0], n_edges))
    for e in range(n_edges):
        a, b, c, d = (padded[:, neighbors[e][k]] for k in range(4))
        field = [f[:, e], np.abs(a - c), a + c, np.abs(b - d), b + d]
        for o in range(w.shape[0]):
            acc = bias[o]
            for j in range(5):
                acc += float(np.dot(w[o, :, j], field[j]))
            out[o, e] = acc
    return out
