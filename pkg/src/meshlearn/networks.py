"""Classification and segmentation networks assembled from the mesh layers."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .conv import ConvKernel, mesh_conv_forward
from .errors import ConfigError
from .pool import edge_priority, mesh_pool
from .unpool import unpool_tensor

__all__ = [
    "NetworkConfig",
    "ClassificationNet",
    "SegmentationNet",
    "build_classification_net",
    "build_segmentation_net",
    "build_network",
    "pool_layer",
    "ForwardTrace",
]

CLS_POOL = (600, 450, 300, 279)
CLS_EDGES = 750
SEG_POOL = (1200, 900, 300, 279)
SEG_EDGES = 2250


def _default_targets(task):
    return list(CLS_POOL if task == "classification" else SEG_POOL)


@dataclass
class NetworkConfig:
    task: str = "classification"
    num_classes: int = 30
    feature_mode: str = "invariant"
    input_edges: int | None = None
    conv_channels: list = field(default_factory=lambda: [32, 64, 128, 256])
    pool_targets: list | None = None
    fc_dims: list | None = None
    norm_groups: int = 16
    residual: bool | None = None
    pooling: str = "norm"

    def __post_init__(self):
        if self.task in ("cls",):
            self.task = "classification"
        if self.task in ("seg",):
            self.task = "segmentation"
        if self.pool_targets is None:
            self.pool_targets = _default_targets(self.task)
        if self.input_edges is None:
            self.input_edges = CLS_EDGES if self.task == "classification" else SEG_EDGES
        if self.fc_dims is None:
            self.fc_dims = [100, self.num_classes] if self.task == "classification" else []
        if self.residual is None:
            self.residual = self.task == "segmentation"
        if self.pooling == "by-norm":
            self.pooling = "norm"
        self.conv_channels = [int(c) for c in self.conv_channels]
        self.pool_targets = [int(t) for t in self.pool_targets]
        self.fc_dims = [int(d) for d in self.fc_dims]
        self.validate()

    @property
    def input_channels(self):
        return 5 if self.feature_mode == "invariant" else 3

    def validate(self):
        if self.task not in ("classification", "segmentation"):
            raise ConfigError(f"task must be classification or segmentation, got {self.task!r}")
        if self.feature_mode not in ("invariant", "midpoint"):
            raise ConfigError(f"feature_mode must be invariant or midpoint, got {self.feature_mode!r}")
        if self.pooling not in ("norm", "random"):
            raise ConfigError(f"pooling must be norm or random, got {self.pooling!r}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if len(self.pool_targets) != len(self.conv_channels):
            raise ConfigError(
                f"{len(self.pool_targets)} pool targets for {len(self.conv_channels)} conv layers"
            )
        chain = [self.input_edges] + self.pool_targets
        for prev, nxt in zip(chain, chain[1:]):
            if nxt >= prev:
                raise ConfigError(f"pool targets must strictly decrease from the input size: {chain}")
            if (prev - nxt) % 3:
                raise ConfigError(
                    f"pool target {nxt} is not reachable from {prev} in 3-edge collapses"
                )
        if self.task == "classification":
            if not self.fc_dims or self.fc_dims[-1] != self.num_classes:
                raise ConfigError(
                    f"fc_dims must end with num_classes={self.num_classes}, got {self.fc_dims}"
                )

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def pool_layer(x, topo, target, mode="norm", rng=None):
    """Differentiable pooling of ``(C, E)`` features. Returns ``(x', topo', history)``."""
    if topo.n_edges <= target:
        new_topo, _, history = mesh_pool(topo, None, topo.n_edges, scores=np.zeros(topo.n_edges))
    elif mode == "random":
        new_topo, _, history = mesh_pool(topo, None, target, mode="random", rng=rng)
    else:
        new_topo, _, history = mesh_pool(topo, None, target, scores=edge_priority(x.data))
    return ad.sparse_mix(x, history.merge), new_topo, history


@dataclass
class ForwardTrace:
    """Topologies and pool histories seen during one forward pass."""

    topologies: list = field(default_factory=list)
    histories: list = field(default_factory=list)


class _Net:
    def __init__(self, config):
        self.config = config
        self.params = OrderedDict()

    def _param(self, name, data):
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _conv(self, name, c_in, c_out, rng):
        k = ConvKernel.init(c_in, c_out, rng, name=name)
        k.weight = self._param(f"{name}.weight", k.weight.data)
        k.bias = self._param(f"{name}.bias", k.bias.data)
        return k

    def _norm(self, name, c):
        return (self._param(f"{name}.gamma", np.ones(c)), self._param(f"{name}.beta", np.zeros(c)))

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def load_state_dict(self, state):
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ConfigError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise ConfigError(f"parameter {k}: shape {arr.shape} does not match {t.shape}")
            t.data = arr.astype(t.data.dtype).copy()

    def _pool(self, x, topo, target, rng, trace):
        x, topo, history = pool_layer(x, topo, target, self.config.pooling, rng)
        if trace is not None:
            trace.topologies.append(topo)
            trace.histories.append(history)
        return x, topo, history


class ClassificationNet(_Net):
    """``[conv -> relu -> group norm -> pool] x N -> global mean -> FC stack``."""

    def __init__(self, config, rng):
        super().__init__(config)
        c_in = config.input_channels
        self.convs, self.norms = [], []
        for i, c in enumerate(config.conv_channels):
            self.convs.append(self._conv(f"conv{i}", c_in, c, rng))
            self.norms.append(self._norm(f"norm{i}", c))
            c_in = c
        self.fcs = []
        for i, d in enumerate(config.fc_dims):
            w = rng.normal(0.0, np.sqrt(2.0 / c_in), size=(d, c_in))
            self.fcs.append((self._param(f"fc{i}.weight", w), self._param(f"fc{i}.bias", np.zeros(d))))
            c_in = d

    def forward(self, x, topo, rng=None, trace=None):
        cfg = self.config
        for conv, (gamma, beta), target in zip(self.convs, self.norms, cfg.pool_targets):
            x = mesh_conv_forward(conv, x, topo)
            x = ad.relu(x)
            x = ad.group_norm(x, cfg.norm_groups, gamma, beta)
            x, topo, _ = self._pool(x, topo, target, rng, trace)
        h = ad.mean_over_axis(x, 1)
        for i, (w, b) in enumerate(self.fcs):
            h = ad.linear(w, h, b)
            if i < len(self.fcs) - 1:
                h = ad.relu(h)
        return h


class _ResConv:
    """conv -> norm -> relu -> conv -> norm, plus a (projected) shortcut, then relu."""

    def __init__(self, net, name, c_in, c_out, rng):
        self.conv1 = net._conv(f"{name}.conv1", c_in, c_out, rng)
        self.norm1 = net._norm(f"{name}.norm1", c_out)
        self.conv2 = net._conv(f"{name}.conv2", c_out, c_out, rng)
        self.norm2 = net._norm(f"{name}.norm2", c_out)
        self.proj = None
        if c_in != c_out:
            w = rng.normal(0.0, np.sqrt(1.0 / c_in), size=(c_out, c_in))
            self.proj = net._param(f"{name}.shortcut.weight", w)
        self.groups = net.config.norm_groups

    def __call__(self, x, topo):
        y = mesh_conv_forward(self.conv1, x, topo)
        y = ad.relu(ad.group_norm(y, self.groups, *self.norm1))
        y = mesh_conv_forward(self.conv2, y, topo)
        y = ad.group_norm(y, self.groups, *self.norm2)
        skip = x if self.proj is None else ad.matmul(self.proj, x)
        return ad.relu(ad.add(y, skip))


class SegmentationNet(_Net):
    """Encoder of ResConv + pool, mirrored decoder of unpool + concat skip + ResConv."""

    def __init__(self, config, rng):
        super().__init__(config)
        chans = config.conv_channels
        c_in = config.input_channels
        self.down = []
        for i, c in enumerate(chans):
            self.down.append(self._block(f"down{i}", c_in, c, rng))
            c_in = c
        self.up = []
        for i in reversed(range(len(chans))):
            c_out = chans[i - 1] if i > 0 else chans[0]
            self.up.append(self._block(f"up{i}", 2 * chans[i], c_out, rng))
        self.head = self._conv("head", chans[0], config.num_classes, rng)

    def _block(self, name, c_in, c_out, rng):
        if self.config.residual:
            return _ResConv(self, name, c_in, c_out, rng)
        conv = self._conv(name, c_in, c_out, rng)
        norm = self._norm(f"{name}.norm", c_out)
        groups = self.config.norm_groups

        def block(x, topo):
            return ad.relu(ad.group_norm(mesh_conv_forward(conv, x, topo), groups, *norm))

        return block

    def forward(self, x, topo, rng=None, trace=None):
        skips = []
        for block, target in zip(self.down, self.config.pool_targets):
            x = block(x, topo)
            skips.append(x)
            x, topo, history = self._pool(x, topo, target, rng, trace)
            skips[-1] = (skips[-1], history)
        for block, (skip, history) in zip(self.up, reversed(skips)):
            x = unpool_tensor(x, history)
            topo = history.snapshot
            x = block(ad.concat([x, skip], axis=0), topo)
        return mesh_conv_forward(self.head, x, topo)


def build_classification_net(config, seed=0):
    if config.task != "classification":
        raise ConfigError("build_classification_net needs task=classification")
    return ClassificationNet(config, np.random.default_rng(seed))


def build_segmentation_net(config, seed=0):
    if config.task != "segmentation":
        raise ConfigError("build_segmentation_net needs task=segmentation")
    return SegmentationNet(config, np.random.default_rng(seed))


def build_network(config, seed=0):
    if config.task == "classification":
        return build_classification_net(config, seed)
    return build_segmentation_net(config, seed)
