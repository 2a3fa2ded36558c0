"""Single-file checkpoints: a text header followed by a little-endian float32 payload.

Layout::

    meshlearn-checkpoint
    format_version = 1
    [config]
    task = classification
    ...
    [meta]
    seed = 0
    epoch = 12
    adam_step = 240
    [tensors]
    conv0.weight 32,5,5 0
    ...
    end_header
    <payload>

Each tensor line gives its name, comma-separated shape and byte offset into
the payload. The header carries no timestamps so identical runs produce
identical files.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, format_config, parse_config
from .errors import ConfigError
from .features import FeatureStats
from .optim import AdamState

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "FORMAT_VERSION", "MAGIC"]

MAGIC = "meshlearn-checkpoint"
FORMAT_VERSION = 1
_END = b"end_header\n"


@dataclass
class Checkpoint:
    config: RunConfig
    stats: FeatureStats
    params: OrderedDict
    adam: AdamState | None = None
    seed: int = 0
    epoch: int = 0
    format_version: int = FORMAT_VERSION
    metrics: dict = field(default_factory=dict)

    @property
    def network_config(self):
        return self.config.network_config()

    def tensors(self):
        out = OrderedDict()
        out["stats.mean"] = self.stats.mean
        out["stats.std"] = self.stats.std
        for k, v in self.params.items():
            out[f"param.{k}"] = v
        if self.adam is not None and self.adam.m:
            for (k, _), m, v in zip(self.params.items(), self.adam.m, self.adam.v):
                out[f"adam_m.{k}"] = m
                out[f"adam_v.{k}"] = v
        return out


def save_checkpoint(path, ckpt):
    path = Path(path)
    lines = [MAGIC, f"format_version = {ckpt.format_version}", "[config]"]
    lines += format_config(ckpt.config).splitlines()
    lines += ["[meta]", f"seed = {int(ckpt.seed)}", f"epoch = {int(ckpt.epoch)}"]
    if ckpt.adam is not None:
        a = ckpt.adam
        lines += [
            f"adam_step = {a.step}",
            f"adam_lr = {a.lr!r}",
            f"adam_beta1 = {a.beta1!r}",
            f"adam_beta2 = {a.beta2!r}",
            f"adam_eps = {a.eps!r}",
        ]
    lines.append("[tensors]")
    payload = []
    offset = 0
    for name, arr in ckpt.tensors().items():
        if " " in name:
            raise ConfigError(f"tensor name {name!r} contains a space")
        buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        shape = ",".join(str(s) for s in np.shape(arr))
        lines.append(f"{name} {shape} {offset}")
        payload.append(buf)
        offset += len(buf)
    header = ("\n".join(lines) + "\n").encode("utf-8") + _END
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        for buf in payload:
            fh.write(buf)
    return path


def load_checkpoint(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from None
    cut = raw.find(_END)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise ConfigError(f"{path} is not a checkpoint file")
    header = raw[:cut].decode("utf-8").splitlines()
    payload = raw[cut + len(_END):]
    sections = {"": [], "config": [], "meta": [], "tensors": []}
    current = ""
    for line in header[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in sections:
                raise ConfigError(f"{path}: unknown header section {line}")
            continue
        sections[current].append(line)
    top = dict(_kv(line) for line in sections[""])
    version = int(top.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format_version {version}")
    config = parse_config("\n".join(sections["config"]), f"{path}[config]")
    meta = dict(_kv(line) for line in sections["meta"])

    tensors = OrderedDict()
    for line in sections["tensors"]:
        name, shape_s, off_s = line.split(" ")
        shape = tuple(int(s) for s in shape_s.split(",") if s)
        off = int(off_s)
        n = int(np.prod(shape)) if shape else 1
        if off + 4 * n > len(payload):
            raise ConfigError(f"{path}: tensor {name} runs past the end of the payload")
        tensors[name] = np.frombuffer(payload, dtype="<f4", count=n, offset=off).astype(np.float32).reshape(shape)

    stats = FeatureStats(tensors.pop("stats.mean"), tensors.pop("stats.std"))
    params = OrderedDict((k[6:], v) for k, v in tensors.items() if k.startswith("param."))
    adam = None
    if "adam_step" in meta:
        adam = AdamState(
            lr=float(meta["adam_lr"]),
            beta1=float(meta["adam_beta1"]),
            beta2=float(meta["adam_beta2"]),
            eps=float(meta["adam_eps"]),
            step=int(meta["adam_step"]),
        )
        if f"adam_m.{next(iter(params), '')}" in tensors:
            adam.m = [tensors[f"adam_m.{k}"].copy() for k in params]
            adam.v = [tensors[f"adam_v.{k}"].copy() for k in params]
    return Checkpoint(
        config=config,
        stats=stats,
        params=params,
        adam=adam,
        seed=int(meta.get("seed", 0)),
        epoch=int(meta.get("epoch", 0)),
        format_version=version,
    )


def _kv(line):
    k, v = line.split("=", 1)
    return k.strip(), v.strip()
