"""Plain-text ``key = value`` run configuration shared by the CLI and checkpoints."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .networks import NetworkConfig

__all__ = ["RunConfig", "TrainParams", "parse_config", "format_config", "load_config", "VALID_KEYS"]


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 200
    lr: float = 0.0002
    batch_size: int = 16
    seed: int = 0
    threads: int = 1
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")


def _int_list(text):
    text = text.strip().strip("[]")
    return [int(t) for t in text.replace(" ", "").split(",") if t] if text else []


def _opt(conv):
    def parse(text):
        return None if text.strip().lower() in ("", "none", "auto") else conv(text)

    return parse


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> value parser; defaults live on RunConfig.
_SCHEMA = {
    "task": str,
    "data_dir": str,
    "input_edges": _opt(int),
    "pool_targets": _opt(_int_list),
    "conv_channels": _int_list,
    "fc_dims": _opt(_int_list),
    "num_classes": _opt(int),
    "feature_mode": str,
    "pooling": str,
    "norm_groups": int,
    "residual": _opt(_bool),
    "lr": float,
    "epochs": int,
    "batch_size": int,
    "seed": int,
    "threads": int,
    "aniso_sigma": float,
    "slide_fraction": float,
    "flip_fraction": _opt(float),
    "collapse_fraction": float,
}
VALID_KEYS = tuple(_SCHEMA)


@dataclass(frozen=True)
class RunConfig:
    task: str = "classification"
    data_dir: str = ""
    input_edges: int | None = None
    pool_targets: tuple | None = None
    conv_channels: tuple = (32, 64, 128, 256)
    fc_dims: tuple | None = None
    num_classes: int | None = None
    feature_mode: str = "invariant"
    pooling: str = "norm"
    norm_groups: int = 16
    residual: bool | None = None
    lr: float = 0.0002
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0
    threads: int = 1
    aniso_sigma: float = 0.1
    slide_fraction: float = 0.2
    flip_fraction: float | None = None
    collapse_fraction: float = 0.0

    def __post_init__(self):
        task = {"cls": "classification", "seg": "segmentation"}.get(self.task, self.task)
        object.__setattr__(self, "task", task)
        for name in ("pool_targets", "conv_channels", "fc_dims"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(int(x) for x in val))

    def resolved(self, num_classes=None):
        """Fill every derived default; ``num_classes`` comes from the data if unset."""
        n = self.num_classes if self.num_classes is not None else num_classes
        if n is None:
            raise ConfigError("num_classes is not set and could not be inferred from the data")
        net = self.network_config(n)
        flip = self.flip_fraction
        if flip is None:
            flip = 0.05 if net.task == "classification" else 0.0
        return replace(
            self,
            num_classes=n,
            input_edges=net.input_edges,
            pool_targets=tuple(net.pool_targets),
            fc_dims=tuple(net.fc_dims),
            residual=net.residual,
            pooling=net.pooling,
            flip_fraction=flip,
        )

    def network_config(self, num_classes=None):
        n = self.num_classes if self.num_classes is not None else num_classes
        if n is None:
            raise ConfigError("num_classes is not set")
        fc = self.fc_dims
        if fc is not None and self.task == "classification" and fc and fc[-1] != n:
            fc = tuple(fc) + (n,)
        return NetworkConfig(
            task=self.task,
            num_classes=int(n),
            feature_mode=self.feature_mode,
            input_edges=self.input_edges,
            conv_channels=list(self.conv_channels),
            pool_targets=None if self.pool_targets is None else list(self.pool_targets),
            fc_dims=None if fc is None else list(fc),
            norm_groups=self.norm_groups,
            residual=self.residual,
            pooling=self.pooling,
        )

    def train_params(self):
        return TrainParams(self.epochs, self.lr, self.batch_size, self.seed, self.threads)

    def augment_params(self):
        from .data import AugmentParams

        flip = self.flip_fraction
        if flip is None:
            flip = 0.05 if self.task == "classification" else 0.0
        return AugmentParams(self.aniso_sigma, self.slide_fraction, flip, self.collapse_fraction, self.seed)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _format_value(v):
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(str(int(x)) for x in v) if v else "[]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg):
    """Render ``cfg`` as ``key = value`` lines that :func:`parse_config` reads back."""
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in cfg.as_dict().items())


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(
                f"{source}:{lineno}: unknown key {key!r}; valid keys: {', '.join(VALID_KEYS)}"
            )
        parser = _SCHEMA[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return RunConfig(**values)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
