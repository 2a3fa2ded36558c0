"""Training, evaluation and inference loops."""
from __future__ import annotations

import json
import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig, TrainParams
from .data import AugmentParams, Dataset, augment, load_entry
from .errors import ConfigError, DatasetError, ShapeError
from .features import apply_stats, compute_features, fit_stats
from .mesh import build_edge_topology, export_mesh, topology_to_mesh
from .networks import ForwardTrace, build_network
from .optim import AdamState, adam_step

__all__ = [
    "Sample",
    "TrainResult",
    "load_samples",
    "split_samples",
    "train",
    "evaluate",
    "predict",
    "infer",
    "network_from_checkpoint",
]

logger = logging.getLogger(__name__)


@dataclass
class Sample:
    """A loaded mesh with its topology and label (int or per-edge array)."""

    mesh: object
    topo: object
    label: object
    name: str = ""


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    best_checkpoint: Checkpoint
    history: list = field(default_factory=list)


def load_samples(entries):
    out = []
    for e in entries:
        mesh, topo, label = load_entry(e)
        out.append(Sample(mesh, topo, label, e.path.name))
    return out


def split_samples(dataset, seed=0, val_fraction=0.1):
    """Return ``(train, val)`` sample lists.

    The dataset's test split is the validation set when it exists; otherwise
    a seeded ``val_fraction`` of the training entries is held out.
    """
    if isinstance(dataset, Dataset):
        train_e, test_e = dataset.split("train"), dataset.split("test")
        if not test_e:
            order = np.random.default_rng(seed).permutation(len(train_e))
            n_val = max(1, int(round(val_fraction * len(train_e)))) if len(train_e) > 1 else 0
            val_idx = set(order[:n_val].tolist())
            test_e = [e for i, e in enumerate(train_e) if i in val_idx]
            train_e = [e for i, e in enumerate(train_e) if i not in val_idx]
        return load_samples(train_e), load_samples(test_e)
    train_s, val_s = dataset
    return list(train_s), list(val_s)


def _features(sample_mesh, topo, mode, stats):
    x = compute_features(sample_mesh, topo, mode)
    if stats is not None:
        x = apply_stats(x, stats)
    return x


def _check_labels(samples, cfg):
    for s in samples:
        lab = np.asarray(s.label)
        if cfg.task == "classification":
            if lab.ndim != 0:
                raise DatasetError(f"{s.name}: classification needs one integer label")
        else:
            if lab.shape != (s.topo.n_edges,):
                raise DatasetError(f"{s.name}: {lab.size} edge labels for {s.topo.n_edges} edges")
        if lab.size and (lab.min() < 0 or lab.max() >= cfg.num_classes):
            raise DatasetError(f"{s.name}: label out of range [0, {cfg.num_classes})")
        if s.topo.n_edges < cfg.pool_targets[0]:
            raise DatasetError(
                f"{s.name}: {s.topo.n_edges} edges is below the first pool target {cfg.pool_targets[0]}"
            )


def _infer_num_classes(dataset, samples):
    if isinstance(dataset, Dataset) and dataset.task == "classification":
        return dataset.num_classes
    if not samples:
        return None
    return int(max(int(np.max(s.label)) for s in samples)) + 1


def network_from_checkpoint(ckpt):
    net = build_network(ckpt.network_config, seed=ckpt.seed)
    net.load_state_dict(ckpt.params)
    return net


def _pool_rng(seed, index):
    # random-mode pooling is a fixed draw per mesh, shared by training and evaluation
    return np.random.default_rng([int(seed), int(index), 7])


def predict(net, samples, stats, seed=0):
    """Predicted labels per sample (int for classification, array for segmentation)."""
    cfg = net.config
    preds = []
    for i, s in enumerate(samples):
        x = Tensor(_features(s.mesh, s.topo, cfg.feature_mode, stats))
        if x.shape[0] != cfg.input_channels:
            raise ShapeError(f"{s.name}: {x.shape[0]} feature channels, network expects {cfg.input_channels}")
        logits = net.forward(x, s.topo, rng=_pool_rng(seed, i)).data
        preds.append(int(np.argmax(logits)) if cfg.task == "classification" else logits.argmax(axis=0))
    return preds


def _accuracy(preds, samples, task):
    if not samples:
        return None
    if task == "classification":
        return float(np.mean([int(p == s.label) for p, s in zip(preds, samples)]))
    correct = sum(int((p == np.asarray(s.label)).sum()) for p, s in zip(preds, samples))
    total = sum(len(p) for p in preds)
    return correct / total


def evaluate(checkpoint, data, split=None):
    """Accuracy of ``checkpoint`` on ``data``.

    ``data`` is a :class:`Dataset` (its test split, or ``split`` if given, or
    every entry when there is no test split) or a list of :class:`Sample`.
    """
    if isinstance(data, Dataset):
        entries = data.split(split) if split else (data.split("test") or data.entries)
        samples = load_samples(entries)
    else:
        samples = list(data)
    net = network_from_checkpoint(checkpoint)
    cfg = net.config
    if checkpoint.stats.channels != cfg.input_channels:
        raise ConfigError("checkpoint feature statistics do not match its feature mode")
    preds = predict(net, samples, checkpoint.stats, checkpoint.seed)
    return {"accuracy": _accuracy(preds, samples, cfg.task), "count": len(samples)}


def _grad_one(net, params, sample, cfg, stats, aug, seed, epoch, idx, batch_size):
    rng = np.random.default_rng([seed, epoch, idx])
    mesh, topo = sample.mesh, sample.topo
    if aug is not None:
        mesh = augment(mesh, topo, aug, rng=rng)
        topo = build_edge_topology(mesh)
    x = Tensor(_features(mesh, topo, cfg.feature_mode, stats))
    with ad.Tape() as tape:
        logits = net.forward(x, topo, rng=_pool_rng(seed, idx))
        loss = ad.softmax_cross_entropy(logits, sample.label)
        scaled = ad.mul(loss, Tensor(np.array(1.0 / batch_size)))
    grads = tape.backward(scaled, params)
    return float(loss.data), [grads[p] for p in params]


def _snapshot(net, run_cfg, stats, adam, seed, epoch, metrics=None):
    return Checkpoint(
        config=run_cfg,
        stats=stats,
        params=net.state_dict(),
        adam=None if adam is None else AdamState(
            adam.lr, adam.beta1, adam.beta2, adam.eps, adam.step,
            [m.copy() for m in adam.m], [v.copy() for v in adam.v],
        ),
        seed=seed,
        epoch=epoch,
        metrics=dict(metrics or {}),
    )


def train(dataset, config, train_params=None, augment_params=None, out_dir=None, emit=None,
          stop=None):
    """Train a network and return a :class:`TrainResult`.

    Parameters
    ----------
    dataset : Dataset or (train_samples, val_samples)
    config : RunConfig or NetworkConfig-compatible RunConfig
        Network and run settings. ``train_params`` and ``augment_params``
        override the ones derived from ``config``.
    out_dir : path, optional
        When given, ``metrics.jsonl``, ``last.ckpt`` and ``best.ckpt`` are
        written there.
    emit : callable, optional
        Receives one JSON line per epoch (e.g. ``print``).
    stop : callable, optional
        Called with each epoch's metrics dict; returning true ends training
        after that epoch.
    """
    if not isinstance(config, RunConfig):
        raise TypeError("config must be a RunConfig")
    tp = train_params or config.train_params()
    aug = augment_params if augment_params is not None else config.augment_params()
    train_s, val_s = split_samples(dataset, tp.seed, tp.val_fraction)
    if not train_s:
        raise DatasetError("training set is empty")
    run_cfg = config.resolved(_infer_num_classes(dataset, train_s + val_s))
    cfg = run_cfg.network_config()
    _check_labels(train_s + val_s, cfg)
    if cfg.task == "segmentation" and aug.changes_topology:
        logger.info("segmentation: disabling edge flips and collapses to keep labels aligned")
        aug = aug.geometric_only()
    run_cfg = _with_train_params(run_cfg, tp, aug)
    if aug == AugmentParams(0.0, 0.0, 0.0, 0.0, aug.seed):
        aug = None

    stats = fit_stats([compute_features(s.mesh, s.topo, cfg.feature_mode) for s in train_s])
    net = build_network(cfg, seed=tp.seed)
    params = net.parameters()
    adam = AdamState(lr=tp.lr)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.jsonl").write_text("")

    history = []
    best = _snapshot(net, run_cfg, stats, adam, tp.seed, 0)
    best_score = -1.0
    order_rng = np.random.default_rng([tp.seed, 1])
    pool = ThreadPoolExecutor(tp.threads) if tp.threads > 1 else None
    try:
        for epoch in range(1, tp.epochs + 1):
            order = order_rng.permutation(len(train_s))
            losses = []
            for start in range(0, len(order), tp.batch_size):
                batch = order[start:start + tp.batch_size].tolist()
                args = [
                    (net, params, train_s[i], cfg, stats, aug, tp.seed, epoch, i, len(batch))
                    for i in batch
                ]
                if pool is not None:
                    results = list(pool.map(lambda a: _grad_one(*a), args))
                else:
                    results = [_grad_one(*a) for a in args]
                total = [np.zeros_like(p.data) for p in params]
                for loss, grads in results:
                    losses.append(loss)
                    for acc, g in zip(total, grads):
                        acc += g
                adam_step(params, total, adam)
            metrics = OrderedDict(epoch=epoch, loss=float(np.mean(losses)))
            metrics["train_acc"] = _accuracy(predict(net, train_s, stats, tp.seed), train_s, cfg.task)
            metrics["val_acc"] = _accuracy(predict(net, val_s, stats, tp.seed), val_s, cfg.task)
            history.append(dict(metrics))
            line = json.dumps(metrics)
            if emit is not None:
                emit(line)
            if out is not None:
                with open(out / "metrics.jsonl", "a") as fh:
                    fh.write(line + "\n")
            score = metrics["val_acc"] if metrics["val_acc"] is not None else metrics["train_acc"]
            if score > best_score:
                best_score = score
                best = _snapshot(net, run_cfg, stats, adam, tp.seed, epoch, metrics)
                if out is not None:
                    save_checkpoint(out / "best.ckpt", best)
            if stop is not None and stop(metrics):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    last = _snapshot(net, run_cfg, stats, adam, tp.seed, len(history), history[-1] if history else None)
    if out is not None:
        save_checkpoint(out / "last.ckpt", last)
        if not history:
            save_checkpoint(out / "best.ckpt", best)
    return TrainResult(last, best, history)


def _with_train_params(run_cfg, tp, aug):
    from dataclasses import replace

    return replace(
        run_cfg,
        lr=tp.lr,
        epochs=tp.epochs,
        batch_size=tp.batch_size,
        seed=tp.seed,
        threads=tp.threads,
        aniso_sigma=aug.aniso_scale_sigma,
        slide_fraction=aug.slide_vertex_fraction,
        flip_fraction=aug.edge_flip_fraction,
        collapse_fraction=aug.random_collapse_fraction,
    )


def infer(checkpoint, mesh, export_dir=None, stem="mesh"):
    """Predict labels for ``mesh``.

    Returns ``(labels, exported_paths)``. With ``export_dir`` each pooled
    intermediate mesh is written as a colored PLY file, one per pool layer:
    segmentation predictions are carried down to pooled edges by majority
    vote, classification meshes are colored by the predicted class.
    """
    net = network_from_checkpoint(checkpoint)
    cfg = net.config
    topo = build_edge_topology(mesh)
    x = Tensor(_features(mesh, topo, cfg.feature_mode, checkpoint.stats))
    trace = ForwardTrace()
    logits = net.forward(x, topo, rng=_pool_rng(checkpoint.seed, 0), trace=trace).data
    if cfg.task == "classification":
        labels = int(np.argmax(logits))
    else:
        labels = logits.argmax(axis=0)
    paths = []
    if export_dir is not None:
        d = Path(export_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(trace.topologies):
            m = topology_to_mesh(t)
            compact = build_edge_topology(m)
            if cfg.task == "segmentation":
                # carry final-resolution predictions down to each pooled edge by majority
                lab = _pooled_labels(labels, trace.histories[: i + 1], compact, t)
            else:
                lab = np.full(compact.n_edges, labels)
            paths.append(export_mesh(m, compact, d / f"{stem}_pool{i + 1}_{t.n_edges}.ply", lab))
    return labels, paths


def _pooled_labels(labels, histories, compact, pooled_topo):
    lab = np.asarray(labels)
    for h in histories:
        k = h.merge.shape[1]
        votes = np.zeros((k, int(lab.max()) + 1))
        coo = h.merge.tocoo()
        np.add.at(votes, (coo.col, lab[coo.row]), 1.0)
        lab = votes.argmax(axis=1)
    # pooled topology edge ids match ``compact`` edge ids up to ordering; map by endpoints
    used = np.zeros(len(pooled_topo.vertices), dtype=bool)
    used[pooled_topo.faces.ravel()] = True
    remap = np.cumsum(used) - 1
    key = {tuple(sorted(remap[e].tolist())): lab[i] for i, e in enumerate(pooled_topo.edges)}
    return np.array([key[tuple(sorted(e.tolist()))] for e in compact.edges], dtype=np.int64)
