"""Unpooling: restore the pre-pool connectivity and spread pooled features back.

Each pre-pool edge takes the mean of the pooled edges it was merged into; the
collapsed edge itself belongs to both of its side groups and so averages two.
The mean is evaluated as ``first + mean(parent - first)`` so that constant
features come back bit-for-bit.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

__all__ = ["mesh_unpool", "unpool_tensor"]


def _check(width, history):
    if width != history.pooled.n_edges:
        raise ShapeError(
            f"unpool expects {history.pooled.n_edges} pooled edges, got {width}"
        )


def _operators(history):
    """Selection and averaging matrices, cached on the history object."""
    ops = getattr(history, "_unpool_ops", None)
    if ops is not None:
        return ops
    n_new, n_old = history.pooled.n_edges, history.snapshot.n_edges
    parents = [sorted(p) for p in history.parents]
    first = np.array([p[0] for p in parents], dtype=np.int64)
    owner = np.repeat(np.arange(n_old), [len(p) for p in parents])
    idx = np.fromiter((j for p in parents for j in p), dtype=np.int64, count=len(owner))
    nnz = len(idx)
    slots = np.arange(nnz)
    ones = np.ones(nnz)
    pick_first = sp.csr_matrix((np.ones(n_old), (first, np.arange(n_old))), shape=(n_new, n_old))
    pick_all = sp.csr_matrix((ones, (idx, slots)), shape=(n_new, nnz))
    pick_owner_first = sp.csr_matrix((ones, (first[owner], slots)), shape=(n_new, nnz))
    counts = np.array([len(p) for p in parents], dtype=np.float64)
    average = sp.csr_matrix((1.0 / counts[owner], (slots, owner)), shape=(nnz, n_old))
    ops = (pick_first, pick_all, pick_owner_first, average)
    history._unpool_ops = ops
    return ops


def mesh_unpool(features_pooled, history):
    """Return ``(restored_topology, features)`` at the pre-pool resolution."""
    f = np.asarray(features_pooled)
    _check(f.shape[1], history)
    pick_first, pick_all, pick_owner_first, average = _operators(history)
    base = np.asarray(f @ pick_first)
    spread = np.asarray(f @ pick_all) - np.asarray(f @ pick_owner_first)
    return history.snapshot, base + np.asarray(spread @ average)


def unpool_tensor(x: Tensor, history):
    """Differentiable unpooling of a ``(C, E')`` tensor; backward sums the copies."""
    _check(x.shape[1], history)
    pick_first, pick_all, pick_owner_first, average = _operators(history)
    spread = ad.sub(ad.sparse_mix(x, pick_all), ad.sparse_mix(x, pick_owner_first))
    return ad.add(ad.sparse_mix(x, pick_first), ad.sparse_mix(spread, average))
