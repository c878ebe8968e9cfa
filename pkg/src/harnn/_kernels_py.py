"""Pure numpy kernels; the reference behaviour for the compiled ``_kernels``."""
import numpy as np


def segment_max(scores, tokens, ptr):
    """Max of ``scores[:, tokens[ptr[g]:ptr[g+1]]]`` for every group ``g``.

    Returns ``(values, arg)`` with ``arg`` the winning column (first one on ties).
    Groups must be non-empty.
    """
    n_groups = len(ptr) - 1
    if n_groups == 0:
        return np.zeros((scores.shape[0], 0)), np.zeros((scores.shape[0], 0), dtype=np.int64)
    starts = ptr[:-1]
    gathered = scores[:, tokens]
    values = np.maximum.reduceat(gathered, starts, axis=1)
    sizes = np.diff(ptr)
    hit = gathered == np.repeat(values, sizes, axis=1)
    pos = np.where(hit, np.arange(len(tokens)), len(tokens))
    first = np.minimum.reduceat(pos, starts, axis=1)
    return values, tokens[first]


def segment_max_backward(dout, arg, n_cols):
    grad = np.zeros((dout.shape[0], n_cols))
    rows = np.broadcast_to(np.arange(dout.shape[0])[:, None], arg.shape)
    np.add.at(grad, (rows, arg), dout)
    return grad


def scatter_add_rows(target, idx, values):
    """In place ``target[idx[m]] += values[m]`` with repeated indices accumulated."""
    np.add.at(target, idx, values)
