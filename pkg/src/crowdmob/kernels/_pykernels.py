"""Numpy implementations of the hot kernels.

These are the reference versions; the Cython module must agree with them
exactly (integers) or to the last ulp-ish (floats, same operation order is not
guaranteed so tests use a tight relative tolerance).
"""

from __future__ import annotations

import numpy as np


def unique_pair_counts(groups, items):
    """Count distinct ``items`` per ``groups`` value.

    Returns ``(keys, counts)`` with ``keys`` ascending.
    """
    groups = np.asarray(groups, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if groups.shape != items.shape:
        raise ValueError("groups and items must have the same shape")
    if groups.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    pairs = np.unique(np.stack([groups, items], axis=1), axis=0)
    keys, counts = np.unique(pairs[:, 0], return_counts=True)
    return keys.astype(np.int64), counts.astype(np.int64)


def centroid_groups(starts, node_idx, rssi, node_x, node_y, p0, n_exp, g):
    """Weighted centroid for each contiguous group of sightings.

    ``starts`` has length m+1; group k is ``[starts[k], starts[k+1])``. Inside a
    group each node contributes once, with its strongest RSSI. Weight is
    ``1 / d**g`` with ``d`` from the log-distance model.
    """
    starts = np.asarray(starts, dtype=np.int64)
    node_idx = np.asarray(node_idx, dtype=np.int64)
    rssi = np.asarray(rssi, dtype=np.float64)
    node_x = np.asarray(node_x, dtype=np.float64)
    node_y = np.asarray(node_y, dtype=np.float64)
    m = starts.size - 1
    if m <= 0:
        return np.empty(0), np.empty(0), np.empty(0, np.int64)
    lengths = np.diff(starts)
    if np.any(lengths <= 0):
        raise ValueError("every group needs at least one sighting")
    group = np.repeat(np.arange(m, dtype=np.int64), lengths)
    n_nodes = node_x.size
    key = group * n_nodes + node_idx
    order = np.lexsort((-rssi, key))
    key_sorted = key[order]
    first = np.ones(key_sorted.size, dtype=bool)
    first[1:] = key_sorted[1:] != key_sorted[:-1]
    best = order[first]
    bg = group[best]
    bn = node_idx[best]
    br = rssi[best]
    # w = d**-g = 10**(g * (rssi - p0) / (10 n))
    w = np.power(10.0, g * (br - p0) / (10.0 * n_exp))
    sw = np.bincount(bg, weights=w, minlength=m)
    sx = np.bincount(bg, weights=w * node_x[bn], minlength=m)
    sy = np.bincount(bg, weights=w * node_y[bn], minlength=m)
    used = np.bincount(bg, minlength=m).astype(np.int64)
    x, y = sx / sw, sy / sw
    # a lone node is its own centroid; skip the w*x/w round trip
    lone = used[bg] == 1
    x[bg[lone]] = node_x[bn[lone]]
    y[bg[lone]] = node_y[bn[lone]]
    return x, y, used


def bin_points(x, y, x0, y0, cell, rows, cols):
    """Histogram points into a ``rows x cols`` grid anchored at ``(x0, y0)``.

    Row 0 is the southernmost strip. Points outside the grid go to overflow.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    counts = np.zeros((rows, cols), dtype=np.int64)
    if x.size == 0:
        return counts, 0
    c = np.floor((x - x0) / cell)
    r = np.floor((y - y0) / cell)
    ok = (c >= 0) & (c < cols) & (r >= 0) & (r < rows)
    flat = r[ok].astype(np.int64) * cols + c[ok].astype(np.int64)
    counts += np.bincount(flat, minlength=rows * cols).reshape(rows, cols)
    return counts, int(x.size - ok.sum())
