# distutils: language = c++
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, pow
from libc.stdint cimport int64_t
from libcpp.vector cimport vector
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair

cnp.import_array()


def unique_pair_counts(groups, items):
    cdef cnp.int64_t[::1] g = np.ascontiguousarray(groups, dtype=np.int64)
    cdef cnp.int64_t[::1] it = np.ascontiguousarray(items, dtype=np.int64)
    if g.shape[0] != it.shape[0]:
        raise ValueError("groups and items must have the same shape")
    cdef Py_ssize_t n = g.shape[0], i, j = 0
    cdef vector[pair[int64_t, int64_t]] pairs
    cdef vector[int64_t] ks
    cdef vector[int64_t] cs
    with nogil:
        pairs.reserve(n)
        for i in range(n):
            pairs.push_back(pair[int64_t, int64_t](g[i], it[i]))
        sort(pairs.begin(), pairs.end())
        for i in range(n):
            if i > 0 and pairs[i] == pairs[i - 1]:
                continue
            if ks.size() == 0 or ks.back() != pairs[i].first:
                ks.push_back(pairs[i].first)
                cs.push_back(0)
            cs[cs.size() - 1] += 1
    keys = np.empty(ks.size(), dtype=np.int64)
    counts = np.empty(ks.size(), dtype=np.int64)
    cdef cnp.int64_t[::1] kv = keys
    cdef cnp.int64_t[::1] cv = counts
    for j in range(<Py_ssize_t>ks.size()):
        kv[j] = ks[j]
        cv[j] = cs[j]
    return keys, counts


def centroid_groups(starts, node_idx, rssi, node_x, node_y,
                    double p0, double n_exp, double g):
    cdef cnp.int64_t[::1] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef cnp.int64_t[::1] nd = np.ascontiguousarray(node_idx, dtype=np.int64)
    cdef double[::1] rs = np.ascontiguousarray(rssi, dtype=np.float64)
    cdef double[::1] nx = np.ascontiguousarray(node_x, dtype=np.float64)
    cdef double[::1] ny = np.ascontiguousarray(node_y, dtype=np.float64)
    cdef Py_ssize_t m = st.shape[0] - 1
    if m <= 0:
        return np.empty(0), np.empty(0), np.empty(0, np.int64)
    cdef Py_ssize_t n_nodes = nx.shape[0]
    out_x = np.empty(m)
    out_y = np.empty(m)
    out_used = np.empty(m, dtype=np.int64)
    cdef double[::1] ox = out_x
    cdef double[::1] oy = out_y
    cdef cnp.int64_t[::1] ou = out_used
    best_arr = np.empty(n_nodes)
    touched_arr = np.empty(n_nodes, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef cnp.int64_t[::1] touched = touched_arr
    seen_arr = np.zeros(n_nodes, dtype=np.uint8)
    cdef unsigned char[::1] seen = seen_arr
    cdef Py_ssize_t k, i, j, nt, node
    cdef double w, sw, sx, sy, scale = 1.0 / (10.0 * n_exp)
    for k in range(m):
        if st[k + 1] <= st[k]:
            raise ValueError("every group needs at least one sighting")
    with nogil:
        for k in range(m):
            nt = 0
            for i in range(st[k], st[k + 1]):
                node = nd[i]
                if not seen[node]:
                    seen[node] = 1
                    best[node] = rs[i]
                    touched[nt] = node
                    nt += 1
                elif rs[i] > best[node]:
                    best[node] = rs[i]
            sw = 0.0
            sx = 0.0
            sy = 0.0
            for j in range(nt):
                node = touched[j]
                w = pow(10.0, g * (best[node] - p0) * scale)
                sw += w
                sx += w * nx[node]
                sy += w * ny[node]
                seen[node] = 0
            if nt == 1:
                # a lone node is its own centroid; skip the w*x/w round trip
                ox[k] = nx[touched[0]]
                oy[k] = ny[touched[0]]
            else:
                ox[k] = sx / sw
                oy[k] = sy / sw
            ou[k] = nt
    return out_x, out_y, out_used


def bin_points(x, y, double x0, double y0, double cell, Py_ssize_t rows, Py_ssize_t cols):
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(y, dtype=np.float64)
    counts = np.zeros((rows, cols), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cv = counts
    cdef Py_ssize_t n = xs.shape[0], i
    cdef double fr, fc
    cdef long overflow = 0
    with nogil:
        for i in range(n):
            fc = floor((xs[i] - x0) / cell)
            fr = floor((ys[i] - y0) / cell)
            if fc >= 0 and fc < cols and fr >= 0 and fr < rows:
                cv[<Py_ssize_t>fr, <Py_ssize_t>fc] += 1
            else:
                overflow += 1
    return counts, int(overflow)
