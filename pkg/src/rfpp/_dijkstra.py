"""Dijkstra on an implicit regular grid graph with a few extra terminal nodes.

Grid node n (C order over ``shape``) is joined to n + offsets[o] with weight
W[o, n] for every half-stencil offset o; edges are undirected.  Terminal t
is node N + t with an explicit adjacency list (grid nodes or other
terminals).  ``attach[n]`` marks grid nodes adjacent to some terminal.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _push(hk, hv, size, key, val):
    if size == hk.shape[0]:
        nk = np.empty(2 * size, np.float64)
        nv = np.empty(2 * size, np.int64)
        nk[:size] = hk
        nv[:size] = hv
        hk, hv = nk, nv
    i = size
    hk[i] = key
    hv[i] = val
    while i > 0:
        p = (i - 1) >> 1
        if hk[p] <= hk[i]:
            break
        hk[p], hk[i] = hk[i], hk[p]
        hv[p], hv[i] = hv[i], hv[p]
        i = p
    return hk, hv, size + 1


@njit(cache=True)
def _pop(hk, hv, size):
    key = hk[0]
    val = hv[0]
    size -= 1
    hk[0] = hk[size]
    hv[0] = hv[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        if l + 1 < size and hk[l + 1] < hk[l]:
            c = l + 1
        if hk[i] <= hk[c]:
            break
        hk[c], hk[i] = hk[i], hk[c]
        hv[c], hv[i] = hv[i], hv[c]
        i = c
    return key, val, size


@njit(cache=True)
def grid_dijkstra(shape, offsets, W, tptr, tnode, tw, attach, source, limit):
    ndim = shape.shape[0]
    N = 1
    for a in range(ndim):
        N *= shape[a]
    T = tptr.shape[0] - 1
    total = N + T
    strides = np.empty(ndim, np.int64)
    s = 1
    for a in range(ndim - 1, -1, -1):
        strides[a] = s
        s *= shape[a]
    H = offsets.shape[0]
    lin = np.zeros(H, np.int64)
    for o in range(H):
        for a in range(ndim):
            lin[o] += offsets[o, a] * strides[a]

    dist = np.full(total, np.inf)
    pred = np.full(total, -1, np.int64)
    done = np.zeros(total, np.bool_)
    hk = np.empty(1024, np.float64)
    hv = np.empty(1024, np.int64)
    size = 0
    dist[source] = 0.0
    hk, hv, size = _push(hk, hv, size, 0.0, source)
    coords = np.empty(ndim, np.int64)

    while size > 0:
        d, u, size = _pop(hk, hv, size)
        if done[u]:
            continue
        if d > limit:
            break
        done[u] = True
        if u < N:
            rem = u
            for a in range(ndim):
                coords[a] = rem // strides[a]
                rem -= coords[a] * strides[a]
            for o in range(H):
                fwd = True
                bwd = True
                for a in range(ndim):
                    c = coords[a] + offsets[o, a]
                    if c < 0 or c >= shape[a]:
                        fwd = False
                    c = coords[a] - offsets[o, a]
                    if c < 0 or c >= shape[a]:
                        bwd = False
                if fwd:
                    v = u + lin[o]
                    nd = d + W[o, u]
                    if nd < dist[v]:
                        dist[v] = nd
                        pred[v] = u
                        hk, hv, size = _push(hk, hv, size, nd, v)
                if bwd:
                    v = u - lin[o]
                    nd = d + W[o, v]
                    if nd < dist[v]:
                        dist[v] = nd
                        pred[v] = u
                        hk, hv, size = _push(hk, hv, size, nd, v)
            if attach[u]:
                for t in range(T):
                    for p in range(tptr[t], tptr[t + 1]):
                        if tnode[p] == u:
                            v = N + t
                            nd = d + tw[p]
                            if nd < dist[v]:
                                dist[v] = nd
                                pred[v] = u
                                hk, hv, size = _push(hk, hv, size, nd, v)
        else:
            t = u - N
            for p in range(tptr[t], tptr[t + 1]):
                v = tnode[p]
                nd = d + tw[p]
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = u
                    hk, hv, size = _push(hk, hv, size, nd, v)
    return dist, pred
