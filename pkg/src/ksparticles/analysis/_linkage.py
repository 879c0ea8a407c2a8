"""Single-linkage dendrograms with per-node dispersion, computed in numba.

Adding a point never lowers a dispersion, so along any root-ward path of the
dendrogram ``R_K`` is nondecreasing; that makes "maximal cluster with
``R_K <= eps``" well defined and cheap.
"""

import numpy as np
import numba as nb


@nb.njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@nb.njit(cache=True)
def dendrogram(x, members, sizes, disp, iso, node_parent):
    """Fill per-merge arrays for the single-linkage tree of ``x``.

    Merge ``m`` (``0 <= m < n-1``) creates a node whose membership row is
    ``members[m]``; ``disp[m]`` is its dispersion, ``iso[m]`` the smallest
    ``R_{K+j}`` over outside particles ``j`` (``inf`` at the root) and
    ``node_parent[m]`` the merge that absorbs it (``-1`` at the root).
    """
    n = x.shape[0]
    npairs = n * (n - 1) // 2
    d2 = np.empty(npairs)
    pi = np.empty(npairs, dtype=np.int64)
    pj = np.empty(npairs, dtype=np.int64)
    p = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            d2[p] = dx * dx + dy * dy
            pi[p] = i
            pj[p] = j
            p += 1
    order = np.argsort(d2, kind="mergesort")
    parent = np.arange(n)
    node_of = np.full(n, -1, dtype=np.int64)
    cnt = np.ones(n)
    sx = x[:, 0].copy()
    sy = x[:, 1].copy()
    sq = x[:, 0] ** 2 + x[:, 1] ** 2
    nxt = np.full(n, -1, dtype=np.int64)
    tail = np.arange(n)
    m = 0
    for q in range(npairs):
        if m == n - 1:
            break
        a = _find(parent, pi[order[q]])
        b = _find(parent, pj[order[q]])
        if a == b:
            continue
        if node_of[a] >= 0:
            node_parent[node_of[a]] = m
        if node_of[b] >= 0:
            node_parent[node_of[b]] = m
        parent[b] = a
        cnt[a] += cnt[b]
        sx[a] += sx[b]
        sy[a] += sy[b]
        sq[a] += sq[b]
        nxt[tail[a]] = b
        tail[a] = tail[b]
        node_of[a] = m
        k = cnt[a]
        cx = sx[a] / k
        cy = sy[a] / k
        # centred sum of squares, recomputed from members to avoid cancellation
        r = 0.0
        for i in range(n):
            members[m, i] = False
        c = a
        while c >= 0:
            members[m, c] = True
            dx = x[c, 0] - cx
            dy = x[c, 1] - cy
            r += dx * dx + dy * dy
            c = nxt[c]
        disp[m] = r
        sizes[m] = int(k)
        best = np.inf
        for j in range(n):
            if not members[m, j]:
                dx = x[j, 0] - cx
                dy = x[j, 1] - cy
                v = dx * dx + dy * dy
                if v < best:
                    best = v
        iso[m] = r + k / (k + 1.0) * best
        node_parent[m] = -1
        m += 1


@nb.njit(cache=True)
def maximal_clusters(frames, eps, out_frame, out_members, out_disp, out_iso):
    """Maximal single-linkage clusters with dispersion ``<= eps`` in every frame.

    Writes one row per (frame, cluster) into the ``out_*`` buffers and
    returns the number of rows; callers size buffers at ``len(frames) * n // 2``.
    """
    n_frames, n = frames.shape[0], frames.shape[1]
    members = np.empty((n - 1, n), dtype=np.bool_)
    sizes = np.empty(n - 1, dtype=np.int64)
    disp = np.empty(n - 1)
    iso = np.empty(n - 1)
    node_parent = np.empty(n - 1, dtype=np.int64)
    rows = 0
    for f in range(n_frames):
        dendrogram(frames[f], members, sizes, disp, iso, node_parent)
        for m in range(n - 1):
            if disp[m] <= eps and (node_parent[m] < 0 or disp[node_parent[m]] > eps):
                out_frame[rows] = f
                out_members[rows] = members[m]
                out_disp[rows] = disp[m]
                out_iso[rows] = iso[m]
                rows += 1
    return rows


@nb.njit(cache=True)
def min_pair_sq(frames):
    n_frames, n = frames.shape[0], frames.shape[1]
    out = np.empty(n_frames)
    for f in range(n_frames):
        best = np.inf
        for i in range(n):
            for j in range(i + 1, n):
                dx = frames[f, i, 0] - frames[f, j, 0]
                dy = frames[f, i, 1] - frames[f, j, 1]
                v = dx * dx + dy * dy
                if v < best:
                    best = v
        out[f] = best
    return out
