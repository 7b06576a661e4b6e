"""Compiled inner loops: HNSW graph traversal and RANSAC hypothesis solving.

The graph kernels work on dense internal node indices and unit-normalised
float32 vectors, so the distance is ``1 - <a, b>``. Adjacency for one layer
is a 2D int64 array ``links[row, slot]`` with ``counts[row]`` valid slots;
``rows[node]`` maps a node index to its row in that layer's table.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, fastmath=True)
def _dist(vecs, a, b):
    acc = np.float32(0.0)
    for t in range(vecs.shape[1]):
        acc += vecs[a, t] * vecs[b, t]
    return np.float32(1.0) - acc


@njit(cache=True, nogil=True, fastmath=True)
def _dist_q(vecs, q, b):
    acc = np.float32(0.0)
    for t in range(q.shape[0]):
        acc += q[t] * vecs[b, t]
    return np.float32(1.0) - acc


# Binary min-heap over lexicographic (key, ident) pairs stored in parallel arrays.
@njit(cache=True, nogil=True)
def _less(ka, ia, kb, ib):
    return ka < kb or (ka == kb and ia < ib)


@njit(cache=True, nogil=True)
def _push(keys, idents, size, key, ident):
    i = size
    keys[i] = key
    idents[i] = ident
    while i > 0:
        parent = (i - 1) >> 1
        if _less(keys[i], idents[i], keys[parent], idents[parent]):
            keys[i], keys[parent] = keys[parent], keys[i]
            idents[i], idents[parent] = idents[parent], idents[i]
            i = parent
        else:
            break
    return size + 1


@njit(cache=True, nogil=True)
def _pop(keys, idents, size):
    size -= 1
    keys[0] = keys[size]
    idents[0] = idents[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _less(keys[right], idents[right], keys[left], idents[left]):
            best = right
        if _less(keys[best], idents[best], keys[i], idents[i]):
            keys[i], keys[best] = keys[best], keys[i]
            idents[i], idents[best] = idents[best], idents[i]
            i = best
        else:
            break
    return size


@njit(cache=True, nogil=True)
def search_layer(vecs, q, links, counts, rows, entries, ef, n_nodes):
    """Best-first search of one layer; returns (ids, dists) sorted ascending."""
    visited = np.zeros(n_nodes, np.uint8)
    cap = n_nodes + entries.shape[0] + 1
    cand_k = np.empty(cap, np.float32)
    cand_i = np.empty(cap, np.int64)
    # result set is a max-heap, stored as a min-heap over (-dist, -id)
    res_k = np.empty(ef + 2, np.float32)
    res_i = np.empty(ef + 2, np.int64)
    n_cand = 0
    n_res = 0

    for j in range(entries.shape[0]):
        e = entries[j]
        if visited[e]:
            continue
        visited[e] = 1
        d = _dist_q(vecs, q, e)
        n_cand = _push(cand_k, cand_i, n_cand, d, e)
        n_res = _push(res_k, res_i, n_res, -d, -e)
        if n_res > ef:
            n_res = _pop(res_k, res_i, n_res)

    while n_cand > 0:
        d_c = cand_k[0]
        c = cand_i[0]
        n_cand = _pop(cand_k, cand_i, n_cand)
        if d_c > -res_k[0]:
            break
        row = rows[c]
        for s in range(counts[row]):
            e = links[row, s]
            if visited[e]:
                continue
            visited[e] = 1
            d = _dist_q(vecs, q, e)
            worst_d = -res_k[0]
            worst_i = -res_i[0]
            if n_res < ef or _less(d, e, worst_d, worst_i):
                n_cand = _push(cand_k, cand_i, n_cand, d, e)
                n_res = _push(res_k, res_i, n_res, -d, -e)
                if n_res > ef:
                    n_res = _pop(res_k, res_i, n_res)

    out_i = np.empty(n_res, np.int64)
    out_d = np.empty(n_res, np.float32)
    for j in range(n_res - 1, -1, -1):
        out_d[j] = -res_k[0]
        out_i[j] = -res_i[0]
        n_res = _pop(res_k, res_i, n_res)
    return out_i, out_d


@njit(cache=True, nogil=True)
def select_neighbors(vecs, cand_ids, cand_dists, max_links):
    """Diversifying neighbour selection.

    ``cand_*`` must be sorted by (distance to base, id). A candidate is kept
    only if it is strictly closer to the base than to every neighbour kept so
    far.
    """
    keep = np.empty(max_links, np.int64)
    keep_d = np.empty(max_links, np.float32)
    n_keep = 0
    for j in range(cand_ids.shape[0]):
        if n_keep >= max_links:
            break
        c = cand_ids[j]
        d_c = cand_dists[j]
        good = True
        for s in range(n_keep):
            if _dist(vecs, c, keep[s]) <= d_c:
                good = False
                break
        if good:
            keep[n_keep] = c
            keep_d[n_keep] = d_c
            n_keep += 1
    return keep[:n_keep], keep_d[:n_keep]


@njit(cache=True, nogil=True)
def add_link(vecs, links, dists, counts, row, base, new, new_dist, max_links):
    """Append ``new`` to ``base``'s list; re-run the selection on overflow."""
    n = counts[row]
    if n < max_links:
        links[row, n] = new
        dists[row, n] = new_dist
        counts[row] = n + 1
        return
    ids = np.empty(n + 1, np.int64)
    ds = np.empty(n + 1, np.float32)
    for s in range(n):
        ids[s] = links[row, s]
        ds[s] = dists[row, s]
    ids[n] = new
    ds[n] = new_dist
    # insertion sort keeps the (distance, id) order total and deterministic
    for a in range(1, n + 1):
        kd = ds[a]
        ki = ids[a]
        b = a - 1
        while b >= 0 and _less(kd, ki, ds[b], ids[b]):
            ds[b + 1] = ds[b]
            ids[b + 1] = ids[b]
            b -= 1
        ds[b + 1] = kd
        ids[b + 1] = ki
    keep, keep_d = select_neighbors(vecs, ids, ds, max_links)
    for s in range(keep.shape[0]):
        links[row, s] = keep[s]
        dists[row, s] = keep_d[s]
    counts[row] = keep.shape[0]


@njit(cache=True, nogil=True)
def epipolar_null_vectors(p1, p2, samples, rel_tol):
    """Null vector of each sample's 8x9 epipolar system.

    ``p1``/``p2`` are (N, 3) normalised homogeneous points, ``samples`` is
    (H, 8). Gaussian elimination with complete pivoting; a sample is flagged
    invalid when its smallest pivot is below ``rel_tol`` times the largest.
    """
    H = samples.shape[0]
    out = np.zeros((H, 9))
    valid = np.zeros(H, np.bool_)
    A = np.empty((8, 9))
    perm = np.empty(9, np.int64)
    y = np.empty(9)
    for h in range(H):
        for r in range(8):
            a = samples[h, r]
            for i in range(3):
                for j in range(3):
                    A[r, 3 * i + j] = p2[a, i] * p1[a, j]
        for j in range(9):
            perm[j] = j
        ok = True
        first_pivot = 0.0
        for k in range(8):
            best = -1.0
            bi = k
            bj = k
            for i in range(k, 8):
                for j in range(k, 9):
                    v = abs(A[i, j])
                    if v > best:
                        best = v
                        bi = i
                        bj = j
            if k == 0:
                first_pivot = best
            if best <= rel_tol * first_pivot or best == 0.0:
                ok = False
                break
            if bi != k:
                for j in range(9):
                    A[k, j], A[bi, j] = A[bi, j], A[k, j]
            if bj != k:
                for i in range(8):
                    A[i, k], A[i, bj] = A[i, bj], A[i, k]
                perm[k], perm[bj] = perm[bj], perm[k]
            piv = A[k, k]
            for i in range(k + 1, 8):
                f = A[i, k] / piv
                if f != 0.0:
                    for j in range(k, 9):
                        A[i, j] -= f * A[k, j]
        if not ok:
            continue
        y[8] = 1.0
        for k in range(7, -1, -1):
            acc = 0.0
            for j in range(k + 1, 9):
                acc += A[k, j] * y[j]
            y[k] = -acc / A[k, k]
        norm = 0.0
        for j in range(9):
            norm += y[j] * y[j]
        norm = np.sqrt(norm)
        for j in range(9):
            out[h, perm[j]] = y[j] / norm
        valid[h] = True
    return out, valid
