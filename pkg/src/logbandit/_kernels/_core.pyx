# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: tree construction, tree traversal, ad-placement episodes.

Mirror of ``logbandit._kernels._pure``. Both backends draw randomness as raw
doubles from the same numpy bit generator, in the same order, so results are
bit-identical across backends for identical seeds. Keep the two files in
lockstep when changing either.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, log, sqrt
from libc.stdlib cimport free, malloc, qsort

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND = "compiled"

cdef const char *CAPSULE_NAME = "BitGenerator"


cdef inline bitgen_t *get_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, CAPSULE_NAME)


cdef struct SortPair:
    double value
    int pos


cdef int pair_cmp(const void *a, const void *b) noexcept nogil:
    cdef SortPair *pa = <SortPair *> a
    cdef SortPair *pb = <SortPair *> b
    if pa.value < pb.value:
        return -1
    if pa.value > pb.value:
        return 1
    if pa.pos < pb.pos:
        return -1
    if pa.pos > pb.pos:
        return 1
    return 0


def build_tree(cnp.ndarray[cnp.float64_t, ndim=2] XJ,
               cnp.ndarray[cnp.float64_t, ndim=1] yJ,
               cnp.ndarray[cnp.float64_t, ndim=2] XI,
               cnp.ndarray[cnp.int32_t, ndim=1] aI,
               cnp.ndarray[cnp.float64_t, ndim=1] yI,
               int n_actions, double alpha, int min_action_count, int mtry,
               object rng):
    """Twin of ``_pure.build_tree``; see that docstring for the contract."""
    cdef bitgen_t *bg = get_bitgen(rng)
    cdef int nJ = XJ.shape[0]
    cdef int nI = XI.shape[0]
    cdef int d = XI.shape[1]
    cdef int K = n_actions
    cdef int m = min_action_count
    cdef int cap = 2 * (nJ + nI) + 3
    cdef int buf = max(nJ, nI, 1)

    feature_arr = np.full(cap, -1, dtype=np.int32)
    threshold_arr = np.zeros(cap, dtype=np.float64)
    left_arr = np.full(cap, -1, dtype=np.int32)
    right_arr = np.full(cap, -1, dtype=np.int32)
    start_j_arr = np.zeros(cap, dtype=np.int32)
    end_j_arr = np.zeros(cap, dtype=np.int32)
    start_i_arr = np.zeros(cap, dtype=np.int32)
    end_i_arr = np.zeros(cap, dtype=np.int32)
    underfilled_arr = np.zeros(cap, dtype=np.uint8)
    leaf_sum_arr = np.zeros((cap, K), dtype=np.float64)
    leaf_cnt_arr = np.zeros((cap, K), dtype=np.int64)
    idx_j_arr = np.arange(nJ, dtype=np.int32)
    idx_i_arr = np.arange(nI, dtype=np.int32)

    cdef cnp.int32_t[:] feature = feature_arr
    cdef cnp.float64_t[:] threshold = threshold_arr
    cdef cnp.int32_t[:] left = left_arr
    cdef cnp.int32_t[:] right = right_arr
    cdef cnp.int32_t[:] start_j = start_j_arr
    cdef cnp.int32_t[:] end_j = end_j_arr
    cdef cnp.int32_t[:] start_i = start_i_arr
    cdef cnp.int32_t[:] end_i = end_i_arr
    cdef cnp.uint8_t[:] underfilled = underfilled_arr
    cdef cnp.float64_t[:, :] leaf_sum = leaf_sum_arr
    cdef cnp.int64_t[:, :] leaf_cnt = leaf_cnt_arr
    cdef cnp.int32_t[:] idx_j = idx_j_arr
    cdef cnp.int32_t[:] idx_i = idx_i_arr

    cdef cnp.float64_t[:, :] xj = XJ
    cdef cnp.float64_t[:] yj = yJ
    cdef cnp.float64_t[:, :] xi = XI
    cdef cnp.int32_t[:] ai = aI
    cdef cnp.float64_t[:] yi = yI

    # Reusable per-node work buffers.
    cdef SortPair *pairs = <SortPair *> malloc(buf * sizeof(SortPair))
    cdef double *vj_sorted = <double *> malloc(max(nJ, 1) * sizeof(double))
    cdef double *cums = <double *> malloc(max(nJ, 1) * sizeof(double))
    cdef double *vi_sorted = <double *> malloc(max(nI, 1) * sizeof(double))
    cdef int *ai_sorted = <int *> malloc(max(nI, 1) * sizeof(int))
    cdef long *counts = <long *> malloc(K * sizeof(long))
    cdef long *cnt_left = <long *> malloc(K * sizeof(long))
    cdef int *feats = <int *> malloc(max(d, 1) * sizeof(int))
    cdef int *stack = <int *> malloc(cap * sizeof(int))
    cdef int *tmp_idx = <int *> malloc(buf * sizeof(int))
    if (pairs == NULL or vj_sorted == NULL or cums == NULL or vi_sorted == NULL
            or ai_sorted == NULL or counts == NULL or cnt_left == NULL
            or feats == NULL or stack == NULL or tmp_idx == NULL):
        free(pairs); free(vj_sorted); free(cums); free(vi_sorted); free(ai_sorted)
        free(counts); free(cnt_left); free(feats); free(stack); free(tmp_idx)
        raise MemoryError()

    cdef int n_nodes = 1
    cdef int sp = 0
    cdef int node, sj, ej, si, ei, nj, ni
    cdef int fpos, f, i, j, k, a, row, pi, nc
    cdef int best_f, lchild, rchild, cut, cut_j, cut_i
    cdef double best_gain, best_thr, u
    cdef double total, lo, hi, thr, ls, rs, g
    cdef bint splittable, ok

    start_j[0] = 0; end_j[0] = nJ; start_i[0] = 0; end_i[0] = nI
    stack[sp] = 0; sp += 1

    try:
        while sp > 0:
            sp -= 1
            node = stack[sp]
            sj = start_j[node]; ej = end_j[node]
            si = start_i[node]; ei = end_i[node]
            nj = ej - sj; ni = ei - si

            for a in range(K):
                counts[a] = 0
            for i in range(si, ei):
                counts[ai[idx_i[i]]] += 1

            splittable = ni >= 2 * m * K and nj >= 2
            if splittable:
                for a in range(K):
                    if counts[a] < 2 * m:
                        splittable = False
                        break

            best_gain = -INFINITY
            best_f = -1
            best_thr = 0.0

            if splittable:
                # Partial Fisher-Yates feature subset: exactly mtry doubles.
                for j in range(d):
                    feats[j] = j
                for j in range(mtry):
                    u = bg.next_double(bg.state)
                    k = j + <int> (u * (d - j))
                    if k > d - 1:
                        k = d - 1
                    feats[j], feats[k] = feats[k], feats[j]

                for fpos in range(mtry):
                    f = feats[fpos]
                    # Stable sort of the node's J rows by feature value.
                    for i in range(nj):
                        pairs[i].value = xj[idx_j[sj + i], f]
                        pairs[i].pos = i
                    qsort(pairs, nj, sizeof(SortPair), pair_cmp)
                    total = 0.0
                    for i in range(nj):
                        vj_sorted[i] = pairs[i].value
                        total = total + yj[idx_j[sj + pairs[i].pos]]
                        cums[i] = total

                    # Sort the node's I rows of this feature.
                    for i in range(ni):
                        pairs[i].value = xi[idx_i[si + i], f]
                        pairs[i].pos = i
                    qsort(pairs, ni, sizeof(SortPair), pair_cmp)
                    for i in range(ni):
                        vi_sorted[i] = pairs[i].value
                        ai_sorted[i] = ai[idx_i[si + pairs[i].pos]]

                    for a in range(K):
                        cnt_left[a] = 0
                    pi = 0

                    for i in range(1, nj):
                        lo = vj_sorted[i - 1]
                        hi = vj_sorted[i]
                        if not lo < hi:
                            continue
                        thr = lo + (hi - lo) * 0.5
                        if not (thr > lo and thr < hi):
                            thr = lo
                        if not (i >= alpha * nj and (nj - i) >= alpha * nj):
                            continue
                        while pi < ni and vi_sorted[pi] <= thr:
                            cnt_left[ai_sorted[pi]] += 1
                            pi += 1
                        ok = True
                        for a in range(K):
                            if cnt_left[a] < m or counts[a] - cnt_left[a] < m:
                                ok = False
                                break
                        if not ok:
                            continue
                        ls = cums[i - 1]
                        rs = total - ls
                        g = ls * ls / (<double> i) + rs * rs / (<double> (nj - i))
                        if g > best_gain:
                            best_gain = g
                            best_f = f
                            best_thr = thr

            if best_f >= 0:
                # Order-preserving two-pass partition of idx_j and idx_i.
                cut = 0
                for i in range(sj, ej):
                    if xj[idx_j[i], best_f] <= best_thr:
                        tmp_idx[cut] = idx_j[i]
                        cut += 1
                nc = cut
                for i in range(sj, ej):
                    if not xj[idx_j[i], best_f] <= best_thr:
                        tmp_idx[nc] = idx_j[i]
                        nc += 1
                for i in range(nj):
                    idx_j[sj + i] = tmp_idx[i]
                cut_j = sj + cut

                cut = 0
                for i in range(si, ei):
                    if xi[idx_i[i], best_f] <= best_thr:
                        tmp_idx[cut] = idx_i[i]
                        cut += 1
                nc = cut
                for i in range(si, ei):
                    if not xi[idx_i[i], best_f] <= best_thr:
                        tmp_idx[nc] = idx_i[i]
                        nc += 1
                for i in range(ni):
                    idx_i[si + i] = tmp_idx[i]
                cut_i = si + cut

                lchild = n_nodes
                rchild = n_nodes + 1
                n_nodes += 2
                feature[node] = best_f
                threshold[node] = best_thr
                left[node] = lchild
                right[node] = rchild
                start_j[lchild] = sj; end_j[lchild] = cut_j
                start_i[lchild] = si; end_i[lchild] = cut_i
                start_j[rchild] = cut_j; end_j[rchild] = ej
                start_i[rchild] = cut_i; end_i[rchild] = ei
                stack[sp] = rchild; sp += 1
                stack[sp] = lchild; sp += 1
            else:
                for i in range(si, ei):
                    row = idx_i[i]
                    leaf_sum[node, ai[row]] += yi[row]
                for a in range(K):
                    leaf_cnt[node, a] = counts[a]
                ok = True
                for a in range(K):
                    if counts[a] < m:
                        ok = False
                        break
                underfilled[node] = 0 if ok else 1
    finally:
        free(pairs); free(vj_sorted); free(cums); free(vi_sorted); free(ai_sorted)
        free(counts); free(cnt_left); free(feats); free(stack); free(tmp_idx)

    sl = slice(0, n_nodes)
    return (feature_arr[sl].copy(), threshold_arr[sl].copy(), left_arr[sl].copy(),
            right_arr[sl].copy(), start_j_arr[sl].copy(), end_j_arr[sl].copy(),
            start_i_arr[sl].copy(), end_i_arr[sl].copy(), underfilled_arr[sl].copy(),
            idx_j_arr, idx_i_arr, leaf_sum_arr[sl].copy(), leaf_cnt_arr[sl].copy())


def tree_apply(cnp.ndarray[cnp.int32_t, ndim=1] feature,
               cnp.ndarray[cnp.float64_t, ndim=1] threshold,
               cnp.ndarray[cnp.int32_t, ndim=1] left,
               cnp.ndarray[cnp.int32_t, ndim=1] right,
               cnp.ndarray[cnp.float64_t, ndim=2] X):
    """Leaf node index for every row of X."""
    cdef int n = X.shape[0]
    out_arr = np.zeros(n, dtype=np.int32)
    cdef cnp.int32_t[:] out = out_arr
    cdef cnp.int32_t[:] feat = feature
    cdef cnp.float64_t[:] thr = threshold
    cdef cnp.int32_t[:] lf = left
    cdef cnp.int32_t[:] rt = right
    cdef cnp.float64_t[:, :] x = X
    cdef int i, node
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if x[i, feat[node]] <= thr[node]:
                node = lf[node]
            else:
                node = rt[node]
        out[i] = node
    return out_arr


def walk_leaf(cnp.ndarray[cnp.int32_t, ndim=1] feature,
              cnp.ndarray[cnp.float64_t, ndim=1] threshold,
              cnp.ndarray[cnp.int32_t, ndim=1] left,
              cnp.ndarray[cnp.int32_t, ndim=1] right,
              cnp.ndarray[cnp.float64_t, ndim=1] x):
    """Leaf node index for a single context vector."""
    cdef cnp.int32_t[:] feat = feature
    cdef cnp.float64_t[:] thr = threshold
    cdef cnp.int32_t[:] lf = left
    cdef cnp.int32_t[:] rt = right
    cdef cnp.float64_t[:] xv = x
    cdef int node = 0
    while feat[node] >= 0:
        if xv[feat[node]] <= thr[node]:
            node = lf[node]
        else:
            node = rt[node]
    return node


def forest_accumulate(packed, cnp.ndarray[cnp.float64_t, ndim=1] x, int n_actions):
    """Per-action (sum of leaf means, trees with data) over packed trees."""
    feature_o, threshold_o, left_o, right_o, leaf_sum_o, leaf_cnt_o, offsets_o = packed
    cdef cnp.int32_t[:] feat = feature_o
    cdef cnp.float64_t[:] thr = threshold_o
    cdef cnp.int32_t[:] lf = left_o
    cdef cnp.int32_t[:] rt = right_o
    cdef cnp.float64_t[:, :] lsum = leaf_sum_o
    cdef cnp.int64_t[:, :] lcnt = leaf_cnt_o
    cdef cnp.int64_t[:] offsets = offsets_o
    cdef cnp.float64_t[:] xv = x
    ratio_arr = np.zeros(n_actions, dtype=np.float64)
    present_arr = np.zeros(n_actions, dtype=np.int64)
    cdef cnp.float64_t[:] ratio = ratio_arr
    cdef cnp.int64_t[:] present = present_arr
    cdef int b, node, base, a
    cdef long c
    for b in range(offsets.shape[0] - 1):
        base = <int> offsets[b]
        node = base
        while feat[node] >= 0:
            if xv[feat[node]] <= thr[node]:
                node = base + lf[node]
            else:
                node = base + rt[node]
        for a in range(n_actions):
            c = lcnt[node, a]
            if c > 0:
                ratio[a] += lsum[node, a] / c
                present[a] += 1
    return ratio_arr, present_arr


def example1_ucb_em_episodes(cnp.ndarray[cnp.int64_t, ndim=2] clicks,
                             cnp.ndarray[cnp.int64_t, ndim=1] design,
                             cnp.ndarray[cnp.float64_t, ndim=1] rates,
                             int n_users, double beta, object rng):
    """Twin of ``_pure.example1_ucb_em_episodes``; see that docstring."""
    cdef bitgen_t *bg = get_bitgen(rng)
    cdef int n_episodes = clicks.shape[0]
    revenue_arr = np.zeros(n_episodes, dtype=np.float64)
    cdef cnp.float64_t[:] revenue = revenue_arr
    cdef cnp.int64_t[:, :] cl = clicks
    cdef cnp.int64_t[:] dz = design
    cdef cnp.float64_t[:] rate = rates

    cdef long ones[4]
    cdef long remaining[4]
    cdef bint stopped[2]
    cdef double mean[2]
    cdef long count[2]
    cdef int ep, t, u_type, a, cell
    cdef long draw
    cdef double clicks_total, y, u

    for ep in range(n_episodes):
        for cell in range(4):
            ones[cell] = cl[ep, cell]
            remaining[cell] = dz[cell]
        stopped[0] = False; stopped[1] = False
        mean[0] = 0.0; mean[1] = 0.0
        count[0] = 0; count[1] = 0
        clicks_total = 0.0
        for t in range(n_users):
            while not (stopped[0] and stopped[1]):
                u_type = 1 if bg.next_double(bg.state) < 0.5 else 0
                a = ucb_play2(mean, count, beta)
                if stopped[a]:
                    break
                cell = a * 2 + u_type
                if remaining[cell] == 0:
                    stopped[a] = True
                    break
                u = bg.next_double(bg.state)
                draw = <long> (u * remaining[cell])
                y = 1.0 if draw < ones[cell] else 0.0
                if y == 1.0:
                    ones[cell] -= 1
                remaining[cell] -= 1
                mean[a] = (count[a] * mean[a] + y) / (count[a] + 1)
                count[a] += 1
            u_type = 1 if bg.next_double(bg.state) < 0.5 else 0
            a = ucb_play2(mean, count, beta)
            y = 1.0 if bg.next_double(bg.state) < rate[a * 2 + u_type] else 0.0
            clicks_total += y
            mean[a] = (count[a] * mean[a] + y) / (count[a] + 1)
            count[a] += 1
        revenue[ep] = clicks_total
    return revenue_arr


cdef inline int ucb_play2(double *mean, long *count, double beta) noexcept nogil:
    cdef double total, log_term, s0, s1
    if count[0] == 0:
        return 0
    if count[1] == 0:
        return 1
    total = <double> (count[0] + count[1])
    log_term = log(total)
    s0 = mean[0] + beta * sqrt(2.0 * log_term / count[0])
    s1 = mean[1] + beta * sqrt(2.0 * log_term / count[1])
    return 0 if s0 >= s1 else 1
