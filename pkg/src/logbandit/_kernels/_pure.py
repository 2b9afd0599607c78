"""Pure-Python twin of the compiled kernels.

Every function here consumes randomness exclusively through single
``Generator.random()`` calls, in the same order as the Cython backend pulls
raw doubles from the same bit generator, so the two backends produce
bit-identical results from identical seeds. Keep the two implementations in
lockstep when changing either.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "pure"


def _feature_subset(d: int, mtry: int, rng: np.random.Generator) -> np.ndarray:
    """Partial Fisher-Yates draw of ``mtry`` distinct features (mtry doubles)."""
    feats = np.arange(d, dtype=np.int64)
    for j in range(mtry):
        k = j + int(rng.random() * (d - j))
        if k > d - 1:
            k = d - 1
        feats[j], feats[k] = feats[k], feats[j]
    return feats[:mtry]


def build_tree(XJ, yJ, XI, aI, yI, n_actions, alpha, min_action_count, mtry, rng):
    """Grow one axis-aligned tree by recursive variance-reduction splitting.

    Split placement uses only the J-sample (features and responses); the
    I-sample contributes per-action count constraints and the leaf
    sums/counts, never its responses. Returns flat node arrays:
    (feature, threshold, left, right, start_j, end_j, start_i, end_i,
    underfilled, idx_j, idx_i, leaf_sum, leaf_cnt).
    """
    nJ = XJ.shape[0]
    nI, d = XI.shape
    m = int(min_action_count)
    K = int(n_actions)
    cap = 2 * (nJ + nI) + 3

    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    start_j = np.zeros(cap, dtype=np.int32)
    end_j = np.zeros(cap, dtype=np.int32)
    start_i = np.zeros(cap, dtype=np.int32)
    end_i = np.zeros(cap, dtype=np.int32)
    underfilled = np.zeros(cap, dtype=np.uint8)
    leaf_sum = np.zeros((cap, K), dtype=np.float64)
    leaf_cnt = np.zeros((cap, K), dtype=np.int64)

    idx_j = np.arange(nJ, dtype=np.int32)
    idx_i = np.arange(nI, dtype=np.int32)

    n_nodes = 1
    start_j[0], end_j[0], start_i[0], end_i[0] = 0, nJ, 0, nI
    stack = [0]

    while stack:
        node = stack.pop()
        sj, ej = start_j[node], end_j[node]
        si, ei = start_i[node], end_i[node]
        nj, ni = ej - sj, ei - si

        counts = np.zeros(K, dtype=np.int64)
        ai_node = aI[idx_i[si:ei]]
        np.add.at(counts, ai_node, 1)

        splittable = ni >= 2 * m * K and nj >= 2 and counts.min() >= 2 * m
        best_gain = -math.inf
        best_f = -1
        best_thr = 0.0

        if splittable:
            feats = _feature_subset(d, mtry, rng)
            rows_j = idx_j[sj:ej]
            rows_i = idx_i[si:ei]
            for f in feats:
                vj = XJ[rows_j, f]
                order = np.argsort(vj, kind="stable")
                v_sorted = vj[order]
                y_sorted = yJ[rows_j][order]
                cums = np.cumsum(y_sorted)
                total = cums[-1]

                distinct = v_sorted[:-1] < v_sorted[1:]
                if not distinct.any():
                    continue
                pos = np.nonzero(distinct)[0] + 1  # left-side sizes
                lo = v_sorted[pos - 1]
                hi = v_sorted[pos]
                thr = lo + (hi - lo) * 0.5
                # Keep routing (x <= thr) consistent with the prefix cut.
                thr = np.where((thr > lo) & (thr < hi), thr, lo)

                frac_ok = (pos >= alpha * nj) & ((nj - pos) >= alpha * nj)
                if not frac_ok.any():
                    continue

                vi = XI[rows_i, f]
                action_ok = np.ones(len(pos), dtype=bool)
                for a in range(K):
                    va = np.sort(vi[ai_node == a])
                    cnt_left = np.searchsorted(va, thr, side="right")
                    action_ok &= (cnt_left >= m) & ((counts[a] - cnt_left) >= m)

                legal = frac_ok & action_ok
                if not legal.any():
                    continue

                ls = cums[pos - 1]
                nl = pos.astype(np.float64)
                nr = (nj - pos).astype(np.float64)
                rs = total - ls
                gains = ls * ls / nl + rs * rs / nr
                gains = np.where(legal, gains, -math.inf)
                i_best = int(np.argmax(gains))
                if gains[i_best] > best_gain:
                    best_gain = float(gains[i_best])
                    best_f = int(f)
                    best_thr = float(thr[i_best])

        if best_f >= 0:
            rows_j = idx_j[sj:ej]
            rows_i = idx_i[si:ei]
            mask_j = XJ[rows_j, best_f] <= best_thr
            mask_i = XI[rows_i, best_f] <= best_thr
            idx_j[sj:ej] = np.concatenate([rows_j[mask_j], rows_j[~mask_j]])
            idx_i[si:ei] = np.concatenate([rows_i[mask_i], rows_i[~mask_i]])
            cut_j = sj + int(mask_j.sum())
            cut_i = si + int(mask_i.sum())

            lchild, rchild = n_nodes, n_nodes + 1
            n_nodes += 2
            feature[node] = best_f
            threshold[node] = best_thr
            left[node], right[node] = lchild, rchild
            start_j[lchild], end_j[lchild] = sj, cut_j
            start_i[lchild], end_i[lchild] = si, cut_i
            start_j[rchild], end_j[rchild] = cut_j, ej
            start_i[rchild], end_i[rchild] = cut_i, ei
            stack.append(rchild)
            stack.append(lchild)
        else:
            rows_i = idx_i[si:ei]
            np.add.at(leaf_sum[node], aI[rows_i], yI[rows_i])
            leaf_cnt[node] = counts
            underfilled[node] = 1 if counts.min() < m else 0

    sl = slice(0, n_nodes)
    return (feature[sl].copy(), threshold[sl].copy(), left[sl].copy(),
            right[sl].copy(), start_j[sl].copy(), end_j[sl].copy(),
            start_i[sl].copy(), end_i[sl].copy(), underfilled[sl].copy(),
            idx_j, idx_i, leaf_sum[sl].copy(), leaf_cnt[sl].copy())


def tree_apply(feature, threshold, left, right, X) -> np.ndarray:
    """Leaf node index for every row of X."""
    n = X.shape[0]
    nodes = np.zeros(n, dtype=np.int32)
    active = feature[nodes] >= 0
    while active.any():
        idx = np.nonzero(active)[0]
        cur = nodes[idx]
        go_left = X[idx, feature[cur]] <= threshold[cur]
        nodes[idx] = np.where(go_left, left[cur], right[cur])
        active[idx] = feature[nodes[idx]] >= 0
    return nodes


def walk_leaf(feature, threshold, left, right, x) -> int:
    """Leaf node index for a single context vector."""
    node = 0
    while feature[node] >= 0:
        node = left[node] if x[feature[node]] <= threshold[node] else right[node]
    return int(node)


def forest_accumulate(packed, x, n_actions):
    """Per-action (sum of leaf means, number of trees with data) over a forest.

    ``packed`` is the tuple of concatenated node arrays plus tree offsets
    produced by the forest container.
    """
    feature, threshold, left, right, leaf_sum, leaf_cnt, offsets = packed
    ratio_sum = np.zeros(n_actions, dtype=np.float64)
    present = np.zeros(n_actions, dtype=np.int64)
    for b in range(len(offsets) - 1):
        base = offsets[b]
        node = base
        while feature[node] >= 0:
            node = base + (left[node] if x[feature[node]] <= threshold[node]
                           else right[node])
        for a in range(n_actions):
            c = leaf_cnt[node, a]
            if c > 0:
                ratio_sum[a] += leaf_sum[node, a] / c
                present[a] += 1
    return ratio_sum, present


def example1_ucb_em_episodes(clicks, design, rates, n_users, beta, rng):
    """Simulate UCB warm-started by exact matching on two-action ad placement.

    One episode per row of ``clicks``; entries are the logged click counts in
    cell order (action 0/type 0, action 0/type 1, action 1/type 0,
    action 1/type 1), ``design`` the matching logged impression counts, and
    ``rates`` the true per-cell click probabilities. Returns per-episode
    online click totals. Types are drawn 50/50; the exact-matching evaluator
    serves logged outcomes per (type, action) cell, stopping an action on its
    first empty cell lookup.
    """
    n_episodes = clicks.shape[0]
    revenue = np.zeros(n_episodes, dtype=np.float64)
    for ep in range(n_episodes):
        # Per-cell remaining counts of 1-outcomes and of all records.
        ones = [int(clicks[ep, c]) for c in range(4)]
        remaining = [int(design[c]) for c in range(4)]
        stopped = [False, False]
        mean = [0.0, 0.0]
        count = [0, 0]
        clicks_total = 0.0
        for t in range(n_users):
            # Offline phase: virtual plays until the evaluator returns NULL.
            while not (stopped[0] and stopped[1]):
                u_type = 1 if rng.random() < 0.5 else 0
                a = _ucb_play2(mean, count, beta)
                if stopped[a]:
                    break
                cell = a * 2 + u_type
                if remaining[cell] == 0:
                    stopped[a] = True
                    break
                draw = int(rng.random() * remaining[cell])
                y = 1.0 if draw < ones[cell] else 0.0
                if y == 1.0:
                    ones[cell] -= 1
                remaining[cell] -= 1
                mean[a] = (count[a] * mean[a] + y) / (count[a] + 1)
                count[a] += 1
            # Online phase.
            u_type = 1 if rng.random() < 0.5 else 0
            a = _ucb_play2(mean, count, beta)
            y = 1.0 if rng.random() < rates[a * 2 + u_type] else 0.0
            clicks_total += y
            mean[a] = (count[a] * mean[a] + y) / (count[a] + 1)
            count[a] += 1
        revenue[ep] = clicks_total
    return revenue


def _ucb_play2(mean, count, beta):
    if count[0] == 0:
        return 0
    if count[1] == 0:
        return 1
    total = count[0] + count[1]
    log_term = math.log(total)
    s0 = mean[0] + beta * math.sqrt(2.0 * log_term / count[0])
    s1 = mean[1] + beta * math.sqrt(2.0 * log_term / count[1])
    return 0 if s0 >= s1 else 1
