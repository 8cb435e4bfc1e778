"""Hot loops of the lifting solver.

Every kernel is plain Python over numpy arrays; ``njit`` compiles it when
numba is available (see ``_accel``).  ``bruteforce_numpy`` is the vectorized
route used when numba is disabled.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

# Park-Miller minimal standard generator; identical results compiled or not.
_PM_A = 48271
_PM_M = 2147483647


@njit(cache=True)
def pm_next(state):
    return (state * _PM_A) % _PM_M


@njit(cache=True)
def objective(k, ea, eb, costs):
    off = costs.shape[1] // 2
    total = 0.0
    for e in range(ea.shape[0]):
        total += costs[e, k[eb[e]] - k[ea[e]] + off]
    return total


@njit(cache=True)
def bruteforce(ncells, ea, eb, costs, K, gauge):
    """Exhaustive search in lexicographic order; strict improvement keeps the
    lexicographically smallest minimizer."""
    k = np.full(ncells, -K, dtype=np.int64)
    k[gauge] = 0
    best = np.inf
    best_k = k.copy()
    free = np.empty(ncells - 1, dtype=np.int64)
    m = 0
    for c in range(ncells):
        if c != gauge:
            free[m] = c
            m += 1
    while True:
        val = objective(k, ea, eb, costs)
        if val < best:
            best = val
            best_k[:] = k
        # odometer over free cells, last index fastest
        pos = m - 1
        while pos >= 0:
            c = free[pos]
            if k[c] < K:
                k[c] += 1
                break
            k[c] = -K
            pos -= 1
        if pos < 0:
            break
    return best_k, best


def bruteforce_numpy(ncells, ea, eb, costs, K, gauge, chunk=1 << 16):
    """Vectorized twin of :func:`bruteforce` (same order, same tie rule)."""
    free = np.array([c for c in range(ncells) if c != gauge], dtype=np.int64)
    base = 2 * K + 1
    total = base ** len(free)
    powers = base ** np.arange(len(free) - 1, -1, -1, dtype=np.int64)
    best, best_idx = np.inf, 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        labels = np.zeros((len(idx), ncells), dtype=np.int64)
        labels[:, free] = (idx[:, None] // powers) % base - K
        dk = labels[:, eb] - labels[:, ea] + costs.shape[1] // 2
        vals = costs[np.arange(len(ea)), dk].sum(axis=1)
        j = int(np.argmin(vals))
        if vals[j] < best:
            best, best_idx = float(vals[j]), int(idx[j])
    k = np.zeros(ncells, dtype=np.int64)
    k[free] = (best_idx // powers) % base - K
    return k, best


@njit(cache=True)
def _bfs_order(nx, ny, seed_kind, seed_val, conn8, order, mark, queue):
    """Fill ``order`` with cells in BFS order.

    ``seed_kind`` 0: single cell ``seed_val``; 1..4: all cells of one box side
    (x-min, x-max, y-min, y-max) as simultaneous sources.
    """
    n = nx * ny
    for c in range(n):
        mark[c] = False
    head = 0
    tail = 0
    if seed_kind == 0:
        queue[tail] = seed_val
        tail += 1
        mark[seed_val] = True
    else:
        if seed_kind <= 2:
            i = 0 if seed_kind == 1 else nx - 1
            for j in range(ny):
                c = i * ny + j
                queue[tail] = c
                tail += 1
                mark[c] = True
        else:
            j = 0 if seed_kind == 3 else ny - 1
            for i in range(nx):
                c = i * ny + j
                queue[tail] = c
                tail += 1
                mark[c] = True
    while head < tail:
        c = queue[head]
        order[head] = c
        head += 1
        i = c // ny
        j = c - i * ny
        for di in range(-1, 2):
            for dj in range(-1, 2):
                if di == 0 and dj == 0:
                    continue
                if not conn8 and di != 0 and dj != 0:
                    continue
                ii = i + di
                jj = j + dj
                if ii < 0 or ii >= nx or jj < 0 or jj >= ny:
                    continue
                d = ii * ny + jj
                if not mark[d]:
                    mark[d] = True
                    queue[tail] = d
                    tail += 1
    return head


@njit(cache=True)
def _best_prefix(k, order, count, inreg, adj_ptr, adj_cell, adj_edge, adj_sign,
                 costs, K, gauge, n_low, n_high):
    """Best objective change over BFS prefixes for shifts +1 and -1.

    Returns ``(delta, length, sign)`` with ``length == 0`` when no prefix
    improves.  Regions containing the gauge cell are applied through their
    complement, which changes the objective identically.  ``costs`` carries
    one padding column on each side so intermediate prefixes stay in range.
    """
    off = costs.shape[1] // 2
    best_delta = 0.0
    best_len = 0
    best_sign = 0
    d_plus = 0.0
    d_minus = 0.0
    blk_plus = 0
    blk_minus = 0
    has_gauge = False
    for pos in range(count):
        c = order[pos]
        inreg[c] = True
        if c == gauge:
            has_gauge = True
        if k[c] >= K:
            blk_plus += 1
        if k[c] <= -K:
            blk_minus += 1
        for q in range(adj_ptr[c], adj_ptr[c + 1]):
            m = adj_cell[q]
            e = adj_edge[q]
            s = adj_sign[q]  # +1 when c is the tail of edge e
            if s > 0:
                dk = k[m] - k[c]
            else:
                dk = k[c] - k[m]
            cur = costs[e, dk + off]
            if inreg[m]:
                # both ends shifted: revert the change booked when m entered
                d_plus += cur - costs[e, dk + s + off]
                d_minus += cur - costs[e, dk - s + off]
            else:
                d_plus += costs[e, dk - s + off] - cur
                d_minus += costs[e, dk + s + off] - cur
        if has_gauge:
            ok_plus = (n_low - blk_minus) == 0
            ok_minus = (n_high - blk_plus) == 0
        else:
            ok_plus = blk_plus == 0
            ok_minus = blk_minus == 0
        if ok_plus and d_plus < best_delta:
            best_delta = d_plus
            best_len = pos + 1
            best_sign = 1
        if ok_minus and d_minus < best_delta:
            best_delta = d_minus
            best_len = pos + 1
            best_sign = -1
    for pos in range(count):
        inreg[order[pos]] = False
    return best_delta, best_len, best_sign


@njit(cache=True)
def local_search(k, nx, ny, adj_ptr, adj_cell, adj_edge, adj_sign, costs, K, gauge, rng_state, tol):
    """Region-shift descent until ``2 * ncells`` consecutive proposals fail to improve."""
    n = nx * ny
    order = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    mark = np.zeros(n, dtype=np.bool_)
    inreg = np.zeros(n, dtype=np.bool_)
    n_sides = 4 if ny > 1 else 2
    failures = 0
    moves = 0
    proposal = 0
    while failures < 2 * n:
        # every 8th proposal grows a band from one side of the box, in rotation
        if proposal % 8 == 7:
            side = 1 + (proposal // 8) % n_sides
            count = _bfs_order(nx, ny, side, 0, False, order, mark, queue)
        else:
            rng_state = pm_next(rng_state)
            # high bits: low-order residues of this generator are correlated
            cell = (rng_state * n) // _PM_M
            conn8 = (proposal % 2 == 1) and ny > 1
            count = _bfs_order(nx, ny, 0, cell, conn8, order, mark, queue)
        proposal += 1
        n_low = 0
        n_high = 0
        for c in range(n):
            if k[c] <= -K:
                n_low += 1
            if k[c] >= K:
                n_high += 1
        delta, length, sign = _best_prefix(k, order, count, inreg, adj_ptr, adj_cell, adj_edge,
                                           adj_sign, costs, K, gauge, n_low, n_high)
        if length > 0 and delta < -tol:
            has_gauge = False
            for p in range(length):
                if order[p] == gauge:
                    has_gauge = True
            if has_gauge:
                for p in range(length):
                    inreg[order[p]] = True
                for c in range(n):
                    if not inreg[c]:
                        k[c] -= sign
                for p in range(length):
                    inreg[order[p]] = False
            else:
                for p in range(length):
                    k[order[p]] += sign
            moves += 1
            failures = 0
        else:
            failures += 1
    return k, moves, rng_state


__all__ = ["HAVE_NUMBA", "objective", "bruteforce", "bruteforce_numpy", "local_search", "pm_next"]
