"""Hot loops: max-flow, dominance construction, envelope prediction.

Every function here is numba-compatible.  ``_accel.jit`` compiles it unless
the numba path is disabled; the ``*_numpy`` variants are vectorized
fallbacks used when numba is off.
"""

import numpy as np

from girp._accel import NUMBA_ENABLED, jit


# ---------------------------------------------------------------------------
# Max-flow (Dinic, blocking flows on the level graph)
# ---------------------------------------------------------------------------


@jit
def dinic(n_nodes, source, sink, tails, heads, caps, eps):
    """Max-flow from ``source`` to ``sink``.

    Returns ``(flow_value, forward_residual, reachable)`` where
    ``forward_residual[e]`` is the residual capacity left on input arc ``e``
    and ``reachable`` marks nodes reachable from the source in the final
    residual graph (arcs with residual > eps).
    """
    m = tails.shape[0]
    to = np.empty(2 * m, np.int64)
    res = np.empty(2 * m, np.float64)
    start = np.zeros(n_nodes + 1, np.int64)
    for e in range(m):
        to[2 * e] = heads[e]
        to[2 * e + 1] = tails[e]
        res[2 * e] = caps[e]
        res[2 * e + 1] = 0.0
        start[tails[e] + 1] += 1
        start[heads[e] + 1] += 1
    for v in range(n_nodes):
        start[v + 1] += start[v]
    adj = np.empty(2 * m, np.int64)
    fill = start[:n_nodes].copy()
    for e in range(m):
        adj[fill[tails[e]]] = 2 * e
        fill[tails[e]] += 1
        adj[fill[heads[e]]] = 2 * e + 1
        fill[heads[e]] += 1

    level = np.empty(n_nodes, np.int64)
    queue = np.empty(n_nodes, np.int64)
    cursor = np.empty(n_nodes, np.int64)
    stack = np.empty(n_nodes, np.int64)
    flow = 0.0

    while True:
        for v in range(n_nodes):
            level[v] = -1
        level[source] = 0
        qh = 0
        qt = 1
        queue[0] = source
        while qh < qt:
            v = queue[qh]
            qh += 1
            for p in range(start[v], start[v + 1]):
                a = adj[p]
                w = to[a]
                if level[w] < 0 and res[a] > eps:
                    level[w] = level[v] + 1
                    queue[qt] = w
                    qt += 1
        if level[sink] < 0:
            break

        for v in range(n_nodes):
            cursor[v] = start[v]
        depth = 0
        v = source
        while True:
            if v == sink:
                bottleneck = np.inf
                for i in range(depth):
                    r = res[stack[i]]
                    if r < bottleneck:
                        bottleneck = r
                for i in range(depth):
                    a = stack[i]
                    res[a] -= bottleneck
                    res[a ^ 1] += bottleneck
                flow += bottleneck
                first = 0
                for i in range(depth):
                    if res[stack[i]] <= eps:
                        first = i
                        break
                v = to[stack[first] ^ 1]
                depth = first
                continue
            advanced = False
            while cursor[v] < start[v + 1]:
                a = adj[cursor[v]]
                w = to[a]
                if res[a] > eps and level[w] == level[v] + 1:
                    stack[depth] = a
                    depth += 1
                    v = w
                    advanced = True
                    break
                cursor[v] += 1
            if not advanced:
                if v == source:
                    break
                level[v] = -1
                depth -= 1
                v = to[stack[depth] ^ 1]
                cursor[v] += 1

    reachable = np.zeros(n_nodes, np.bool_)
    reachable[source] = True
    qh = 0
    qt = 1
    queue[0] = source
    while qh < qt:
        v = queue[qh]
        qh += 1
        for p in range(start[v], start[v + 1]):
            a = adj[p]
            w = to[a]
            if not reachable[w] and res[a] > eps:
                reachable[w] = True
                queue[qt] = w
                qt += 1

    forward = np.empty(m, np.float64)
    for e in range(m):
        forward[e] = res[2 * e]
    return flow, forward, reachable


# ---------------------------------------------------------------------------
# Coordinate-wise dominance
# ---------------------------------------------------------------------------


@jit
def _leq(X, i, j):
    for c in range(X.shape[1]):
        if X[i, c] > X[j, c]:
            return False
    return True


@jit
def dominance_edges_loop(X, reduce):
    """Edges (i, j) with X[i] <= X[j] coordinate-wise.

    X must hold distinct rows sorted lexicographically, so every predecessor
    of j has a smaller index.  With ``reduce`` only covering pairs (the
    transitive reduction) are emitted.
    """
    n = X.shape[0]
    cap = max(16, 4 * n)
    src = np.empty(cap, np.int64)
    dst = np.empty(cap, np.int64)
    count = 0
    kept = np.empty(n, np.int64)
    for j in range(n):
        nk = 0
        for i in range(j - 1, -1, -1):
            if not _leq(X, i, j):
                continue
            if reduce:
                covered = False
                for q in range(nk):
                    if _leq(X, i, kept[q]):
                        covered = True
                        break
                if covered:
                    continue
            kept[nk] = i
            nk += 1
        if count + nk > cap:
            while count + nk > cap:
                cap *= 2
            nsrc = np.empty(cap, np.int64)
            ndst = np.empty(cap, np.int64)
            nsrc[:count] = src[:count]
            ndst[:count] = dst[:count]
            src = nsrc
            dst = ndst
        for q in range(nk - 1, -1, -1):
            src[count] = kept[q]
            dst[count] = j
            count += 1
    return src[:count].copy(), dst[:count].copy()


def _dominance_matrix(X, Y, chunk=256):
    """Boolean matrix M[i, j] = X[i] <= Y[j] coordinate-wise."""
    out = np.empty((X.shape[0], Y.shape[0]), dtype=bool)
    for lo in range(0, X.shape[0], chunk):
        block = X[lo:lo + chunk, None, :] <= Y[None, :, :]
        out[lo:lo + chunk] = block.all(axis=2)
    return out


def dominance_edges_numpy(X, reduce):
    n = X.shape[0]
    C = _dominance_matrix(X, X)
    np.fill_diagonal(C, False)
    if reduce and n:
        Cf = C.astype(np.float32)
        C &= ~((Cf @ Cf) > 0.5)
    src, dst = np.nonzero(C)
    return src.astype(np.int64), dst.astype(np.int64)


# ---------------------------------------------------------------------------
# Envelope prediction: max fit below a query, min fit above it
# ---------------------------------------------------------------------------


@jit
def envelope_index_loop(X, Q):
    """CSR lists of training rows below / above each query row."""
    n = X.shape[0]
    q = Q.shape[0]
    d = X.shape[1]
    below_ptr = np.zeros(q + 1, np.int64)
    above_ptr = np.zeros(q + 1, np.int64)
    below = np.empty(max(16, n), np.int64)
    above = np.empty(max(16, n), np.int64)
    nb = 0
    na = 0
    for r in range(q):
        for i in range(n):
            le = True
            ge = True
            for c in range(d):
                if X[i, c] > Q[r, c]:
                    le = False
                if X[i, c] < Q[r, c]:
                    ge = False
                if not le and not ge:
                    break
            if le:
                if nb == below.shape[0]:
                    grown = np.empty(2 * nb, np.int64)
                    grown[:nb] = below
                    below = grown
                below[nb] = i
                nb += 1
            if ge:
                if na == above.shape[0]:
                    grown = np.empty(2 * na, np.int64)
                    grown[:na] = above
                    above = grown
                above[na] = i
                na += 1
        below_ptr[r + 1] = nb
        above_ptr[r + 1] = na
    return below_ptr, below[:nb].copy(), above_ptr, above[:na].copy()


def envelope_index_numpy(X, Q):
    le = _dominance_matrix(X, Q).T
    ge = _dominance_matrix(Q, X)
    out = []
    for mask in (le, ge):
        rows, cols = np.nonzero(mask)
        ptr = np.zeros(Q.shape[0] + 1, np.int64)
        np.cumsum(np.bincount(rows, minlength=Q.shape[0]), out=ptr[1:])
        out.extend((ptr, cols.astype(np.int64)))
    return tuple(out)


@jit
def envelope_predict_loop(fits, below_ptr, below, above_ptr, above, floor, ceil):
    q = below_ptr.shape[0] - 1
    out = np.empty(q, np.float64)
    for r in range(q):
        lo = floor
        for p in range(below_ptr[r], below_ptr[r + 1]):
            v = fits[below[p]]
            if v > lo:
                lo = v
        hi = ceil
        for p in range(above_ptr[r], above_ptr[r + 1]):
            v = fits[above[p]]
            if v < hi:
                hi = v
        out[r] = 0.5 * (lo + hi)
    return out


def _segment_reduce(values, ptr, ufunc, empty):
    counts = np.diff(ptr)
    out = np.full(counts.shape[0], empty)
    nonempty = counts > 0
    if nonempty.any():
        out[nonempty] = ufunc.reduceat(values, ptr[:-1][nonempty])
    return out


def envelope_predict_numpy(fits, below_ptr, below, above_ptr, above, floor, ceil):
    lo = np.maximum(_segment_reduce(fits[below], below_ptr, np.maximum, -np.inf), floor)
    hi = np.minimum(_segment_reduce(fits[above], above_ptr, np.minimum, np.inf), ceil)
    return 0.5 * (lo + hi)


if NUMBA_ENABLED:
    dominance_edges = dominance_edges_loop
    envelope_index = envelope_index_loop
    envelope_predict = envelope_predict_loop
else:
    dominance_edges = dominance_edges_numpy
    envelope_index = envelope_index_numpy
    envelope_predict = envelope_predict_numpy
