"""Hot numeric kernels, each in a compiled and a pure-numpy flavour.

The two flavours perform the same floating-point operations in the same
order, so they agree bit for bit.  ``USE_NUMBA`` (see ``_accel``) picks
the one bound to the public names at import time.

Interaction tables used by the integrator are ``(n, w)`` integer arrays
whose rows list neighbour indices in ascending index order, padded with
the row's own index; ``deg[i]`` counts the real entries.  Padding adds
``x_i - x_i == 0.0`` to a sum, which never changes its value.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

MODEL_KNN = 0
MODEL_METRIC = 1

METHOD_RK4 = 0
METHOD_EULER = 1

REACHED = 0
SWITCH = 1
CONVERGED = 2
FAILED = 3

ORDER_SLACK = 1e-12
REFINE_LEVELS = 10


def table_width(n, model, k):
    return k if model == MODEL_KNN else max(n - 1, 1)


# ---------------------------------------------------------------------------
# compiled flavour
# ---------------------------------------------------------------------------


@njit
def _sort_perm_nb(x, perm):
    # insertion sort on the key (x[p], p); near-linear because the
    # dynamics preserves order between calls
    n = perm.shape[0]
    for a in range(1, n):
        p = perm[a]
        v = x[p]
        b = a - 1
        while b >= 0:
            q = perm[b]
            if x[q] > v or (x[q] == v and q > p):
                perm[b + 1] = q
                b -= 1
            else:
                break
        perm[b + 1] = p


@njit
def _sort_ints(buf, lo, hi):
    for a in range(lo + 1, hi):
        v = buf[a]
        b = a - 1
        while b >= lo and buf[b] > v:
            buf[b + 1] = buf[b]
            b -= 1
        buf[b + 1] = v


@njit
def _knn_ordered_nb(x, perm, k, out, buf):
    """Fill ``out[i]`` with the k nearest of i sorted by (distance, index).

    Walks outward from i's position in the sorted state.  Agents at equal
    computed distance form contiguous runs on each side; a run is pooled
    with the run on the other side at the same distance and consumed in
    index order.
    """
    n = x.shape[0]
    for pos in range(n):
        i = perm[pos]
        xi = x[i]
        lo = pos - 1
        hi = pos + 1
        c = 0
        while c < k:
            dl = np.inf
            dr = np.inf
            if lo >= 0:
                dl = abs(x[perm[lo]] - xi)
            if hi < n:
                dr = abs(x[perm[hi]] - xi)
            dmin = min(dl, dr)
            m = 0
            if dl == dmin:
                while lo >= 0 and abs(x[perm[lo]] - xi) == dmin:
                    buf[m] = perm[lo]
                    m += 1
                    lo -= 1
            if dr == dmin:
                while hi < n and abs(x[perm[hi]] - xi) == dmin:
                    buf[m] = perm[hi]
                    m += 1
                    hi += 1
            _sort_ints(buf, 0, m)
            take = min(m, k - c)
            for a in range(take):
                out[i, c] = buf[a]
                c += 1


@njit
def _interaction_nb(x, perm, model, k, d, nbr, deg, buf):
    n = x.shape[0]
    w = nbr.shape[1]
    if model == MODEL_KNN:
        _knn_ordered_nb(x, perm, k, nbr, buf)
        for i in range(n):
            _sort_ints(nbr[i], 0, k)
            deg[i] = k
        return
    for pos in range(n):
        i = perm[pos]
        xi = x[i]
        m = 0
        lo = pos - 1
        while lo >= 0 and abs(x[perm[lo]] - xi) < d:
            buf[m] = perm[lo]
            m += 1
            lo -= 1
        hi = pos + 1
        while hi < n and abs(x[perm[hi]] - xi) < d:
            buf[m] = perm[hi]
            m += 1
            hi += 1
        _sort_ints(buf, 0, m)
        for a in range(m):
            nbr[i, a] = buf[a]
        for a in range(m, w):
            nbr[i, a] = i
        deg[i] = m


@njit
def _field_nb(y, nbr, deg, out):
    n = y.shape[0]
    for i in range(n):
        acc = 0.0
        yi = y[i]
        for c in range(deg[i]):
            acc += y[nbr[i, c]] - yi
        out[i] = acc


@njit
def _same_map_nb(nbr_a, deg_a, nbr_b, deg_b):
    n = deg_a.shape[0]
    for i in range(n):
        if deg_a[i] != deg_b[i]:
            return False
        for c in range(deg_a[i]):
            if nbr_a[i, c] != nbr_b[i, c]:
                return False
    return True


@njit
def _order_ok_nb(x, y, perm):
    n = x.shape[0]
    for a in range(n - 1):
        p = perm[a]
        q = perm[a + 1]
        if x[q] > x[p] and y[q] - y[p] < -ORDER_SLACK:
            return False
    return True


@njit
def _advance_nb(x, perm, nbr, deg, x_prev, t, t_stop, h, h_min, model, k, d,
                method, conv_tol, t_last_switch, stall_window):
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    z = np.empty(n)
    y = np.empty(n)
    perm1 = np.empty_like(perm)
    nbr1 = np.empty_like(nbr)
    deg1 = np.empty_like(deg)
    buf = np.empty(n, dtype=perm.dtype)
    while True:
        if t_stop - t <= 1e-9 * h:
            return REACHED, t_stop
        _field_nb(x, nbr, deg, k1)
        sup = 0.0
        for i in range(n):
            sup = max(sup, abs(k1[i]))
        if sup < conv_tol and t - t_last_switch >= stall_window - 1e-9 * h:
            return CONVERGED, t
        h_try = min(h, t_stop - t)
        switched = False
        while True:
            if method == METHOD_EULER:
                for i in range(n):
                    y[i] = x[i] + h_try * k1[i]
            else:
                half = 0.5 * h_try
                for i in range(n):
                    z[i] = x[i] + half * k1[i]
                _field_nb(z, nbr, deg, k2)
                for i in range(n):
                    z[i] = x[i] + half * k2[i]
                _field_nb(z, nbr, deg, k3)
                for i in range(n):
                    z[i] = x[i] + h_try * k3[i]
                _field_nb(z, nbr, deg, k4)
                sixth = h_try / 6.0
                for i in range(n):
                    y[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not _order_ok_nb(x, y, perm):
                if 0.5 * h_try >= h_min:
                    h_try *= 0.5
                    continue
                x_prev[:] = x
                x[:] = y
                return FAILED, t + h_try
            perm1[:] = perm
            _sort_perm_nb(y, perm1)
            _interaction_nb(y, perm1, model, k, d, nbr1, deg1, buf)
            if _same_map_nb(nbr, deg, nbr1, deg1):
                break
            if 0.5 * h_try >= h_min:
                h_try *= 0.5
                continue
            switched = True
            break
        x_prev[:] = x
        x[:] = y
        perm[:] = perm1
        nbr[:, :] = nbr1
        deg[:] = deg1
        t = t + h_try
        if t_stop - t <= 1e-9 * h:
            t = t_stop
        if switched:
            return SWITCH, t


def _knn_table_nb(x, k):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    perm = np.argsort(x, kind="stable").astype(np.int64)
    out = np.empty((n, k), dtype=np.int64)
    _knn_ordered_nb(x, perm, k, out, np.empty(n, dtype=np.int64))
    return out


def _interaction_table_nb(x, model, k, d):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    perm = np.argsort(x, kind="stable").astype(np.int64)
    nbr = np.empty((n, table_width(n, model, k)), dtype=np.int64)
    deg = np.empty(n, dtype=np.int64)
    _interaction_nb(x, perm, model, k, float(d), nbr, deg, np.empty(n, dtype=np.int64))
    return nbr, deg


def _field_table_nb(x, nbr, deg):
    out = np.empty(x.shape[0])
    _field_nb(np.ascontiguousarray(x, dtype=np.float64), nbr, deg, out)
    return out


# ---------------------------------------------------------------------------
# numpy flavour
# ---------------------------------------------------------------------------


def _sorted_perm_np(x):
    return np.lexsort((np.arange(x.shape[0]), x)).astype(np.int64)


def _knn_table_np(x, k):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    dist = np.abs(x[None, :] - x[:, None])
    np.fill_diagonal(dist, np.inf)
    cols = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((cols, dist), axis=-1)
    return order[:, :k].astype(np.int64)


def _interaction_table_np(x, model, k, d):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if model == MODEL_KNN:
        nbr = np.sort(_knn_table_np(x, k), axis=1)
        return nbr, np.full(n, k, dtype=np.int64)
    close = np.abs(x[None, :] - x[:, None]) < d
    np.fill_diagonal(close, False)
    deg = close.sum(axis=1).astype(np.int64)
    # stable argsort of ~close lists the True columns first, in index order
    order = np.argsort(~close, axis=1, kind="stable")
    w = table_width(n, model, k)
    slot = np.arange(w)[None, :]
    nbr = np.where(slot < deg[:, None], order[:, :w], np.arange(n)[:, None])
    return nbr.astype(np.int64), deg


def _field_table_np(y, nbr, deg):
    acc = np.zeros(y.shape[0])
    for c in range(nbr.shape[1]):
        acc = acc + (y[nbr[:, c]] - y)
    return acc


def _advance_np(x, perm, nbr, deg, x_prev, t, t_stop, h, h_min, model, k, d,
                method, conv_tol, t_last_switch, stall_window):
    while True:
        if t_stop - t <= 1e-9 * h:
            return REACHED, t_stop
        k1 = _field_table_np(x, nbr, deg)
        if np.max(np.abs(k1)) < conv_tol and t - t_last_switch >= stall_window - 1e-9 * h:
            return CONVERGED, t
        h_try = min(h, t_stop - t)
        switched = False
        strict = x[perm[1:]] > x[perm[:-1]]
        while True:
            if method == METHOD_EULER:
                y = x + h_try * k1
            else:
                half = 0.5 * h_try
                k2 = _field_table_np(x + half * k1, nbr, deg)
                k3 = _field_table_np(x + half * k2, nbr, deg)
                k4 = _field_table_np(x + h_try * k3, nbr, deg)
                y = x + (h_try / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            gaps = y[perm[1:]] - y[perm[:-1]]
            if np.any(strict & (gaps < -ORDER_SLACK)):
                if 0.5 * h_try >= h_min:
                    h_try *= 0.5
                    continue
                x_prev[:] = x
                x[:] = y
                return FAILED, t + h_try
            perm1 = _sorted_perm_np(y)
            nbr1, deg1 = _interaction_table_np(y, model, k, d)
            if np.array_equal(deg, deg1) and _same_rows_np(nbr, nbr1, deg):
                break
            if 0.5 * h_try >= h_min:
                h_try *= 0.5
                continue
            switched = True
            break
        x_prev[:] = x
        x[:] = y
        perm[:] = perm1
        nbr[:, :] = nbr1
        deg[:] = deg1
        t = t + h_try
        if t_stop - t <= 1e-9 * h:
            t = t_stop
        if switched:
            return SWITCH, t


def _same_rows_np(a, b, deg):
    live = np.arange(a.shape[1])[None, :] < deg[:, None]
    return bool(np.all((a == b) | ~live))


# ---------------------------------------------------------------------------
# public bindings
# ---------------------------------------------------------------------------

IMPLS = {
    "numba": {
        "knn_table": _knn_table_nb,
        "interaction_table": _interaction_table_nb,
        "field": _field_table_nb,
        "advance": _advance_nb,
    },
    "numpy": {
        "knn_table": _knn_table_np,
        "interaction_table": _interaction_table_np,
        "field": _field_table_np,
        "advance": _advance_np,
    },
}

BACKEND = "numba" if USE_NUMBA else "numpy"

knn_table = IMPLS[BACKEND]["knn_table"]
interaction_table = IMPLS[BACKEND]["interaction_table"]
field = IMPLS[BACKEND]["field"]
advance = IMPLS[BACKEND]["advance"]
