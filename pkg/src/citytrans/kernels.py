"""Hot numeric kernels, each with a numba-compiled and a pure-numpy path.

The numba path is used when numba imports successfully and the environment
variable ``CITYTRANS_NUMBA`` is unset or truthy; set ``CITYTRANS_NUMBA=0``
to force the numpy fallback. Both paths implement identical arithmetic and
are cross-checked in the test suite; ``benchmarks/bench_kernels.py``
compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("CITYTRANS_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


# ---------------------------------------------------------------------------
# mean shift (flat kernel) over projected planar coordinates
# ---------------------------------------------------------------------------


def _mean_shift_loop(xy, bandwidth, window, tol, max_iter):
    n = xy.shape[0]
    out = np.empty_like(xy)
    bw2 = bandwidth * bandwidth
    tol2 = tol * tol
    for i in range(n):
        if window <= 0:
            lo, hi = 0, n
        else:
            lo = i - window + 1
            if lo < 0:
                lo = 0
            hi = i + 1
        mx = xy[i, 0]
        my = xy[i, 1]
        for _ in range(max_iter):
            sx = 0.0
            sy = 0.0
            cnt = 0
            for k in range(lo, hi):
                dx = xy[k, 0] - mx
                dy = xy[k, 1] - my
                if dx * dx + dy * dy <= bw2:
                    sx += xy[k, 0]
                    sy += xy[k, 1]
                    cnt += 1
            nx = sx / cnt
            ny = sy / cnt
            shift2 = (nx - mx) * (nx - mx) + (ny - my) * (ny - my)
            mx = nx
            my = ny
            if shift2 < tol2:
                break
        out[i, 0] = mx
        out[i, 1] = my
    return out


def _mean_shift_numpy(xy, bandwidth, window, tol, max_iter):
    n = xy.shape[0]
    out = np.empty_like(xy)
    bw2 = bandwidth * bandwidth
    tol2 = tol * tol
    for i in range(n):
        if window <= 0:
            pts = xy
        else:
            pts = xy[max(0, i - window + 1) : i + 1]
        m = xy[i].copy()
        for _ in range(max_iter):
            d2 = np.sum((pts - m) ** 2, axis=1)
            nb = pts[d2 <= bw2]
            # flat kernel: at least one neighbor always survives (the set
            # mean of points within bw of m is itself within bw of some point)
            new_m = nb.sum(axis=0) / len(nb)
            shift2 = float(np.sum((new_m - m) ** 2))
            m = new_m
            if shift2 < tol2:
                break
        out[i] = m
    return out


# ---------------------------------------------------------------------------
# staypoint run detection: greedy scan anchored at the first record of a run
# ---------------------------------------------------------------------------


def _staypoint_runs_loop(times, xy, spatial, temporal):
    n = times.shape[0]
    starts = np.empty(n, dtype=np.int64)
    ends = np.empty(n, dtype=np.int64)
    m = 0
    sp2 = spatial * spatial
    i = 0
    while i < n:
        j = i
        while j + 1 < n:
            dx = xy[j + 1, 0] - xy[i, 0]
            dy = xy[j + 1, 1] - xy[i, 1]
            if dx * dx + dy * dy <= sp2:
                j += 1
            else:
                break
        if times[j] - times[i] >= temporal:
            starts[m] = i
            ends[m] = j
            m += 1
            i = j + 1
        else:
            i += 1
    return starts[:m], ends[:m]


# ---------------------------------------------------------------------------
# mutual pairwise metric sums for AMND / AMCS
# ---------------------------------------------------------------------------
# "Unique combinations" between place sets I and J: unordered pairs {a, b}
# with a in I, b in J, a != b, each counted once. When the two sets come
# from different cities the id spaces are disjoint and all |I|*|J| ordered
# pairs are distinct combinations.


def _mutual_metric_loop(vi, vj, id_i, id_j, i_in_j, j_in_i, same_space, use_cosine):
    ni = vi.shape[0]
    nj = vj.shape[0]
    d = vi.shape[1]
    total = 0.0
    count = 0
    for a in range(ni):
        for b in range(nj):
            if same_space:
                pa = id_i[a]
                pb = id_j[b]
                if pa == pb:
                    continue
                # keep one orientation of a symmetric duplicate pair
                if pa > pb and j_in_i[b] and i_in_j[a]:
                    continue
            if use_cosine:
                dot = 0.0
                na = 0.0
                nb = 0.0
                for k in range(d):
                    dot += vi[a, k] * vj[b, k]
                    na += vi[a, k] * vi[a, k]
                    nb += vj[b, k] * vj[b, k]
                total += dot / (np.sqrt(na) * np.sqrt(nb))
            else:
                s = 0.0
                for k in range(d):
                    diff = vi[a, k] - vj[b, k]
                    s += diff * diff
                total += np.sqrt(s)
            count += 1
    return total, count


def _mutual_metric_numpy(vi, vj, id_i, id_j, i_in_j, j_in_i, same_space, use_cosine):
    ni = vi.shape[0]
    nj = vj.shape[0]
    if same_space:
        eq = id_i[:, None] == id_j[None, :]
        lt = id_i[:, None] < id_j[None, :]
        dup = j_in_i[None, :] & i_in_j[:, None]
        keep = ~eq & (lt | ~dup)
    else:
        keep = np.ones((ni, nj), dtype=bool)
    if use_cosine:
        norms_i = np.sqrt(np.sum(vi * vi, axis=1))
        norms_j = np.sqrt(np.sum(vj * vj, axis=1))
        metric = (vi @ vj.T) / np.outer(norms_i, norms_j)
    else:
        diff = vi[:, None, :] - vj[None, :, :]
        metric = np.sqrt(np.sum(diff * diff, axis=2))
    return float(metric[keep].sum()), int(keep.sum())


if NUMBA_ENABLED:
    _mean_shift_nb = njit(cache=True)(_mean_shift_loop)
    _staypoint_runs_nb = njit(cache=True)(_staypoint_runs_loop)
    _mutual_metric_nb = njit(cache=True)(_mutual_metric_loop)


def mean_shift_modes(xy, bandwidth_m, window=0, tol_m=1.0, max_iter=100):
    """Converge every point of ``xy`` (meters, shape (n, 2)) to its flat-kernel
    mean-shift mode.

    ``window > 0`` restricts each point's neighborhood to the trailing
    ``window`` points (recent-history denoising); ``window <= 0`` uses the
    whole set. Iteration stops when the shift drops below ``tol_m`` or after
    ``max_iter`` rounds.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    if xy.size == 0:
        return xy.copy()
    if NUMBA_ENABLED:
        return _mean_shift_nb(xy, float(bandwidth_m), int(window), float(tol_m), int(max_iter))
    return _mean_shift_numpy(xy, float(bandwidth_m), int(window), float(tol_m), int(max_iter))


def staypoint_runs(times_s, xy_m, spatial_m, temporal_s):
    """Greedy staypoint scan over a time-ordered trace.

    Returns (starts, ends) index arrays of maximal runs whose records all lie
    within ``spatial_m`` of the run's first record and whose time span is at
    least ``temporal_s``. Scanning resumes after an emitted run.
    """
    times_s = np.ascontiguousarray(times_s, dtype=np.int64)
    xy_m = np.ascontiguousarray(xy_m, dtype=np.float64)
    if NUMBA_ENABLED:
        return _staypoint_runs_nb(times_s, xy_m, float(spatial_m), float(temporal_s))
    return _staypoint_runs_loop(times_s, xy_m, float(spatial_m), float(temporal_s))


def mutual_metric_sum(vi, vj, id_i, id_j, same_space, use_cosine):
    """Sum a pairwise metric over the unique combinations of two place sets.

    ``vi``/``vj`` are (n, d) row-vector stacks aligned with id arrays
    ``id_i``/``id_j``. Returns (total, count); count is Z(I, J).
    """
    vi = np.ascontiguousarray(vi, dtype=np.float64)
    vj = np.ascontiguousarray(vj, dtype=np.float64)
    id_i = np.ascontiguousarray(id_i, dtype=np.int64)
    id_j = np.ascontiguousarray(id_j, dtype=np.int64)
    if same_space:
        i_in_j = np.isin(id_i, id_j)
        j_in_i = np.isin(id_j, id_i)
    else:
        i_in_j = np.zeros(len(id_i), dtype=bool)
        j_in_i = np.zeros(len(id_j), dtype=bool)
    if NUMBA_ENABLED:
        return _mutual_metric_nb(vi, vj, id_i, id_j, i_in_j, j_in_i, bool(same_space), bool(use_cosine))
    return _mutual_metric_numpy(vi, vj, id_i, id_j, i_in_j, j_in_i, bool(same_space), bool(use_cosine))
