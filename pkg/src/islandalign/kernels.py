"""Dynamic-programming kernels.

Each kernel has a numba loop version (``*_jit``) and a vectorized numpy
version (``*_np``). The public wrappers pick one via ``backend``:
``"numba"``, ``"numpy"`` or ``None`` (follow ``ISLANDALIGN_NUMBA``).
Both paths perform the same floating point operations in the same order,
so their outputs are bit-identical.
"""
import numpy as np

from ._jit import NUMBA_AVAILABLE, USE_NUMBA, njit

NEG_INF = -np.inf


def _pick(backend):
    if backend is None:
        return USE_NUMBA
    if backend == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is not installed")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# Levenshtein cost matrix


@njit
def _edit_cost_jit(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    D = np.empty((n + 1, m + 1), dtype=np.int32)
    for j in range(m + 1):
        D[0, j] = j
    for i in range(1, n + 1):
        D[i, 0] = i
        r = ref[i - 1]
        for j in range(1, m + 1):
            best = D[i - 1, j - 1] + (0 if r == hyp[j - 1] else 1)
            up = D[i - 1, j] + 1
            if up < best:
                best = up
            left = D[i, j - 1] + 1
            if left < best:
                best = left
            D[i, j] = best
    return D


def _edit_cost_np(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    D = np.empty((n + 1, m + 1), dtype=np.int32)
    ramp = np.arange(m + 1, dtype=np.int32)
    D[0] = ramp
    t = np.empty(m + 1, dtype=np.int32)
    for i in range(1, n + 1):
        prev = D[i - 1]
        t[0] = i
        np.minimum(prev[1:] + 1, prev[:-1] + (hyp != ref[i - 1]), out=t[1:])
        # in-row insertions: row[j] = min_k<=j t[k] + (j - k)
        D[i] = np.minimum.accumulate(t - ramp) + ramp
    return D


def edit_cost_matrix(ref, hyp, backend=None):
    """Full (len(ref)+1, len(hyp)+1) unit-cost Levenshtein matrix over int ids."""
    ref = np.ascontiguousarray(ref, dtype=np.int64)
    hyp = np.ascontiguousarray(hyp, dtype=np.int64)
    if _pick(backend):
        return _edit_cost_jit(ref, hyp)
    return _edit_cost_np(ref, hyp)


# ---------------------------------------------------------------------------
# Best contiguous substring of ``ref`` for ``hyp`` (free start and end in ref).
# Cells carry key = cost * (n + 1) + start so a plain min realizes the
# (cost, start) lexicographic order.


@njit
def _project_jit(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    w = n + 1
    prev = np.empty(n + 1, dtype=np.int64)
    cur = np.empty(n + 1, dtype=np.int64)
    for i in range(n + 1):
        prev[i] = i
    for j in range(1, m + 1):
        h = hyp[j - 1]
        cur[0] = j * w
        for i in range(1, n + 1):
            diag = prev[i - 1]
            if ref[i - 1] != h:
                diag += w
            best = prev[i] + w
            if diag < best:
                best = diag
            left = cur[i - 1] + w
            if left < best:
                best = left
            cur[i] = best
        for i in range(n + 1):
            prev[i] = cur[i]
    return prev


def _project_np(ref, hyp):
    n = ref.shape[0]
    w = n + 1
    ramp = np.arange(n + 1, dtype=np.int64) * w
    prev = np.arange(n + 1, dtype=np.int64)
    t = np.empty(n + 1, dtype=np.int64)
    for j in range(1, hyp.shape[0] + 1):
        t[0] = j * w
        np.minimum(prev[1:] + w, prev[:-1] + (ref != hyp[j - 1]) * w, out=t[1:])
        prev = np.minimum.accumulate(t - ramp) + ramp
    return prev


def substring_projection(ref, hyp, backend=None):
    """Return ``(start, length, distance)`` of the contiguous slice of ``ref``
    closest to ``hyp`` in word edit distance.

    Ties go to the smaller start, then the shorter slice.
    """
    ref = np.ascontiguousarray(ref, dtype=np.int64)
    hyp = np.ascontiguousarray(hyp, dtype=np.int64)
    if hyp.shape[0] == 0:
        return 0, 0, 0
    if _pick(backend):
        last = _project_jit(ref, hyp)
    else:
        last = _project_np(ref, hyp)
    w = ref.shape[0] + 1
    end = int(np.argmin(last))  # first minimum -> shortest slice for the key
    key = int(last[end])
    cost, start = divmod(key, w)
    return start, end - start, cost


# ---------------------------------------------------------------------------
# Monotone segmentation of frames into K consecutive word spans.
# emit[t, k] is the log-score of frame t under word k.


@njit
def _segment_jit(emit, min_frames):
    F, K = emit.shape
    cum = np.zeros((K, F + 1))
    for k in range(K):
        acc = 0.0
        for t in range(F):
            acc += emit[t, k]
            cum[k, t + 1] = acc
    best = np.full((K, F + 1), -np.inf)
    bp = np.zeros((K, F + 1), dtype=np.int64)
    for f in range(min_frames, F + 1):
        best[0, f] = cum[0, f]
    for k in range(1, K):
        run_max = -np.inf
        run_arg = 0
        for f in range(F + 1):
            src = f - min_frames
            if src >= 0:
                g = best[k - 1, src] - cum[k, src]
                if g > run_max:
                    run_max = g
                    run_arg = src
            best[k, f] = cum[k, f] + run_max
            bp[k, f] = run_arg
    bounds = np.empty(K + 1, dtype=np.int64)
    bounds[K] = F
    for k in range(K - 1, 0, -1):
        bounds[k] = bp[k, bounds[k + 1]]
    bounds[0] = 0
    return bounds, best[K - 1, F]


def _segment_np(emit, min_frames):
    F, K = emit.shape
    cum = np.zeros((K, F + 1))
    np.cumsum(emit.T, axis=1, out=cum[:, 1:])
    best = np.full((K, F + 1), -np.inf)
    bp = np.zeros((K, F + 1), dtype=np.int64)
    best[0, min_frames:] = cum[0, min_frames:]
    idx = np.arange(F + 1, dtype=np.int64)
    for k in range(1, K):
        g = best[k - 1] - cum[k]
        run_max = np.maximum.accumulate(g)
        # position of first occurrence of each running max
        fresh = np.empty(F + 1, dtype=bool)
        fresh[0] = g[0] > -np.inf
        fresh[1:] = g[1:] > run_max[:-1]
        run_arg = np.maximum.accumulate(np.where(fresh, idx, 0))
        best[k, min_frames:] = cum[k, min_frames:] + run_max[: F + 1 - min_frames]
        bp[k, min_frames:] = run_arg[: F + 1 - min_frames]
    bounds = np.empty(K + 1, dtype=np.int64)
    bounds[K] = F
    for k in range(K - 1, 0, -1):
        bounds[k] = bp[k, bounds[k + 1]]
    bounds[0] = 0
    return bounds, best[K - 1, F]


def segment_frames(emit, min_frames=1, backend=None):
    """Best partition of ``emit.shape[0]`` frames into ``emit.shape[1]`` spans.

    Returns ``(bounds, total)``: word k covers frames ``bounds[k]:bounds[k+1]``.
    Among equal-score partitions the backtrace takes the earliest start for
    the last word first, then for each earlier word in turn.
    """
    emit = np.ascontiguousarray(emit, dtype=np.float64)
    F, K = emit.shape
    if K == 0 or F < K * min_frames:
        raise ValueError(f"cannot place {K} words in {F} frames")
    if _pick(backend):
        bounds, total = _segment_jit(emit, int(min_frames))
    else:
        bounds, total = _segment_np(emit, int(min_frames))
    return bounds, float(total)
