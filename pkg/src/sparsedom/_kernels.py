"""Hot loops of the singular-integral engine.

Two implementations of each kernel live here: a numba ``@njit`` version and a
pure-numpy version computing the same sums. ``_accel.HAVE_NUMBA`` picks one;
both stay importable so they can be cross-checked and benchmarked.

Conventions shared by all kernels (N samples on the circle):

* ``conv[d]`` is K(d/N) for the difference x - y = d/N (mod 1); ``conv[0]``
  is 0 so the diagonal sample never contributes.
* ``phase[j, q] = exp(2 pi i xi_q j / N)`` for the modulation frequencies.
* ``bucket[d]`` is ceil(log2(dist)) with dist = min(d, N - d); a term at
  distance ``dist`` survives the truncation eps_l = 2^l / N iff bucket > l.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit, prange


def bucket_table(n: int) -> np.ndarray:
    d = np.arange(n)
    dist = np.minimum(d, n - d)
    out = np.full(n, -1, dtype=np.int64)
    pos = dist > 0
    out[pos] = np.ceil(np.log2(dist[pos])).astype(np.int64)
    # guard against log2 rounding at exact powers of two
    exact = pos & ((dist & (dist - 1)) == 0)
    out[exact] = np.log2(dist[exact]).round().astype(np.int64)
    return out


def phase_table(n: int, freqs) -> np.ndarray:
    j = np.arange(n)
    freqs = np.asarray(freqs, dtype=np.int64)
    # integer product mod n keeps the phases exact for large xi * j
    return np.exp(2j * np.pi * ((np.outer(j, freqs) % n) / n))


# ---------------------------------------------------------------------------
# numba implementations


@njit(cache=True)
def _point_value_nb(x, fvals, support, conv, phase, bucket, nlev, maximal, acc):
    n = conv.shape[0]
    nf = phase.shape[1]
    acc[:, :] = 0.0
    for s in range(support.shape[0]):
        j = support[s]
        d = (x - j) % n
        if d == 0:
            continue
        w = conv[d] * fvals[j]
        b = bucket[d]
        for q in range(nf):
            acc[b, q] += w * phase[j, q]
    best = 0.0
    for q in range(nf):
        total = 0.0 + 0.0j
        for b in range(nlev):
            total += acc[b, q]
        a = abs(total)
        if a > best:
            best = a
        if maximal:
            run = total
            for b in range(nlev):
                run -= acc[b, q]
                a = abs(run)
                if a > best:
                    best = a
    return best


@njit(parallel=True, cache=True)
def _modulated_values_nb(fvals, support, points, conv, phase, bucket, nlev, maximal):
    out = np.zeros(points.shape[0])
    nf = phase.shape[1]
    for p in prange(points.shape[0]):
        acc = np.zeros((nlev, nf), dtype=np.complex128)
        out[p] = _point_value_nb(points[p], fvals, support, conv, phase, bucket, nlev, maximal, acc)
    return out


@njit(parallel=True, cache=True)
def _cube_oscillations_nb(fvals, support, starts, lens, ex_starts, ex_lens, conv, phase, bucket,
                          nlev, maximal):
    n = conv.shape[0]
    nc = starts.shape[0]
    nf = phase.shape[1]
    out = np.zeros(nc)
    for c in prange(nc):
        keep = np.empty(support.shape[0], dtype=np.int64)
        cnt = 0
        for s in range(support.shape[0]):
            if (support[s] - ex_starts[c]) % n >= ex_lens[c]:
                keep[cnt] = support[s]
                cnt += 1
        if cnt == 0:
            continue
        sub = keep[:cnt]
        acc = np.zeros((nlev, nf), dtype=np.complex128)
        lo = np.inf
        hi = -np.inf
        for t in range(lens[c]):
            x = (starts[c] + t) % n
            v = _point_value_nb(x, fvals, sub, conv, phase, bucket, nlev, maximal, acc)
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        out[c] = hi - lo
    return out


# ---------------------------------------------------------------------------
# numpy implementations


def _modulated_values_np(fvals, support, points, conv, phase, bucket, nlev, maximal, chunk=256):
    n = conv.shape[0]
    out = np.zeros(points.shape[0])
    if support.size == 0 or points.size == 0:
        return out
    g = phase[support, :] * fvals[support, None]  # (S, F)
    for a in range(0, points.size, chunk):
        x = points[a:a + chunk]
        d = (x[:, None] - support[None, :]) % n
        kmat = conv[d]
        if not maximal:
            out[a:a + chunk] = np.abs(kmat @ g).max(axis=1)
            continue
        bmat = bucket[d]
        parts = np.stack([(kmat * (bmat == b)) @ g for b in range(nlev)], axis=-1)  # (P, F, L)
        total = parts.sum(axis=-1)
        run = total[..., None] - np.cumsum(parts, axis=-1)
        best = np.abs(total).max(axis=1)
        out[a:a + chunk] = np.maximum(best, np.abs(run).max(axis=(1, 2)))
    return out


def _cube_oscillations_np(fvals, support, starts, lens, ex_starts, ex_lens, conv, phase, bucket,
                          nlev, maximal):
    n = conv.shape[0]
    out = np.zeros(starts.shape[0])
    for c in range(starts.shape[0]):
        sub = support[(support - ex_starts[c]) % n >= ex_lens[c]]
        if sub.size == 0:
            continue
        pts = (starts[c] + np.arange(lens[c])) % n
        v = _modulated_values_np(fvals, sub, pts, conv, phase, bucket, nlev, maximal)
        out[c] = v.max() - v.min()
    return out


def _prep(fvals, *int_arrays):
    f = np.ascontiguousarray(fvals, dtype=np.complex128)
    ints = [np.ascontiguousarray(a, dtype=np.int64) for a in int_arrays]
    return f, ints


def modulated_values(fvals, support, points, conv, phase, bucket, nlev, maximal, use_numba=None):
    """max over frequencies (and truncation levels if ``maximal``) of |T_eps(M^xi f chi_S)(x)|."""
    f, (support, points) = _prep(fvals, support, points)
    use_numba = HAVE_NUMBA if use_numba is None else use_numba
    fn = _modulated_values_nb if use_numba else _modulated_values_np
    return fn(f, support, points, conv, phase, bucket, int(nlev), bool(maximal))


def cube_oscillations(fvals, support, starts, lens, ex_starts, ex_lens, conv, phase, bucket, nlev,
                      maximal, use_numba=None):
    """Per cube P: max - min over x in P of the operator applied to f chi_{S minus excl(P)}."""
    f, (support, starts, lens, ex_starts, ex_lens) = _prep(fvals, support, starts, lens, ex_starts,
                                                           ex_lens)
    use_numba = HAVE_NUMBA if use_numba is None else use_numba
    fn = _cube_oscillations_nb if use_numba else _cube_oscillations_np
    return fn(f, support, starts, lens, ex_starts, ex_lens, conv, phase, bucket, int(nlev),
              bool(maximal))


def modulated_components(fvals, support, points, conv, phase):
    """Complex values T(M^xi f chi_S)(x) for every point and frequency, shape (P, F)."""
    n = conv.shape[0]
    support = np.asarray(support, dtype=np.int64)
    points = np.asarray(points, dtype=np.int64)
    g = phase[support, :] * np.asarray(fvals, dtype=np.complex128)[support, None]
    d = (points[:, None] - support[None, :]) % n
    return conv[d] @ g
