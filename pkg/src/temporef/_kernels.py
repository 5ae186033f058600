"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

Two inner loops dominate runtime (spectrogram time-stretching and
onset-envelope autocorrelation), so both get a compiled implementation.
The path is chosen once at import: numba is used when it imports cleanly
and the environment variable ``TEMPOREF_NUMBA`` is not set to ``0`` /
``false`` / ``off``.  Both paths compute the same recurrences in the same
order; ``benchmarks/bench_kernels.py`` times them against each other.

The spline here is the natural cubic spline on uniform integer knots
0..n-1, fitted independently per column.  Second derivatives solve the
tridiagonal system  m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1])
with m[0] = m[n-1] = 0 (Thomas algorithm), and evaluation on [i, i+1] is

    S(i + u) = a y[i] + u y[i+1] + ((a^3 - a) m[i] + (u^3 - u) m[i+1]) / 6,

with a = 1 - u.  Positions past the last knot (they can overshoot by less
than one frame after round(n / f)) reuse the final interval's cubic.
"""

import os

import numpy as np

_flag = os.environ.get("TEMPOREF_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off")

if NUMBA_REQUESTED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def spline_second_derivs_numpy(y):
    """Natural-spline second derivatives per column. y: [n, cols] float64."""
    n, cols = y.shape
    m = np.zeros((n, cols))
    if n < 3:
        return m
    rhs = 6.0 * (y[2:] - 2.0 * y[1:-1] + y[:-2])
    k = n - 2
    cp = np.empty(k)
    dp = np.empty((k, cols))
    cp[0] = 1.0 / 4.0
    dp[0] = rhs[0] / 4.0
    for i in range(1, k):
        den = 4.0 - cp[i - 1]
        cp[i] = 1.0 / den
        dp[i] = (rhs[i] - dp[i - 1]) / den
    m[k] = dp[k - 1]
    for i in range(k - 2, -1, -1):
        m[i + 1] = dp[i] - cp[i] * m[i + 2]
    return m


def spline_eval_numpy(y, m, positions):
    """Evaluate the fitted spline at fractional row positions. Returns [len(positions), cols]."""
    n = y.shape[0]
    idx = np.minimum(positions.astype(np.int64), n - 2)
    u = (positions - idx)[:, None]
    a = 1.0 - u
    wa = (a * a * a - a) / 6.0
    wb = (u * u * u - u) / 6.0
    return a * y[idx] + u * y[idx + 1] + wa * m[idx] + wb * m[idx + 1]


def _spline_resample_numpy(y, positions):
    return spline_eval_numpy(y, spline_second_derivs_numpy(y), positions)


def _lag_autocorr_numpy(env, lags):
    t = env.shape[0]
    r0 = float(env @ env)
    out = np.empty(lags.shape[0])
    for k in range(lags.shape[0]):
        lag = lags[k]
        out[k] = float(env[: t - lag] @ env[lag:]) / r0
    return out


# ---------------------------------------------------------------------------
# numba implementations (same math, explicit loops)
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @njit(cache=True)
    def _spline_resample_numba(y, positions):
        n, cols = y.shape
        npos = positions.shape[0]
        m = np.zeros((n, cols))
        if n >= 3:
            k = n - 2
            cp = np.empty(k)
            dp = np.empty((k, cols))
            cp[0] = 1.0 / 4.0
            for c in range(cols):
                dp[0, c] = 6.0 * (y[2, c] - 2.0 * y[1, c] + y[0, c]) / 4.0
            for i in range(1, k):
                den = 4.0 - cp[i - 1]
                cp[i] = 1.0 / den
                for c in range(cols):
                    rhs = 6.0 * (y[i + 2, c] - 2.0 * y[i + 1, c] + y[i, c])
                    dp[i, c] = (rhs - dp[i - 1, c]) / den
            for c in range(cols):
                m[k, c] = dp[k - 1, c]
            for i in range(k - 2, -1, -1):
                for c in range(cols):
                    m[i + 1, c] = dp[i, c] - cp[i] * m[i + 2, c]
        out = np.empty((npos, cols))
        for j in range(npos):
            pos = positions[j]
            i = int(pos)
            if i > n - 2:
                i = n - 2
            u = pos - i
            a = 1.0 - u
            wa = (a * a * a - a) / 6.0
            wb = (u * u * u - u) / 6.0
            for c in range(cols):
                out[j, c] = a * y[i, c] + u * y[i + 1, c] + wa * m[i, c] + wb * m[i + 1, c]
        return out

    @njit(cache=True)
    def _lag_autocorr_numba(env, lags):
        t = env.shape[0]
        r0 = 0.0
        for i in range(t):
            r0 += env[i] * env[i]
        out = np.empty(lags.shape[0])
        for k in range(lags.shape[0]):
            lag = lags[k]
            s = 0.0
            for i in range(t - lag):
                s += env[i] * env[i + lag]
            out[k] = s / r0
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def spline_resample(data, positions):
    """Resample every column of `data` at fractional row `positions`.

    data: [n, cols] array (n >= 2); positions: non-negative floats below n.
    Returns float64 [len(positions), cols].
    """
    y = np.ascontiguousarray(data, dtype=np.float64)
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    if NUMBA_ENABLED:
        return _spline_resample_numba(y, pos)
    return _spline_resample_numpy(y, pos)


def lag_autocorr(env, lags):
    """Autocorrelation of `env` at integer `lags`, normalised by lag-0 energy.

    Caller guarantees 1 <= lag <= len(env) - 1 and a non-degenerate (already
    mean-centred) envelope.
    """
    e = np.ascontiguousarray(env, dtype=np.float64)
    l = np.ascontiguousarray(lags, dtype=np.int64)
    if NUMBA_ENABLED:
        return _lag_autocorr_numba(e, l)
    return _lag_autocorr_numpy(e, l)
