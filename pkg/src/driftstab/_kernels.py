"""Compiled inner loops mirroring ``loop.loop_step`` operation for operation.

They exist for long Monte-Carlo runs; the test suite checks them bit-for-bit
against the reference step.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def step(x, idx, d, ok, a, b, K, s, A, B, L_idx):
    delta = 2.0 ** (s * idx)
    h = x / (delta * (K / 2))
    if abs(h) > 1.0:
        symbol = K + 1
        q = 0.0
    else:
        half = K // 2
        k = math.floor(x / delta) + half + 1
        if k <= K and x >= (k - half) * delta:
            k += 1
        elif k >= 1 and x < (k - 1 - half) * delta:
            k -= 1
        k = min(max(k, 1), K)
        symbol = k
        q = (k - (K + 1) / 2) * delta
    x_hat = q if ok else 0.0
    u = -(a / b) * x_hat
    x_next = a * x + b * u + d
    if abs(h) > 1.0 or not ok:
        idx_next = idx + B
    elif idx >= L_idx:
        idx_next = idx - A
    else:
        idx_next = idx
    return x_next, idx_next, h, symbol, abs(h) <= 1.0 and ok


@njit(cache=True)
def moment_chunk(x, idx, t, acc, comp, noise, ok, m, a, b, K, s, A, B, L_idx,
                 mark, rec_every, rec):
    """Advance a trajectory over one chunk of draws, summing |x_t|**m.

    Neumaier-compensated sum. Returns the carried state plus the running sum
    captured right after ``mark`` terms (nan if not reached in this chunk) and
    the step of a numeric escape (-1 if none).
    """
    at_mark = np.nan
    for j in range(noise.shape[0]):
        v = abs(x) ** m
        tot = acc + v
        if abs(acc) >= abs(v):
            comp += (acc - tot) + v
        else:
            comp += (v - tot) + acc
        acc = tot
        t += 1
        if t == mark:
            at_mark = acc + comp
        if rec_every > 0 and t % rec_every == 0:
            rec[t // rec_every - 1] = (acc + comp) / t
        x, idx, h, sym, stop = step(x, idx, noise[j], ok[j], a, b, K, s, A, B, L_idx)
        if not math.isfinite(x) or not math.isfinite(acc):
            return x, idx, t, acc, comp, at_mark, t - 1
    return x, idx, t, acc, comp, at_mark, -1


@njit(cache=True)
def first_stop(x, idx, noise, ok, pos, max_steps, a, b, K, s, A, B, L_idx):
    """Steps from a stop at time 0 (transmission forced successful) to the next stop.

    Step j consumes ``noise[pos + j]`` and ``ok[pos + j]``. Returns
    ``(T, x_T, idx_T, used)``; ``T == -1`` when ``max_steps`` pass without a
    stop and ``used == -1`` when the buffers run out first.
    """
    n = noise.shape[0]
    j = 0
    while True:
        if pos + j >= n:
            return -1, x, idx, -1
        flag = True if j == 0 else ok[pos + j]
        x_next, idx_next, h, sym, stop = step(x, idx, noise[pos + j], flag, a, b, K, s, A, B, L_idx)
        if j > 0 and stop:
            return j, x, idx, j + 1
        x, idx = x_next, idx_next
        j += 1
        if j >= max_steps:
            return -1, x, idx, j


@njit(cache=True)
def first_stop_batch(x0, i, idx0, noise, ok, pos, max_steps, T_out, idx_out,
                     a, b, K, s, A, B, L_idx):
    """Run ``first_stop`` for samples ``i, i+1, ...`` reading one shared buffer.

    Returns ``(i, pos)`` where ``i`` is the first sample left undone (buffer
    exhausted) or ``len(x0)`` when all are done.
    """
    n = x0.shape[0]
    while i < n:
        t, x_t, idx_t, used = first_stop(x0[i], idx0, noise, ok, pos, max_steps,
                                         a, b, K, s, A, B, L_idx)
        if used < 0:
            return i, pos
        T_out[i] = t
        idx_out[i] = idx_t
        pos += used
        i += 1
    return i, pos


@njit(cache=True)
def chain_path(cum, start, u):
    """Finite-chain path by inversion of cumulative transition rows."""
    out = np.empty(u.shape[0] + 1, dtype=np.int64)
    x = start
    out[0] = x
    for t in range(u.shape[0]):
        x = np.searchsorted(cum[x], u[t], side="right")
        out[t + 1] = x
    return out
