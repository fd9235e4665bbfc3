"""Hot numeric kernels: seeded Gaussian streams and Monte-Carlo trial loops.

Two interchangeable implementations live here. The numba path compiles
scalar loops (parallel over trials with per-trial derived seeds); the numpy
path evaluates the same streams vectorized in bounded-memory chunks. Which
one backs the public names is decided by :mod:`repalign.backend`
(``REPALIGN_NUMBA`` env flag). ``benchmarks/bench_backends.py`` times both.

Stream contract (identical across backends, bit-exact at the integer level):
a stream with 64-bit seed ``s`` emits words ``x_j = finalize(s + j*GOLDEN)``
for j = 1, 2, ...; consecutive word pairs are turned into two standard
normals by Box-Muller (u1 from the odd word, made log-safe by the +1 offset;
u2 from the even word). Trial ``t`` of a Monte-Carlo run seeded ``s`` uses
the sub-stream seeded ``mix(s, t)``, so trials are order-independent and
parallelize freely.
"""

from __future__ import annotations

import math

import numpy as np

from ._bits import GOLDEN_GAMMA, MASK64, mix
from .backend import numba_enabled

_GOLD = np.uint64(GOLDEN_GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U1 = np.uint64(1)
_U2 = np.uint64(2)
_INV53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi

ACT_RELU = 0
ACT_SIGMOID = 1
ACT_GELU = 2
ACT_NONE = 3

_GELU_C0 = 0.7978845608
_GELU_C1 = 0.044715

# elements per chunk in the vectorized fallbacks (bounds peak memory)
_CHUNK = 1 << 22


def _u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------

def _finalize_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _words_np(seed: int, n: int, offset: int = 0) -> np.ndarray:
    ctr = _u64(seed) + np.arange(offset + 1, offset + n + 1, dtype=np.uint64) * _GOLD
    return _finalize_np(ctr)


def _normals_grid_np(seeds: np.ndarray, n: int) -> np.ndarray:
    """(len(seeds), n) normals; row i comes from the stream seeded seeds[i]."""
    pairs = (n + 1) // 2
    ctr = seeds[:, None] + np.arange(1, 2 * pairs + 1, dtype=np.uint64)[None, :] * _GOLD
    x = _finalize_np(ctr)
    u1 = ((x[:, 0::2] >> _S11).astype(np.float64) + 1.0) * _INV53
    u2 = (x[:, 1::2] >> _S11).astype(np.float64) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    out = np.empty((len(seeds), 2 * pairs))
    out[:, 0::2] = r * np.cos(ang)
    out[:, 1::2] = r * np.sin(ang)
    return out[:, :n]


def _normal_block_np(seed: int, n: int) -> np.ndarray:
    if n == 0:
        return np.empty(0)
    return _normals_grid_np(np.array([_u64(seed)], dtype=np.uint64), n)[0]


def _trial_seeds(seed: int, trials: int) -> np.ndarray:
    return np.array([mix(seed, t) for t in range(trials)], dtype=np.uint64)


def _chunked(trials: int, per_trial: int):
    step = max(1, _CHUNK // max(1, per_trial))
    for lo in range(0, trials, step):
        yield lo, min(trials, lo + step)


def _sq_norm_trials_np(seed: int, trials: int, d: int, bias: np.ndarray,
                       sigma: float) -> np.ndarray:
    seeds = _trial_seeds(seed, trials)
    out = np.empty(trials)
    for lo, hi in _chunked(trials, d):
        g = _normals_grid_np(seeds[lo:hi], d)
        y = sigma * g + bias[None, :]
        out[lo:hi] = np.einsum("ij,ij->i", y, y)
    return out


def _cosine_trials_np(seed: int, trials: int, d: int, rho: float) -> np.ndarray:
    seeds = _trial_seeds(seed, trials)
    out = np.empty(trials)
    comp = math.sqrt(max(0.0, 1.0 - rho * rho))
    for lo, hi in _chunked(trials, 2 * d):
        g = _normals_grid_np(seeds[lo:hi], 2 * d)
        a = g[:, 0::2]
        b = rho * a + comp * g[:, 1::2]
        num = np.einsum("ij,ij->i", a, b)
        den = np.sqrt(np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b))
        out[lo:hi] = num / den
    return out


def _apply_act_np(x: np.ndarray, act_id: int) -> np.ndarray:
    if act_id == ACT_RELU:
        return np.maximum(x, 0.0)
    if act_id == ACT_SIGMOID:
        return 1.0 / (1.0 + np.exp(-x))
    if act_id == ACT_GELU:
        return 0.5 * x * (1.0 + np.tanh(_GELU_C0 * (x + _GELU_C1 * x ** 3)))
    return x


def _activation_trials_np(seed: int, trials: int, d: int, rho: float,
                          act_id: int) -> np.ndarray:
    seeds = _trial_seeds(seed, trials)
    out = np.empty((trials, 3))
    comp = math.sqrt(max(0.0, 1.0 - rho * rho))
    for lo, hi in _chunked(trials, 2 * d):
        g = _normals_grid_np(seeds[lo:hi], 2 * d)
        z1 = g[:, 0::2]
        z2 = rho * z1 + comp * g[:, 1::2]
        sa = _apply_act_np(z1, act_id)
        sb = _apply_act_np(z2, act_id)
        sa2 = np.einsum("ij,ij->i", sa, sa)
        sb2 = np.einsum("ij,ij->i", sb, sb)
        sab = np.einsum("ij,ij->i", sa, sb)
        la2 = np.einsum("ij,ij->i", z1, z1)
        lb2 = np.einsum("ij,ij->i", z2, z2)
        lab = np.einsum("ij,ij->i", z1, z2)
        den_s = np.sqrt(sa2 * sb2)
        den_l = np.sqrt(la2 * lb2)
        out[lo:hi, 0] = np.divide(sab, den_s, out=np.zeros(hi - lo), where=den_s > 0)
        out[lo:hi, 1] = np.divide(lab, den_l, out=np.zeros(hi - lo), where=den_l > 0)
        out[lo:hi, 2] = sa2 / d
    return out


def _pairwise_cosine_np(xhat: np.ndarray, n_bins: int):
    n = xhat.shape[0]
    row_sums = np.zeros(n)
    hist = np.zeros(n_bins, dtype=np.int64)
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    block = max(1, _CHUNK // max(1, n))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        g = xhat[lo:hi] @ xhat.T
        for i in range(lo, hi):
            vals = np.clip(g[i - lo, i + 1:], -1.0, 1.0)
            if vals.size:
                row_sums[i] = float(vals.sum())
                hist += np.histogram(vals, bins=edges)[0]
    return row_sums, hist


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if numba_enabled():
    from numba import njit, prange

    @njit(cache=True, inline="always")
    def _fin_nb(z):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    @njit(cache=True, inline="always")
    def _mix_nb(a, b):
        return _fin_nb((a ^ b) + _GOLD)

    @njit(cache=True, inline="always")
    def _pair_nb(base, j):
        """Normals (2j, 2j+1) of the stream at ``base`` (j is 0-based)."""
        x1 = _fin_nb(base + (_U2 * j + _U1) * _GOLD)
        x2 = _fin_nb(base + (_U2 * j + _U2) * _GOLD)
        u1 = (np.float64(x1 >> _S11) + 1.0) * _INV53
        u2 = np.float64(x2 >> _S11) * _INV53
        r = math.sqrt(-2.0 * math.log(u1))
        ang = _TWO_PI * u2
        return r * math.cos(ang), r * math.sin(ang)

    @njit(cache=True, parallel=True)
    def _normal_block_nb(seed, n, out):
        pairs = (n + 1) // 2
        for j in prange(pairs):
            g1, g2 = _pair_nb(seed, np.uint64(j))
            out[2 * j] = g1
            k = 2 * j + 1
            if k < n:
                out[k] = g2

    @njit(cache=True, parallel=True)
    def _sq_norm_trials_nb(seed, trials, d, bias, sigma, out):
        pairs = (d + 1) // 2
        for t in prange(trials):
            base = _mix_nb(seed, np.uint64(t))
            acc = 0.0
            for j in range(pairs):
                g1, g2 = _pair_nb(base, np.uint64(j))
                y = sigma * g1 + bias[2 * j]
                acc += y * y
                k = 2 * j + 1
                if k < d:
                    y = sigma * g2 + bias[k]
                    acc += y * y
            out[t] = acc

    @njit(cache=True, parallel=True)
    def _cosine_trials_nb(seed, trials, d, rho, comp, out):
        for t in prange(trials):
            base = _mix_nb(seed, np.uint64(t))
            num = 0.0
            na = 0.0
            nb = 0.0
            for k in range(d):
                a, g = _pair_nb(base, np.uint64(k))
                b = rho * a + comp * g
                num += a * b
                na += a * a
                nb += b * b
            out[t] = num / math.sqrt(na * nb)

    @njit(cache=True, inline="always")
    def _act_nb(x, act_id):
        if act_id == ACT_RELU:
            return x if x > 0.0 else 0.0
        if act_id == ACT_SIGMOID:
            return 1.0 / (1.0 + math.exp(-x))
        if act_id == ACT_GELU:
            return 0.5 * x * (1.0 + math.tanh(_GELU_C0 * (x + _GELU_C1 * x ** 3)))
        return x

    @njit(cache=True, parallel=True)
    def _activation_trials_nb(seed, trials, d, rho, comp, act_id, out):
        for t in prange(trials):
            base = _mix_nb(seed, np.uint64(t))
            sa2 = 0.0
            sb2 = 0.0
            sab = 0.0
            la2 = 0.0
            lb2 = 0.0
            lab = 0.0
            for k in range(d):
                z1, g = _pair_nb(base, np.uint64(k))
                z2 = rho * z1 + comp * g
                a = _act_nb(z1, act_id)
                b = _act_nb(z2, act_id)
                sa2 += a * a
                sb2 += b * b
                sab += a * b
                la2 += z1 * z1
                lb2 += z2 * z2
                lab += z1 * z2
            den_s = math.sqrt(sa2 * sb2)
            den_l = math.sqrt(la2 * lb2)
            out[t, 0] = sab / den_s if den_s > 0.0 else 0.0
            out[t, 1] = lab / den_l if den_l > 0.0 else 0.0
            out[t, 2] = sa2 / d

    @njit(cache=True, parallel=True)
    def _pairwise_cosine_nb(xhat, n_bins, row_sums, hists):
        n, d = xhat.shape
        for i in prange(n):
            acc = 0.0
            for j in range(i + 1, n):
                c = 0.0
                for k in range(d):
                    c += xhat[i, k] * xhat[j, k]
                if c > 1.0:
                    c = 1.0
                elif c < -1.0:
                    c = -1.0
                acc += c
                b = int((c + 1.0) * 0.5 * n_bins)
                if b >= n_bins:
                    b = n_bins - 1
                hists[i, b] += 1
            row_sums[i] = acc


# ---------------------------------------------------------------------------
# public, backend-dispatched API
# ---------------------------------------------------------------------------

def normal_block(seed: int, n: int) -> np.ndarray:
    """``n`` standard normals from the stream seeded ``seed``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if not numba_enabled():
        return _normal_block_np(seed, n)
    out = np.empty(n)
    if n:
        _normal_block_nb(_u64(seed), n, out)
    return out


def sq_norm_trials(seed: int, trials: int, d: int, bias: np.ndarray,
                   sigma: float) -> np.ndarray:
    """Per-trial squared norms ``sum_k (sigma*g_k + bias_k)**2``."""
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    if not numba_enabled():
        return _sq_norm_trials_np(seed, trials, d, bias, sigma)
    out = np.empty(trials)
    _sq_norm_trials_nb(_u64(seed), trials, d, bias, float(sigma), out)
    return out


def cosine_trials(seed: int, trials: int, d: int, rho: float) -> np.ndarray:
    """Per-trial cosine of two unit-correlation-``rho`` Gaussian vectors."""
    comp = math.sqrt(max(0.0, 1.0 - rho * rho))
    if not numba_enabled():
        return _cosine_trials_np(seed, trials, d, rho)
    out = np.empty(trials)
    _cosine_trials_nb(_u64(seed), trials, d, float(rho), comp, out)
    return out


def activation_trials(seed: int, trials: int, d: int, rho: float,
                      act_id: int) -> np.ndarray:
    """Per-trial [uncentered corr of act(Z1),act(Z2); same for Z1,Z2;
    mean act(Z1)^2] over ``d`` correlation-``rho`` Gaussian pairs."""
    if not numba_enabled():
        return _activation_trials_np(seed, trials, d, rho, act_id)
    comp = math.sqrt(max(0.0, 1.0 - rho * rho))
    out = np.empty((trials, 3))
    _activation_trials_nb(_u64(seed), trials, d, float(rho), comp, act_id, out)
    return out


def pairwise_cosine_stats(xhat: np.ndarray, n_bins: int):
    """(mean, histogram) of cosines over all unordered row pairs.

    ``xhat`` must already have unit rows. The mean is an exact (fsum)
    reduction of per-row partial sums, so it does not depend on thread
    count or chunking.
    """
    xhat = np.ascontiguousarray(xhat, dtype=np.float64)
    n = xhat.shape[0]
    n_pairs = n * (n - 1) // 2
    if numba_enabled():
        row_sums = np.zeros(n)
        hists = np.zeros((n, n_bins), dtype=np.int64)
        _pairwise_cosine_nb(xhat, n_bins, row_sums, hists)
        hist = hists.sum(axis=0)
    else:
        row_sums, hist = _pairwise_cosine_np(xhat, n_bins)
    mean = math.fsum(row_sums) / n_pairs if n_pairs else 0.0
    return mean, hist
