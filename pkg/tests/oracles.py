"""Independent scalar reference evaluators.

Written with plain Python loops (or a different linear-algebra route) so
that they share no code path with the package under test.
"""

import math

import numpy as np


# -- selection ---------------------------------------------------------------

def one_best(q):
    best, idx = -1.0, -1
    for j, v in enumerate(q):
        if v > best:
            best, idx = v, j
    return [1.0 if j == idx else 0.0 for j in range(len(q))]


def fixed_n(q, n):
    ranked = sorted(range(len(q)), key=lambda j: (-q[j], j))
    chosen = set(ranked[:n])
    return [1.0 if j in chosen else 0.0 for j in range(len(q))]


def auto_support(q, gamma):
    qs = max(q)
    arg = q.index(qs)
    keep = []
    for j, v in enumerate(q):
        if v == 1.0:
            r = 1.0
        else:
            r = (v / qs) * ((1.0 - qs) / (1.0 - v))
        keep.append(r > gamma or j == arg)
    return keep


def auto_n(q, gamma):
    return [1.0 if k else 0.0 for k in auto_support(q, gamma)]


def soft_n(q, gamma):
    return [v if k else 0.0 for v, k in zip(q, auto_support(q, gamma))]


# -- losses ------------------------------------------------------------------

def delta_scalar(m, half_width=2):
    """Regression delta along rows with replicated edges, one entry at a time."""
    T, F = len(m), len(m[0])
    denom = 2 * sum(n * n for n in range(1, half_width + 1))
    out = [[0.0] * F for _ in range(T)]
    for t in range(T):
        for f in range(F):
            acc = 0.0
            for n in range(1, half_width + 1):
                ahead = m[min(t + n, T - 1)][f]
                behind = m[max(t - n, 0)][f]
                acc += n * (ahead - behind)
            out[t][f] = acc / denom
    return out


def j1_scalar(q, snr):
    return sum((a - b) ** 2 for a, b in zip(q, snr)) / len(q)


def j2_scalar(est, x, y, w_d, w_c, half_width=2):
    """``est`` real T x F lists; ``x`` and ``y`` complex T x F lists."""
    T, F = len(est), len(est[0])
    ref = [[0.0] * F for _ in range(T)]
    for t in range(T):
        for f in range(F):
            my = abs(y[t][f])
            if my >= 1e-10:
                # |X| cos(theta_y - theta_x)
                ref[t][f] = abs(x[t][f]) * math.cos(np.angle(y[t][f]) - np.angle(x[t][f]))
    d_est = delta_scalar(est, half_width)
    d_ref = delta_scalar(ref, half_width)
    a_est = delta_scalar(d_est, half_width)
    a_ref = delta_scalar(d_ref, half_width)
    total = 0.0
    for t in range(T):
        for f in range(F):
            total += (est[t][f] - ref[t][f]) ** 2
            total += w_d * (d_est[t][f] - d_ref[t][f]) ** 2
            total += w_c * (a_est[t][f] - a_ref[t][f]) ** 2
    return total / T


# -- beamforming -------------------------------------------------------------

def mvdr_via_cholesky(phi, c, delta=1e-6, eps=1e-10):
    """MVDR weights through a Cholesky factorisation of the loaded covariance."""
    w = phi.shape[0]
    load = delta * (np.real(np.trace(phi)) / w + eps)
    a = phi + load * np.eye(w)
    L = np.linalg.cholesky(a)
    z = np.linalg.solve(L, c)
    u = np.linalg.solve(L.conj().T, z)
    return u / np.sum(np.conj(c) * u)


def principal_power_iteration(phi, iters=2000):
    v = np.ones(phi.shape[0], dtype=complex) / math.sqrt(phi.shape[0])
    for _ in range(iters):
        v = phi @ v
        v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v * np.conj(v[k]) / abs(v[k])


# -- dsp / metrics -----------------------------------------------------------

def dft_frame(frame, n_fft):
    """Direct O(N^2) DFT of one frame, positive-frequency half."""
    out = []
    for k in range(n_fft // 2 + 1):
        acc = 0j
        for n, v in enumerate(frame):
            acc += v * complex(math.cos(2 * math.pi * k * n / n_fft), -math.sin(2 * math.pi * k * n / n_fft))
        out.append(acc)
    return out


def si_sdr_scalar(est, ref):
    dot = sum(a * b for a, b in zip(est, ref))
    rr = sum(b * b for b in ref)
    alpha = dot / rr
    num = sum((alpha * b) ** 2 for b in ref)
    den = sum((alpha * b - a) ** 2 for a, b in zip(est, ref))
    if den <= 0:
        return 60.0
    if num <= 0:
        return -60.0
    return min(60.0, max(-60.0, 10 * math.log10(num / den)))


def l1_ratio(a, i):
    sa = sum(abs(v) for v in a)
    si = sum(abs(v) for v in i)
    return sa / (sa + si)
