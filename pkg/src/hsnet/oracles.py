"""Brute-force references for differential testing.

Everything here is deliberately slow and written with explicit loops in
float64 numpy. Nothing is imported from the production kernels, so a bug
there cannot cancel out against the same bug here. Use only on small inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class OracleReport:
    max_abs_err: float
    mean_abs_err: float
    n_cases: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_abs_err < self.tolerance

    @classmethod
    def compare(cls, pairs, tolerance: float) -> "OracleReport":
        errs = [np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64)).ravel() for a, b in pairs]
        flat = np.concatenate(errs) if errs else np.zeros(1)
        return cls(float(flat.max()), float(flat.mean()), len(errs), tolerance)


def _sq_dists_to(row: np.ndarray, table: np.ndarray) -> list:
    # direct differences, one candidate at a time
    return [float(np.dot(row - other, row - other)) for other in table]


def dense_nonlocal(queries, candidates, temperature: float, values=None) -> np.ndarray:
    """Normalized Gaussian-weighted average over *all* candidates, per query."""
    q = np.asarray(queries, dtype=np.float64)
    c = np.asarray(candidates, dtype=np.float64)
    v = c if values is None else np.asarray(values, dtype=np.float64)
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        d2 = _sq_dists_to(q[i], c)
        # shift by the minimum so tiny temperatures do not underflow to 0/0
        m = min(d2)
        w = [math.exp(-(d - m) / temperature) for d in d2]
        z = math.fsum(w)
        for j in range(c.shape[0]):
            out[i] += (w[j] / z) * v[j]
    return out


def exhaustive_knn(queries, candidates, k: int):
    """Full distance table + stable sort; ties go to the lower candidate index.

    Returns ``(neighbor_idx, distances)`` as (Nq, K) arrays.
    """
    q = np.asarray(queries, dtype=np.float64)
    c = np.asarray(candidates, dtype=np.float64)
    idx = np.zeros((q.shape[0], k), dtype=np.int64)
    dist = np.zeros((q.shape[0], k))
    for i in range(q.shape[0]):
        table = [(d, j) for j, d in enumerate(_sq_dists_to(q[i], c))]
        table.sort()  # tuples: distance first, then index
        for r in range(k):
            idx[i, r] = table[r][1]
            dist[i, r] = math.sqrt(table[r][0])
    return idx, dist


def loop_attention(s, w_q, w_k, w_v) -> np.ndarray:
    """Scaled dot-product attention with scalar loops only."""
    s = np.asarray(s, dtype=np.float64)
    n, d = s.shape
    dh = np.asarray(w_q).shape[1]

    def project(w):
        w = np.asarray(w, dtype=np.float64)
        out = [[0.0] * dh for _ in range(n)]
        for i in range(n):
            for o in range(dh):
                acc = 0.0
                for c in range(d):
                    acc += s[i, c] * w[c, o]
                out[i][o] = acc
        return out

    q, k, v = project(w_q), project(w_k), project(w_v)
    scale = 1.0 / math.sqrt(dh)
    result = np.zeros((n, dh))
    for i in range(n):
        logits = []
        for j in range(n):
            acc = 0.0
            for o in range(dh):
                acc += q[i][o] * k[j][o]
            logits.append(acc * scale)
        top = max(logits)
        e = [math.exp(x - top) for x in logits]
        z = sum(e)
        for j in range(n):
            for o in range(dh):
                result[i, o] += e[j] / z * v[j][o]
    return result


def loop_combine(updated, alpha) -> np.ndarray:
    mats = [np.asarray(u, dtype=np.float64) for u in updated]
    out = np.zeros_like(mats[0])
    for idx in np.ndindex(out.shape):
        out[idx] = sum(float(alpha[k]) * mats[k][idx] for k in range(len(mats)))
    return out


def loop_luma(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    _, h, w = img.shape
    y = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            y[r, c] = (65.481 * img[0, r, c] + 128.553 * img[1, r, c] + 24.966 * img[2, r, c] + 16.0) / 255.0
    return y


def _shave(x: np.ndarray, border: int) -> np.ndarray:
    if border == 0:
        return x
    return x[border:-border, border:-border]


def loop_psnr(a, b, crop_border: int = 0) -> float:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.ndim == 3:
        a, b = loop_luma(a), loop_luma(b)
    a, b = _shave(a, crop_border), _shave(b, crop_border)
    total, count = 0.0, 0
    for r in range(a.shape[0]):
        for c in range(a.shape[1]):
            total += (a[r, c] - b[r, c]) ** 2
            count += 1
    mse = total / count
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def loop_ssim(a, b, crop_border: int = 0, window: int = 11, sigma: float = 1.5) -> float:
    """Windowed SSIM evaluated window by window with weighted sums."""
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.ndim == 3:
        a, b = loop_luma(a), loop_luma(b)
    a, b = _shave(a, crop_border), _shave(b, crop_border)
    c1, c2 = 0.01**2, 0.03**2
    half = (window - 1) / 2
    g1 = [math.exp(-((i - half) ** 2) / (2 * sigma**2)) for i in range(window)]
    z = sum(g1)
    g1 = [x / z for x in g1]
    values = []
    for r in range(a.shape[0] - window + 1):
        for c in range(a.shape[1] - window + 1):
            mu_a = mu_b = 0.0
            for i in range(window):
                for j in range(window):
                    wt = g1[i] * g1[j]
                    mu_a += wt * a[r + i, c + j]
                    mu_b += wt * b[r + i, c + j]
            va = vb = cov = 0.0
            for i in range(window):
                for j in range(window):
                    wt = g1[i] * g1[j]
                    da = a[r + i, c + j] - mu_a
                    db = b[r + i, c + j] - mu_b
                    va += wt * da * da
                    vb += wt * db * db
                    cov += wt * da * db
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (va + vb + c2)
            values.append(num / den)
    return sum(values) / len(values)


def loop_block_mean(feat) -> np.ndarray:
    feat = np.asarray(feat, dtype=np.float64)
    c, h, w = feat.shape
    out = np.zeros((c, h // 2, w // 2))
    for ch in range(c):
        for r in range(h // 2):
            for col in range(w // 2):
                out[ch, r, col] = (
                    feat[ch, 2 * r, 2 * col]
                    + feat[ch, 2 * r, 2 * col + 1]
                    + feat[ch, 2 * r + 1, 2 * col]
                    + feat[ch, 2 * r + 1, 2 * col + 1]
                ) / 4.0
    return out


def _cubic(x: float, a: float = -0.5) -> float:
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def loop_bicubic_downscale_1d(signal, s: int) -> np.ndarray:
    """Antialiased cubic filter then subsample, one output sample at a time.

    The kernel is stretched by ``s``; samples outside the signal are mirrored
    (``x[-1] = x[0]``, ``x[n] = x[n-1]``).
    """
    x = np.asarray(signal, dtype=np.float64)
    n = len(x)
    out = []
    for o in range(n // s):
        center = (o + 0.5) * s - 0.5  # 0-based input coordinate
        acc, wsum = 0.0, 0.0
        lo = int(math.floor(center - 2 * s)) - 1
        for t in range(lo, lo + 4 * s + 4):
            wt = _cubic((center - t) / s) / s
            if wt == 0.0:
                continue
            m = t % (2 * n)
            src = m if m < n else 2 * n - 1 - m
            acc += wt * x[src]
            wsum += wt
        out.append(acc / wsum)
    return np.array(out)
