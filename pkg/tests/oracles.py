"""Independent loop oracles for the saliency metrics.

Written directly from the metric definitions, sharing no code with
``btsnet.metrics``.
"""

import math

import numpy as np

THRESHOLDS = np.arange(256) / 255.0

REF_EPS = np.spacing(1.0)


def norm_loop(s):
    lo, hi = min(s.flat), max(s.flat)
    if hi == lo:
        return np.clip(s, 0, 1)
    return (s - lo) / (hi - lo)


def counts_loop(s, g):
    s = norm_loop(s)
    out = []
    for k in range(256):
        t = k / 255.0
        tp = fp = fn = tn = 0
        for p, y in zip(s.flat, g.flat):
            pos = p > t
            if pos and y:
                tp += 1
            elif pos:
                fp += 1
            elif y:
                fn += 1
            else:
                tn += 1
        out.append((tp, fp, fn, tn))
    return np.array(out)


def f_loop(s, g, beta2=0.3):
    res = []
    for tp, fp, fn, _ in counts_loop(s, g):
        if tp + fp + fn == 0:
            res.append(1.0)
            continue
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        res.append((1 + beta2) * p * r / (beta2 * p + r) if beta2 * p + r else 0.0)
    return np.array(res)


def mae_loop(s, g):
    return sum(abs(p - y) for p, y in zip(s.flat, g.flat)) / s.size


def e_reference(s, g):
    """Enhanced-alignment score per threshold with the original epsilon."""
    sn = norm_loop(s)
    gf = g.astype(float)
    out = []
    for t in THRESHOLDS:
        fm = (sn > t).astype(float)
        if gf.sum() == 0:
            enhanced = 1.0 - fm
        elif gf.sum() == gf.size:
            enhanced = fm
        else:
            a, b = fm - fm.mean(), gf - gf.mean()
            align = 2 * a * b / (a * a + b * b + REF_EPS)
            enhanced = (align + 1) ** 2 / 4
        out.append(enhanced.mean())
    return np.array(out)


def _mean(v):
    return sum(v) / len(v)


def _std(v):
    if len(v) < 2:
        return 0.0
    m = _mean(v)
    return math.sqrt(sum((x - m) ** 2 for x in v) / (len(v) - 1))


def s_reference(s, g, alpha=0.5):
    """Structure measure as originally defined, written with plain loops."""
    h, w = g.shape
    gb = g.astype(bool)
    y = gb.mean()
    if y == 0:
        return max(0.0, 1 - _mean(list(s.flat)))
    if y == 1:
        return max(0.0, _mean(list(s.flat)))

    def obj(vals):
        x = _mean(vals)
        return 2 * x / (x * x + 1 + _std(vals) + REF_EPS)

    fg = [s[i, j] for i in range(h) for j in range(w) if gb[i, j]]
    bg = [1 - s[i, j] for i in range(h) for j in range(w) if not gb[i, j]]
    s_obj = y * obj(fg) + (1 - y) * obj(bg)

    # centroid in 1-based coordinates, MATLAB round()
    rows = [i + 1 for i in range(h) for j in range(w) if gb[i, j]]
    cols = [j + 1 for i in range(h) for j in range(w) if gb[i, j]]
    X = int(math.floor(_mean(cols) + 0.5))
    Y = int(math.floor(_mean(rows) + 0.5))

    def ssim(p, q):
        n = len(p)
        x, yq = _mean(p), _mean(q)
        sx = sum((a - x) ** 2 for a in p) / (n - 1 + REF_EPS)
        sy = sum((b - yq) ** 2 for b in q) / (n - 1 + REF_EPS)
        sxy = sum((a - x) * (b - yq) for a, b in zip(p, q)) / (n - 1 + REF_EPS)
        al = 4 * x * yq * sxy
        be = (x * x + yq * yq) * (sx + sy)
        if al != 0:
            return al / (be + REF_EPS)
        return 1.0 if be == 0 else 0.0

    def block(r0, r1, c0, c1):
        p = [s[i, j] for i in range(r0, r1) for j in range(c0, c1)]
        q = [float(gb[i, j]) for i in range(r0, r1) for j in range(c0, c1)]
        return ssim(p, q) if p else 0.0

    area = h * w
    w1 = X * Y / area
    w2 = (w - X) * Y / area
    w3 = X * (h - Y) / area
    w4 = 1 - w1 - w2 - w3
    s_reg = (w1 * block(0, Y, 0, X) + w2 * block(0, Y, X, w)
             + w3 * block(Y, h, 0, X) + w4 * block(Y, h, X, w))
    return max(0.0, alpha * s_obj + (1 - alpha) * s_reg)


def random_pairs(n=100, size=8, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        g = rng.random((size, size)) < rng.uniform(0.1, 0.9)
        if i % 10 == 0:
            # blob-shaped foreground
            g = np.zeros((size, size), bool)
            r, c = rng.integers(0, size - 2, 2)
            g[r:r + rng.integers(2, 5), c:c + rng.integers(2, 5)] = True
        if i == 1:
            g[:] = False
        if i == 2:
            g[:] = True
        s = np.clip(0.6 * g + 0.5 * rng.random((size, size)) - 0.1, 0, 1)
        if i % 7 == 0:
            s = np.round(s * 255) / 255  # quantized like 8-bit files
        if i == 3:
            s = np.full((size, size), 0.3)
        pairs.append((s, g))
    return pairs
