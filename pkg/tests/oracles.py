"""Slow, obviously-correct reference computations used as test oracles.

Nothing here shares code with the package.
"""
import math

import numpy as np


def naive_convolve_replicate(gray):
    h, w = gray.shape
    out = np.zeros((h, w))
    kernel = [[0, 0.25, 0], [0.25, 0, 0.25], [0, 0.25, 0]]
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr = min(max(r + dr, 0), h - 1)
                    cc = min(max(c + dc, 0), w - 1)
                    acc += kernel[dr + 1][dc + 1] * gray[rr, cc]
            out[r, c] = acc
    return out


def naive_pair_counts(img, drow, dcol):
    h, w = img.shape
    counts = np.zeros((256, 256), dtype=np.int64)
    for r in range(h):
        for c in range(w):
            r2, c2 = r + drow, c + dcol
            if 0 <= r2 < h and 0 <= c2 < w:
                counts[int(img[r, c]), int(img[r2, c2])] += 1
    return counts


def naive_features(m):
    """(f_c, f_h, f_d, f_e, f_rho) by explicit double loops with exact summation."""
    n = m.shape[0]
    vals = m.tolist()
    terms_c, terms_h, terms_d, terms_e, terms_mi, terms_mj = [], [], [], [], [], []
    for i in range(n):
        row = vals[i]
        for j in range(n):
            v = row[j]
            terms_c.append(v * (i - j) ** 2)
            terms_h.append(v / (1 + (i - j) ** 2))
            terms_d.append(v * abs(i - j))
            terms_e.append(v * v)
            terms_mi.append(v * i)
            terms_mj.append(v * j)
    mu_i = math.fsum(terms_mi)
    mu_j = math.fsum(terms_mj)
    vi, vj, cov = [], [], []
    for i in range(n):
        row = vals[i]
        for j in range(n):
            v = row[j]
            vi.append(v * (i - mu_i) ** 2)
            vj.append(v * (j - mu_j) ** 2)
            cov.append(v * (i - mu_i) * (j - mu_j))
    s_i = math.sqrt(math.fsum(vi))
    s_j = math.sqrt(math.fsum(vj))
    rho = math.fsum(cov) / (s_i * s_j) if s_i * s_j >= 1e-12 else 0.0
    return (math.fsum(terms_c), math.fsum(terms_h), math.fsum(terms_d),
            math.sqrt(math.fsum(terms_e)), rho)


def pairwise_auc(real, synth):
    wins = 0.0
    for r in real:
        for s in synth:
            if r > s:
                wins += 1.0
            elif r == s:
                wins += 0.5
    return wins / (len(real) * len(synth))


def trapezoid_auc(points):
    """Area under (fpr, tpr) rows by the trapezoid rule."""
    fpr, tpr = points[:, 1], points[:, 2]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def recursive_path_length(tree, x, node=0, depth=0):
    """Walk an isolation tree one node at a time."""
    if tree.feature[node] < 0:
        size = int(tree.size[node])
        if size <= 1:
            c = 0.0
        else:
            h = sum(1.0 / k for k in range(1, size))
            c = 2.0 * h - 2.0 * (size - 1) / size
        return depth + c
    if x[tree.feature[node]] < tree.threshold[node]:
        return recursive_path_length(tree, x, tree.left[node], depth + 1)
    return recursive_path_length(tree, x, tree.right[node], depth + 1)


def random_normalized_matrix(rng, kind="dense"):
    if kind == "dense":
        m = rng.random((256, 256))
    else:
        m = np.zeros((256, 256))
        idx = rng.integers(0, 256, size=(400, 2))
        m[idx[:, 0], idx[:, 1]] = rng.random(400)
    return m / m.sum()
