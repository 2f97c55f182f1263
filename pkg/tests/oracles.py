"""Independent reference implementations used to cross-check the library.

Everything here is written straight from the defining formulas, without
importing model code, so a bug in the main path cannot hide in its own test.
"""

from __future__ import annotations

import numpy as np


def fd_gradient(loss_fn, array: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. one array."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + eps
        lp = loss_fn()
        flat[j] = old - eps
        lm = loss_fn()
        flat[j] = old
        gflat[j] = (lp - lm) / (2.0 * eps)
    return grad


def rel_err(a, b, floor: float = 1e-6) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    err = np.abs(a - b)
    out = np.where(scale < floor, err, err / np.maximum(scale, floor))
    return float(np.max(out)) if out.size else 0.0


# ---- closed-form pieces ----------------------------------------------------

def softmax_direct(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    e = np.exp(scores)
    return e / e.sum()


def sigmoid_direct(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def logit_direct(y):
    y = np.asarray(y, dtype=float)
    return np.log(y / (1.0 - y))


def smooth_l1_direct(pred, target, beta=1.0) -> float:
    out = []
    for p, t in zip(np.ravel(pred), np.ravel(target)):
        d = abs(p - t)
        out.append(0.5 * d * d / beta if d < beta else d - 0.5 * beta)
    return float(np.mean(out))


def bce_direct(score, label, eps=1e-7) -> float:
    s = min(max(float(score), eps), 1.0 - eps)
    return -(label * np.log(s) + (1 - label) * np.log(1.0 - s))


def adam_single(w, g, lr, beta1=0.9, beta2=0.999, eps=1e-8, step=1,
                m=0.0, v=0.0):
    """Hand-executed single-parameter Adam update."""
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    mhat = m / (1 - beta1 ** step)
    vhat = v / (1 - beta2 ** step)
    return w - lr * mhat / (np.sqrt(vhat) + eps), m, v


def gru_direct(weights, x, h):
    """GRU cell from its defining equations; weights is the 9-tensor list."""
    wz, uz, bz, wr, ur, br, wc, uc, bc = weights
    z = sigmoid_direct(x @ wz + h @ uz + bz)
    r = sigmoid_direct(x @ wr + h @ ur + br)
    c = np.tanh(x @ wc + (r * h) @ uc + bc)
    return (1.0 - z) * h + z * c


# ---- aggregation (term-by-term) --------------------------------------------

def msa_direct(h_mot_k, h_mot_prev, x_k, h_aff_k, h_aff_prev, a_k, scores,
               w_mot, b_mot, w_aff, b_aff, score_eps=1e-7, with_aff=True):
    """Softmax-over-logit weighted, gated candidate aggregation.

    All candidate arrays are (K, dim); scores (K,).  Returns the aggregated
    motion state and (optionally) affinity state, computed term by term.
    """
    s = np.clip(np.asarray(scores, dtype=float), score_eps, 1.0 - score_eps)
    lg = logit_direct(s)
    alpha = softmax_direct(lg)
    k_count = len(s)
    h_mot = np.zeros(h_mot_k.shape[1])
    h_aff = np.zeros(h_aff_k.shape[1]) if with_aff else None
    for k in range(k_count):
        g_mot = sigmoid_direct(
            np.concatenate([h_mot_k[k], h_mot_prev[k], x_k[k]]) @ w_mot + b_mot)
        h_mot = h_mot + alpha[k] * (g_mot * h_mot_k[k])
        if with_aff:
            g_aff = sigmoid_direct(
                np.concatenate([h_aff_k[k], h_aff_prev[k], a_k[k]]) @ w_aff + b_aff)
            h_aff = h_aff + alpha[k] * (g_aff * h_aff_k[k])
    return h_mot, h_aff, alpha


# ---- joint loss (straight-line evaluation) ----------------------------------

def total_loss_direct(pred_offsets, target_offsets, target_mask,
                      scores_per_transition, labels_per_transition,
                      lam, t_obs, beta=1.0, eps=1e-7):
    """Joint loss: masked smooth-L1 at the final frame plus weighted mean BCE.

    pred/target offsets are (M, 12); mask is (M, 12) of 0/1.  Affinity terms
    are lists over the t_obs - 1 transitions (possibly with empty entries).
    """
    num = 0.0
    cnt = 0.0
    for i in range(pred_offsets.shape[0]):
        for j in range(pred_offsets.shape[1]):
            if target_mask[i, j] == 0:
                continue
            d = abs(pred_offsets[i, j] - target_offsets[i, j])
            num += 0.5 * d * d / beta if d < beta else d - 0.5 * beta
            cnt += 1.0
    l_traj = num / cnt if cnt else 0.0

    aff_sum = 0.0
    for scores, labels in zip(scores_per_transition, labels_per_transition):
        if len(scores) == 0:
            continue
        terms = []
        for s, lab in zip(scores, labels):
            s = min(max(float(s), eps), 1.0 - eps)
            terms.append(-(lab * np.log(s) + (1 - lab) * np.log(1.0 - s)))
        aff_sum += float(np.mean(terms))
    l_aff = aff_sum / (t_obs - 1)
    return l_traj + lam * l_aff, l_traj, l_aff


def lambda_direct(epoch, total_epochs, start=1.0, end=0.1):
    half = -(-total_epochs // 2)  # ceil
    if epoch >= half:
        return end
    return start + (end - start) * epoch / half


# ---- geometry / selection brute force ---------------------------------------

def gate_brute_force(prev_pos, curr_pos, theta_d):
    pairs = []
    for n in range(len(curr_pos)):
        for m in range(len(prev_pos)):
            d = np.hypot(curr_pos[n][0] - prev_pos[m][0],
                         curr_pos[n][1] - prev_pos[m][1])
            if d <= theta_d:
                pairs.append((m, n))
    return sorted(pairs, key=lambda p: (p[1], p[0]))


def topk_brute_force(entries, k):
    """entries: list of (score, distance, prev_index); returns best k."""
    ordered = sorted(entries, key=lambda e: (-e[0], e[1], e[2]))
    return ordered[:k]


def match_brute_force(det_pos, gt_pos, threshold):
    """Globally greedy nearest-neighbor matching (each side used once)."""
    cands = []
    for i, d in enumerate(det_pos):
        for j, g in enumerate(gt_pos):
            dist = float(np.hypot(d[0] - g[0], d[1] - g[1]))
            if dist <= threshold:
                cands.append((dist, i, j))
    cands.sort()
    used_d, used_g, out = set(), set(), []
    for dist, i, j in cands:
        if i in used_d or j in used_g:
            continue
        used_d.add(i)
        used_g.add(j)
        out.append((i, j, dist))
    return sorted(out)


def linear_fit_residual(points) -> float:
    """Degree-1 least squares on x(t), y(t) via explicit normal equations."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    t = np.arange(1.0, n + 1.0)
    total = 0.0
    for axis in range(2):
        y = pts[:, axis]
        st, sy = t.sum(), y.sum()
        stt, sty = (t * t).sum(), (t * y).sum()
        det = n * stt - st * st
        slope = (n * sty - st * sy) / det
        intercept = (sy - slope * st) / n
        r = y - (slope * t + intercept)
        total += float((r * r).sum())
    return total


def circle_positions(center, radius, phase0, omega, dt, n):
    """Closed-form constant-turn arc sampled at n frames."""
    t = np.arange(n) * dt
    ang = phase0 + omega * t
    return np.stack([center[0] + radius * np.cos(ang),
                     center[1] + radius * np.sin(ang)], axis=1)
