"""Reverse-mode differentiation over dense 2-D float64 arrays.

Every value on the tape is a 2-D numpy array (scalars are (1, 1), bias rows
are (1, n)).  Operations record a backward closure; ``Tape.backward`` walks
the recorded nodes in reverse creation order, which is a valid topological
order.  Gradients of parameter leaves accumulate into externally supplied
buffers so repeated forward passes (shared weights across time steps, or
several sequences of one batch) sum their contributions.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Var", "Tape", "NumericsError"]


class NumericsError(RuntimeError):
    """Numerical failure (non-finite values, domain violations)."""


class Var:
    """One node of the computation: a 2-D value and its (lazy) gradient."""

    __slots__ = ("value", "grad", "_backward", "no_grad")

    def __init__(self, value: np.ndarray, no_grad: bool = False):
        self.value = value
        self.grad: np.ndarray | None = None
        self._backward = None
        self.no_grad = no_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, no_grad={self.no_grad})"


def _acc(parent: Var, g: np.ndarray) -> None:
    # g may alias another node's gradient: copy on first touch
    if parent.no_grad:
        return
    if parent.grad is None:
        parent.grad = g.copy()
    else:
        parent.grad += g


def _acc_own(parent: Var, g: np.ndarray) -> None:
    # g is a fresh array owned by the caller: adopt it on first touch
    if parent.no_grad:
        return
    if parent.grad is None:
        parent.grad = g
    else:
        parent.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # reverse row/column broadcasting of a (1, n), (m, 1) or (1, 1) operand
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _as2d(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    if a.ndim != 2:
        raise NumericsError(f"tape values must be at most 2-D, got shape {a.shape}")
    return a


class Tape:
    """Records operations of one forward pass and replays them backward."""

    def __init__(self):
        self._nodes: list[Var] = []
        self._bound: dict[int, list[Var]] = {}  # ParamBlock id -> leaf Vars

    def _node(self, value: np.ndarray, parents: tuple[Var, ...], backward) -> Var:
        out = Var(value)
        if all(p.no_grad for p in parents):
            out.no_grad = True
        else:
            out._backward = backward
            self._nodes.append(out)
        return out

    # ---- leaves -------------------------------------------------------

    def param(self, value: np.ndarray, grad_buffer: np.ndarray) -> Var:
        """Leaf whose gradient accumulates into an external buffer."""
        v = Var(value)
        v.grad = grad_buffer
        return v

    def const(self, value) -> Var:
        return Var(_as2d(value), no_grad=True)

    def lift(self, x) -> Var:
        return x if isinstance(x, Var) else self.const(x)

    # ---- arithmetic ----------------------------------------------------

    def matmul(self, a: Var, b: Var) -> Var:
        val = a.value @ b.value

        def backward():
            g = out.grad
            _acc_own(a, g @ b.value.T)
            _acc_own(b, a.value.T @ g)

        out = self._node(val, (a, b), backward)
        return out

    def linear(self, x: Var, w: Var, b: Var) -> Var:
        """Fused x @ w + bias-row (one node instead of matmul + add)."""
        val = x.value @ w.value + b.value

        def backward():
            g = out.grad
            _acc_own(x, g @ w.value.T)
            _acc_own(w, x.value.T @ g)
            _acc_own(b, g.sum(axis=0, keepdims=True))

        out = self._node(val, (x, w, b), backward)
        return out

    def _acc_bcast(self, parent: Var, g: np.ndarray) -> None:
        if parent.value.shape == g.shape:
            _acc(parent, g)  # alias of the output gradient
        else:
            _acc_own(parent, _unbroadcast(g, parent.value.shape))

    def add(self, a: Var, b: Var) -> Var:
        val = a.value + b.value

        def backward():
            g = out.grad
            self._acc_bcast(a, g)
            self._acc_bcast(b, g)

        out = self._node(val, (a, b), backward)
        return out

    def sub(self, a: Var, b: Var) -> Var:
        val = a.value - b.value

        def backward():
            g = out.grad
            self._acc_bcast(a, g)
            _acc_own(b, _unbroadcast(-g, b.value.shape))

        out = self._node(val, (a, b), backward)
        return out

    def mul(self, a: Var, b: Var) -> Var:
        val = a.value * b.value

        def backward():
            g = out.grad
            _acc_own(a, _unbroadcast(g * b.value, a.value.shape))
            _acc_own(b, _unbroadcast(g * a.value, b.value.shape))

        out = self._node(val, (a, b), backward)
        return out

    def affine(self, a: Var, scale: float, shift: float = 0.0) -> Var:
        val = scale * a.value + shift

        def backward():
            _acc_own(a, scale * out.grad)

        out = self._node(val, (a,), backward)
        return out

    # ---- elementwise nonlinearities -------------------------------------

    def abs(self, a: Var) -> Var:
        val = np.abs(a.value)
        sign = np.sign(a.value)

        def backward():
            _acc_own(a, out.grad * sign)

        out = self._node(val, (a,), backward)
        return out

    def relu(self, a: Var) -> Var:
        val = np.maximum(a.value, 0.0)

        def backward():
            _acc_own(a, out.grad * (a.value > 0.0))

        out = self._node(val, (a,), backward)
        return out

    def sigmoid(self, a: Var) -> Var:
        val = 1.0 / (1.0 + np.exp(-a.value))

        def backward():
            _acc_own(a, out.grad * (val * (1.0 - val)))

        out = self._node(val, (a,), backward)
        return out

    def tanh(self, a: Var) -> Var:
        val = np.tanh(a.value)

        def backward():
            _acc_own(a, out.grad * (1.0 - val * val))

        out = self._node(val, (a,), backward)
        return out

    def log(self, a: Var) -> Var:
        val = np.log(a.value)

        def backward():
            _acc_own(a, out.grad / a.value)

        out = self._node(val, (a,), backward)
        return out

    def clamp(self, a: Var, lo: float, hi: float) -> Var:
        val = np.clip(a.value, lo, hi)
        inside = (a.value > lo) & (a.value < hi)

        def backward():
            _acc_own(a, out.grad * inside)

        out = self._node(val, (a,), backward)
        return out

    def logit(self, a: Var) -> Var:
        """Inverse sigmoid; inputs must already sit strictly inside (0, 1)."""
        v = a.value
        if np.any(v <= 0.0) or np.any(v >= 1.0):
            raise NumericsError("logit input outside (0, 1); clamp scores first")
        val = np.log(v) - np.log1p(-v)

        def backward():
            _acc_own(a, out.grad / (v * (1.0 - v)))

        out = self._node(val, (a,), backward)
        return out

    # ---- shape surgery ---------------------------------------------------

    def concat(self, parts: list[Var]) -> Var:
        val = np.concatenate([p.value for p in parts], axis=1)
        splits = np.cumsum([p.value.shape[1] for p in parts])[:-1]

        def backward():
            for p, g in zip(parts, np.split(out.grad, splits, axis=1)):
                _acc(p, g)

        out = self._node(val, tuple(parts), backward)
        return out

    def gather_rows(self, a: Var, idx: np.ndarray) -> Var:
        val = a.value[idx]

        def backward():
            if not a.no_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.value)
                np.add.at(a.grad, idx, out.grad)

        out = self._node(val, (a,), backward)
        return out

    def scatter_rows(self, a: Var, idx: np.ndarray, n_rows: int) -> Var:
        """Place rows of ``a`` at ``idx`` in a zero matrix of ``n_rows`` rows."""
        val = np.zeros((n_rows, a.value.shape[1]))
        val[idx] = a.value

        def backward():
            _acc_own(a, out.grad[idx])

        out = self._node(val, (a,), backward)
        return out

    def segment_sum(self, a: Var, seg: np.ndarray, n_seg: int) -> Var:
        """Row-wise sums over contiguous-by-id segments (summation in row order)."""
        val = np.zeros((n_seg, a.value.shape[1]))
        np.add.at(val, seg, a.value)

        def backward():
            _acc_own(a, out.grad[seg])

        out = self._node(val, (a,), backward)
        return out

    def segment_softmax(self, scores: Var, seg: np.ndarray, n_seg: int) -> Var:
        """Softmax of a (P, 1) score column within each segment.

        The per-segment max is treated as a constant shift (softmax is
        invariant to it), so the gradient stays exact.
        """
        s = scores.value[:, 0]
        smax = np.full(n_seg, -np.inf)
        np.maximum.at(smax, seg, s)
        e = np.exp(s - smax[seg])
        denom = np.zeros(n_seg)
        np.add.at(denom, seg, e)
        alpha = (e / denom[seg])[:, None]

        def backward():
            g = out.grad
            dot = np.zeros((n_seg, 1))
            np.add.at(dot, seg, g * alpha)
            _acc_own(scores, alpha * (g - dot[seg]))

        out = self._node(alpha, (scores,), backward)
        return out

    def gru(self, x: Var, h: Var, wz: Var, uz: Var, bz: Var, wr: Var, ur: Var,
            br: Var, wc: Var, uc: Var, bc: Var) -> Var:
        """Fused GRU cell (reset gate on the recurrent candidate term).

        One tape node with a hand-derived backward; equivalent to composing
        the primitive ops but far fewer node dispatches on the hot path.
        """
        xv, hv = x.value, h.value
        z = 1.0 / (1.0 + np.exp(-(xv @ wz.value + hv @ uz.value + bz.value)))
        r = 1.0 / (1.0 + np.exp(-(xv @ wr.value + hv @ ur.value + br.value)))
        rh = r * hv
        c = np.tanh(xv @ wc.value + rh @ uc.value + bc.value)
        val = (1.0 - z) * hv + z * c

        def backward():
            g = out.grad
            dz = g * (c - hv)
            dh = g * (1.0 - z)
            dac = (g * z) * (1.0 - c * c)
            drh = dac @ uc.value.T
            dh += drh * r
            dar = (drh * hv) * (r * (1.0 - r))
            daz = dz * (z * (1.0 - z))
            dx = dac @ wc.value.T
            dx += dar @ wr.value.T
            dx += daz @ wz.value.T
            dh += dar @ ur.value.T
            dh += daz @ uz.value.T
            _acc_own(wc, xv.T @ dac)
            _acc_own(uc, rh.T @ dac)
            _acc_own(bc, dac.sum(axis=0, keepdims=True))
            _acc_own(wr, xv.T @ dar)
            _acc_own(ur, hv.T @ dar)
            _acc_own(br, dar.sum(axis=0, keepdims=True))
            _acc_own(wz, xv.T @ daz)
            _acc_own(uz, hv.T @ daz)
            _acc_own(bz, daz.sum(axis=0, keepdims=True))
            _acc_own(x, dx)
            _acc_own(h, dh)

        out = self._node(val, (x, h, wz, uz, bz, wr, ur, br, wc, uc, bc),
                         backward)
        return out

    # ---- reductions and losses -------------------------------------------

    def sum(self, a: Var) -> Var:
        val = np.array([[a.value.sum()]])

        def backward():
            _acc_own(a, np.full_like(a.value, out.grad[0, 0]))

        out = self._node(val, (a,), backward)
        return out

    def mean(self, a: Var) -> Var:
        n = a.value.size
        val = np.array([[a.value.sum() / n]])

        def backward():
            _acc_own(a, np.full_like(a.value, out.grad[0, 0] / n))

        out = self._node(val, (a,), backward)
        return out

    def smooth_l1(self, pred: Var, target: np.ndarray, beta: float,
                  weights: np.ndarray | None = None) -> Var:
        """Mean (optionally weighted) smooth-L1 over all components."""
        if beta <= 0.0:
            raise NumericsError("smooth_l1 beta must be positive")
        target = np.asarray(target, dtype=np.float64)
        if target.shape != pred.value.shape:
            raise NumericsError(
                f"smooth_l1 shape mismatch: {pred.value.shape} vs {target.shape}")
        d = pred.value - target
        ad = np.abs(d)
        per = np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)
        if weights is None:
            denom = float(per.size)
            val = np.array([[per.sum() / denom]])
        else:
            denom = float(weights.sum())
            if denom <= 0.0:
                raise NumericsError("smooth_l1 weights sum to zero")
            val = np.array([[(per * weights).sum() / denom]])

        def backward():
            g = out.grad[0, 0] / denom
            dd = np.where(ad < beta, d / beta, np.sign(d))
            if weights is not None:
                dd = dd * weights
            _acc_own(pred, g * dd)

        out = self._node(val, (pred,), backward)
        return out

    def bce(self, scores: Var, labels: np.ndarray) -> Var:
        """Mean binary cross entropy; scores must be pre-clamped into (0, 1)."""
        labels = np.asarray(labels, dtype=np.float64).reshape(scores.value.shape)
        s = scores.value
        per = -(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s))
        n = s.size
        val = np.array([[per.sum() / n]])

        def backward():
            g = out.grad[0, 0] / n
            _acc_own(scores, g * ((1.0 - labels) / (1.0 - s) - labels / s))

        out = self._node(val, (scores,), backward)
        return out

    # ---- driver ------------------------------------------------------------

    def backward(self, root: Var, seed: float = 1.0) -> None:
        root.grad = np.full_like(root.value, seed)
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward()
