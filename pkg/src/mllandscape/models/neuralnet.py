"""Single-hidden-layer tanh network with a softmax cross-entropy cost.

Weight vector layout (all row-major)::

    [ w2 (n_hidden x n_in) | w1 (n_out x n_hidden) | bh (n_hidden) | bo (n_out) ]

where ``w2`` links inputs to hidden nodes, ``w1`` hidden nodes to outputs and
``bh``/``bo`` are the hidden and output biases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from ..numcore import Objective


@dataclass(frozen=True)
class NeuralNetSpec:
    n_in: int
    n_hidden: int
    n_out: int
    lam: float = 0.0
    regularize_bias: bool = True

    @property
    def n_params(self) -> int:
        return self.n_hidden * self.n_in + self.n_out * self.n_hidden + self.n_hidden + self.n_out

    def slices(self):
        a = self.n_hidden * self.n_in
        b = a + self.n_out * self.n_hidden
        c = b + self.n_hidden
        return slice(0, a), slice(a, b), slice(b, c), slice(c, c + self.n_out)

    def unpack(self, W):
        s2, s1, sh, so = self.slices()
        return (W[s2].reshape(self.n_hidden, self.n_in), W[s1].reshape(self.n_out, self.n_hidden),
                W[sh], W[so])

    def pack(self, w2, w1, bh, bo) -> np.ndarray:
        return np.concatenate([np.ravel(w2), np.ravel(w1), np.ravel(bh), np.ravel(bo)]).astype(float)

    def reg_mask(self) -> np.ndarray:
        m = np.ones(self.n_params)
        if not self.regularize_bias:
            _, _, sh, so = self.slices()
            m[sh] = 0.0
            m[so] = 0.0
        return m

    def random_weights(self, rng, scale: float = 1.0) -> np.ndarray:
        return rng.uniform(-scale, scale, size=self.n_params)


@dataclass
class ClassificationDataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("label out of range")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("non-finite inputs")

    def __len__(self):
        return self.labels.size

    def subset(self, idx) -> "ClassificationDataset":
        return ClassificationDataset(self.inputs[idx], self.labels[idx], self.class_count)


def forward(spec: NeuralNetSpec, W, X):
    """Hidden activations and output-layer values for inputs ``X``."""
    w2, w1, bh, bo = spec.unpack(np.asarray(W, dtype=float))
    h = np.tanh(X @ w2.T + bh)
    y = h @ w1.T + bo
    return h, y


def predict_proba(spec: NeuralNetSpec, W, X) -> np.ndarray:
    return softmax(forward(spec, W, X)[1], axis=1)


def nn_cost(spec: NeuralNetSpec, W, data: ClassificationDataset) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood plus lam * |W|^2 and its gradient."""
    W = np.asarray(W, dtype=float)
    if W.size != spec.n_params:
        raise ValueError(f"expected {spec.n_params} weights, got {W.size}")
    if data.labels.size and data.labels.max() >= spec.n_out:
        raise ValueError("label exceeds output count")
    X, c = data.inputs, data.labels
    n = c.size
    w2, w1, bh, bo = spec.unpack(W)
    h = np.tanh(X @ w2.T + bh)
    y = h @ w1.T + bo
    logp = log_softmax(y, axis=1)
    mask = spec.reg_mask()
    energy = -logp[np.arange(n), c].mean() + spec.lam * float(np.sum(mask * W * W))

    delta = np.exp(logp)
    delta[np.arange(n), c] -= 1.0
    delta /= n
    g_w1 = delta.T @ h
    g_bo = delta.sum(axis=0)
    dz = (delta @ w1) * (1.0 - h * h)
    g_w2 = dz.T @ X
    g_bh = dz.sum(axis=0)
    grad = spec.pack(g_w2, g_w1, g_bh, g_bo) + 2.0 * spec.lam * mask * W
    return float(energy), grad


def nn_hessian(spec: NeuralNetSpec, W, data: ClassificationDataset, chunk: int = 256) -> np.ndarray:
    """Exact Hessian of :func:`nn_cost`.

    Sum of the Gauss-Newton term J^T (diag p - p p^T) J and the curvature of
    the network outputs weighted by the softmax residuals, accumulated over
    data chunks to bound memory.
    """
    W = np.asarray(W, dtype=float)
    X, c = data.inputs, data.labels
    n = c.size
    H_, I_, O_ = spec.n_hidden, spec.n_in, spec.n_out
    P = spec.n_params
    s2, s1, sh, so = spec.slices()
    w2, w1, bh, bo = spec.unpack(W)

    # index maps into the flat weight vector
    idx_w2 = np.arange(s2.start, s2.stop).reshape(H_, I_)
    idx_w1 = np.arange(s1.start, s1.stop).reshape(O_, H_)
    idx_bh = np.arange(sh.start, sh.stop)
    idx_bo = np.arange(so.start, so.stop)

    Hm = np.zeros((P, P))
    for start in range(0, n, chunk):
        Xc = X[start:start + chunk]
        cc = c[start:start + chunk]
        m = cc.size
        h = np.tanh(Xc @ w2.T + bh)
        dh = 1.0 - h * h
        p = softmax(h @ w1.T + bo, axis=1)
        r = p.copy()
        r[np.arange(m), cc] -= 1.0

        # Jacobian of outputs: J[d, o, :]
        J = np.zeros((m, O_, P))
        for o in range(O_):
            J[:, o, idx_bo[o]] = 1.0
            J[:, o, idx_w1[o]] = h
            a = w1[o] * dh                       # (m, H)
            J[:, o, idx_bh] = a
            J[:, o, idx_w2.ravel()] = (a[:, :, None] * Xc[:, None, :]).reshape(m, -1)
        # J^T (diag p - p p^T) J
        pJ = np.einsum("do,dop->dp", p, J)
        Js = (J * np.sqrt(p)[:, :, None]).reshape(-1, P)
        Hm += Js.T @ Js - pJ.T @ pJ

        # output curvature weighted by residuals
        # cross terms w1[o, j] with the z_j parameters (bh_j, w2_jk)
        Rdh = r[:, :, None] * dh[:, None, :]     # (m, O, H)
        S_b = Rdh.sum(axis=0)                    # (O, H)
        S_w = np.einsum("doj,dk->ojk", Rdh, Xc)  # (O, H, I)
        for o in range(O_):
            for j in range(H_):
                a = idx_w1[o, j]
                Hm[a, idx_bh[j]] += S_b[o, j]
                Hm[idx_bh[j], a] += S_b[o, j]
                Hm[a, idx_w2[j]] += S_w[o, j]
                Hm[idx_w2[j], a] += S_w[o, j]
        # z_j-z_j blocks: sum_o r_o w1[o, j] * tanh''(z_j) * a_k a_k'
        q = (r @ w1) * (-2.0 * h * dh)           # (m, H)
        A = np.concatenate([np.ones((m, 1)), Xc], axis=1)
        blocks = np.einsum("dj,dk,dl->jkl", q, A, A)
        for j in range(H_):
            ids = np.concatenate([[idx_bh[j]], idx_w2[j]])
            Hm[np.ix_(ids, ids)] += blocks[j]
    Hm /= n
    Hm += np.diag(2.0 * spec.lam * spec.reg_mask())
    return 0.5 * (Hm + Hm.T)


class NeuralNetObjective(Objective):
    """Training cost of a network on a fixed dataset."""

    def __init__(self, spec: NeuralNetSpec, data: ClassificationDataset):
        self.spec = spec
        self.data = data
        self.dim = spec.n_params

    def energy_gradient(self, W):
        return nn_cost(self.spec, W, self.data)

    def hessian(self, W):
        return nn_hessian(self.spec, W, self.data)


def permute_hidden(spec: NeuralNetSpec, W, perm) -> np.ndarray:
    w2, w1, bh, bo = spec.unpack(np.asarray(W, dtype=float))
    perm = np.asarray(perm)
    return spec.pack(w2[perm], w1[:, perm], bh[perm], bo)


def flip_hidden(spec: NeuralNetSpec, W, j: int) -> np.ndarray:
    """Negate all weights into and out of hidden node ``j``."""
    w2, w1, bh, bo = (a.copy() for a in spec.unpack(np.asarray(W, dtype=float)))
    w2[j] *= -1
    bh[j] *= -1
    w1[:, j] *= -1
    return spec.pack(w2, w1, bh, bo)
