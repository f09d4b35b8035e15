"""Spherical p-spin Hamiltonians for p = 1, 2, 3.

    H(w) = c * sum_{i1..ip} x_{i1..ip} w_i1 ... w_ip,   sum_i w_i^2 = N

with i.i.d. standard normal coefficients, c = 1 for p = 1, 2 and c = 1/N for
p = 3.  The coefficient tensor is stored unsymmetrised; derivatives use its
symmetrisation.
"""
from __future__ import annotations

import itertools

import numpy as np

from ..numcore import DomainError, Objective, make_rng

SPHERE_TOL = 1e-8


class OffSphereError(DomainError):
    pass


class PSpinModel:
    def __init__(self, N: int, p: int, seed: int = 0, coefficients=None):
        if p not in (1, 2, 3):
            raise ValueError("p must be 1, 2 or 3")
        if N < 1:
            raise ValueError("N must be positive")
        self.N, self.p, self.seed = N, p, seed
        if coefficients is None:
            coefficients = make_rng(seed).standard_normal((N,) * p)
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.normalization = 1.0 / N if p == 3 else 1.0
        X = self.coefficients
        if p == 1:
            self.sym = X
        elif p == 2:
            self.sym = 0.5 * (X + X.T)
        else:
            self.sym = sum(np.transpose(X, perm) for perm in itertools.permutations(range(3))) / 6.0

    # raw polynomial, valid for any w
    def polynomial(self, w) -> float:
        w = np.asarray(w, dtype=float)
        X, c = self.coefficients, self.normalization
        if self.p == 1:
            return float(c * X @ w)
        if self.p == 2:
            return float(c * w @ X @ w)
        return float(c * np.einsum("ijk,i,j,k->", X, w, w, w))

    def euclidean_gradient(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        c, S = self.normalization, self.sym
        if self.p == 1:
            return c * S.copy()
        if self.p == 2:
            return 2.0 * c * (S @ w)
        return 3.0 * c * ((S @ w) @ w)

    def euclidean_hessian(self, w) -> np.ndarray:
        c, S = self.normalization, self.sym
        if self.p == 1:
            return np.zeros((self.N, self.N))
        if self.p == 2:
            return 2.0 * c * S
        return 6.0 * c * (S @ np.asarray(w, dtype=float))

    def check_sphere(self, w):
        w = np.asarray(w, dtype=float)
        if abs(w @ w - self.N) > SPHERE_TOL * self.N:
            raise OffSphereError(f"|w|^2 = {w @ w} is off the sphere |w|^2 = {self.N}")

    def random_point(self, rng) -> np.ndarray:
        v = rng.standard_normal(self.N)
        return np.sqrt(self.N) * v / np.linalg.norm(v)


def tangent_projection(g, w) -> np.ndarray:
    return g - (g @ w) / (w @ w) * w


def pspin_energy_gradient(model: PSpinModel, w):
    """(energy, Euclidean gradient, tangent gradient) at a point on the sphere."""
    w = np.asarray(w, dtype=float)
    model.check_sphere(w)
    g = model.euclidean_gradient(w)
    return model.polynomial(w), g, tangent_projection(g, w)


def riemannian_hessian(model: PSpinModel, w) -> np.ndarray:
    """Hessian on the sphere, expressed in ambient coordinates.

    The radial direction carries a zero eigenvalue; the remaining N-1
    eigenvalues are those of the tangent-space Hessian.
    """
    w = np.asarray(w, dtype=float)
    g = model.euclidean_gradient(w)
    P = np.eye(model.N) - np.outer(w, w) / (w @ w)
    return P @ (model.euclidean_hessian(w) - (g @ w) / (w @ w) * np.eye(model.N)) @ P


class SphericalPSpin(Objective):
    """p-spin energy as an unconstrained function of y via w = sqrt(N) y/|y|.

    The energy is scale invariant in y, so any unconstrained optimiser works;
    ``retract`` maps back onto the sphere.  At |y| = sqrt(N) the Hessian is

        P (H_e - a I) P - (g_t w^T + w g_t^T) / N,   a = g.w / N

    with g_t the tangent gradient; it reduces to the Riemannian Hessian at
    stationary points.
    """

    def __init__(self, model: PSpinModel):
        self.model = model
        self.dim = model.N
        self.R = np.sqrt(model.N)

    def _on_sphere(self, y):
        y = np.asarray(y, dtype=float)
        rho = np.linalg.norm(y)
        return self.R * y / rho, rho / self.R

    def energy_gradient(self, y):
        w, scale = self._on_sphere(y)
        g = self.model.euclidean_gradient(w)
        return self.model.polynomial(w), tangent_projection(g, w) / scale

    def hessian(self, y):
        w, scale = self._on_sphere(y)
        m = self.model
        N = m.N
        g = m.euclidean_gradient(w)
        a = (g @ w) / N
        gt = g - a * w
        P = np.eye(N) - np.outer(w, w) / N
        H = P @ (m.euclidean_hessian(w) - a * np.eye(N)) @ P - (np.outer(gt, w) + np.outer(w, gt)) / N
        return 0.5 * (H + H.T) / scale ** 2

    def retract(self, y):
        return self._on_sphere(y)[0]

    def zero_modes(self, y):
        y = np.asarray(y, dtype=float)
        return (y / np.linalg.norm(y))[:, None]


def product_sphere_energy(model: PSpinModel, w1, w2, w3) -> float:
    """Trilinear form sum x_ijk w1_i w2_j w3_k on a product of unit spheres."""
    if model.p != 3:
        raise ValueError("product-sphere energy needs a p=3 tensor")
    for w in (w1, w2, w3):
        w = np.asarray(w, dtype=float)
        if abs(w @ w - 1.0) > SPHERE_TOL:
            raise OffSphereError("product-sphere blocks must have unit norm")
    return float(np.einsum("ijk,i,j,k->", model.coefficients, w1, w2, w3))


def product_sphere_gradient(model: PSpinModel, w1, w2, w3):
    """Per-block gradients projected onto each sphere's tangent space."""
    X = model.coefficients
    g1 = np.einsum("ijk,j,k->i", X, w2, w3)
    g2 = np.einsum("ijk,i,k->j", X, w1, w3)
    g3 = np.einsum("ijk,i,j->k", X, w1, w2)
    return tuple(g - (g @ w) * w for g, w in ((g1, w1), (g2, w2), (g3, w3)))


class ProductSphereQuench:
    """Batched constant-step gradient descent on the product of three unit spheres."""

    def __init__(self, model: PSpinModel):
        self.model = model

    def run(self, rng, n_starts, step, grad_tol=1e-6, max_steps=100000):
        X = self.model.coefficients
        N = self.model.N
        W = [rng.standard_normal((n_starts, N)) for _ in range(3)]
        W = [w / np.linalg.norm(w, axis=1, keepdims=True) for w in W]
        active = np.ones(n_starts, dtype=bool)
        for _ in range(max_steps):
            if not active.any():
                break
            a = np.flatnonzero(active)
            w1, w2, w3 = (w[a] for w in W)
            g1 = np.einsum("ijk,bj,bk->bi", X, w2, w3)
            g2 = np.einsum("ijk,bi,bk->bj", X, w1, w3)
            g3 = np.einsum("ijk,bi,bj->bk", X, w1, w2)
            gs = [g - np.sum(g * w, axis=1, keepdims=True) * w for g, w in ((g1, w1), (g2, w2), (g3, w3))]
            norm = np.sqrt(sum(np.sum(g * g, axis=1) for g in gs))
            done = norm < grad_tol
            for k in range(3):
                nw = W[k][a] - step * gs[k]
                nw /= np.linalg.norm(nw, axis=1, keepdims=True)
                W[k][a] = np.where(done[:, None], W[k][a], nw)
            active[a[done]] = False
        E = np.einsum("ijk,bi,bj,bk->b", X, *W)
        return E, ~active
