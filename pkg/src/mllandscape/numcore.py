"""Numerical substrate shared by every landscape.

Points in parameter space are plain 1-D float64 numpy arrays.  An
:class:`Objective` bundles energy, gradient and Hessian evaluation; concrete
landscapes subclass it and override :meth:`Objective.energy_gradient` (and
:meth:`Objective.hessian` when an analytic form exists).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh


# Single documented source of randomness: numpy's PCG64 seeded from one
# 64-bit integer.  Child streams are derived with SeedSequence.spawn so that
# parallel and serial runs draw identical numbers.
def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n)]


class DomainError(ValueError):
    """A point lies outside the domain where an objective is defined."""


class NonFiniteError(FloatingPointError):
    """Raised when an objective returns a non-finite energy or gradient."""

    def __init__(self, message: str, point: np.ndarray):
        super().__init__(message)
        self.point = np.array(point, copy=True)


def as_point(x) -> np.ndarray:
    x = np.array(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("parameter vector has non-finite entries")
    return x


def rms(g: np.ndarray) -> float:
    return float(np.linalg.norm(g) / np.sqrt(g.size))


class Objective:
    """Differentiable cost function on R^dim.

    Subclasses implement ``energy_gradient``.  ``hessian`` defaults to central
    differences of the analytic gradient.  ``distance`` and ``align`` let a
    landscape supply a metric that ignores trivial symmetries (rigid-body
    motion, for instance) and are used by the database and the band methods.
    """

    dim: int = 0
    hessian_fd_step = 1e-5

    def energy_gradient(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def energy(self, x: np.ndarray) -> float:
        return self.energy_gradient(x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.energy_gradient(x)[1]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return fd_hessian(self, x, self.hessian_fd_step)

    def hessian_vector(self, x: np.ndarray, v: np.ndarray, h: float = 1e-6) -> np.ndarray:
        g1 = self.gradient(x + h * v)
        g0 = self.gradient(x - h * v)
        return (g1 - g0) / (2 * h)

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    def align(self, ref: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)

    def retract(self, x: np.ndarray) -> np.ndarray:
        return x

    def zero_modes(self, x: np.ndarray) -> Optional[np.ndarray]:
        """Orthonormal columns spanning exact symmetry modes at ``x``, if known."""
        return None


class FunctionObjective(Objective):
    """Wraps plain callables; handy for toy problems and tests."""

    def __init__(self, func: Callable, grad: Callable, dim: int,
                 hess: Optional[Callable] = None):
        self.func = func
        self.grad = grad
        self.hess = hess
        self.dim = dim

    def energy_gradient(self, x):
        return float(self.func(x)), np.asarray(self.grad(x), dtype=float)

    def hessian(self, x):
        if self.hess is None:
            return super().hessian(x)
        return np.asarray(self.hess(x), dtype=float)


def fd_hessian(obj: Objective, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (obj.gradient(x + e) - obj.gradient(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def finite_diff_gradient(obj: Objective, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient, one coordinate at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (obj.energy(xp) - obj.energy(xm)) / (2 * h)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite finite-difference gradient", x)
    return g


@dataclass
class LbfgsConfig:
    memory: int = 10
    rms_tol: float = 1e-6
    max_step: float = 0.2
    max_iters: int = 10000
    record_trajectory: bool = False

    def __post_init__(self):
        if self.rms_tol <= 0:
            raise ValueError("rms_tol must be positive")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


@dataclass
class MinimizationResult:
    final_point: np.ndarray
    final_energy: float
    converged: bool
    n_steps: int
    rms_gradient: float
    trajectory: Optional[list] = None
    energies: list = field(default_factory=list)


def _check_finite(e, g, x):
    if not np.isfinite(e) or not np.all(np.isfinite(g)):
        raise NonFiniteError(f"non-finite energy/gradient (E={e})", x)


def lbfgs_minimize(obj: Objective, x0, cfg: LbfgsConfig | None = None,
                   project: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> MinimizationResult:
    """Limited-memory BFGS with a capped step and backtracking line search.

    ``project`` optionally restricts search directions to a subspace (used by
    the transition-state refinement); it must be a linear projector.
    The returned energy sequence is non-increasing.
    """
    cfg = cfg or LbfgsConfig()
    x = np.array(x0, dtype=float)
    if x.size != obj.dim:
        raise ValueError(f"x0 has length {x.size}, objective expects {obj.dim}")
    proj = project if project is not None else (lambda v: v)

    e, g = obj.energy_gradient(x)
    _check_finite(e, g, x)
    g = proj(g)
    traj = [x.copy()] if cfg.record_trajectory else None
    energies = [e]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    n = 0
    while rms(g) > cfg.rms_tol and n < cfg.max_iters:
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * s.dot(q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            gamma = s_hist[-1].dot(y_hist[-1]) / y_hist[-1].dot(y_hist[-1])
        else:
            # first step: plain steepest descent of modest length
            gamma = min(1.0, 0.1 / max(np.linalg.norm(g), 1e-300))
        r = gamma * q
        for s, y, rho, a in zip(s_hist, y_hist, rho_hist, reversed(alphas)):
            b = rho * y.dot(r)
            r += s * (a - b)
        d = -proj(r)

        slope = d.dot(g)
        if slope >= 0:
            # not a descent direction, fall back to steepest descent
            s_hist.clear(); y_hist.clear(); rho_hist.clear()
            d = -g * min(1.0, 0.1 / max(np.linalg.norm(g), 1e-300))
            slope = d.dot(g)
        dnorm = np.linalg.norm(d)
        if dnorm > cfg.max_step:
            d *= cfg.max_step / dnorm
            slope = d.dot(g)

        t = 1.0
        accepted = False
        for _ in range(30):
            x_new = x + t * d
            e_new, g_new = obj.energy_gradient(x_new)
            if np.isfinite(e_new) and e_new <= e + 1e-4 * t * slope:
                _check_finite(e_new, g_new, x_new)
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if s_hist:
                # stale curvature information; restart from steepest descent
                s_hist.clear(); y_hist.clear(); rho_hist.clear()
                continue
            # line search cannot make progress: the energy is flat to
            # machine precision along -g, stop here
            break

        g_new = proj(g_new)
        s = x_new - x
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0); y_hist.pop(0); rho_hist.pop(0)
        x, e, g = x_new, e_new, g_new
        n += 1
        energies.append(e)
        if traj is not None:
            traj.append(x.copy())

    g_rms = rms(g)
    return MinimizationResult(final_point=x, final_energy=float(e),
                              converged=g_rms <= cfg.rms_tol, n_steps=n,
                              rms_gradient=g_rms, trajectory=traj, energies=energies)


@dataclass
class HessianSpectrum:
    eigenvalues: np.ndarray
    n_negative: int
    n_zero: int
    log_product_positive: float

    @property
    def index(self) -> int:
        return self.n_negative

    def to_dict(self):
        return {"eigenvalues": [float(v) for v in self.eigenvalues],
                "n_negative": self.n_negative, "n_zero": self.n_zero,
                "log_product_positive": self.log_product_positive}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["eigenvalues"], dtype=float), int(d["n_negative"]),
                   int(d["n_zero"]), float(d["log_product_positive"]))


def spectrum_from_eigenvalues(evals, zero_tol: float = 1e-6) -> HessianSpectrum:
    """Classify eigenvalues; ``zero_tol`` is relative to the largest magnitude."""
    evals = np.sort(np.asarray(evals, dtype=float))
    scale = np.max(np.abs(evals)) if evals.size else 0.0
    thr = zero_tol * scale
    neg = evals < -thr
    pos = evals > thr
    n_zero = int(evals.size - neg.sum() - pos.sum())
    return HessianSpectrum(evals, int(neg.sum()), n_zero,
                           float(np.sum(np.log(evals[pos]))))


def hessian_spectrum(obj: Objective, x, zero_tol: float = 1e-6) -> HessianSpectrum:
    H = obj.hessian(np.asarray(x, dtype=float))
    try:
        evals = sla.eigh(0.5 * (H + H.T), eigvals_only=True)
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(f"eigensolver failed at point {np.asarray(x)!r}") from exc
    return spectrum_from_eigenvalues(evals, zero_tol)


class EigenPair(NamedTuple):
    value: float
    vector: np.ndarray
    degenerate: bool


# Above this dimension the lowest mode is found matrix-free.
DENSE_EIGEN_LIMIT = 1500
ZERO_MODE_SHIFT = 10.0


def lowest_eigenpair(obj: Objective, x, v0: Optional[np.ndarray] = None,
                     dense: Optional[bool] = None) -> EigenPair:
    """Lowest Hessian eigenvalue and unit eigenvector at ``x``.

    Small problems use a dense eigendecomposition; large ones use Lanczos on
    finite-difference Hessian-vector products.
    """
    x = np.asarray(x, dtype=float)
    if dense is None:
        dense = x.size <= DENSE_EIGEN_LIMIT
    Z = obj.zero_modes(x)
    if dense:
        H = obj.hessian(x)
        if Z is not None:
            # lift symmetry modes out of the way
            H = H + ZERO_MODE_SHIFT * (np.abs(H).max() + 1.0) * (Z @ Z.T)
        evals, evecs = sla.eigh(0.5 * (H + H.T))
        vals, vecs = evals[:2], evecs[:, :2]
    else:
        shift = 0.0 if Z is None else ZERO_MODE_SHIFT * (np.linalg.norm(obj.gradient(x)) + 1.0)

        def matvec(v):
            v = np.ravel(v)
            hv = obj.hessian_vector(x, v)
            if Z is not None:
                hv = hv + shift * (Z @ (Z.T @ v))
            return hv

        op = LinearOperator((x.size, x.size), dtype=float, matvec=matvec)
        k = min(2, x.size - 1)
        vals, vecs = eigsh(op, k=k, which="SA", v0=v0, tol=1e-10)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    v = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    # deterministic sign: largest-magnitude component positive
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    degenerate = len(vals) > 1 and abs(vals[1] - vals[0]) < 1e-10
    return EigenPair(float(vals[0]), v, bool(degenerate))
