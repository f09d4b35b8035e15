"""Damped product-of-sines regression model and its least-squares cost.

    y(x; q) = exp(-q1 x) sin(q2 x + q3) sin(q4 x + q5)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Objective, make_rng

Q_STAR = np.array([0.1, 2.13, 0.0, 1.34, 0.0])
X_RANGE = (0.0, 3.0 * np.pi)


@dataclass
class RegressionData:
    x: np.ndarray
    t: np.ndarray

    def __len__(self):
        return self.x.size


def model_curve(q, x) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-q[0] * x) * np.sin(q[1] * x + q[2]) * np.sin(q[3] * x + q[4])


def generate_regression_data(q_star=Q_STAR, n: int = 100, sigma: float = 0.02,
                             seed: int = 0) -> RegressionData:
    if n < 1 or sigma < 0:
        raise ValueError("need n >= 1 and sigma >= 0")
    rng = make_rng(seed)
    x = rng.uniform(*X_RANGE, size=n)
    t = model_curve(q_star, x) + sigma * rng.standard_normal(n)
    return RegressionData(x, t)


def _parts(q, x):
    A = np.exp(-q[0] * x)
    u = q[1] * x + q[2]
    v = q[3] * x + q[4]
    S2, C2, S4, C4 = np.sin(u), np.cos(u), np.sin(v), np.cos(v)
    y = A * S2 * S4
    J = np.stack([-x * y, x * A * C2 * S4, A * C2 * S4, x * A * S2 * C4, A * S2 * C4], axis=1)
    return A, S2, C2, S4, C4, y, J


def regression_cost(q, data: RegressionData) -> tuple[float, np.ndarray]:
    """Sum of squared residuals and its gradient."""
    q = np.asarray(q, dtype=float)
    *_, y, J = _parts(q, data.x)
    r = data.t - y
    return float(r @ r), -2.0 * (J.T @ r)


def regression_hessian(q, data: RegressionData) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    x = data.x
    A, S2, C2, S4, C4, y, J = _parts(q, x)
    r = data.t - y
    # second derivatives of y, factor by factor
    gA = np.stack([-x * A, 0 * x, 0 * x, 0 * x, 0 * x], axis=1)
    g2 = np.stack([0 * x, x * C2, C2, 0 * x, 0 * x], axis=1)
    g4 = np.stack([0 * x, 0 * x, 0 * x, x * C4, C4], axis=1)
    e2 = np.stack([x, np.ones_like(x)], axis=1)
    Hy = np.zeros((x.size, 5, 5))
    Hy[:, 0, 0] = x * x * y
    Hy[:, 1:3, 1:3] = -(A * S2 * S4)[:, None, None] * e2[:, :, None] * e2[:, None, :]
    Hy[:, 3:5, 3:5] = -(A * S2 * S4)[:, None, None] * e2[:, :, None] * e2[:, None, :]
    for ga, gb, f in ((gA, g2, S4), (gA, g4, S2), (g2, g4, A)):
        cross = f[:, None, None] * ga[:, :, None] * gb[:, None, :]
        Hy += cross + cross.transpose(0, 2, 1)
    H = 2.0 * (J.T @ J) - 2.0 * np.einsum("d,dij->ij", r, Hy)
    return 0.5 * (H + H.T)


class RegressionObjective(Objective):
    dim = 5

    def __init__(self, data: RegressionData):
        self.data = data

    def energy_gradient(self, q):
        return regression_cost(q, self.data)

    def hessian(self, q):
        return regression_hessian(q, self.data)


def swap_factors(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], q[3], q[4], q[1], q[2]])
