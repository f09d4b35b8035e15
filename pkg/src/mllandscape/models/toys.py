"""Small analytic landscapes used for checks and demonstrations."""
import numpy as np

from ..numcore import Objective


class Quadratic(Objective):
    """E = x^T A x / 2 for a symmetric matrix A."""

    def __init__(self, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self.A = 0.5 * (A + A.T)
        self.dim = self.A.shape[0]

    def energy_gradient(self, x):
        x = np.asarray(x, dtype=float)
        Ax = self.A @ x
        return 0.5 * float(x @ Ax), Ax

    def hessian(self, x):
        return self.A.copy()


class DoubleWell(Objective):
    """E = (x0^2 - 1)^2 + sum of squares of the remaining coordinates.

    dim=1 is the textbook double well with minima at +/-1 and a saddle of
    height 1 at the origin.
    """

    def __init__(self, dim: int = 1):
        self.dim = dim

    def energy_gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = 2.0 * x.copy()
        g[0] = 4.0 * x[0] * (x[0] ** 2 - 1.0)
        e = (x[0] ** 2 - 1.0) ** 2 + float(np.sum(x[1:] ** 2))
        return float(e), g

    def hessian(self, x):
        H = 2.0 * np.eye(self.dim)
        H[0, 0] = 12.0 * x[0] ** 2 - 4.0
        return H


class Rosenbrock(Objective):
    dim = 2

    def energy_gradient(self, x):
        a, b = float(x[0]), float(x[1])
        e = (1 - a) ** 2 + 100 * (b - a * a) ** 2
        g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
        return e, g

    def hessian(self, x):
        a, b = float(x[0]), float(x[1])
        return np.array([[2 - 400 * (b - 3 * a * a), -400 * a], [-400 * a, 200.0]])


class Constant(Objective):
    def __init__(self, dim: int, value: float = 0.0):
        self.dim = dim
        self.value = value

    def energy_gradient(self, x):
        return self.value, np.zeros(self.dim)

    def hessian(self, x):
        return np.zeros((self.dim, self.dim))
