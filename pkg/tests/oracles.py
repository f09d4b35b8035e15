"""Independent reference computations and seeded point samplers shared by tests."""
import numpy as np

from mllandscape.models import (ClassificationDataset, NeuralNetObjective, NeuralNetSpec,
                                PSpinModel, RegressionObjective, SphericalPSpin, Triatomic,
                                generate_regression_data, pair_distances)
from mllandscape.numcore import fd_hessian, finite_diff_gradient, make_rng


def scaled_error(a, b) -> float:
    """max |a - b| relative to the largest entry of b."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def gradient_error(obj, x, h=1e-6) -> float:
    return scaled_error(finite_diff_gradient(obj, x, h), obj.gradient(x))


def hessian_error(obj, x, h=1e-5) -> float:
    return scaled_error(fd_hessian(obj, x, h), obj.hessian(x))


def _triatomic_point(rng):
    while True:
        x = rng.uniform(0.0, 2.0, size=9)
        if pair_distances(x).min() > 0.8:
            return x


def model_cases():
    """(name, objective, sampler) for each of the four landscapes."""
    rng = make_rng(99)
    X = rng.uniform(0.8, 3.0, size=(40, 3))
    data = ClassificationDataset(X, rng.integers(0, 4, size=40), 4)
    nn = NeuralNetObjective(NeuralNetSpec(3, 3, 4, lam=1e-4), data)
    reg = RegressionObjective(generate_regression_data(n=100, sigma=0.02, seed=0))
    lo = np.array([0.0, 0.0, -np.pi, 0.0, -np.pi])
    hi = np.array([0.5, 4.0, np.pi, 4.0, np.pi])
    ps = SphericalPSpin(PSpinModel(6, 3, seed=4))
    return [
        ("triatomic", Triatomic(2.0), _triatomic_point),
        ("neuralnet", nn, lambda r: nn.spec.random_weights(r, 1.0)),
        ("regression", reg, lambda r: r.uniform(lo, hi)),
        ("pspin", ps, lambda r: ps.model.random_point(r)),
    ]


def brute_force_cv(energies, log_prod, kappa, T, rel_h=1e-4):
    """C_V = beta^2 d^2 ln Z / d beta^2 by central differences of ln Z, step rel_h * beta."""
    energies, log_prod = np.asarray(energies), np.asarray(log_prod)

    def lnZ(beta):
        a = -beta * energies - 0.5 * log_prod
        m = a.max()
        return m + np.log(np.exp(a - m).sum()) - kappa * np.log(beta)
    beta = 1.0 / T
    h = rel_h * beta
    d2 = (lnZ(beta + h) - 2 * lnZ(beta) + lnZ(beta - h)) / h ** 2
    return beta ** 2 * d2
