from .neuralnet import (ClassificationDataset, NeuralNetObjective, NeuralNetSpec, nn_cost,
                        nn_hessian, predict_proba)
from .pspin import PSpinModel, SphericalPSpin, pspin_energy_gradient, product_sphere_energy
from .regression import (Q_STAR, RegressionData, RegressionObjective, generate_regression_data,
                         regression_cost)
from .toys import Constant, DoubleWell, Quadratic, Rosenbrock
from .triatomic import Triatomic, build_quench_dataset, extract_inputs, pair_distances

__all__ = [
    "ClassificationDataset", "NeuralNetObjective", "NeuralNetSpec", "nn_cost", "nn_hessian",
    "predict_proba", "PSpinModel", "SphericalPSpin", "pspin_energy_gradient",
    "product_sphere_energy", "Q_STAR", "RegressionData", "RegressionObjective",
    "generate_regression_data", "regression_cost", "Constant", "DoubleWell", "Quadratic",
    "Rosenbrock", "Triatomic", "build_quench_dataset", "extract_inputs", "pair_distances",
]
