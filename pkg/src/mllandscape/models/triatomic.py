"""Three-atom cluster with Lennard-Jones pairs and an Axilrod-Teller triple term.

The triple term depends only on the three squared separations, since the
product of the triangle's cosines can be written via the law of cosines:

    cos1*cos2*cos3 = (s12+s13-s23)(s12+s23-s13)(s13+s23-s12) / (8 s12 s13 s23)

so the whole potential is a function of (s12, s13, s23).  The gradient is
written so that it also accepts complex coordinates; the Hessian is then
obtained by complex-step differentiation, which is exact to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numcore import DomainError, LbfgsConfig, MinimizationResult, Objective, lbfgs_minimize, make_rng

PAIRS = ((0, 1), (0, 2), (1, 2))
CUBE_SIDE = 2.0 * np.sqrt(3.0)
TRIANGLE, LINEAR = "triangle", "linear"


class CoincidentAtomsError(DomainError):
    pass


def pair_distances(coords) -> np.ndarray:
    """(r12, r13, r23) for a 9-vector of Cartesian coordinates."""
    X = np.asarray(coords).reshape(3, 3)
    return np.array([np.linalg.norm(X[i] - X[j]) for i, j in PAIRS])


class Triatomic(Objective):
    dim = 9

    def __init__(self, gamma: float = 2.0, epsilon: float = 1.0, sigma: float = 1.0):
        self.gamma = gamma
        self.epsilon = epsilon
        self.sigma = sigma

    def _terms(self, coords):
        X = coords.reshape(3, 3)
        d = [X[i] - X[j] for i, j in PAIRS]
        s = [np.sum(v * v) for v in d]
        if min(abs(si) for si in s) < 1e-16:
            raise CoincidentAtomsError("two atoms coincide")
        return X, d, s

    def energy_gradient(self, coords):
        coords = np.asarray(coords)
        X, d, s = self._terms(coords)
        eps4, sig6 = 4.0 * self.epsilon, self.sigma ** 6
        energy = 0.0
        dVds = [0.0, 0.0, 0.0]
        for a in range(3):
            inv3 = sig6 / s[a] ** 3
            energy = energy + eps4 * (inv3 * inv3 - inv3)
            dVds[a] = eps4 * (-6.0 * inv3 * inv3 + 3.0 * inv3) / s[a]
        if self.gamma != 0.0:
            s12, s13, s23 = s
            P = s12 * s13 * s23
            A = s12 + s13 - s23
            B = s12 + s23 - s13
            C = s13 + s23 - s12
            N = A * B * C
            dN = (B * C + A * C - A * B, B * C - A * C + A * B, -B * C + A * C + A * B)
            P15, P25 = P ** -1.5, P ** -2.5
            energy = energy + self.gamma * (P15 + 0.375 * N * P25)
            for a in range(3):
                dP = P / s[a]
                dF = -1.5 * P25 * dP + 0.375 * (dN[a] * P25 - 2.5 * N * P ** -3.5 * dP)
                dVds[a] = dVds[a] + self.gamma * dF
        G = np.zeros((3, 3), dtype=np.result_type(coords, float))
        for a, (i, j) in enumerate(PAIRS):
            f = 2.0 * dVds[a] * d[a]
            G[i] += f
            G[j] -= f
        if np.iscomplexobj(coords):
            return energy, G.ravel()
        return float(energy), G.ravel()

    def hessian(self, coords):
        coords = np.asarray(coords, dtype=float)
        h = 1e-30
        H = np.empty((9, 9))
        for k in range(9):
            z = coords.astype(complex)
            z[k] += 1j * h
            H[:, k] = self.energy_gradient(z)[1].imag / h
        return 0.5 * (H + H.T)

    def zero_modes(self, coords):
        X = np.asarray(coords, dtype=float).reshape(3, 3)
        Xc = X - X.mean(axis=0)
        basis = []
        for k in range(3):
            t = np.zeros((3, 3))
            t[:, k] = 1.0
            basis.append(t.ravel())
            axis = np.zeros(3)
            axis[k] = 1.0
            basis.append(np.cross(axis, Xc).ravel())
        # rank-revealing orthonormalisation (a linear geometry has 5 modes)
        U, sv, _ = np.linalg.svd(np.array(basis).T, full_matrices=False)
        return U[:, sv > 1e-8 * sv.max()]

    # rigid-body motion and permutations leave the separations unchanged,
    # so minima are compared through their pair-distance fingerprints
    def distance(self, a, b):
        return float(np.linalg.norm(pair_distances(a) - pair_distances(b)))

    def align(self, ref, x):
        """Optimal superposition of ``x`` onto ``ref`` (translation + rotation)."""
        R = np.asarray(ref, dtype=float).reshape(3, 3)
        Y = np.asarray(x, dtype=float).reshape(3, 3)
        rc, yc = R.mean(axis=0), Y.mean(axis=0)
        M = (Y - yc).T @ (R - rc)
        U, _, Vt = np.linalg.svd(M)
        D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
        rot = U @ D @ Vt
        return ((Y - yc) @ rot + rc).ravel()


def equilateral(side: float) -> np.ndarray:
    h = side * np.sqrt(3.0) / 2.0
    return np.array([0.0, 0.0, 0.0, side, 0.0, 0.0, side / 2.0, h, 0.0])


def linear(center: int, bond: float) -> np.ndarray:
    """Collinear geometry with atom ``center`` (0, 1 or 2) in the middle."""
    X = np.zeros((3, 3))
    others = [i for i in range(3) if i != center]
    X[others[0], 0] = -bond
    X[others[1], 0] = bond
    return X.ravel()


@dataclass
class ReferenceMinimum:
    label: int
    kind: str
    energy: float
    coords: np.ndarray
    fingerprint: np.ndarray


class MinimumClassifier:
    """Labels a quench endpoint as one of the four known minima.

    Matching is by energy first (``energy_tol``) and then by the pair-distance
    fingerprint (``dist_tol``), which separates the three permutational linear
    isomers.  Label 0 is the triangle; label 1+k is the linear isomer with atom
    k at the centre.
    """

    def __init__(self, model: Triatomic, energy_tol: float = 1e-4, dist_tol: float = 1e-3):
        self.energy_tol = energy_tol
        self.dist_tol = dist_tol
        cfg = LbfgsConfig(rms_tol=1e-10, max_iters=2000)
        refs = []
        tri = lbfgs_minimize(model, equilateral(1.16875), cfg)
        refs.append(ReferenceMinimum(0, TRIANGLE, tri.final_energy, tri.final_point,
                                     pair_distances(tri.final_point)))
        for k in range(3):
            lin = lbfgs_minimize(model, linear(k, 1.10876), cfg)
            refs.append(ReferenceMinimum(1 + k, LINEAR, lin.final_energy, lin.final_point,
                                         pair_distances(lin.final_point)))
        self.references = refs

    def classify(self, energy: float, coords) -> int | None:
        fp = pair_distances(coords)
        for ref in self.references:
            if abs(energy - ref.energy) <= self.energy_tol and \
                    np.max(np.abs(fp - ref.fingerprint)) <= self.dist_tol:
                return ref.label
        return None


@dataclass
class QuenchRun:
    result: MinimizationResult
    label: int


@dataclass
class QuenchDataset:
    runs: list
    seed: int
    n_requested: int
    n_unconverged: int = 0
    n_unmatched: int = 0
    n_resampled: int = 0
    label_histogram: dict = field(default_factory=dict)


def random_start(rng: np.random.Generator, min_separation: float = 1e-8) -> tuple[np.ndarray, int]:
    """Uniform start in the cube; configurations with coincident atoms are redrawn."""
    redraws = 0
    while True:
        x = rng.uniform(0.0, CUBE_SIDE, size=9)
        if pair_distances(x).min() > min_separation:
            return x, redraws
        redraws += 1


def build_quench_dataset(model: Triatomic, n_runs: int, seed: int,
                         cfg: LbfgsConfig | None = None, starts=None) -> QuenchDataset:
    """Quench ``n_runs`` random starts and label each by its final minimum.

    ``starts`` overrides the random draw (a sequence of 9-vectors).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    cfg = cfg or LbfgsConfig(max_iters=5000)
    cfg = LbfgsConfig(memory=cfg.memory, rms_tol=cfg.rms_tol, max_step=cfg.max_step,
                      max_iters=cfg.max_iters, record_trajectory=True)
    classifier = MinimumClassifier(model)
    rng = make_rng(seed)
    ds = QuenchDataset(runs=[], seed=seed, n_requested=n_runs)
    for i in range(n_runs):
        if starts is not None:
            x0 = np.asarray(starts[i], dtype=float)
            if pair_distances(x0).min() <= 1e-8:
                raise CoincidentAtomsError("supplied start has coincident atoms")
        else:
            x0, redraws = random_start(rng)
            ds.n_resampled += redraws
        res = lbfgs_minimize(model, x0, cfg)
        if not res.converged:
            ds.n_unconverged += 1
            continue
        label = classifier.classify(res.final_energy, res.final_point)
        if label is None:
            ds.n_unmatched += 1
            continue
        ds.runs.append(QuenchRun(res, label))
    counts = np.bincount([r.label for r in ds.runs], minlength=4)
    ds.label_histogram = {int(k): int(c) for k, c in enumerate(counts)}
    return ds


def extract_inputs(dataset, mode: str = "initial_r3", s: int = 1):
    """Classifier inputs from recorded minimisation sequences.

    ``initial_r3``: (r12, r13, r23) of the starting configuration.
    ``r2_at_s``: (r12, r13) of the configuration ``s`` steps before
    convergence; sequences shorter than that fall back to the start.
    """
    from .neuralnet import ClassificationDataset

    runs = dataset.runs if hasattr(dataset, "runs") else dataset
    rows, labels = [], []
    for run in runs:
        traj = run.result.trajectory
        if not traj:
            raise ValueError("dataset has no recorded trajectories")
        if mode == "initial_r3":
            rows.append(pair_distances(traj[0]))
        elif mode == "r2_at_s":
            if s < 1:
                raise ValueError("s must be >= 1")
            idx = len(traj) - 1 - s
            rows.append(pair_distances(traj[max(idx, 0)])[:2])
        else:
            raise ValueError(f"unknown input mode {mode!r}")
        labels.append(run.label)
    return ClassificationDataset(np.array(rows), np.array(labels, dtype=int), 4)
