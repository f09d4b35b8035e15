"""Spherical p-spin experiments: quench ensembles, concentration statistics,
sphere disconnectivity graphs and the teacher-student stall protocol."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import softmax

from .explorer import (BasinHopper, BasinHoppingConfig, EfConfig, NebConfig,
                       connect_database)
from .landscape import LandscapeDatabase, build_disconnectivity_tree
from .models.neuralnet import (ClassificationDataset, NeuralNetObjective, NeuralNetSpec,
                               forward)
from .models.pspin import PSpinModel, SphericalPSpin
from .numcore import LbfgsConfig, Objective, lbfgs_minimize, spawn_rngs


@dataclass(frozen=True)
class ComplexityReference:
    """Large-N energy levels per spin for p = 3 (reported as positive magnitudes)."""
    E_inf: float = 2.0 * np.sqrt(2.0 / 3.0)
    E_0: float = 1.657


P3_LEVELS = ComplexityReference()


@dataclass
class QuenchConfig:
    N: int
    p: int = 3
    n_starts: int = 100
    step_size: Optional[float] = None     # default 0.01 * sqrt(N)
    grad_tol: float = 1e-6
    max_steps: int = 100000
    seed: int = 0
    model_seed: int = 0
    divergence_window: int = 100

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.step_size is None:
            self.step_size = 0.01 * np.sqrt(self.N)
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass
class QuenchEnsemble:
    energies_per_spin: np.ndarray     # converged runs only
    points: np.ndarray
    grad_norms: np.ndarray
    steps: np.ndarray
    n_unconverged: int
    n_diverged: int
    seed: int
    model_seed: int
    N: int
    p: int


def batched_gradient(model: PSpinModel, W: np.ndarray) -> np.ndarray:
    """Euclidean gradients for a batch of points (rows of ``W``)."""
    c, S = model.normalization, model.sym
    if model.p == 1:
        return np.broadcast_to(c * S, W.shape).copy()
    if model.p == 2:
        return 2.0 * c * (W @ S)
    B, N = W.shape
    outer = (W[:, :, None] * W[:, None, :]).reshape(B, N * N)
    return 3.0 * c * (outer @ S.reshape(N, N * N).T)


def quench_ensemble(cfg: QuenchConfig, model: Optional[PSpinModel] = None) -> QuenchEnsemble:
    """Constant-step tangent gradient descent from uniform random points on the sphere.

    Every run is stepped in one batch; runs leave the batch when their
    tangent gradient norm drops below ``grad_tol``.  A run whose energy rises
    for ``divergence_window`` consecutive steps is dropped.
    """
    model = model or PSpinModel(cfg.N, cfg.p, seed=cfg.model_seed)
    N, p = model.N, model.p
    R = np.sqrt(N)
    # a child stream, so equal start and model seeds do not share draws
    rng = spawn_rngs(cfg.seed, 1)[0]
    W = rng.standard_normal((cfg.n_starts, N))
    W *= R / np.linalg.norm(W, axis=1, keepdims=True)
    active = np.ones(cfg.n_starts, dtype=bool)
    diverged = np.zeros(cfg.n_starts, dtype=bool)
    steps = np.zeros(cfg.n_starts, dtype=int)
    rises = np.zeros(cfg.n_starts, dtype=int)
    gnorm = np.full(cfg.n_starts, np.inf)
    e_prev = np.full(cfg.n_starts, np.inf)
    for _ in range(cfg.max_steps + 1):
        a = np.flatnonzero(active)
        if a.size == 0:
            break
        w = W[a]
        g = batched_gradient(model, w)
        e = np.sum(g * w, axis=1) / p          # Euler: w . grad = p * H
        gt = g - (np.sum(g * w, axis=1) / N)[:, None] * w
        gn = np.linalg.norm(gt, axis=1)
        gnorm[a] = gn
        rises[a] = np.where(e > e_prev[a], rises[a] + 1, 0)
        e_prev[a] = e
        bad = rises[a] >= cfg.divergence_window
        diverged[a[bad]] = True
        done = (gn < cfg.grad_tol) | bad | (steps[a] >= cfg.max_steps)
        move = ~done
        wn = w[move] - cfg.step_size * gt[move]
        wn *= R / np.linalg.norm(wn, axis=1, keepdims=True)
        W[a[move]] = wn
        steps[a[move]] += 1
        active[a[done]] = False
    conv = (gnorm < cfg.grad_tol) & ~diverged
    Wc = W[conv]
    g = batched_gradient(model, Wc)
    e = np.sum(g * Wc, axis=1) / p
    return QuenchEnsemble(e / N, Wc, gnorm[conv], steps[conv],
                          int(np.sum(~conv & ~diverged)), int(diverged.sum()),
                          cfg.seed, cfg.model_seed, N, p)


def variance_vs_N(N_list, base: QuenchConfig) -> list[dict]:
    if len(N_list) < 2:
        raise ValueError("need at least two system sizes")
    rows = []
    for N in N_list:
        cfg = QuenchConfig(N=N, p=base.p, n_starts=base.n_starts, step_size=None,
                           grad_tol=base.grad_tol, max_steps=base.max_steps, seed=base.seed,
                           model_seed=base.model_seed, divergence_window=base.divergence_window)
        ens = quench_ensemble(cfg)
        e = ens.energies_per_spin
        rows.append({"N": N, "n_converged": int(e.size), "mean": float(e.mean()),
                     "variance": float(e.var(ddof=1)) if e.size > 1 else 0.0,
                     "min": float(e.min()), "n_unconverged": ens.n_unconverged,
                     "n_diverged": ens.n_diverged})
    return rows


def energy_histogram(energies_per_spin, bins: int = 60, lo: float = -1.70, hi: float = -1.30,
                     levels: ComplexityReference = P3_LEVELS) -> dict:
    counts, edges = np.histogram(energies_per_spin, bins=bins, range=(lo, hi))
    e = np.asarray(energies_per_spin)
    return {"edges": edges.tolist(), "counts": counts.tolist(),
            "n_below_range": int(np.sum(e < lo)), "n_above_range": int(np.sum(e > hi)),
            "minus_E0": -levels.E_0, "minus_Einf": -levels.E_inf}


def eigen_oracle_p2(model: PSpinModel) -> np.ndarray:
    """Stationary energies per spin of the p = 2 model: eigenvalues of (X + X^T)/2."""
    return np.linalg.eigvalsh(model.sym)


# --- disconnectivity on the sphere ----------------------------------------

@dataclass
class SphereExploration:
    db: LandscapeDatabase
    tree: object
    model: PSpinModel
    n_bh_steps: int
    connect_report: object


def pspin_disconnectivity(N: int, seed: int, n_bh_steps: int = 200, n_connect: int = 50,
                          step_size: Optional[float] = None, temperature: Optional[float] = None,
                          p: int = 3, model_seed: Optional[int] = None,
                          neb_cfg: NebConfig | None = None) -> SphereExploration:
    if N > 100:
        raise ValueError("dense tensors and Hessians limit this to N <= 100")
    model = PSpinModel(N, p, seed=seed if model_seed is None else model_seed)
    obj = SphericalPSpin(model)
    db = LandscapeDatabase(energy_tol=1e-6 * N, dist_tol=1e-3 * np.sqrt(N))
    rng = spawn_rngs(seed, 1)[0]
    # temperature in units of the per-spin energy spread
    T = 0.01 * N if temperature is None else temperature
    # perturbations much smaller than the radius sqrt(N) fall back into the same basin
    step = 0.9 * np.sqrt(N) if step_size is None else step_size
    cfg = BasinHoppingConfig(n_steps=n_bh_steps, step_size=step, temperature=T, seed=seed,
                             lbfgs=LbfgsConfig(rms_tol=1e-7), check_index=True)
    BasinHopper(obj, model.random_point(rng), cfg, db).run()
    report = None
    if len(db.minima) >= 2 and n_connect > 0:
        report = connect_database(obj, db, n_connect, neb_cfg=neb_cfg,
                                  ef_cfg=EfConfig(quench=LbfgsConfig(rms_tol=1e-7)))
    tree = build_disconnectivity_tree(db)
    return SphereExploration(db, tree, model, n_bh_steps, report)


# --- teacher-student ------------------------------------------------------

class SoftTargetLoss(Objective):
    """Mean over items of the squared difference between softmax outputs and targets."""

    def __init__(self, spec: NeuralNetSpec, inputs: np.ndarray, targets: np.ndarray):
        self.spec = spec
        self.inputs = np.asarray(inputs, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.dim = spec.n_params

    def energy_gradient(self, W):
        spec = self.spec
        W = np.asarray(W, dtype=float)
        X = self.inputs
        n = X.shape[0]
        w2, w1, bh, bo = spec.unpack(W)
        h, y = forward(spec, W, X)
        P = softmax(y, axis=1)
        r = P - self.targets
        energy = float(np.sum(r * r) / n)
        q = 2.0 * r / n
        dy = P * (q - np.sum(P * q, axis=1, keepdims=True))
        dz = (dy @ w1) * (1.0 - h * h)
        grad = spec.pack(dz.T @ X, dy.T @ h, dz.sum(axis=0), dy.sum(axis=0))
        return energy, grad


def embed_teacher(teacher: NeuralNetSpec, W_teacher, student: NeuralNetSpec) -> np.ndarray:
    """Student weights reproducing the teacher exactly (extra hidden nodes are silent)."""
    if student.n_hidden < teacher.n_hidden:
        raise ValueError("student is narrower than the teacher")
    w2, w1, bh, bo = teacher.unpack(np.asarray(W_teacher, dtype=float))
    k = teacher.n_hidden
    s2 = np.zeros((student.n_hidden, student.n_in))
    s1 = np.zeros((student.n_out, student.n_hidden))
    sh = np.zeros(student.n_hidden)
    s2[:k], s1[:, :k], sh[:k] = w2, w1, bh
    return student.pack(s2, s1, sh, bo)


@dataclass
class TeacherStudentResult:
    teacher_spec: NeuralNetSpec
    student_spec: NeuralNetSpec
    W_teacher: np.ndarray
    trace: list = field(default_factory=list)     # (step, loss)
    final_loss: float = np.nan
    loss_at_embedded_teacher: float = np.nan
    W_student: Optional[np.ndarray] = None


def teacher_student(spec: NeuralNetSpec, data: ClassificationDataset, student_scale: float,
                    seed: int, n_steps: int = 5000, learning_rate: float = 0.5,
                    record_every: int = 50, init_scale: float = 1.0,
                    student_init: Optional[np.ndarray] = None,
                    minibatch: Optional[int] = None) -> TeacherStudentResult:
    """(1) split the data, (2) train a teacher on half A, (3) relabel half B with
    the teacher's outputs, (4) train a student on the relabelled half.

    Both networks use zero regularisation.  The student is trained by
    gradient descent (full batch unless ``minibatch`` is given).
    """
    rng_split, rng_teacher, rng_student = spawn_rngs(seed, 3)
    order = rng_split.permutation(len(data))
    half = len(data) // 2
    A, B = data.subset(order[:half]), data.subset(order[half:])
    teacher = NeuralNetSpec(spec.n_in, spec.n_hidden, spec.n_out, lam=0.0,
                            regularize_bias=spec.regularize_bias)
    res = lbfgs_minimize(NeuralNetObjective(teacher, A), teacher.random_weights(rng_teacher, 0.5),
                         LbfgsConfig(rms_tol=1e-6, max_iters=5000))
    W_star = res.final_point
    targets = softmax(forward(teacher, W_star, B.inputs)[1], axis=1)

    width = int(round(student_scale * spec.n_hidden))
    if width < 1:
        raise ValueError("student must have at least one hidden node")
    student = NeuralNetSpec(spec.n_in, width, spec.n_out, lam=0.0)
    loss = SoftTargetLoss(student, B.inputs, targets)
    out = TeacherStudentResult(teacher, student, W_star)
    if width >= spec.n_hidden:
        out.loss_at_embedded_teacher = loss.energy(embed_teacher(teacher, W_star, student))

    W = student.random_weights(rng_student, init_scale) if student_init is None \
        else np.array(student_init, dtype=float)
    n = B.inputs.shape[0]
    for step in range(n_steps + 1):
        if minibatch:
            idx = rng_student.choice(n, size=min(minibatch, n), replace=False)
            e, g = SoftTargetLoss(student, B.inputs[idx], targets[idx]).energy_gradient(W)
            if step % record_every == 0 or step == n_steps:
                out.trace.append((step, loss.energy(W)))
        else:
            e, g = loss.energy_gradient(W)
            if step % record_every == 0 or step == n_steps:
                out.trace.append((step, e))
        if step < n_steps:
            W = W - learning_rate * g
    out.final_loss = loss.energy(W)
    out.W_student = W
    return out
