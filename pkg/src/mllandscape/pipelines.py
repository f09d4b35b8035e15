"""Experiment pipelines shared by the command line and the acceptance suite.

A landscape is described by a small JSON-able dict (``kind`` plus model
parameters).  The description is stored in ``db.meta["model"]`` so that a
saved database can rebuild its objective later, e.g. for connection runs or
for colouring disconnectivity leaves by test-set quality.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .explorer import BasinHopper, BasinHoppingConfig
from .landscape import LandscapeDatabase
from .mlmetrics import miss_vector, misclassification_distance
from .models.idx import load_mnist, synthetic_blobs
from .models.neuralnet import ClassificationDataset, NeuralNetObjective, NeuralNetSpec
from .models.pspin import PSpinModel, SphericalPSpin
from .models.regression import Q_STAR, RegressionObjective, generate_regression_data
from .models.toys import DoubleWell
from .models.triatomic import Triatomic, build_quench_dataset, extract_inputs, random_start
from .numcore import LbfgsConfig, Objective, spawn_rngs


class Interrupted(RuntimeError):
    """Raised on a requested stop; the state written so far allows a resume."""


# --- datasets ---------------------------------------------------------------

@lru_cache(maxsize=4)
def triatomic_split(n_runs: int, seed: int, gamma: float = 2.0) -> tuple[tuple, tuple]:
    """Quench dataset divided at random into equal training and test halves."""
    ds = build_quench_dataset(Triatomic(gamma), n_runs, seed)
    order = spawn_rngs(seed, 2)[1].permutation(len(ds.runs))
    half = len(order) // 2
    train = tuple(ds.runs[i] for i in np.sort(order[:half]))
    test = tuple(ds.runs[i] for i in np.sort(order[half:]))
    return train, test


def digit_data(source: str, n_train: int, n_test: int, data_seed: int = 0,
               data_dir: Optional[str] = None, n_in: int = 784, spread: float = 2.5):
    """(train, test) classification sets from MNIST IDX files or seeded blobs.

    The blob defaults (784 inputs, spread 2.5) give a test error of roughly
    0.2 at lambda = 0.1, the same regime as the digit data.
    """
    if source == "mnist":
        return (load_mnist(data_dir, "train", limit=n_train),
                load_mnist(data_dir, "test", limit=n_test))
    if source == "synthetic":
        full = synthetic_blobs(n_train + n_test, n_in=n_in, spread=spread, seed=data_seed)
        idx = np.arange(n_train + n_test)
        return full.subset(idx[:n_train]), full.subset(idx[n_train:])
    raise ValueError(f"unknown digit data source {source!r}")


# --- model descriptions -------------------------------------------------------

MODEL_DEFAULTS = {
    "double-well": {"dim": 1},
    "triatomic": {"gamma": 2.0},
    "triatomic-nn": {"gamma": 2.0, "n_runs": 2000, "dataset_seed": 0, "mode": "initial_r3",
                     "s": 1, "n_hidden": 3, "lam": 1e-4, "regularize_bias": True},
    "regression": {"n": 100, "sigma": 0.02, "data_seed": 0, "q_star": list(Q_STAR)},
    "pspin": {"N": 20, "p": 3, "model_seed": 0},
    "digits": {"source": "synthetic", "data_dir": None, "n_train": 1000, "n_test": 1000,
               "data_seed": 0, "n_in": 784, "spread": 2.5, "n_hidden": 10, "lam": 0.1,
               "regularize_bias": True},
}


def model_description(kind: str, **params) -> dict:
    if kind not in MODEL_DEFAULTS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_DEFAULTS)}")
    unknown = set(params) - set(MODEL_DEFAULTS[kind])
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    desc = {"kind": kind, **MODEL_DEFAULTS[kind], **params}
    return json.loads(json.dumps(desc))


def nn_parts(desc: dict):
    """(spec, train, test) for the two classification landscapes."""
    if desc["kind"] == "triatomic-nn":
        train, test = triatomic_split(desc["n_runs"], desc["dataset_seed"], desc["gamma"])
        tr = extract_inputs(train, desc["mode"], desc["s"])
        te = extract_inputs(test, desc["mode"], desc["s"])
    else:
        tr, te = digit_data(desc["source"], desc["n_train"], desc["n_test"], desc["data_seed"],
                            desc["data_dir"], desc["n_in"], desc["spread"])
    spec = NeuralNetSpec(tr.inputs.shape[1], desc["n_hidden"], tr.class_count, desc["lam"],
                         desc["regularize_bias"])
    return spec, tr, te


def build_objective(desc: dict) -> Objective:
    kind = desc["kind"]
    if kind == "double-well":
        return DoubleWell(desc["dim"])
    if kind == "triatomic":
        return Triatomic(desc["gamma"])
    if kind in ("triatomic-nn", "digits"):
        spec, train, _ = nn_parts(desc)
        return NeuralNetObjective(spec, train)
    if kind == "regression":
        data = generate_regression_data(np.array(desc["q_star"]), desc["n"], desc["sigma"],
                                        desc["data_seed"])
        return RegressionObjective(data)
    if kind == "pspin":
        return SphericalPSpin(PSpinModel(desc["N"], desc["p"], seed=desc["model_seed"]))
    raise ValueError(f"unknown model kind {kind!r}")


def classification_context(desc: dict) -> Optional[tuple[NeuralNetSpec, ClassificationDataset]]:
    """(spec, test set) for classification landscapes, None otherwise."""
    if desc.get("kind") not in ("triatomic-nn", "digits"):
        return None
    spec, _, test = nn_parts(desc)
    return spec, test


def new_database(desc: dict) -> LandscapeDatabase:
    kind = desc["kind"]
    if kind == "triatomic":
        db = LandscapeDatabase(metric="triatomic-fingerprint")
    elif kind == "pspin":
        N = desc["N"]
        db = LandscapeDatabase(energy_tol=1e-6 * N, dist_tol=1e-3 * np.sqrt(N))
    else:
        db = LandscapeDatabase()
    db.meta["model"] = desc
    return db


def start_sampler(desc: dict, obj: Objective) -> Callable[[np.random.Generator], np.ndarray]:
    kind = desc["kind"]
    if kind == "double-well":
        return lambda rng: rng.uniform(-2.0, 2.0, size=desc["dim"])
    if kind == "triatomic":
        return lambda rng: random_start(rng)[0]
    if kind in ("triatomic-nn", "digits"):
        return lambda rng: obj.spec.random_weights(rng, 1.0)
    if kind == "regression":
        lo = np.array([0.0, 0.0, -np.pi, 0.0, -np.pi])
        hi = np.array([0.5, 4.0, np.pi, 4.0, np.pi])
        return lambda rng: rng.uniform(lo, hi)
    if kind == "pspin":
        return lambda rng: obj.model.random_point(rng)
    raise ValueError(f"unknown model kind {kind!r}")


# --- multi-start basin-hopping --------------------------------------------------

@dataclass
class ExploreConfig:
    n_starts: int = 10
    n_steps: int = 100
    step_size: float = 0.5
    temperature: float = 1.0
    compute_spectrum: bool = True
    check_index: bool = False
    rms_tol: float = 1e-6
    max_iters: int = 2000


def _one_start(obj, desc, cfg: ExploreConfig, rng) -> dict:
    x0 = start_sampler(desc, obj)(rng)
    bh = BasinHoppingConfig(n_steps=cfg.n_steps, step_size=cfg.step_size,
                            temperature=cfg.temperature, seed=int(rng.integers(2 ** 63)),
                            lbfgs=LbfgsConfig(rms_tol=cfg.rms_tol, max_iters=cfg.max_iters),
                            compute_spectrum=cfg.compute_spectrum, check_index=cfg.check_index)
    db = new_database(desc)
    stats = BasinHopper(obj, x0, bh, db).run()
    return {"db": db.to_dict(), "stats": {"n_accepted": stats.n_accepted,
                                          "n_unconverged": stats.n_unconverged,
                                          "n_rejected_index": stats.n_rejected_index,
                                          "n_minima": len(stats.ids)}}


def merge_databases(target: LandscapeDatabase, parts) -> None:
    """Add every minimum of ``parts`` to ``target`` in part order, then id order."""
    for part in parts:
        for m in sorted(part.minima.values(), key=lambda m: m.id):
            target.add_minimum(m.energy, m.coords, spectrum=m.spectrum, tags=m.tags)


def explore(desc: dict, cfg: ExploreConfig, seed: int, threads: int = 1,
            state_dir=None, stop_after: Optional[int] = None,
            obj: Optional[Objective] = None) -> tuple[LandscapeDatabase, list[dict]]:
    """Independent basin-hopping walks from ``cfg.n_starts`` random starts.

    Each walk fills its own database; the results are merged in start order,
    so the outcome does not depend on ``threads``.  With ``state_dir`` every
    finished walk is written to disk and skipped on a later call, which makes
    an interrupted run resumable.  ``stop_after`` raises :class:`Interrupted`
    once that many walks have been completed in this call.
    """
    obj = obj or build_objective(desc)
    rngs = spawn_rngs(seed, cfg.n_starts)
    state_dir = None if state_dir is None else Path(state_dir)
    if state_dir is not None:
        state_dir.mkdir(parents=True, exist_ok=True)
    results: dict[int, dict] = {}
    todo = []
    for i in range(cfg.n_starts):
        f = None if state_dir is None else state_dir / f"start_{i:05d}.json"
        if f is not None and f.exists():
            results[i] = json.loads(f.read_text())
        else:
            todo.append(i)
    if stop_after is not None:
        todo, interrupted = todo[:stop_after], len(todo) > stop_after
    else:
        interrupted = False

    def work(i):
        out = _one_start(obj, desc, cfg, rngs[i])
        if state_dir is not None:
            (state_dir / f"start_{i:05d}.json").write_text(json.dumps(out, sort_keys=True))
        return i, out

    if threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, out in pool.map(work, todo):
                results[i] = out
    else:
        for i in todo:
            results[i] = work(i)[1]
    if interrupted:
        raise Interrupted(f"stopped after {len(todo)} new walks; rerun with resume to continue")

    db = new_database(desc)
    merge_databases(db, (LandscapeDatabase.from_dict(results[i]["db"]) for i in range(cfg.n_starts)))
    db.meta["explore"] = {**asdict(cfg), "seed": int(seed)}
    return db, [results[i]["stats"] for i in range(cfg.n_starts)]


# --- analyses on top of a database ------------------------------------------------

def misclassification_colors(db: LandscapeDatabase) -> dict[int, float]:
    """Per-minimum misclassification distance from the global minimum on the test set."""
    ctx = classification_context(db.meta.get("model", {}))
    if ctx is None:
        raise ValueError("database model is not a classifier; cannot colour by misclassification")
    spec, test = ctx
    ref = miss_vector(spec, db.global_minimum().coords, test)
    return {m.id: misclassification_distance(miss_vector(spec, m.coords, test), ref)
            for m in db.minima_by_energy()}


def regression_curves(db: LandscapeDatabase, n_grid: int = 200) -> tuple[np.ndarray, list]:
    """Model curves of every minimum on a uniform grid over the data range."""
    from .models.regression import X_RANGE, model_curve
    grid = np.linspace(*X_RANGE, n_grid)
    return grid, [(m.id, m.energy, model_curve(m.coords, grid)) for m in db.minima_by_energy()]
