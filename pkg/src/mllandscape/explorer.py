"""Global exploration: basin-hopping, doubly-nudged elastic bands, hybrid
eigenvector-following and a driver that connects a database of minima."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import linalg as sla

from .landscape import LandscapeDatabase, UnionFind, save_db
from .numcore import (DENSE_EIGEN_LIMIT, DomainError, LbfgsConfig, MinimizationResult,
                      NonFiniteError, Objective, hessian_spectrum, lbfgs_minimize,
                      lowest_eigenpair, make_rng, rms)


def safe_quench(obj: Objective, x0, cfg: LbfgsConfig) -> Optional[MinimizationResult]:
    """LBFGS quench that returns None when the walk leaves the objective's domain."""
    try:
        res = lbfgs_minimize(obj, x0, cfg)
    except (DomainError, NonFiniteError):
        return None
    res.final_point = obj.retract(res.final_point)
    return res


def _n_symmetry_modes(obj, x) -> int:
    Z = obj.zero_modes(x)
    return 0 if Z is None else Z.shape[1]


# --- basin-hopping ---------------------------------------------------------

@dataclass
class BasinHoppingConfig:
    n_steps: int = 100
    step_size: float = 0.5
    temperature: float = 1.0
    seed: int = 0
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    compute_spectrum: bool = False
    # reject quench endpoints that are saddles or have extra flat directions
    check_index: bool = False

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if isinstance(self.lbfgs, dict):
            self.lbfgs = LbfgsConfig(**self.lbfgs)


@dataclass
class BasinHoppingStats:
    ids: list = field(default_factory=list)       # distinct ids, in discovery order
    visits: list = field(default_factory=list)    # id reached by each step (-1 if dropped)
    n_accepted: int = 0
    n_unconverged: int = 0
    n_rejected_index: int = 0


class BasinHopper:
    """Resumable basin-hopping walk.

    The full state (current point, generator state, counters) round-trips
    through :meth:`state_dict`, so a walk checkpointed together with its
    database continues exactly as an uninterrupted one would.
    """

    def __init__(self, obj: Objective, x0, cfg: BasinHoppingConfig, db: LandscapeDatabase):
        self.obj, self.cfg, self.db = obj, cfg, db
        self.rng = make_rng(cfg.seed)
        self.step = 0
        self.stats = BasinHoppingStats()
        self.x = None
        self.e = None
        res = safe_quench(obj, np.asarray(x0, dtype=float), cfg.lbfgs)
        if res is not None and res.converged:
            mid = self._register(res)
            if mid is not None:
                self.x, self.e = res.final_point, res.final_energy
        if self.x is None:
            # an unconverged start still seeds the walk
            self.x = np.asarray(x0, dtype=float) if res is None else res.final_point
            self.e = np.inf if res is None else res.final_energy

    def _register(self, res: MinimizationResult) -> Optional[int]:
        spec = None
        if self.cfg.compute_spectrum or self.cfg.check_index:
            spec = hessian_spectrum(self.obj, res.final_point)
            if self.cfg.check_index and (
                    spec.n_negative > 0 or spec.n_zero > _n_symmetry_modes(self.obj, res.final_point)):
                self.stats.n_rejected_index += 1
                return None
            if not self.cfg.compute_spectrum:
                spec = None
        mid = self.db.add_minimum(res.final_energy, res.final_point, spectrum=spec)
        if mid not in self.stats.ids:
            self.stats.ids.append(mid)
        return mid

    def run(self, n_steps: Optional[int] = None, checkpoint: Optional[Callable] = None) -> BasinHoppingStats:
        """Advance until ``n_steps`` (default ``cfg.n_steps``) steps have been taken in total."""
        target = self.cfg.n_steps if n_steps is None else n_steps
        cfg = self.cfg
        while self.step < target:
            trial = self.x + self.rng.uniform(-cfg.step_size, cfg.step_size, size=self.x.size)
            u = self.rng.random()
            res = safe_quench(self.obj, trial, cfg.lbfgs)
            mid = None
            if res is None or not res.converged:
                self.stats.n_unconverged += 1
            else:
                mid = self._register(res)
            self.stats.visits.append(-1 if mid is None else mid)
            if mid is not None:
                de = res.final_energy - self.e
                if de <= 0 or (cfg.temperature > 0 and u < np.exp(-de / cfg.temperature)):
                    self.x, self.e = res.final_point, res.final_energy
                    self.stats.n_accepted += 1
            self.step += 1
            if checkpoint is not None:
                checkpoint(self)
        return self.stats

    def state_dict(self) -> dict:
        return {"step": self.step, "x": [float(v) for v in self.x], "e": float(self.e),
                "rng": self.rng.bit_generator.state, "stats": asdict(self.stats)}

    def load_state(self, state: dict) -> None:
        self.step = int(state["step"])
        self.x = np.array(state["x"], dtype=float)
        self.e = float(state["e"])
        self.rng.bit_generator.state = state["rng"]
        self.stats = BasinHoppingStats(**state["stats"])


def basin_hopping(obj: Objective, x0, cfg: BasinHoppingConfig, db: LandscapeDatabase) -> list[int]:
    """Run a basin-hopping walk and return the distinct minimum ids it visited."""
    hopper = BasinHopper(obj, x0, cfg, db)
    return hopper.run().ids


# --- doubly-nudged elastic band -------------------------------------------

class BandCollapseError(RuntimeError):
    pass


@dataclass
class NebConfig:
    n_images: int = 12            # interior images
    spring_constant: float = 1.0
    dneb_mix: float = 1.0
    max_neb_iters: int = 500
    force_tol: float = 1e-3
    ts_candidate_tol: float = 0.0
    max_image_step: float = 0.1

    def __post_init__(self):
        if self.n_images < 3:
            raise ValueError("n_images must be >= 3")
        if self.spring_constant <= 0:
            raise ValueError("spring_constant must be positive")


@dataclass
class BandResult:
    images: np.ndarray      # (n_images + 2, dim), endpoints included
    energies: np.ndarray
    n_iters: int
    converged: bool
    candidates: list


def _tangent(X, E, i):
    tp, tm = X[i + 1] - X[i], X[i] - X[i - 1]
    ep, em = E[i + 1] - E[i], E[i] - E[i - 1]
    if ep > 0 and em > 0:
        t = tp
    elif ep < 0 and em < 0:
        t = tm
    else:
        big, small = max(abs(ep), abs(em)), min(abs(ep), abs(em))
        t = tp * big + tm * small if E[i + 1] > E[i - 1] else tp * small + tm * big
    n = np.linalg.norm(t)
    if n == 0:
        t = tp + tm
        n = np.linalg.norm(t)
    return t / n


def band_forces(obj: Objective, X: np.ndarray, cfg: NebConfig):
    """Energies of all images and DNEB forces on the interior ones."""
    n = X.shape[0]
    E = np.empty(n)
    G = np.zeros_like(X)
    for i in range(n):
        E[i], G[i] = obj.energy_gradient(X[i])
    F = np.zeros_like(X)
    k = cfg.spring_constant
    for i in range(1, n - 1):
        tau = _tangent(X, E, i)
        g = G[i]
        g_perp = g - g.dot(tau) * tau
        tp, tm = X[i + 1] - X[i], X[i] - X[i - 1]
        f_par = k * (np.linalg.norm(tp) - np.linalg.norm(tm)) * tau
        f_spring = k * (tp - tm)
        f_sp_perp = f_spring - f_spring.dot(tau) * tau
        gn = np.linalg.norm(g_perp)
        f_dneb = f_sp_perp - (f_sp_perp.dot(g_perp) / gn ** 2) * g_perp if gn > 0 else f_sp_perp
        F[i] = -g_perp + f_par + cfg.dneb_mix * f_dneb
    return E, F


def _band_candidates(X, E, tol):
    out = []
    for i in range(1, len(E) - 1):
        if E[i] >= E[i - 1] + tol and E[i] >= E[i + 1] + tol:
            out.append(X[i].copy())
    return out


def relax_band(obj: Objective, xa, xb, cfg: NebConfig | None = None) -> BandResult:
    """Relax a DNEB band between two minima with FIRE."""
    cfg = cfg or NebConfig()
    xa = np.asarray(xa, dtype=float)
    xb = obj.align(xa, np.asarray(xb, dtype=float))
    if np.linalg.norm(xb - xa) < 1e-8:
        raise ValueError("band endpoints coincide")
    m = cfg.n_images
    t = np.linspace(0.0, 1.0, m + 2)[:, None]
    X = (1 - t) * xa + t * xb
    for i in range(1, m + 1):
        X[i] = obj.retract(X[i])
    spacing = np.linalg.norm(xb - xa) / (m + 1)
    cap = min(cfg.max_image_step, 0.5 * spacing)

    dt, dt_max, alpha = 0.05, 0.5, 0.1
    V = np.zeros_like(X)
    n_pos = 0
    converged = False
    it = 0
    E, F = band_forces(obj, X, cfg)
    for it in range(1, cfg.max_neb_iters + 1):
        P = np.sum(F * V)
        if P > 0:
            fn, vn = np.linalg.norm(F), np.linalg.norm(V)
            V = (1 - alpha) * V + alpha * vn * F / max(fn, 1e-300)
            n_pos += 1
            if n_pos > 5:
                dt = min(dt * 1.1, dt_max)
                alpha *= 0.99
        else:
            V[:] = 0.0
            dt *= 0.5
            alpha = 0.1
            n_pos = 0
        V += dt * F
        step = dt * V
        norms = np.linalg.norm(step, axis=1)
        scale = np.where(norms > cap, cap / np.maximum(norms, 1e-300), 1.0)
        X[1:-1] += (step * scale[:, None])[1:-1]
        for i in range(1, m + 1):
            X[i] = obj.retract(X[i])
        gaps = np.linalg.norm(np.diff(X, axis=0), axis=1)
        if gaps.min() < 1e-8:
            raise BandCollapseError(f"adjacent images collapsed after {it} iterations")
        E, F = band_forces(obj, X, cfg)
        if max(rms(F[i]) for i in range(1, m + 1)) < cfg.force_tol:
            converged = True
            break
    return BandResult(X, E, it, converged, _band_candidates(X, E, cfg.ts_candidate_tol))


def dneb_candidates(obj: Objective, min_a, min_b, cfg: NebConfig | None = None) -> list[np.ndarray]:
    """Transition-state candidates: local maxima of a relaxed DNEB band."""
    return relax_band(obj, min_a, min_b, cfg).candidates


# --- hybrid eigenvector-following -----------------------------------------

class TransitionStateError(RuntimeError):
    pass


class WrongIndexError(TransitionStateError):
    def __init__(self, index: int, point):
        super().__init__(f"refinement converged to a stationary point of index {index}")
        self.index = index
        self.point = np.asarray(point)


@dataclass
class EfConfig:
    rms_tol: float = 1e-6
    max_iters: int = 500
    max_uphill_step: float = 0.1
    tangent_steps: int = 10
    max_step: float = 0.2
    newton_switch: float = 1e-3   # rms gradient below which Newton polishing is tried
    quench: LbfgsConfig = field(default_factory=LbfgsConfig)
    delta_scale: float = 0.01


@dataclass
class TsResult:
    point: np.ndarray
    energy: float
    neg_eigenvalue: float
    eigenvector: np.ndarray
    index: int
    n_iters: int
    rms_gradient: float
    minus: Optional[MinimizationResult] = None
    plus: Optional[MinimizationResult] = None


def _newton_step(obj, x, g, Z):
    H = obj.hessian(x)
    evals, evecs = sla.eigh(0.5 * (H + H.T))
    keep = np.abs(evals) > 1e-8 * max(np.abs(evals).max(), 1e-300)
    if Z is not None:
        # drop symmetry modes from the inverse
        overlap = np.sum((Z.T @ evecs) ** 2, axis=0)
        keep &= overlap < 0.5
    c = evecs[:, keep].T @ g
    return -(evecs[:, keep] @ (c / evals[keep])), int(np.sum(evals[keep] < 0))


def _converge_ts(obj: Objective, x0, cfg: EfConfig):
    x = obj.retract(np.asarray(x0, dtype=float).copy())
    e, g = obj.energy_gradient(x)
    v = None
    dense = x.size <= DENSE_EIGEN_LIMIT
    inner = LbfgsConfig(rms_tol=cfg.rms_tol, max_step=cfg.max_step, max_iters=cfg.tangent_steps)
    for it in range(cfg.max_iters):
        if rms(g) <= cfg.rms_tol:
            return x, e, g, it
        Z = obj.zero_modes(x)
        if dense and rms(g) < cfg.newton_switch:
            dx, n_neg = _newton_step(obj, x, g, Z)
            n = np.linalg.norm(dx)
            if n_neg == 1 and n < cfg.max_step:
                x_new = obj.retract(x + dx)
                e_new, g_new = obj.energy_gradient(x_new)
                if rms(g_new) < rms(g):
                    x, e, g = x_new, e_new, g_new
                    continue
        lam, v, _ = lowest_eigenpair(obj, x, v0=v)
        gv = g.dot(v)
        denom = abs(lam) + np.sqrt(lam * lam + 4.0 * gv * gv)
        if denom > 0:
            h = 2.0 * gv / denom
        else:
            h = 0.0
        if lam > 0 and abs(gv) < 1e-12:
            # sitting in a convex region with no slope along v: push out
            h = cfg.max_uphill_step
        h = float(np.clip(h, -cfg.max_uphill_step, cfg.max_uphill_step))
        x = obj.retract(x + h * v)
        vv = v.copy()

        def project(d, vv=vv):
            return d - d.dot(vv) * vv

        res = lbfgs_minimize(obj, x, inner, project=project)
        x = obj.retract(res.final_point)
        e, g = obj.energy_gradient(x)
    return x, e, g, cfg.max_iters


def hybrid_ef_refine(obj: Objective, x0, cfg: EfConfig | None = None,
                     connect: bool = True) -> TsResult:
    """Converge a transition-state candidate and find the minima it links.

    Alternates an uphill step along the lowest Hessian eigenvector with
    short LBFGS minimisations in its orthogonal complement, then polishes
    with Newton steps when the Hessian is small enough to factor.
    """
    cfg = cfg or EfConfig()
    x, e, g, n_it = _converge_ts(obj, x0, cfg)
    if rms(g) > cfg.rms_tol:
        raise TransitionStateError(f"no convergence after {n_it} iterations (rms gradient {rms(g):.3e})")
    spec = hessian_spectrum(obj, x)
    if spec.n_negative != 1:
        raise WrongIndexError(spec.n_negative, x)
    lam, v, _ = lowest_eigenpair(obj, x)
    ts = TsResult(x, float(e), float(lam), v, 1, n_it, rms(g))
    if connect:
        ts.minus, ts.plus = quench_from_saddle(obj, ts, cfg)
    return ts


def quench_from_saddle(obj: Objective, ts: TsResult, cfg: EfConfig):
    """Quench from x -/+ delta*v; delta grows if a quench falls back onto the saddle."""
    delta = cfg.delta_scale * max(1.0, rms(ts.point))
    out = []
    for sign in (-1.0, 1.0):
        d = delta
        res = None
        for _ in range(4):
            res = safe_quench(obj, ts.point + sign * d * ts.eigenvector, cfg.quench)
            if res is not None and res.converged and res.final_energy < ts.energy - 1e-10:
                break
            d *= 4.0
        out.append(res)
    return out[0], out[1]


def register_transition_state(db: LandscapeDatabase, ts: TsResult) -> Optional[tuple]:
    """Add a refined TS and its two minima; returns (ts_id, (min_id, min_id)) or None."""
    if ts.minus is None or ts.plus is None or not (ts.minus.converged and ts.plus.converged):
        return None
    a = db.add_minimum(ts.minus.final_energy, ts.minus.final_point)
    b = db.add_minimum(ts.plus.final_energy, ts.plus.final_point)
    tid = db.add_transition_state(ts.energy, ts.point, ts.neg_eigenvalue, (a, b))
    return tid, (a, b)


# --- connect driver ------------------------------------------------------

@dataclass
class ConnectJob:
    endpoints: tuple
    status: str = "pending"            # pending | connected | failed
    discovered: list = field(default_factory=list)
    message: str = ""


@dataclass
class ConnectReport:
    jobs: list = field(default_factory=list)
    connected: bool = False
    n_components: int = 0
    budget: int = 0

    def to_dict(self) -> dict:
        return {"budget": self.budget, "connected": self.connected,
                "n_components": self.n_components,
                "jobs": [{"endpoints": list(j.endpoints), "status": j.status,
                          "discovered": j.discovered, "message": j.message} for j in self.jobs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ConnectReport":
        jobs = [ConnectJob(tuple(j["endpoints"]), j["status"], list(j["discovered"]), j.get("message", ""))
                for j in d["jobs"]]
        return cls(jobs, d["connected"], d["n_components"], d["budget"])


def minima_components(db: LandscapeDatabase) -> list[list[int]]:
    uf = UnionFind(list(db.minima))
    for ts in db.transition_states.values():
        uf.union(*ts.min_pair)
    groups: dict[int, list[int]] = {}
    for i in db.minima:
        groups.setdefault(uf.find(i), []).append(i)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def _pick_pair(obj, db, tried):
    comps = minima_components(db)
    if len(comps) < 2:
        return None
    where = {i: k for k, c in enumerate(comps) for i in c}
    best = None
    ids = sorted(db.minima)
    for ii, i in enumerate(ids):
        for j in ids[ii + 1:]:
            if where[i] == where[j] or (i, j) in tried:
                continue
            d = obj.distance(db.minima[i].coords, db.minima[j].coords)
            if best is None or d < best[0]:
                best = (d, i, j)
    return None if best is None else (best[1], best[2])


def run_connect_job(obj, db, pair, neb_cfg, ef_cfg) -> ConnectJob:
    job = ConnectJob(tuple(pair))
    n_min, n_ts = len(db.minima), len(db.transition_states)
    a, b = pair
    try:
        cands = dneb_candidates(obj, db.minima[a].coords, db.minima[b].coords, neb_cfg)
    except (BandCollapseError, ValueError, DomainError, NonFiniteError) as exc:
        job.status, job.message = "failed", f"band: {exc}"
        return job
    notes = []
    for c in cands:
        try:
            ts = hybrid_ef_refine(obj, c, ef_cfg)
        except (TransitionStateError, DomainError, NonFiniteError) as exc:
            notes.append(str(exc))
            continue
        if register_transition_state(db, ts) is None:
            notes.append("pathway quench failed")
    job.discovered = ([f"min:{i}" for i in range(n_min, len(db.minima))]
                      + [f"ts:{i}" for i in range(n_ts, len(db.transition_states))])
    comps = minima_components(db)
    same = any(a in c and b in c for c in comps)
    job.status = "connected" if same else "failed"
    if not cands:
        notes.append("no candidate on the band")
    job.message = "; ".join(notes)
    return job


def connect_database(obj: Objective, db: LandscapeDatabase, budget: int,
                     neb_cfg: NebConfig | None = None, ef_cfg: EfConfig | None = None,
                     report: ConnectReport | None = None,
                     checkpoint: Optional[Callable] = None) -> ConnectReport:
    """Run connection attempts, nearest unconnected pair first, until the
    minima graph is connected or ``budget`` jobs have run.

    Passing a previous ``report`` (with the database saved alongside it)
    resumes: its jobs count against the budget and are not retried.
    """
    if len(db.minima) < 2:
        raise ValueError("need at least two minima to connect")
    neb_cfg = neb_cfg or NebConfig()
    ef_cfg = ef_cfg or EfConfig()
    report = report or ConnectReport(budget=budget)
    report.budget = budget
    tried = {tuple(sorted(j.endpoints)) for j in report.jobs}
    while len(report.jobs) < budget:
        pair = _pick_pair(obj, db, tried)
        if pair is None:
            break
        tried.add(pair)
        report.jobs.append(run_connect_job(obj, db, pair, neb_cfg, ef_cfg))
        if checkpoint is not None:
            checkpoint(db, report)
    comps = minima_components(db)
    report.n_components = len(comps)
    report.connected = len(comps) == 1
    return report


def save_connect_state(db: LandscapeDatabase, report: ConnectReport, db_path, report_path) -> None:
    save_db(db, db_path)
    Path(report_path).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
