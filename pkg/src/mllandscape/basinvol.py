"""Basin volumes by Monte Carlo thermodynamic integration, and the state
counts and entropies that follow from them.

A walker confined to the basin of one minimum feels a harmonic tether
U_k(x) = k |x - x_min|^2 / 2.  With F(k) = -ln int_basin exp(-U_k) dx,

    dF/dk = < |x - x_min|^2 / 2 >_k ,   F(0) = -ln v_basin .

The same integral is done analytically for a small ball of radius r_ref
around the minimum, on the same spring-constant grid, so that

    f_basin = -ln V_ball + [ I_ball - I_basin ],   I = int_0^kmax dF/dk dk

and the quadrature error largely cancels between the two terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma, log, pi
from typing import Optional

import numpy as np
from scipy.integrate import simpson
from scipy.special import gammainc
from scipy.stats import chi2

from .landscape import LandscapeDatabase
from .numcore import LbfgsConfig, Objective, make_rng
from .explorer import safe_quench


class ReferenceBallError(RuntimeError):
    pass


@dataclass
class BasinWalkConfig:
    r_ref: float = 0.05
    n_bias_levels: int = 16
    ladder_span: float = 1e6              # k_max / k_min
    steps_per_level: int = 1000
    burn_in: float = 0.2                  # fraction of each level discarded
    mc_step: Optional[float] = None       # initial proposal width (adapted in burn-in)
    n_ref_checks: int = 64
    box_lower: Optional[np.ndarray] = None
    box_upper: Optional[np.ndarray] = None
    lbfgs: LbfgsConfig = field(default_factory=lambda: LbfgsConfig(rms_tol=1e-6, max_iters=2000))
    seed: int = 0

    def spring_constants(self, dim: int) -> np.ndarray:
        """Descending geometric ladder ending with k = 0."""
        k_max = chi2.isf(1e-9, dim) / self.r_ref ** 2
        ks = np.geomspace(k_max, k_max / self.ladder_span, self.n_bias_levels)
        return np.concatenate([ks, [0.0]])


@dataclass
class VolumeEstimate:
    f_basin: float
    v_basin: float
    error: float
    n_membership_calls: int
    n_unconverged: int
    spring_constants: list
    mean_half_r2: list
    seed: int


class MembershipOracle:
    """Decides basin membership by quenching; counts calls and failures."""

    def __init__(self, obj: Objective, db: LandscapeDatabase, target_id: int,
                 cfg: LbfgsConfig | None = None, lower=None, upper=None):
        if target_id not in db.minima:
            raise KeyError(f"minimum {target_id} not in database")
        self.obj, self.db, self.target = obj, db, target_id
        self.cfg = cfg or LbfgsConfig(max_iters=2000)
        self.lower = None if lower is None else np.asarray(lower, dtype=float)
        self.upper = None if upper is None else np.asarray(upper, dtype=float)
        self.calls = 0
        self.unconverged = 0
        self.log: list = []

    def in_box(self, x) -> bool:
        if self.lower is not None and np.any(x < self.lower):
            return False
        if self.upper is not None and np.any(x > self.upper):
            return False
        return True

    def __call__(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if not self.in_box(x):
            return False
        self.calls += 1
        res = safe_quench(self.obj, x, self.cfg)
        if res is None or not res.converged:
            self.unconverged += 1
            self.log.append(("unconverged", x.tolist()))
            return False
        return self.db.find_minimum(res.final_energy, res.final_point) == self.target


def basin_membership(obj: Objective, db: LandscapeDatabase, x, target_id: int,
                     cfg: LbfgsConfig | None = None) -> bool:
    return MembershipOracle(obj, db, target_id, cfg)(x)


def ball_log_volume(dim: int, r: float) -> float:
    return 0.5 * dim * log(pi) - lgamma(0.5 * dim + 1.0) + dim * log(r)


def ball_mean_half_r2(dim: int, r: float, k: np.ndarray) -> np.ndarray:
    """< r^2/2 > for density exp(-k r^2/2) restricted to a dim-ball of radius r."""
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    zero = k == 0
    # uniform ball: <r^2> = d r^2 / (d + 2)
    out[zero] = 0.5 * dim * r * r / (dim + 2.0)
    kk = k[~zero]
    a = 0.5 * kk * r * r
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = gammainc(0.5 * dim + 1.0, a) / gammainc(0.5 * dim, a)
    out[~zero] = 0.5 * dim / kk * ratio
    return out


def _integrate_over_k(ks: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """int_0^kmax y dk for a descending ladder ending at k = 0; returns value and weights.

    The geometric part is done in ln k with Simpson's rule; the final
    [0, k_min] sliver with the trapezoid rule.
    """
    kpos = ks[:-1][::-1]
    lnk = np.log(kpos)
    n = kpos.size
    # Simpson weights obtained by integrating unit vectors
    W = np.array([simpson(np.eye(n)[i], x=lnk) for i in range(n)])
    w = np.zeros(ks.size)
    w[:-1] = (W * kpos)[::-1]
    w[-2] += 0.5 * kpos[0]
    w[-1] += 0.5 * kpos[0]
    return float(w @ y), w


def _stratified_mean(samples: np.ndarray, half_r2_ref: float, ball_mean: float,
                     n_blocks: int = 10) -> tuple[float, float]:
    """Mean of r^2/2 with the in-ball stratum replaced by its exact value.

    Conditioned on lying inside the reference ball (which sits inside the
    basin) the tethered walker has a known distribution, so only the
    fraction of time spent inside and the samples outside carry noise.
    """
    def strat(block):
        out = block[block > half_r2_ref]
        p_out = out.size / block.size
        return (1.0 - p_out) * ball_mean + (p_out * out.mean() if out.size else 0.0)

    est = strat(samples)
    if samples.size < 2 * n_blocks:
        return est, 0.0
    blocks = np.array([strat(b) for b in np.array_split(samples, n_blocks)])
    return est, float(blocks.std(ddof=1) / np.sqrt(n_blocks))


def estimate_basin_volume(obj: Objective, db: LandscapeDatabase, min_id: int,
                          cfg: BasinWalkConfig | None = None) -> VolumeEstimate:
    cfg = cfg or BasinWalkConfig()
    rng = make_rng(cfg.seed)
    x0 = np.asarray(db.minima[min_id].coords, dtype=float)
    d = x0.size
    member = MembershipOracle(obj, db, min_id, cfg.lbfgs, cfg.box_lower, cfg.box_upper)

    # the reference ball has to sit inside the basin
    for _ in range(cfg.n_ref_checks):
        u = rng.standard_normal(d)
        u *= cfg.r_ref * rng.random() ** (1.0 / d) / np.linalg.norm(u)
        if not member(x0 + u):
            raise ReferenceBallError(
                f"point at distance {np.linalg.norm(u):.3g} from the minimum is outside the basin; "
                f"reduce r_ref (currently {cfg.r_ref})")

    ks = cfg.spring_constants(d)
    span = None
    if cfg.box_lower is not None and cfg.box_upper is not None:
        span = float(np.max(np.asarray(cfg.box_upper) - np.asarray(cfg.box_lower)))
    means, errs = [], []
    x = x0.copy()
    r2 = 0.0
    r_ref2 = cfg.r_ref ** 2
    n_burn = int(cfg.burn_in * cfg.steps_per_level)
    ball_means = ball_mean_half_r2(d, cfg.r_ref, ks)
    for k, ball_mean in zip(ks, ball_means):
        step = cfg.mc_step if cfg.mc_step is not None else (
            1.0 / np.sqrt(k) if k > 0 else (span or 1.0) / 2.0)
        if span is not None:
            step = min(step, span)
        acc = 0
        samples = np.empty(cfg.steps_per_level - n_burn)
        for t in range(cfg.steps_per_level):
            trial = x + rng.uniform(-step, step, size=d)
            r2_trial = float(np.sum((trial - x0) ** 2))
            # bias move first; the (costly) membership quench only for survivors,
            # and not inside the reference ball, which was checked above
            if np.log(rng.random()) < -0.5 * k * (r2_trial - r2) and (
                    r2_trial <= r_ref2 and member.in_box(trial) or member(trial)):
                x, r2 = trial, r2_trial
                acc += 1
            if t < n_burn:
                if (t + 1) % 50 == 0:
                    rate = acc / 50
                    step *= 1.2 if rate > 0.5 else 0.8 if rate < 0.3 else 1.0
                    if span is not None:
                        step = min(step, span)
                    acc = 0
            else:
                samples[t - n_burn] = 0.5 * r2
        est, err = _stratified_mean(samples, 0.5 * r_ref2, ball_mean)
        means.append(est)
        errs.append(err)
    means = np.array(means)
    errs = np.array(errs)
    I_basin, w = _integrate_over_k(ks, means)
    I_ball, _ = _integrate_over_k(ks, ball_mean_half_r2(d, cfg.r_ref, ks))
    f = -ball_log_volume(d, cfg.r_ref) + (I_ball - I_basin)
    err = float(np.sqrt(np.sum((w * errs) ** 2)))
    return VolumeEstimate(f, float(np.exp(-f)), err, member.calls, member.unconverged,
                          ks.tolist(), means.tolist(), int(cfg.seed))


def enumerate_and_entropy(volumes, total_volume: float, n_particles: int = 0,
                          ids=None, tol: float = 0.05) -> dict:
    """State count and entropies from basin volumes of minima sampled in
    proportion to their volume.

    The unbiased mean basin volume is the harmonic mean of the sample.  The
    Gibbs-like entropy uses p_i = v_i / V over the distinct minima (``ids``
    marks repeats; without it every entry is taken as distinct).  Volumes
    are estimates, so the probabilities may overshoot one by up to ``tol``
    before the set is called inconsistent.
    """
    v = np.asarray(volumes, dtype=float)
    if v.size == 0 or np.any(v <= 0) or total_volume <= 0:
        raise ValueError("volumes and total volume must be positive")
    mean_v = v.size / np.sum(1.0 / v)
    omega = total_volume / mean_v
    ln_nfact = lgamma(n_particles + 1.0) if n_particles > 0 else 0.0
    if ids is None:
        distinct = v
    else:
        seen = {}
        for i, vi in zip(ids, v):
            seen.setdefault(i, vi)
        distinct = np.array(list(seen.values()))
    p = distinct / total_volume
    if p.sum() > 1.0 + tol:
        raise ValueError(f"basin probabilities sum to {p.sum():.6g} > 1")
    s_g = float(-np.sum(p * np.log(p))) - ln_nfact
    return {"Omega": float(omega), "S_B": float(np.log(omega) - ln_nfact), "S_G": s_g,
            "mean_volume": float(mean_v), "p_sum": float(p.sum())}
