"""Stationary-point database, superbasin analysis, disconnectivity trees and
harmonic-superposition thermodynamics."""
from __future__ import annotations

import json
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .numcore import HessianSpectrum

SCHEMA = "mllandscape.db/1"


class DatabaseFormatError(ValueError):
    pass


# Named metrics so that saved databases can restore their dedup rule.
def euclidean(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


METRICS: dict[str, Callable] = {"euclidean": euclidean}


def register_metric(name: str, fn: Callable) -> None:
    METRICS[name] = fn


def _triatomic_metric(a, b):
    from .models.triatomic import pair_distances
    return float(np.linalg.norm(pair_distances(a) - pair_distances(b)))


register_metric("triatomic-fingerprint", _triatomic_metric)


@dataclass
class Minimum:
    id: int
    energy: float
    coords: np.ndarray
    spectrum: Optional[HessianSpectrum] = None
    tags: dict = field(default_factory=dict)


@dataclass
class TransitionState:
    id: int
    energy: float
    coords: np.ndarray
    neg_eigenvalue: float
    min_pair: tuple

    @property
    def is_self_loop(self) -> bool:
        return self.min_pair[0] == self.min_pair[1]


class LandscapeDatabase:
    """Deduplicated store of minima and transition states.

    Two minima are the same if their energies agree within ``energy_tol`` and
    their coordinates (under ``metric``) within ``dist_tol``.  Mutation is
    serialised by an internal lock.
    """

    def __init__(self, energy_tol: float = 1e-6, dist_tol: float = 1e-3, metric: str = "euclidean"):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}")
        self.energy_tol = energy_tol
        self.dist_tol = dist_tol
        self.metric = metric
        self.minima: dict[int, Minimum] = {}
        self.transition_states: dict[int, TransitionState] = {}
        self.meta: dict = {}
        self._lock = threading.RLock()
        self._sorted: list[tuple[float, int]] = []
        self._ts_sorted: list[tuple[float, int]] = []

    def __len__(self):
        return len(self.minima)

    @property
    def distance(self):
        return METRICS[self.metric]

    def _match(self, energy, coords, table, sorted_index):
        lo = bisect_left(sorted_index, (energy - self.energy_tol, -1))
        hi = bisect_right(sorted_index, (energy + self.energy_tol, float("inf")))
        for _, i in sorted_index[lo:hi]:
            if self.distance(table[i].coords, coords) <= self.dist_tol:
                return i
        return None

    def find_minimum(self, energy: float, coords) -> Optional[int]:
        with self._lock:
            return self._match(energy, coords, self.minima, self._sorted)

    def add_minimum(self, energy: float, coords, spectrum=None, tags=None) -> int:
        """Insert a minimum, or return the id of an existing match."""
        if not np.isfinite(energy):
            raise ValueError("minimum energy is not finite")
        coords = np.array(coords, dtype=float)
        with self._lock:
            hit = self._match(energy, coords, self.minima, self._sorted)
            if hit is not None:
                m = self.minima[hit]
                if spectrum is not None and m.spectrum is None:
                    m.spectrum = spectrum
                return hit
            mid = len(self.minima)
            self.minima[mid] = Minimum(mid, float(energy), coords, spectrum, dict(tags or {}))
            self._sorted.insert(bisect_left(self._sorted, (float(energy), mid)), (float(energy), mid))
            return mid

    def add_transition_state(self, energy: float, coords, neg_eigenvalue: float, min_pair) -> int:
        if not np.isfinite(energy):
            raise ValueError("transition-state energy is not finite")
        a, b = (int(v) for v in min_pair)
        for m in (a, b):
            if m not in self.minima:
                raise KeyError(f"minimum {m} not in database")
        coords = np.array(coords, dtype=float)
        with self._lock:
            hit = self._match(energy, coords, self.transition_states, self._ts_sorted)
            if hit is not None:
                return hit
            tid = len(self.transition_states)
            pair = (min(a, b), max(a, b))
            self.transition_states[tid] = TransitionState(tid, float(energy), coords,
                                                          float(neg_eigenvalue), pair)
            self._ts_sorted.insert(bisect_left(self._ts_sorted, (float(energy), tid)),
                                   (float(energy), tid))
            return tid

    def minima_by_energy(self) -> list[Minimum]:
        return [self.minima[i] for _, i in self._sorted]

    def global_minimum(self) -> Minimum:
        return self.minima[self._sorted[0][1]]

    def edges(self):
        return [(ts.min_pair, ts.energy) for ts in self.transition_states.values()]

    # --- persistence -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "energy_tol": self.energy_tol,
            "dist_tol": self.dist_tol,
            "metric": self.metric,
            "meta": self.meta,
            "minima": [{
                "id": m.id, "energy": m.energy, "coords": [float(v) for v in m.coords],
                "spectrum": m.spectrum.to_dict() if m.spectrum is not None else None,
                "tags": m.tags,
            } for m in self.minima.values()],
            "transition_states": [{
                "id": t.id, "energy": t.energy, "coords": [float(v) for v in t.coords],
                "neg_eigenvalue": t.neg_eigenvalue, "min_pair": list(t.min_pair),
            } for t in self.transition_states.values()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LandscapeDatabase":
        if d.get("schema") != SCHEMA:
            raise DatabaseFormatError(f"schema mismatch: expected {SCHEMA}, found {d.get('schema')!r}")
        db = cls(d["energy_tol"], d["dist_tol"], d.get("metric", "euclidean"))
        db.meta = d.get("meta", {})
        for m in sorted(d["minima"], key=lambda m: m["id"]):
            spec = HessianSpectrum.from_dict(m["spectrum"]) if m.get("spectrum") else None
            mid = m["id"]
            db.minima[mid] = Minimum(mid, m["energy"], np.array(m["coords"], dtype=float), spec,
                                     m.get("tags", {}))
            db._sorted.append((m["energy"], mid))
        db._sorted.sort()
        for t in sorted(d["transition_states"], key=lambda t: t["id"]):
            tid = t["id"]
            db.transition_states[tid] = TransitionState(tid, t["energy"], np.array(t["coords"], dtype=float),
                                                        t["neg_eigenvalue"], tuple(t["min_pair"]))
            db._ts_sorted.append((t["energy"], tid))
        db._ts_sorted.sort()
        return db

    def snapshot(self) -> "LandscapeDatabase":
        with self._lock:
            return LandscapeDatabase.from_dict(json.loads(json.dumps(self.to_dict())))


def save_db(db: LandscapeDatabase, path) -> None:
    text = json.dumps(db.to_dict(), indent=1, sort_keys=True)
    Path(path).write_text(text + "\n")


def load_db(path) -> LandscapeDatabase:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatabaseFormatError(f"{path}: not a valid database file ({exc})") from exc
    if not isinstance(d, dict):
        raise DatabaseFormatError(f"{path}: not a database object")
    try:
        return LandscapeDatabase.from_dict(d)
    except KeyError as exc:
        raise DatabaseFormatError(f"{path}: missing field {exc}") from exc


# --- superbasins -----------------------------------------------------------

class UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _groups(db, ids, uf):
    groups: dict[int, list[int]] = {}
    for i in ids:
        groups.setdefault(uf.find(i), []).append(i)
    key = lambda m: (db.minima[m].energy, m)
    out = [sorted(g, key=key) for g in groups.values()]
    out.sort(key=lambda g: key(g[0]))
    return out


def superbasin_partition(db: LandscapeDatabase, threshold: float, ids=None) -> list[list[int]]:
    """Sets of minima mutually reachable through transition states below ``threshold``.

    Sets are ordered by their lowest member; members by energy.
    """
    ids = list(db.minima) if ids is None else list(ids)
    uf = UnionFind(ids)
    for (a, b), e in db.edges():
        if e < threshold and a in uf.parent and b in uf.parent:
            uf.union(a, b)
    return _groups(db, ids, uf)


@dataclass
class TreeNode:
    id: str
    level: int                      # -1 for leaves
    energy: float                   # threshold for internal nodes, minimum energy for leaves
    members: tuple
    children: list = field(default_factory=list)
    parent: Optional[str] = None
    barrier: Optional[float] = None  # highest TS needed to join the children


@dataclass
class DisconnectivityTree:
    levels: np.ndarray
    nodes: dict
    leaves: dict
    roots: list
    metadata: dict

    def merges(self) -> list[TreeNode]:
        """Internal nodes where two or more branches join."""
        return [n for n in self.nodes.values() if n.level >= 0 and len(n.children) >= 2]

    def to_json(self) -> dict:
        def node(n):
            return {"id": n.id, "level": n.level, "energy": n.energy, "members": list(n.members),
                    "parent": n.parent, "children": list(n.children), "barrier": n.barrier}
        return {"levels": [float(v) for v in self.levels], "roots": self.roots,
                "metadata": self.metadata,
                "nodes": [node(n) for n in self.nodes.values()],
                "leaves": [node(n) for n in self.leaves.values()]}

    def to_lines(self) -> str:
        """Plain-text export: ``level parent_id child_id`` rows, then ``id energy`` leaf rows."""
        out = ["# level parent_id child_id"]
        for n in list(self.nodes.values()) + list(self.leaves.values()):
            if n.parent is not None:
                parent = self.nodes[n.parent]
                out.append(f"{parent.level} {parent.id} {n.id}")
        out.append("# leaves: id energy")
        for leaf in self.leaves.values():
            out.append(f"{leaf.id} {leaf.energy!r}")
        return "\n".join(out) + "\n"


def build_disconnectivity_tree(db: LandscapeDatabase, e_min: float | None = None,
                               e_max: float | None = None, delta_e: float | None = None) -> DisconnectivityTree:
    """Superbasin analysis at thresholds e_min + k*delta_e up to e_max.

    Leaves hang from the lowest level above their energy; an internal node at
    level k contains the minima below that threshold that are connected via
    transition states lying below it.
    """
    mins = db.minima_by_energy()
    if not mins:
        raise ValueError("empty database")
    ts_e = [t.energy for t in db.transition_states.values()]
    if e_min is None:
        e_min = mins[0].energy
    if e_max is None:
        top = max([m.energy for m in mins] + ts_e)
        e_max = top + 0.02 * max(top - e_min, 1e-12)
    if delta_e is None:
        delta_e = (e_max - e_min) / 50.0
    if delta_e <= 0:
        raise ValueError("delta_e must be positive")
    n_levels = int(np.ceil((e_max - e_min) / delta_e - 1e-12))
    levels = e_min + delta_e * np.arange(1, n_levels + 1)

    leaves = {f"m{m.id}": TreeNode(f"m{m.id}", -1, m.energy, (m.id,)) for m in mins}
    nodes: dict[str, TreeNode] = {}
    prev: dict[int, str] = {}                   # minimum id -> node id at previous level
    edges = sorted(((e, a, b) for (a, b), e in db.edges()))
    uf = UnionFind([m.id for m in mins])
    barrier_of: dict[int, float] = {}
    ei = 0
    for k, L in enumerate(levels):
        while ei < len(edges) and edges[ei][0] < L:
            e, a, b = edges[ei]
            ra, rb = uf.find(a), uf.find(b)
            if ra != rb:
                uf.union(a, b)
                root = uf.find(a)
                barrier_of[root] = max(e, barrier_of.get(ra, -np.inf), barrier_of.get(rb, -np.inf))
            ei += 1
        present = [m.id for m in mins if m.energy < L]
        current: dict[int, str] = {}
        for j, group in enumerate(_groups(db, present, uf)):
            nid = f"n{k}_{j}"
            node = TreeNode(nid, k, float(L), tuple(group))
            children = []
            for mid in group:
                child = prev.get(mid, f"m{mid}")
                if child not in children:
                    children.append(child)
            node.children = children
            if len(children) >= 2:
                node.barrier = barrier_of.get(uf.find(group[0]))
            for c in children:
                (nodes.get(c) or leaves[c]).parent = nid
            for mid in group:
                current[mid] = nid
            nodes[nid] = node
        prev = current
    top_ids = sorted(set(prev.values()), key=lambda n: nodes[n].id)
    unplaced = [l.id for l in leaves.values() if l.parent is None]
    metadata = {"n_leaves": len(leaves), "n_roots": len(top_ids) + len(unplaced),
                "forest": len(top_ids) + len(unplaced) > 1, "delta_e": delta_e,
                "e_min": e_min, "e_max": e_max}
    return DisconnectivityTree(levels, nodes, leaves, top_ids + unplaced, metadata)


# --- harmonic superposition thermodynamics ---------------------------------

def _kappa(db, minima, kappa_mode):
    if isinstance(kappa_mode, (int, np.integer)) and not isinstance(kappa_mode, bool):
        return int(kappa_mode)
    if kappa_mode != "global":
        raise ValueError(f"unknown kappa_mode {kappa_mode!r}")
    missing = [m.id for m in minima if m.spectrum is None]
    if missing:
        raise ValueError(f"minima without Hessian spectrum: {missing}")
    kappas = {m.id: m.spectrum.eigenvalues.size - m.spectrum.n_zero - m.spectrum.n_negative
              for m in minima}
    values = sorted(set(kappas.values()))
    if len(values) > 1:
        common = max(values, key=lambda v: sum(1 for k in kappas.values() if k == v))
        offenders = [i for i, k in kappas.items() if k != common]
        raise ValueError(f"inconsistent kappa across minima; offenders: {offenders}")
    return values[0]


def log_partition_terms(minima):
    E = np.array([m.energy for m in minima])
    L = np.array([m.spectrum.log_product_positive for m in minima])
    return E, L


def harmonic_cv(db: LandscapeDatabase, temperatures, kappa_mode="global", minima=None):
    """Heat-capacity analogue in the harmonic superposition approximation (k_B = 1).

    Each minimum contributes exp(-beta E - 0.5 sum ln mu) * beta^-kappa to Z,
    which gives C_V = kappa + beta^2 Var(E) under the occupation weights.
    """
    minima = db.minima_by_energy() if minima is None else minima
    kappa = _kappa(db, minima, kappa_mode)
    if any(m.spectrum is None for m in minima):
        raise ValueError("every minimum needs a Hessian spectrum")
    E, L = log_partition_terms(minima)
    E0 = E.min()
    out = []
    for T in temperatures:
        beta = 1.0 / T
        logw = -beta * (E - E0) - 0.5 * L
        w = np.exp(logw - logsumexp(logw))
        dE = E - E0
        mean = w @ dE
        var = w @ (dE - mean) ** 2
        out.append((float(T), float(kappa + beta * beta * var)))
    return out


def partial_sum_cv(db: LandscapeDatabase, m_lowest: int, temperatures, kappa_mode="global"):
    mins = db.minima_by_energy()
    if not 1 <= m_lowest <= len(mins):
        raise ValueError("m_lowest out of range")
    return harmonic_cv(db, temperatures, kappa_mode, minima=mins[:m_lowest])


def log_partition_function(db: LandscapeDatabase, beta: float, kappa: int, minima=None) -> float:
    """ln Z up to a beta-independent constant."""
    minima = db.minima_by_energy() if minima is None else minima
    E, L = log_partition_terms(minima)
    return float(logsumexp(-beta * E - 0.5 * L) - kappa * np.log(beta))
