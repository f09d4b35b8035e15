"""Command-line front end.

Every subcommand reads a JSON config (``--config``), applies command-line
overrides (``--seed``, ``--set key=value``), refuses unknown keys, and writes
plain-text outputs into ``--out``.  Each output carries the hash of the
resolved config and the seed: a ``#`` header line for CSV and text files,
a ``provenance`` object in JSON files and a ``//`` comment in DOT files.

Precedence, lowest first: built-in defaults, config file, ``--set``, ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .basinvol import BasinWalkConfig, enumerate_and_entropy, estimate_basin_volume
from .explorer import (ConnectReport, EfConfig, NebConfig, connect_database, safe_quench,
                       save_connect_state)
from .graphnet import build_graph, export_dot, graph_stats
from .landscape import (build_disconnectivity_tree, harmonic_cv, load_db, partial_sum_cv,
                        save_db)
from .mlmetrics import auc_vs_steps, distance_matrix, miss_vector
from .models.idx import synthetic_blobs
from .models.neuralnet import NeuralNetSpec
from .models.triatomic import Triatomic, build_quench_dataset, pair_distances
from .numcore import LbfgsConfig, make_rng
from .pipelines import (ExploreConfig, Interrupted, build_objective, digit_data, explore,
                        misclassification_colors, model_description, new_database, nn_parts,
                        regression_curves, triatomic_split)
from .pspinlab import QuenchConfig, energy_histogram, pspin_disconnectivity, quench_ensemble
from .pspinlab import teacher_student as run_teacher_student

BUNDLED_TOY_DB = Path(__file__).with_name("data") / "toy_db.json"


class ConfigError(ValueError):
    pass


# --- config handling ------------------------------------------------------------

def resolve_config(defaults: dict, file_cfg: dict, overrides: dict) -> dict:
    cfg = dict(defaults)
    for source in (file_cfg, overrides):
        unknown = sorted(set(source) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}; allowed: {sorted(defaults)}")
        cfg.update(source)
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


class Outputs:
    """Writes provenance-stamped files into one directory."""

    def __init__(self, out: Path, command: str, cfg: dict):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.provenance = {"command": command, "config_hash": config_hash(cfg),
                           "seed": cfg["seed"], "version": __version__}
        self.header = " ".join(f"{k}={v}" for k, v in self.provenance.items())
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def _write(self, name, text):
        self.path(name).write_text(text)
        self.written.append(name)

    def json(self, name: str, payload: dict) -> None:
        body = {"provenance": self.provenance, **payload}
        self._write(name, json.dumps(body, indent=1, sort_keys=True, default=_jsonable) + "\n")

    def csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        buf.write(f"# {self.header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self._write(name, buf.getvalue())

    def text(self, name: str, text: str, comment: str = "#") -> None:
        self._write(name, f"{comment} {self.header}\n{text}")

    def db(self, name: str, db) -> None:
        db.meta["provenance"] = self.provenance
        save_db(db, self.path(name))
        self.written.append(name)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _load_db(path):
    if path in (None, ""):
        raise ConfigError("config key 'db' (path to a database file) is required")
    return load_db(BUNDLED_TOY_DB if path == "bundled:toy" else path)


# --- commands ----------------------------------------------------------------------

COMMANDS: dict[str, tuple[dict, Callable]] = {}


def command(name: str, defaults: dict):
    def deco(fn):
        COMMANDS[name] = ({"seed": 0, **defaults}, fn)
        return fn
    return deco


@command("triatomic-dataset", {"n_runs": 10000, "gamma": 2.0})
def cmd_triatomic_dataset(cfg, out: Outputs, ctx):
    ds = build_quench_dataset(Triatomic(cfg["gamma"]), cfg["n_runs"], cfg["seed"])
    labels, seqs = [], []
    for i, run in enumerate(ds.runs):
        traj = run.result.trajectory
        labels.append([i, run.label, run.result.n_steps, run.result.final_energy])
        for k, x in enumerate(traj):
            seqs.append([i, k, *pair_distances(x)])
    out.csv("labels.csv", ["run", "label", "n_steps", "final_energy"], labels)
    out.csv("sequences.csv", ["run", "step", "r12", "r13", "r23"], seqs)
    out.json("summary.json", {"n_requested": ds.n_requested, "n_kept": len(ds.runs),
                              "n_unconverged": ds.n_unconverged, "n_unmatched": ds.n_unmatched,
                              "n_resampled": ds.n_resampled,
                              "label_histogram": {str(k): v for k, v in ds.label_histogram.items()}})


EXPLORE_KEYS = {"n_starts": 10, "n_steps": 100, "step_size": 1.0, "temperature": 1.0}


@command("train-landscape", {"n_runs": 2000, "gamma": 2.0, "mode": "initial_r3", "s": 1,
                             "n_hidden": 3, "lam": 1e-4, "regularize_bias": True,
                             "compute_spectrum": True, **EXPLORE_KEYS})
def cmd_train_landscape(cfg, out: Outputs, ctx):
    desc = model_description("triatomic-nn", gamma=cfg["gamma"], n_runs=cfg["n_runs"],
                             dataset_seed=cfg["seed"], mode=cfg["mode"], s=cfg["s"],
                             n_hidden=cfg["n_hidden"], lam=cfg["lam"],
                             regularize_bias=cfg["regularize_bias"])
    ecfg = ExploreConfig(cfg["n_starts"], cfg["n_steps"], cfg["step_size"], cfg["temperature"],
                         compute_spectrum=cfg["compute_spectrum"])
    state = out.path("state")
    if not ctx["resume"] and state.exists():
        for f in state.glob("start_*.json"):
            f.unlink()
    db, stats = explore(desc, ecfg, cfg["seed"], ctx["threads"], state_dir=state,
                        stop_after=ctx["stop_after"])
    out.db("db.json", db)
    out.json("explore.json", {"n_minima": len(db.minima),
                              "global_minimum_energy": db.global_minimum().energy,
                              "walks": stats})


@command("connect", {"db": None, "budget": 50, "n_images": 12, "spring_constant": 1.0,
                     "max_neb_iters": 500, "force_tol": 1e-3})
def cmd_connect(cfg, out: Outputs, ctx):
    state_db, state_rep = out.path("connect_state.db.json"), out.path("connect_state.report.json")
    if ctx["resume"] and state_db.exists() and state_rep.exists():
        db = load_db(state_db)
        report = ConnectReport.from_dict(json.loads(state_rep.read_text()))
    else:
        db, report = _load_db(cfg["db"]), None
    obj = build_objective(db.meta.get("model") or _missing_model())
    neb = NebConfig(n_images=cfg["n_images"], spring_constant=cfg["spring_constant"],
                    max_neb_iters=cfg["max_neb_iters"], force_tol=cfg["force_tol"])
    done = {"n": 0}

    def checkpoint(db_, rep_):
        save_connect_state(db_, rep_, state_db, state_rep)
        done["n"] += 1
        if ctx["stop_after"] is not None and done["n"] >= ctx["stop_after"]:
            raise Interrupted(f"stopped after {done['n']} connection jobs; rerun with --resume")

    report = connect_database(obj, db, cfg["budget"], neb, EfConfig(), report, checkpoint)
    out.db("db.json", db)
    out.json("connect_report.json", report.to_dict())


def _missing_model():
    raise ConfigError("database has no model description (meta.model); cannot rebuild objective")


@command("disconnectivity", {"db": None, "delta_e": None, "e_min": None, "e_max": None,
                             "color": "none"})
def cmd_disconnectivity(cfg, out: Outputs, ctx):
    db = _load_db(cfg["db"])
    tree = build_disconnectivity_tree(db, cfg["e_min"], cfg["e_max"], cfg["delta_e"])
    if cfg["color"] == "misclassification":
        colors = misclassification_colors(db)
    elif cfg["color"] == "none":
        colors = {}
    else:
        raise ConfigError("color must be 'none' or 'misclassification'")
    payload = tree.to_json()
    for leaf in payload["leaves"]:
        leaf["color"] = colors.get(leaf["members"][0])
    out.json("tree.json", payload)
    out.text("tree.txt", tree.to_lines())
    rows = [[m.id, m.energy, colors.get(m.id, "")] for m in db.minima_by_energy()]
    out.csv("leaves.csv", ["minimum", "energy", "misclassification_index"], rows)


@command("cv", {"db": None, "t_min": 0.01, "t_max": 1.0, "n_temps": 100, "partial_m": [],
                "kappa_mode": "global"})
def cmd_cv(cfg, out: Outputs, ctx):
    db = _load_db(cfg["db"])
    T = np.linspace(cfg["t_min"], cfg["t_max"], cfg["n_temps"])
    cols = [harmonic_cv(db, T, cfg["kappa_mode"])]
    for m in cfg["partial_m"]:
        cols.append(partial_sum_cv(db, int(m), T, cfg["kappa_mode"]))
    header = ["T", "cv"] + [f"cv_m{int(m)}" for m in cfg["partial_m"]]
    rows = [[cols[0][i][0]] + [col[i][1] for col in cols] for i in range(len(T))]
    out.csv("cv.csv", header, rows)


@command("auc", {"n_runs": 2000, "gamma": 2.0, "n_hidden": 3, "lambdas": [1e-4, 1e-2],
                 "s_values": [1, 2, 5, 10, 20, 30, 40, 50, 60, 70, 80], "positive_class": 0,
                 "n_starts": 2, "n_steps": 10, "step_size": 1.0, "temperature": 1.0})
def cmd_auc(cfg, out: Outputs, ctx):
    rows = auc_experiment(cfg, ctx["threads"])
    out.csv("auc.csv", ["s", "auc_global_min", "auc_max", "n_minima"],
            [[r["s"], r["auc_global_min"], r["auc_max"], r["n_minima"]] for r in rows])


def auc_experiment(cfg: dict, threads: int = 1) -> list[dict]:
    """Minima for every (lambda, s) pair, then the AUC-vs-s table on the test half."""
    minima = {}
    ecfg = ExploreConfig(cfg["n_starts"], cfg["n_steps"], cfg["step_size"], cfg["temperature"],
                         compute_spectrum=False)
    for lam in cfg["lambdas"]:
        for s in cfg["s_values"]:
            desc = model_description("triatomic-nn", gamma=cfg["gamma"], n_runs=cfg["n_runs"],
                                     dataset_seed=cfg["seed"], mode="r2_at_s", s=int(s),
                                     n_hidden=cfg["n_hidden"], lam=lam)
            minima[(lam, s)] = explore(desc, ecfg, cfg["seed"], threads)[0]
    _, test = triatomic_split(cfg["n_runs"], cfg["seed"], cfg["gamma"])
    spec = NeuralNetSpec(2, cfg["n_hidden"], 4)
    return auc_vs_steps(minima, spec, test, cfg["s_values"], cfg["lambdas"],
                        reference_lambda=cfg["lambdas"][0], positive_class=cfg["positive_class"])


@command("regression", {"n": 100, "sigma": 0.02, "q_star": [0.1, 2.13, 0.0, 1.34, 0.0],
                        "n_starts": 50, "n_steps": 100, "step_size": 0.3, "temperature": 1.0,
                        "connect_budget": 300, "n_grid": 200})
def cmd_regression(cfg, out: Outputs, ctx):
    res = regression_experiment(cfg, ctx["threads"])
    db = res["db"]
    obj = res["objective"]
    out.csv("data.csv", ["x", "t"], zip(obj.data.x, obj.data.t))
    grid, curves = regression_curves(db, cfg["n_grid"])
    out.csv("curves.csv", ["minimum", "energy", "x", "y"],
            ([mid, e, x, y] for mid, e, ys in curves for x, y in zip(grid, ys)))
    tree = build_disconnectivity_tree(db)
    out.json("tree.json", tree.to_json())
    out.text("tree.txt", tree.to_lines())
    g = build_graph(db)
    out.json("netstats.json", graph_stats(g))
    out.text("graph.dot", export_dot(g), comment="//")
    out.db("db.json", db)
    out.json("summary.json", res["summary"])


def regression_experiment(cfg: dict, threads: int = 1) -> dict:
    desc = model_description("regression", n=cfg["n"], sigma=cfg["sigma"], data_seed=cfg["seed"],
                             q_star=list(cfg["q_star"]))
    obj = build_objective(desc)
    ecfg = ExploreConfig(cfg["n_starts"], cfg["n_steps"], cfg["step_size"], cfg["temperature"],
                         compute_spectrum=False, check_index=True)
    db, _ = explore(desc, ecfg, cfg["seed"], threads, obj=obj)
    n_bh = len(db.minima)
    report = None
    if cfg["connect_budget"] > 0 and len(db.minima) >= 2:
        report = connect_database(obj, db, cfg["connect_budget"])
    E = np.array([m.energy for m in db.minima.values()])
    summary = {"n_minima_basin_hopping": n_bh, "n_minima": len(db.minima),
               "n_transition_states": len(db.transition_states),
               "global_minimum_energy": float(E.min()), "median_energy": float(np.median(E)),
               "median_over_global": float(np.median(E) / E.min()),
               "global_minimum": db.global_minimum().coords.tolist(),
               "connected": None if report is None else report.connected}
    return {"db": db, "objective": obj, "summary": summary, "report": report}


@command("digits", {"source": "mnist", "allow_synthetic": False, "data_dir": None,
                    "n_train": 1000, "n_test": 1000, "n_in": 784, "spread": 2.5, "n_hidden": 10,
                    "lam_metrics": 0.1, "lam_graph": 0.01, "n_starts": 10, "n_steps": 10,
                    "step_size": 0.5, "temperature": 1.0, "connect_budget": 100, "bins": 50})
def cmd_digits(cfg, out: Outputs, ctx):
    res = digits_experiment(cfg, ctx["threads"])
    dm = res["distances"]
    f = res["f"]
    out.json("metrics.json", {"source": res["source"], "n_minima": len(res["db_metrics"].minima),
                              "f": f, "mean_f": float(np.mean(f)),
                              "order": None if dm is None else dm.order.tolist()})
    if dm is not None:
        _write_distance_tables(out, dm, res["ids"])
    g = build_graph(res["db_graph"])
    out.json("netstats.json", graph_stats(g))
    out.text("graph.dot", export_dot(g), comment="//")
    out.db("db_metrics.json", res["db_metrics"])
    out.db("db_graph.json", res["db_graph"])


def _write_distance_tables(out: Outputs, dm, all_ids) -> None:
    o = dm.order
    ids = [all_ids[i] for i in o]
    out.csv("ell.csv", ["minimum"] + ids, ([ids[r]] + list(dm.ell[o[r], o]) for r in range(len(o))))
    out.csv("param_distance.csv", ["minimum"] + ids,
            ([ids[r]] + list(dm.param[o[r], o]) for r in range(len(o))))
    # counts exported as log(1 + n), matching a log-scaled density plot
    out.csv("joint_histogram.csv", ["param_lo", "param_hi", "ell_lo", "ell_hi", "log1p_count"],
            ([dm.param_edges[i], dm.param_edges[i + 1], dm.ell_edges[j], dm.ell_edges[j + 1],
              float(np.log1p(dm.joint_counts[i, j]))]
             for i in range(dm.joint_counts.shape[0]) for j in range(dm.joint_counts.shape[1])))


def digits_experiment(cfg: dict, threads: int = 1) -> dict:
    source = cfg["source"]
    if source == "mnist":
        try:
            digit_data("mnist", 1, 1, data_dir=cfg["data_dir"])
        except FileNotFoundError:
            if not cfg["allow_synthetic"]:
                raise
            source = "synthetic"
    common = dict(source=source, data_dir=cfg["data_dir"], n_train=cfg["n_train"],
                  n_test=cfg["n_test"], data_seed=cfg["seed"], n_in=cfg["n_in"],
                  spread=cfg["spread"], n_hidden=cfg["n_hidden"])
    ecfg = ExploreConfig(cfg["n_starts"], cfg["n_steps"], cfg["step_size"], cfg["temperature"],
                         compute_spectrum=False)
    d_metrics = model_description("digits", lam=cfg["lam_metrics"], **common)
    db_m, _ = explore(d_metrics, ecfg, cfg["seed"], threads)
    _, _, test = nn_parts(d_metrics)
    mins = db_m.minima_by_energy()
    spec = build_objective(d_metrics).spec
    f = [miss_vector(spec, m.coords, test).f for m in mins]
    # pairwise tables need at least two minima
    dm = distance_matrix([m.coords for m in mins], spec, test, bins=cfg["bins"]) \
        if len(mins) >= 2 else None
    d_graph = model_description("digits", lam=cfg["lam_graph"], **common)
    obj_g = build_objective(d_graph)
    db_g, _ = explore(d_graph, ecfg, cfg["seed"], threads, obj=obj_g)
    if cfg["connect_budget"] > 0 and len(db_g.minima) >= 2:
        connect_database(obj_g, db_g, cfg["connect_budget"])
    return {"source": source, "db_metrics": db_m, "db_graph": db_g, "distances": dm, "f": f,
            "ids": [m.id for m in mins], "test": test, "spec": spec}


@command("netstats", {"db": None})
def cmd_netstats(cfg, out: Outputs, ctx):
    g = build_graph(_load_db(cfg["db"]))
    out.json("netstats.json", graph_stats(g))
    out.text("graph.dot", export_dot(g), comment="//")


@command("pspin", {"p": 3, "N_list": [20, 40, 60, 80, 100], "n_starts": 500, "model_seed": 0,
                   "step_size": None, "max_steps": 100000, "grad_tol": 1e-6,
                   "hist_bins": 60, "tree_N": [20], "bh_steps": 200, "connect_budget": 50})
def cmd_pspin(cfg, out: Outputs, ctx):
    rows = []
    for N in cfg["N_list"]:
        ens = quench_ensemble(QuenchConfig(N=N, p=cfg["p"], n_starts=cfg["n_starts"],
                                           step_size=cfg["step_size"], grad_tol=cfg["grad_tol"],
                                           max_steps=cfg["max_steps"], seed=cfg["seed"],
                                           model_seed=cfg["model_seed"]))
        e = ens.energies_per_spin
        rows.append([N, e.size, float(e.mean()) if e.size else float("nan"),
                     float(e.var(ddof=1)) if e.size > 1 else float("nan"),
                     float(e.min()) if e.size else float("nan"), ens.n_unconverged, ens.n_diverged])
        out.csv(f"energies_N{N}.csv", ["start", "energy_per_spin", "steps"],
                ([i, float(v), int(s)] for i, (v, s) in enumerate(zip(e, ens.steps))))
        out.json(f"histogram_N{N}.json", energy_histogram(e, bins=cfg["hist_bins"]))
    out.csv("variance.csv", ["N", "n_converged", "mean", "variance", "min", "n_unconverged",
                             "n_diverged"], rows)
    for N in cfg["tree_N"]:
        ex = pspin_disconnectivity(N, cfg["seed"], n_bh_steps=cfg["bh_steps"],
                                   n_connect=cfg["connect_budget"], p=cfg["p"],
                                   model_seed=cfg["model_seed"])
        out.json(f"tree_N{N}.json", ex.tree.to_json())
        out.text(f"tree_N{N}.txt", ex.tree.to_lines())


@command("teacher-student", {"n_items": 400, "n_in": 10, "n_classes": 4, "spread": 1.5,
                             "n_hidden": 5, "scales": [1.0, 2.0], "n_steps": 3000,
                             "learning_rate": 0.5, "record_every": 50, "init_scale": 1.0})
def cmd_teacher_student(cfg, out: Outputs, ctx):
    data = synthetic_blobs(cfg["n_items"], n_in=cfg["n_in"], n_classes=cfg["n_classes"],
                           spread=cfg["spread"], seed=cfg["seed"])
    spec = NeuralNetSpec(cfg["n_in"], cfg["n_hidden"], cfg["n_classes"])
    trace, summary = [], []
    for scale in cfg["scales"]:
        r = run_teacher_student(spec, data, scale, cfg["seed"], n_steps=cfg["n_steps"],
                                learning_rate=cfg["learning_rate"],
                                record_every=cfg["record_every"], init_scale=cfg["init_scale"])
        trace += [[scale, step, loss] for step, loss in r.trace]
        summary.append({"scale": scale, "student_hidden": r.student_spec.n_hidden,
                        "final_loss": r.final_loss,
                        "loss_at_embedded_teacher": None if np.isnan(r.loss_at_embedded_teacher)
                        else r.loss_at_embedded_teacher})
    out.csv("trace.csv", ["scale", "step", "loss"], trace)
    out.json("summary.json", {"students": summary})


@command("basinvol", {"dim": 1, "box_half": 2.0, "r_ref": 0.9, "n_bias_levels": 16,
                      "ladder_span": 1e3, "steps_per_level": 3000, "burn_in": 0.2,
                      "n_samples": 20, "n_particles": 0})
def cmd_basinvol(cfg, out: Outputs, ctx):
    out.json("report.json", basinvol_experiment(cfg))


def basinvol_experiment(cfg: dict) -> dict:
    """Basin volumes and state counts for the double well on a box."""
    d = cfg["dim"]
    desc = model_description("double-well", dim=d)
    obj = build_objective(desc)
    lo, hi = -cfg["box_half"] * np.ones(d), cfg["box_half"] * np.ones(d)
    db = new_database(desc)
    # minima reached from uniform points are sampled in proportion to basin volume
    rng = make_rng(cfg["seed"])
    samples = []
    for _ in range(cfg["n_samples"]):
        res = safe_quench(obj, rng.uniform(lo, hi), LbfgsConfig())
        if res is not None and res.converged:
            samples.append(db.add_minimum(res.final_energy, res.final_point))
    volumes = {}
    for k, mid in enumerate(sorted(set(samples))):
        wc = BasinWalkConfig(r_ref=cfg["r_ref"], n_bias_levels=cfg["n_bias_levels"],
                             ladder_span=cfg["ladder_span"], steps_per_level=cfg["steps_per_level"],
                             burn_in=cfg["burn_in"], box_lower=lo, box_upper=hi,
                             seed=cfg["seed"] * 1000 + k)
        volumes[mid] = estimate_basin_volume(obj, db, mid, wc)
    total = float(np.prod(hi - lo))
    ent = enumerate_and_entropy([volumes[i].v_basin for i in samples], total,
                                cfg["n_particles"], ids=samples)
    return {"total_volume": total, "sampled_ids": samples,
            "minima": [{"id": i, "energy": db.minima[i].energy,
                        "coords": db.minima[i].coords.tolist(),
                        "volume": volumes[i].v_basin, "f_basin": volumes[i].f_basin,
                        "f_error": volumes[i].error,
                        "n_membership_calls": volumes[i].n_membership_calls}
                       for i in sorted(volumes)],
            "entropy": ent}


# --- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mllandscape", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file of config keys")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for independent walks (default: all cores)")
        sp.add_argument("--resume", action="store_true", help="continue from saved state in --out")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (value parsed as JSON)")
        sp.add_argument("--stop-after", type=int, default=None,
                        help="stop after this many units of work (for checkpoint tests)")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    defaults, fn = COMMANDS[args.command]
    file_cfg = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = resolve_config(defaults, file_cfg, overrides)
    out = Outputs(args.out or Path("out") / args.command, args.command, cfg)
    ctx = {"threads": max(1, args.threads), "resume": args.resume, "stop_after": args.stop_after}
    fn(cfg, out, ctx)
    out.json("config.json", {"config": cfg, "files": sorted(out.written)})
    return 0


def main(argv=None) -> int:
    """Exit codes: 0 success, 1 failure, 2 bad config, 3 interrupted (resumable)."""
    try:
        return run(argv)
    except Exception as exc:       # reported as JSON for callers that parse stderr
        code = 2 if isinstance(exc, ConfigError) else 3 if isinstance(exc, Interrupted) else 1
        msg = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        sys.stderr.write(json.dumps(msg, sort_keys=True) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
