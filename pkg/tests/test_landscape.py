import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from mllandscape.cli import BUNDLED_TOY_DB
from mllandscape.landscape import (DatabaseFormatError, LandscapeDatabase,
                                   build_disconnectivity_tree, harmonic_cv, load_db,
                                   log_partition_function, partial_sum_cv, save_db,
                                   superbasin_partition)
from mllandscape.models.triatomic import MinimumClassifier, Triatomic
from mllandscape.numcore import spectrum_from_eigenvalues

from oracles import brute_force_cv


def _spec(*evals):
    return spectrum_from_eigenvalues(np.array(evals, dtype=float))


def toy_abc():
    db = LandscapeDatabase()
    a = db.add_minimum(0.0, [0.0], spectrum=_spec(1.0))
    b = db.add_minimum(0.5, [1.0], spectrum=_spec(1.0))
    c = db.add_minimum(0.9, [2.0], spectrum=_spec(1.0))
    db.add_transition_state(1.0, [0.5], -1.0, (a, b))
    db.add_transition_state(2.0, [1.5], -1.0, (b, c))
    return db, (a, b, c)


# --- deduplication ----------------------------------------------------------

def test_same_point_twice_same_id():
    db = LandscapeDatabase()
    assert db.add_minimum(1.0, [0.1, 0.2]) == db.add_minimum(1.0, [0.1, 0.2])


def test_energy_gap_beyond_tolerance_gives_new_id():
    db = LandscapeDatabase(energy_tol=1e-6)
    assert db.add_minimum(1.0, [0.0]) != db.add_minimum(1.0 + 1e-5, [0.0])


def test_linear_isomers_distinct():
    refs = MinimumClassifier(Triatomic(2.0)).references
    db = LandscapeDatabase(metric="triatomic-fingerprint")
    ids = {db.add_minimum(r.energy, r.coords) for r in refs[1:]}
    assert len(ids) == 3


def test_non_finite_energy_rejected():
    with pytest.raises(ValueError):
        LandscapeDatabase().add_minimum(np.nan, [0.0])


def test_ts_needs_known_minima():
    db = LandscapeDatabase()
    db.add_minimum(0.0, [0.0])
    with pytest.raises(KeyError):
        db.add_transition_state(1.0, [0.5], -1.0, (0, 7))


# --- superbasins and trees ---------------------------------------------------

def test_superbasin_examples():
    db, (a, b, c) = toy_abc()
    assert superbasin_partition(db, 0.5) == [[a], [b], [c]]
    assert superbasin_partition(db, 1.5) == [[a, b], [c]]
    assert superbasin_partition(db, 3.0) == [[a, b, c]]


def _random_db(seed, n=12, n_ts=18):
    rng = np.random.default_rng(seed)
    db = LandscapeDatabase()
    for i in range(n):
        db.add_minimum(float(rng.uniform(0, 1)), [float(i)])
    for k in range(n_ts):
        a, b = rng.choice(n, 2, replace=False)
        lo = max(db.minima[a].energy, db.minima[b].energy)
        db.add_transition_state(lo + float(rng.uniform(0, 2)), [100.0 + k], -1.0, (a, b))
    return db


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), t1=st.floats(0, 3), t2=st.floats(0, 3))
def test_partitions_nested(seed, t1, t2):
    db = _random_db(seed)
    lo, hi = sorted((t1, t2))
    fine = superbasin_partition(db, lo)
    coarse = superbasin_partition(db, hi)
    where = {m: k for k, group in enumerate(coarse) for m in group}
    for group in fine:
        assert len({where[m] for m in group}) == 1
    for ts in db.transition_states.values():
        joined = superbasin_partition(db, ts.energy + 1e-9)
        assert any(set(ts.min_pair) <= set(g) for g in joined)


def test_tree_toy_merges():
    db, (a, b, c) = toy_abc()
    tree = build_disconnectivity_tree(db, e_min=0.0, e_max=2.5, delta_e=0.25)
    merges = sorted(tree.merges(), key=lambda n: n.energy)
    assert [n.energy for n in merges] == [1.25, 2.25]
    assert [n.barrier for n in merges] == [1.0, 2.0]
    assert set(merges[0].members) == {a, b}
    assert set(merges[1].members) == {a, b, c}
    assert not tree.metadata["forest"] and len(tree.roots) == 1


def test_tree_single_minimum():
    db = LandscapeDatabase()
    db.add_minimum(0.0, [0.0])
    tree = build_disconnectivity_tree(db, 0.0, 1.0, 0.5)
    assert len(tree.leaves) == 1 and tree.merges() == []


def test_tree_disconnected_is_forest():
    db, _ = toy_abc()
    db.add_minimum(0.1, [9.0])
    tree = build_disconnectivity_tree(db, 0.0, 2.5, 0.25)
    assert tree.metadata["forest"] and len(tree.roots) == 2
    json.dumps(tree.to_json())
    assert tree.to_lines().startswith("# level parent_id child_id")


def test_tree_bad_delta():
    db, _ = toy_abc()
    with pytest.raises(ValueError):
        build_disconnectivity_tree(db, 0.0, 1.0, 0.0)


# --- heat capacity ------------------------------------------------------------

def test_single_minimum_cv_is_kappa():
    db = LandscapeDatabase()
    db.add_minimum(0.0, [0.0, 0.0, 0.0], spectrum=_spec(1.0, 2.0, 3.0))
    assert all(cv == pytest.approx(3.0, abs=1e-14) for _, cv in harmonic_cv(db, [0.1, 1.0, 10.0]))


def test_two_level_formula():
    delta = 0.7
    db = LandscapeDatabase()
    db.add_minimum(0.0, [0.0, 0.0], spectrum=_spec(1.0, 2.0))
    db.add_minimum(delta, [1.0, 0.0], spectrum=_spec(1.0, 2.0))
    for T, cv in harmonic_cv(db, np.geomspace(0.01, 100, 60)):
        beta = 1.0 / T
        w = 1.0 / (1.0 + np.exp(beta * delta))
        assert abs(cv - 2.0 - beta ** 2 * delta ** 2 * w * (1 - w)) <= 1e-10


def test_partial_sums():
    db = load_db(BUNDLED_TOY_DB)
    T = np.linspace(0.02, 2.0, 40)
    full = harmonic_cv(db, T)
    every = partial_sum_cv(db, len(db.minima), T)
    assert max(abs(a[1] - b[1]) for a, b in zip(full, every)) <= 1e-12
    assert all(cv == pytest.approx(2.0, abs=1e-14) for _, cv in partial_sum_cv(db, 1, T))
    with pytest.raises(ValueError):
        partial_sum_cv(db, 0, T)


def test_two_lowest_peak_matches_two_level_maximum():
    db = load_db(BUNDLED_TOY_DB)
    lo = db.minima_by_energy()[:2]
    delta = lo[1].energy - lo[0].energy
    dL = lo[1].spectrum.log_product_positive - lo[0].spectrum.log_product_positive

    def excess(T):
        beta = 1.0 / T
        w = 1.0 / (1.0 + np.exp(beta * delta + 0.5 * dL))
        return beta ** 2 * delta ** 2 * w * (1 - w)
    opt = minimize_scalar(lambda T: -excess(T), bounds=(0.01, 5.0), method="bounded",
                          options={"xatol": 1e-10})
    T_star = opt.x
    kappa = 2
    (_, c0), (_, c_lo), (_, c_hi) = partial_sum_cv(db, 2, [T_star, 0.99 * T_star, 1.01 * T_star])
    assert c0 - kappa == pytest.approx(excess(T_star), abs=1e-10)
    assert c0 > c_lo and c0 > c_hi


def test_limits_approach_kappa():
    db = load_db(BUNDLED_TOY_DB)
    (_, cold), (_, hot) = harmonic_cv(db, [1e-3, 1e6])
    assert cold == pytest.approx(2.0, abs=1e-8)
    assert hot == pytest.approx(2.0, abs=1e-8)


def test_cv_matches_numeric_second_derivative():
    db = load_db(BUNDLED_TOY_DB)
    mins = db.minima_by_energy()
    E = [m.energy for m in mins]
    L = [m.spectrum.log_product_positive for m in mins]
    for T, cv in harmonic_cv(db, [0.05, 0.1, 0.3, 1.0, 3.0]):
        assert cv == pytest.approx(brute_force_cv(E, L, 2, T), rel=1e-6)
    # the library's own ln Z agrees with the oracle's construction
    b = 2.0
    assert log_partition_function(db, b, 2) - log_partition_function(db, 1.0, 2) == pytest.approx(
        np.log(sum(np.exp(-b * e - 0.5 * l) for e, l in zip(E, L)) / b ** 2)
        - np.log(sum(np.exp(-e - 0.5 * l) for e, l in zip(E, L))), rel=1e-12)


def test_inconsistent_kappa_names_offenders():
    db = LandscapeDatabase()
    db.add_minimum(0.0, [0.0, 0.0], spectrum=_spec(1.0, 2.0))
    db.add_minimum(0.1, [1.0, 0.0], spectrum=_spec(1.0, 2.0))
    db.add_minimum(0.2, [2.0, 0.0], spectrum=_spec(0.0, 2.0))
    with pytest.raises(ValueError, match=r"offenders: \[2\]"):
        harmonic_cv(db, [1.0])


def test_missing_spectrum_rejected():
    db = LandscapeDatabase()
    db.add_minimum(0.0, [0.0])
    with pytest.raises(ValueError):
        harmonic_cv(db, [1.0])


# --- persistence ----------------------------------------------------------------

def test_round_trip_byte_identical(tmp_path):
    db, _ = toy_abc()
    db.add_minimum(1 / 3, [np.pi, -1e-300], spectrum=_spec(0.1, 7.0))
    db.meta["note"] = "x"
    save_db(db, tmp_path / "a.json")
    again = load_db(tmp_path / "a.json")
    save_db(again, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert again.minima[3].coords[0] == np.pi and again.minima[3].energy == 1 / 3


def test_empty_db_round_trip(tmp_path):
    save_db(LandscapeDatabase(), tmp_path / "e.json")
    assert len(load_db(tmp_path / "e.json")) == 0


def test_truncated_file_is_format_error(tmp_path):
    db, _ = toy_abc()
    save_db(db, tmp_path / "t.json")
    text = (tmp_path / "t.json").read_text()
    (tmp_path / "t.json").write_text(text[: len(text) // 2])
    with pytest.raises(DatabaseFormatError):
        load_db(tmp_path / "t.json")


def test_schema_mismatch(tmp_path):
    db, _ = toy_abc()
    d = db.to_dict()
    d["schema"] = "other/9"
    (tmp_path / "s.json").write_text(json.dumps(d))
    with pytest.raises(DatabaseFormatError, match="schema"):
        load_db(tmp_path / "s.json")
