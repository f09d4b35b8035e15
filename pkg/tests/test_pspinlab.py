import numpy as np
import pytest

from mllandscape.models import ClassificationDataset, NeuralNetSpec, PSpinModel
from mllandscape.models.idx import synthetic_blobs
from mllandscape.models.neuralnet import permute_hidden
from mllandscape.models.pspin import SphericalPSpin
from mllandscape.numcore import finite_diff_gradient, hessian_spectrum, make_rng
from mllandscape.pspinlab import (P3_LEVELS, QuenchConfig, SoftTargetLoss, embed_teacher,
                                  eigen_oracle_p2, energy_histogram, pspin_disconnectivity,
                                  quench_ensemble, teacher_student, variance_vs_N)

from oracles import scaled_error


def test_reference_levels():
    assert P3_LEVELS.E_inf == pytest.approx(1.633, abs=5e-4)
    assert P3_LEVELS.E_0 == 1.657


def test_p1_quench_reaches_unique_minimum():
    ens = quench_ensemble(QuenchConfig(N=8, p=1, n_starts=20, seed=2, model_seed=1))
    x = PSpinModel(8, 1, seed=1).coefficients
    assert ens.energies_per_spin.size == 20
    assert np.allclose(ens.energies_per_spin, -np.linalg.norm(x) / np.sqrt(8), rtol=1e-10)
    rows = variance_vs_N([4, 8], QuenchConfig(N=4, p=1, n_starts=10))
    assert all(r["variance"] == pytest.approx(0.0, abs=1e-20) for r in rows)


@pytest.mark.parametrize("N", [10, 20, 30])
def test_p2_quench_matches_eigen_oracle(N):
    for seed in range(10):
        model = PSpinModel(N, 2, seed=seed)
        ens = quench_ensemble(QuenchConfig(N=N, p=2, n_starts=10, seed=seed), model)
        lam = eigen_oracle_p2(model)
        assert ens.energies_per_spin.size == 10
        for e in ens.energies_per_spin:
            assert np.min(np.abs(e - lam) / np.abs(lam)) <= 1e-6


def test_p3_endpoints_are_stationary_and_bounded():
    cfg = QuenchConfig(N=20, p=3, n_starts=40, seed=3)
    ens = quench_ensemble(cfg)
    assert ens.energies_per_spin.size + ens.n_unconverged + ens.n_diverged == 40
    model = PSpinModel(20, 3, seed=0)
    for w, e in zip(ens.points, ens.energies_per_spin):
        g = model.euclidean_gradient(w)
        gt = g - (g @ w) / 20 * w
        assert abs(gt @ w) <= 1e-10 and np.linalg.norm(gt) < cfg.grad_tol
        assert -P3_LEVELS.E_0 - 0.02 < e < 0
    h = energy_histogram(ens.energies_per_spin)
    assert sum(h["counts"]) + h["n_below_range"] + h["n_above_range"] == ens.energies_per_spin.size
    assert len(h["edges"]) == 61 and h["minus_Einf"] == -P3_LEVELS.E_inf


def test_quench_config_validation():
    with pytest.raises(ValueError):
        QuenchConfig(N=1)
    assert QuenchConfig(N=25).step_size == pytest.approx(0.05)


def test_sphere_disconnectivity_small():
    ex = pspin_disconnectivity(10, 0, n_bh_steps=60, n_connect=10)
    obj = SphericalPSpin(ex.model)
    assert len(ex.db.minima) >= 2 and ex.db.transition_states
    for ts in ex.db.transition_states.values():
        sp = hessian_spectrum(obj, ts.coords)
        # the radial direction is the one zero mode
        assert sp.n_negative == 1 and sp.n_zero == 1
    assert len(ex.tree.leaves) == len(ex.db.minima)
    with pytest.raises(ValueError):
        pspin_disconnectivity(101, 0)


def test_soft_target_gradient():
    spec = NeuralNetSpec(4, 3, 3)
    rng = make_rng(0)
    X = rng.random((12, 4))
    T = rng.dirichlet(np.ones(3), size=12)
    loss = SoftTargetLoss(spec, X, T)
    W = spec.random_weights(rng)
    assert scaled_error(finite_diff_gradient(loss, W), loss.gradient(W)) < 1e-6


def _ts_data():
    d = synthetic_blobs(120, n_in=5, n_classes=3, spread=1.0, seed=1)
    return ClassificationDataset(d.inputs, d.labels, 3)


def test_embedded_and_permuted_teacher_have_zero_loss():
    spec = NeuralNetSpec(5, 3, 3)
    data = _ts_data()
    first = teacher_student(spec, data, 1.0, seed=4, n_steps=0)
    assert abs(first.loss_at_embedded_teacher) <= 1e-12
    W_emb = embed_teacher(first.teacher_spec, first.W_teacher, first.student_spec)
    assert first.trace[0][0] == 0
    permuted = permute_hidden(first.student_spec, W_emb, [2, 0, 1])
    again = teacher_student(spec, data, 1.0, seed=4, n_steps=0, student_init=permuted)
    assert np.array_equal(again.W_teacher, first.W_teacher)
    assert again.final_loss <= 1e-12 and again.trace[0][1] <= 1e-12
    wide = teacher_student(spec, data, 2.0, seed=4, n_steps=0)
    assert wide.student_spec.n_hidden == 6 and abs(wide.loss_at_embedded_teacher) <= 1e-12


def test_student_training_lowers_loss():
    spec = NeuralNetSpec(5, 3, 3)
    res = teacher_student(spec, _ts_data(), 1.0, seed=4, n_steps=200, record_every=50)
    assert [s for s, _ in res.trace] == [0, 50, 100, 150, 200]
    assert res.trace[-1][1] < res.trace[0][1]
    with pytest.raises(ValueError):
        teacher_student(spec, _ts_data(), 0.1, seed=0, n_steps=0)
