import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from _oracles import dense_lml, dense_predict
from encenergy import _accel
from encenergy._numerics import StandardizationStats
from encenergy.errors import ModelFormatError, NonFiniteInput, TooFewSamples
from encenergy.features import Preset, Standard
from encenergy.gpr import (
    NOISE_FLOOR_REL,
    FitOptions,
    GprModel,
    Hyperparams,
    basis,
    fit_matrix,
    kernel,
    kernel_matrix,
    log_marginal_likelihood,
    predict,
)
from encenergy.persist import load_model, model_from_dict, save_model
from encenergy.synth import CorpusSpec, OracleParams, generate_corpus

HP = Hyperparams(4.0, 2.0, 0.25)
IDENTITY3 = StandardizationStats.identity(3)


def random_instance(rng, n, d=3):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1))])
    y = rng.normal(size=n) * 3 + 1
    hp = Hyperparams(float(rng.uniform(0.2, 5)), float(rng.uniform(0.3, 3)), float(rng.uniform(1e-3, 1)))
    return X, y, hp


# -- kernel -------------------------------------------------------------------

def test_kernel_examples():
    x = np.arange(9.0)
    assert kernel(x, x, HP, True) == 4.25
    assert kernel(x, x, HP, False) == 4.0
    y = x.copy()
    y[3] += 2.0
    assert kernel(x, y, HP, False) == pytest.approx(4 * math.exp(-1), abs=1e-12)
    assert kernel(x, y, HP, False) == pytest.approx(1.471517765, abs=1e-9)


def test_kernel_rejects_nonfinite():
    x = np.zeros(9)
    y = x.copy()
    y[0] = np.nan
    with pytest.raises(NonFiniteInput):
        kernel(x, y, HP, False)
    with pytest.raises(NonFiniteInput):
        kernel_matrix(np.array([[np.inf, 0.0]]), HP)


def test_kernel_matrix_small_cases():
    np.testing.assert_array_equal(kernel_matrix(np.zeros((1, 9)), HP), [[4.25]])
    K = kernel_matrix(np.ones((2, 9)), HP)
    np.testing.assert_array_equal(K, [[4.25, 4.0], [4.0, 4.25]])


def test_kernel_matrix_matches_pairwise_loop():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 9))
    K = kernel_matrix(X, HP)
    ref = np.array([[kernel(X[i], X[j], HP, i == j) for j in range(5)] for i in range(5)])
    np.testing.assert_allclose(K, ref, rtol=1e-12, atol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_kernel_matrix_contracts(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 9)) * rng.uniform(0.1, 10)
    hp = Hyperparams(float(rng.uniform(0.01, 10)), float(rng.uniform(0.05, 20)), float(rng.uniform(1e-6, 1)))
    K = kernel_matrix(X, hp)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == hp.sigma_f2 + hp.sigma_n2)
    np.linalg.cholesky(K)


def test_backends_agree():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 9))
    B = rng.normal(size=(7, 9))
    D1 = _accel.pairwise_distances_numpy(X)
    D2 = _accel.pairwise_distances_numba(X)
    # same accumulation order in both backends
    np.testing.assert_array_equal(D1, D2)
    np.testing.assert_array_equal(_accel.cross_distances_numpy(B, X), _accel.cross_distances_numba(B, X))
    for D in (D1, D2):
        for f in (_accel.exp_kernel_numpy, _accel.exp_kernel_numba):
            K = f(D, 2.0, 1.5, 0.1)
            assert np.array_equal(K, K.T)
            assert np.all(np.diag(K) == 2.1)
    np.testing.assert_allclose(_accel.exp_kernel_numpy(D1, 2.0, 1.5, 0.1), _accel.exp_kernel_numba(D1, 2.0, 1.5, 0.1),
                               rtol=1e-14)


@pytest.mark.parametrize("v", [np.eye(9)[0], np.arange(9.0), np.array([-1.2, 0.3, 5.0, 0, 0, 1, 1, 0, 7])])
def test_basis_is_identity(v):
    out = basis(v)
    np.testing.assert_array_equal(out, v)
    assert out is not v


def test_constant_column_equals_deleted_column():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(12, 9))
    Xc = X.copy()
    Xc[:, 4] = 1.0
    np.testing.assert_array_equal(kernel_matrix(Xc, HP), kernel_matrix(np.delete(X, 4, axis=1), HP))


# -- likelihood ---------------------------------------------------------------

def test_lml_single_point_zero_residual():
    x = np.array([[1.0, 0.5, -2.0]])
    lml = log_marginal_likelihood(x, np.array([3.7]), HP)
    assert lml == pytest.approx(-0.5 * math.log(4.25) - 0.5 * math.log(2 * math.pi), rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_lml_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    X, y, hp = random_instance(rng, int(rng.integers(4, 7)))
    assert log_marginal_likelihood(X, y, hp) == pytest.approx(dense_lml(X, y, hp.sigma_f2, hp.length_scale, hp.sigma_n2),
                                                              rel=1e-8)


def test_lml_pure_noise_approaches_gaussian_density():
    rng = np.random.default_rng(11)
    n = 40
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = rng.normal(scale=0.7, size=n)
    r = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
    s2 = float(r @ r / n)
    # with a negligible signal variance the GP reduces to iid Gaussian residuals
    values = []
    for sn2 in (s2 / 8, s2 / 4, s2 / 2, s2):
        lml = log_marginal_likelihood(X, y, Hyperparams(1e-12, 1.0, sn2))
        assert lml == pytest.approx(float(np.sum(norm.logpdf(r, scale=math.sqrt(sn2)))), rel=1e-8)
        values.append(lml)
    assert np.all(np.diff(values) > 0)


def test_lml_handles_collinear_basis():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(10), rng.normal(size=10), np.ones(10)])
    y = rng.normal(size=10)
    a = log_marginal_likelihood(X, y, HP)
    b = log_marginal_likelihood(X[:, :2], y, HP)
    assert math.isfinite(a)
    # the duplicate intercept changes distances by nothing and the span by nothing
    assert a == pytest.approx(b, rel=1e-10)


# -- conditioning and prediction ----------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_predict_matches_dense_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    X, y, hp = random_instance(rng, int(rng.integers(4, 7)))
    Xs = np.column_stack([np.ones(4), rng.normal(size=(4, 2))])
    model = GprModel.from_hyperparams(X, y, hp, stats=IDENTITY3)
    np.testing.assert_allclose(
        model.predict_matrix(Xs), dense_predict(X, y, Xs, hp.sigma_f2, hp.length_scale, hp.sigma_n2), rtol=1e-8
    )
    model.check_invariants()


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    X = np.column_stack([np.ones(25), rng.normal(size=(25, 8))])
    y = rng.normal(size=25)
    probes = np.column_stack([np.ones(6), rng.normal(size=(6, 8))])
    perm = rng.permutation(25)
    a = GprModel.from_hyperparams(X, y, HP).predict_matrix(probes)
    b = GprModel.from_hyperparams(X[perm], y[perm], HP).predict_matrix(probes)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_interpolates_with_pinned_noise():
    ds = generate_corpus(
        CorpusSpec(resolutions=((640, 360), (1280, 720), (1920, 1080)), sequences_per_class=5,
                   standards=(Standard.H265, Standard.AV1), presets=(Preset.SLOW,),
                   qp_grid={Standard.H265: (27,), Standard.AV1: (132,)}, seed=3),
        OracleParams(noise_rel=0.0),
    )
    assert len(ds) == 30
    model = fit_matrix(ds.feature_matrix(), ds.energies(), FitOptions(fixed_sigma_n2=1e-12, restarts=2))
    assert model.hp.sigma_n2 == 1e-12
    for s in ds:
        assert predict(model, s.config) == pytest.approx(s.energy_j, rel=1e-4)


# -- fitting ------------------------------------------------------------------

def _linear_data(n=20):
    rng = np.random.default_rng(1)
    X = np.tile(np.array([1.0, 0, 5, 0, 1, 0, 1, 0, 30]), (n, 1))
    X[:, 1] = rng.uniform(65, 130, size=n)
    return X, 2.0 + 3.0 * X[:, 1]


def test_fit_recovers_noiseless_linear_target():
    X, y = _linear_data()
    model = fit_matrix(X, y, FitOptions(restarts=3))
    np.testing.assert_allclose(model.predict_matrix(X), y, rtol=1e-6)
    grid = X.copy()
    grid[:, 1] = np.linspace(X[:, 1].min(), X[:, 1].max(), len(X))
    np.testing.assert_allclose(model.predict_matrix(grid), 2.0 + 3.0 * grid[:, 1], rtol=1e-4)


def test_fit_constant_target():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(15), rng.uniform(size=(15, 8))])
    y = np.full(15, 7.5)
    model = fit_matrix(X, y, FitOptions(restarts=2))
    np.testing.assert_allclose(model.predict_matrix(X), 7.5, rtol=1e-6)
    probes = np.column_stack([np.ones(4), rng.uniform(size=(4, 8))])
    np.testing.assert_allclose(model.predict_matrix(probes), 7.5, rtol=1e-6)
    floor = NOISE_FLOOR_REL * 7.5**2
    assert floor <= model.hp.sigma_n2 <= 1e-6


def test_fit_is_deterministic():
    ds = generate_corpus(CorpusSpec(resolutions=((640, 360), (1280, 720)), sequences_per_class=2))
    X, y = ds.feature_matrix(), ds.energies()
    a = fit_matrix(X, y, FitOptions(restarts=3, seed=9))
    b = fit_matrix(X, y, FitOptions(restarts=3, seed=9))
    assert a.hp == b.hp
    assert a.beta.tobytes() == b.beta.tobytes()


def test_fit_model_invariants():
    ds = generate_corpus(CorpusSpec(resolutions=((640, 360), (1280, 720)), sequences_per_class=2))
    model = fit_matrix(ds.feature_matrix(), ds.energies(), FitOptions(restarts=2))
    model.check_invariants()
    assert np.all(model.stats.scale > 0)
    assert model.stats.scale[0] == 1.0 and model.stats.mean[0] == 0.0


def test_fit_too_few_samples():
    with pytest.raises(TooFewSamples):
        fit_matrix(np.ones((9, 9)), np.ones(9))


def test_fit_restarts_improve_or_match_single_start():
    ds = generate_corpus(CorpusSpec(resolutions=((640, 360), (1920, 1080)), sequences_per_class=2))
    X, y = ds.feature_matrix(), ds.energies()
    one = fit_matrix(X, y, FitOptions(restarts=1))
    many = fit_matrix(X, y, FitOptions(restarts=4))
    assert many.log_likelihood >= one.log_likelihood - 1e-9


# -- serialization ------------------------------------------------------------

def test_model_json_roundtrip(tmp_path):
    ds = generate_corpus(CorpusSpec(resolutions=((640, 360), (1280, 720)), sequences_per_class=2))
    model = fit_matrix(ds.feature_matrix(), ds.energies(), FitOptions(restarts=2))
    path = tmp_path / "m.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    assert {"schema_version", "stats", "hyperparams", "beta", "X", "y", "dual", "model_kind"} <= set(doc)
    back = load_model(path)
    assert back.hp == model.hp
    np.testing.assert_array_equal(back.dual, model.dual)
    np.testing.assert_array_equal(back.predict_matrix(ds.feature_matrix()), model.predict_matrix(ds.feature_matrix()))


def test_model_load_rejects_tampered_dual(tmp_path):
    ds = generate_corpus(CorpusSpec(resolutions=((640, 360), (1280, 720)), sequences_per_class=2))
    doc = fit_matrix(ds.feature_matrix(), ds.energies(), FitOptions(restarts=1)).to_dict()
    doc["dual"][0] += 1.0
    with pytest.raises(ModelFormatError):
        model_from_dict(doc)
    doc["model_kind"] = "svm"
    with pytest.raises(ModelFormatError):
        model_from_dict(doc)
