import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpquad import moments
from mpquad._linalg import NotPositiveDefiniteError
from mpquad.moments import MomentForecast, Var1Model


def _zero_phi_model():
    sigma = np.array([[0.02, 0.005, 0.0], [0.005, 0.03, 0.001], [0.0, 0.001, 0.01]])
    return Var1Model.with_leading_assets([0.01, 0.02, 0.0], np.zeros((3, 3)), sigma, 2)


def test_forecast_validation():
    with pytest.raises(ValueError):
        MomentForecast([0.1, 0.2], np.eye(3))
    with pytest.raises(ValueError):
        MomentForecast([0.1, 0.2], [[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        MomentForecast([0.1, 0.2], [[1.0, 2.0], [2.0, 1.0]])
    f = MomentForecast([0.1, 0.2], np.eye(2))
    assert np.array_equal(f.gross_mean, [1.1, 1.2])
    with pytest.raises(ValueError):
        f.mu[0] = 3.0


def test_model_validation():
    with pytest.raises(ValueError):
        Var1Model([0, 0], np.eye(2), np.eye(2), [[1, 1]])
    with pytest.raises(ValueError):
        Var1Model([0, 0], np.eye(2), np.eye(2), [[1, 0], [1, 0]])
    with pytest.raises(ValueError):
        Var1Model([0, 0], np.eye(2), -np.eye(2), [[1, 0]])
    with pytest.raises(ValueError):
        Var1Model([0, 0], np.eye(3), np.eye(2), [[1, 0]])


def test_conditional_moments_zero_phi():
    model = _zero_phi_model()
    f = moments.conditional_moments(model, [5.0, -3.0, 2.0])
    assert np.array_equal(f.mu, [0.01, 0.02])
    assert np.array_equal(f.sigma, model.sigma_eps[:2, :2])


def test_conditional_moments_preset_model():
    model = moments.bsc_model()
    f0 = moments.conditional_moments(model, [0.0, 0.0, 0.0])
    assert np.allclose(f0.mu, [0.0059, 0.0007], atol=1e-15)
    assert np.array_equal(f0.sigma, [[0.0018, 0.0002], [0.0002, 0.0006]])
    f1 = moments.conditional_moments(model, [0.0, 0.0, 1.0])
    assert np.allclose(f1.mu, [0.0119, 0.0042], atol=1e-15)


def test_conditional_moments_errors():
    model = moments.bsc_model()
    with pytest.raises(ValueError):
        moments.conditional_moments(model, [0.0, 0.0])
    degenerate = Var1Model.with_leading_assets([0, 0], np.zeros((2, 2)), np.zeros((2, 2)), 2)
    with pytest.raises(NotPositiveDefiniteError):
        moments.conditional_moments(degenerate, [0.0, 0.0])


@given(st.floats(-3, 3), st.integers(0, 1000))
def test_conditional_mean_is_affine(a, seed):
    rng = np.random.default_rng(seed)
    model = moments.international_model()
    y1, y2 = rng.standard_normal(5) * 0.05, rng.standard_normal(5) * 0.05
    mix = moments.conditional_moments(model, a * y1 + (1 - a) * y2).mu
    lin = a * moments.conditional_moments(model, y1).mu + (1 - a) * moments.conditional_moments(model, y2).mu
    assert np.allclose(mix, lin, atol=1e-14)


def test_simulate_zero_noise_model_is_constant():
    model = Var1Model.with_leading_assets([0.1, 0.2], np.zeros((2, 2)), np.zeros((2, 2)), 1)
    path = moments.simulate_path(model, [0.0, 0.0], 4, np.random.default_rng(0).standard_normal((4, 2)))
    assert np.array_equal(path.states[1:], np.tile([0.1, 0.2], (4, 1)))
    assert np.array_equal(path.returns[:, 0], [0.1] * 4)


def test_simulate_is_deterministic_and_selects_returns():
    model = moments.bsc_model()
    noise = np.random.default_rng(1).standard_normal((6, 3))
    a = moments.simulate_path(model, [0, 0, 0.1], 6, noise)
    b = moments.simulate_path(model, [0, 0, 0.1], 6, noise.copy())
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.returns, a.states[1:, :2])
    with pytest.raises(ValueError):
        moments.simulate_path(model, [0, 0, 0.1], 5, noise)


def test_simulate_states_batch_invariance():
    model = moments.international_model()
    noise = np.random.default_rng(2).standard_normal((50, 8, 5))
    batch = moments.simulate_states(model, np.zeros(5), noise)
    for i in (0, 17, 49):
        single = moments.simulate_states(model, np.zeros(5), noise[i])
        assert np.array_equal(batch[i], single)


def test_simulated_mean_matches_conditional_mean():
    model = moments.international_model()
    y0 = np.array([0.01, -0.02, 0.005, 0.0, 0.015])
    noise = np.random.default_rng(3).standard_normal((10_000, 12, 5))
    states = moments.simulate_states(model, y0, noise)
    x1 = states[:, 1, :]
    se = x1.std(axis=0, ddof=1) / np.sqrt(x1.shape[0])
    mu = moments.conditional_moments(model, y0).mu
    assert np.all(np.abs(x1.mean(axis=0) - mu) < 4 * se)


def test_psd_innovations_with_zero_eigenvalue():
    sigma = np.array([[1.0, 1.0], [1.0, 1.0]])
    model = Var1Model.with_leading_assets([0, 0], np.zeros((2, 2)), sigma, 2)
    path = moments.simulate_path(model, [0, 0], 3, np.random.default_rng(0).standard_normal((3, 2)))
    assert np.allclose(path.states[1:, 0], path.states[1:, 1])


def test_fit_noiseless_exact():
    nu = np.array([0.01, -0.02])
    phi = np.array([[0.5, 0.1], [-0.2, 0.3]])
    y = np.empty((12, 2))
    y[0] = [0.3, -0.7]
    for t in range(1, 12):
        y[t] = nu + phi @ y[t - 1]
    model = moments.fit_var1(y)
    assert np.allclose(model.nu, nu, atol=1e-8)
    assert np.allclose(model.phi, phi, atol=1e-8)
    assert np.abs(model.sigma_eps).max() < 1e-10


def test_fit_degenerate_and_short():
    with pytest.raises(np.linalg.LinAlgError):
        moments.fit_var1(np.ones((20, 2)))
    with pytest.raises(ValueError):
        moments.fit_var1(np.ones((3, 2)))


def test_fit_error_shrinks_with_length():
    model = moments.international_model()
    rng = np.random.default_rng(5)
    errs = []
    for n in (2_000, 50_000):
        path = moments.simulate_path(model, moments.stationary_mean(model), n, rng.standard_normal((n, 5)))
        fit = moments.fit_var1(path.states)
        errs.append(np.linalg.norm(fit.phi - model.phi))
    assert errs[1] < errs[0]


def test_fit_residual_divisor_is_n_minus_one():
    rng = np.random.default_rng(6)
    y = rng.standard_normal((30, 2))
    model = moments.fit_var1(y)
    z = np.hstack([np.ones((29, 1)), y[:-1]])
    coef = np.linalg.lstsq(z, y[1:], rcond=None)[0]
    resid = y[1:] - z @ coef
    assert np.allclose(model.sigma_eps, resid.T @ resid / 28, atol=1e-14)


def test_iid_forecaster():
    fs = moments.iid_forecaster(np.zeros(2), np.eye(2), 3)
    assert len(fs) == 3 and all(f is fs[0] for f in fs)
    per = [MomentForecast([0.1], [[1.0]]), MomentForecast([0.2], [[2.0]])]
    assert moments.iid_forecaster(per) == per
    with pytest.raises(NotPositiveDefiniteError):
        moments.iid_forecaster(np.zeros(2), np.diag([1.0, -1.0]), 2)


def test_certainty_equivalent_path():
    model = moments.bsc_model()
    fs = moments.certainty_equivalent_forecasts(model, [0, 0, 0.5], 3)
    z1 = -0.0028 + 0.9597 * 0.5
    assert np.allclose(fs[0].mu, [0.0059 + 0.006 * 0.5, 0.0007 + 0.0035 * 0.5])
    assert np.allclose(fs[1].mu, [0.0059 + 0.006 * z1, 0.0007 + 0.0035 * z1])


def test_stationary_mean():
    model = moments.bsc_model()
    z = -0.0028 / (1 - 0.9597)
    assert moments.stationary_mean(model)[2] == pytest.approx(z, rel=1e-12)
    unstable = Var1Model.with_leading_assets([0.0], [[1.0]], [[1.0]], 1)
    with pytest.raises(ValueError):
        moments.stationary_mean(unstable)


def test_read_series_csv(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1.5,2\n3,4e-2\n")
    names, data = moments.read_series_csv(p)
    assert names == ["a", "b"] and np.array_equal(data, [[1.5, 2.0], [3.0, 0.04]])
    p.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(ValueError, match="line 3"):
        moments.read_series_csv(p)
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValueError, match="line 3"):
        moments.read_series_csv(p)
    p.write_text("a,b\n1,\n")
    with pytest.raises(ValueError, match="missing"):
        moments.read_series_csv(p)
