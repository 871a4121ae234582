"""Domain-type validation, logit transform, stick breaking, and
initialization."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enetmix import model
from enetmix.errors import ParameterDomainError, ResponseDomainError, ShapeError
from enetmix.model import (
    Dataset,
    Hyperparameters,
    init_state,
    inverse_logit,
    logit_transform,
    standardize_features,
    stick_breaking,
    sticks_from_weights,
)
from enetmix.rngdist import RandomSource


def make_dataset(y, kind="probability"):
    y = np.asarray(y, dtype=np.float64)
    X = np.ones((y.shape[0], 2))
    return Dataset(X=X, y=y, class_id="c", response_kind=kind)


class TestDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(ParameterDomainError):
            Dataset(X=np.array([[np.nan, 1.0]]), y=np.array([0.0]))

    def test_rejects_row_mismatch(self):
        with pytest.raises(ShapeError):
            Dataset(X=np.ones((3, 2)), y=np.ones(2))

    def test_probability_outside_unit_interval_rejected(self):
        with pytest.raises(ResponseDomainError) as err:
            make_dataset([0.5, 1.5])
        assert err.value.row == 1

    def test_saturated_probability_accepted_at_load(self):
        data = make_dataset([0.0, 0.5, 1.0])
        assert not data.fit_ready

    def test_feature_names_length_checked(self):
        with pytest.raises(ShapeError):
            Dataset(X=np.ones((2, 2)), y=np.zeros(2), feature_names=("a",))


class TestHyperparameters:
    def test_defaults_valid(self):
        hyper = Hyperparameters()
        assert hyper.J == 20 and hyper.K == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"J": 1},
            {"K": 0},
            {"a": 0.0},
            {"burn_in": 10, "n_iter": 10},
            {"thin": 0},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ParameterDomainError):
            Hyperparameters(**kwargs)

    def test_draw_count(self):
        hyper = Hyperparameters(n_iter=10, burn_in=5, thin=2)
        assert hyper.n_draws == 2


class TestLogitTransform:
    def test_half_maps_to_zero(self):
        out = logit_transform(make_dataset([0.5]))
        assert out.y[0] == pytest.approx(0.0, abs=1e-15)
        assert out.response_kind == model.LOGIT_TRANSFORMED

    def test_point_nine_maps_to_log_nine(self):
        # ln 9 from a 30-digit reference computation
        out = logit_transform(make_dataset([0.9]))
        assert out.y[0] == pytest.approx(2.1972245773362196, abs=1e-12)

    def test_saturated_raises_by_default(self):
        with pytest.raises(ResponseDomainError) as err:
            logit_transform(make_dataset([0.2, 1.0]))
        assert err.value.row == 1

    def test_clip_saturated_warns_and_transforms(self):
        with pytest.warns(UserWarning, match="clipped 2"):
            out = logit_transform(make_dataset([0.0, 0.3, 1.0]), clip_saturated=True)
        assert out.y[0] == pytest.approx(np.log(1e-6 / (1 - 1e-6)))
        assert np.isfinite(out.y).all()

    def test_requires_probability_kind(self):
        with pytest.raises(ResponseDomainError):
            logit_transform(make_dataset([0.5], kind="raw_score"))

    def test_features_unchanged(self):
        data = make_dataset([0.25, 0.75])
        out = logit_transform(data)
        assert np.array_equal(out.X, data.X)

    @given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_identity(self, prob):
        out = logit_transform(make_dataset([prob]))
        assert inverse_logit(out.y)[0] == pytest.approx(prob, abs=1e-12)


class TestStickBreaking:
    def test_direct_arithmetic(self):
        pi = stick_breaking(np.array([0.5, 0.5]))
        assert np.allclose(pi, [0.5, 0.25, 0.25], atol=1e-15)

    def test_boundary_stick(self):
        pi = stick_breaking(np.array([1.0 - 1e-15]))
        assert pi.shape == (2,)
        assert np.all(pi >= 0.0)
        assert pi[0] == pytest.approx(1.0, abs=1e-14)

    def test_rejects_out_of_range(self):
        with pytest.raises(ParameterDomainError):
            stick_breaking(np.array([0.5, 1.0]))

    def test_sums_to_one_over_random_inputs(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            u = rng.uniform(1e-12, 1.0 - 1e-12, size=9)
            assert abs(stick_breaking(u).sum() - 1.0) < 1e-12

    def test_reconstruction_reproduces_weights(self):
        rng = np.random.default_rng(1)
        for _ in range(1_000):
            u = rng.uniform(1e-9, 1.0 - 1e-9, size=7)
            pi = stick_breaking(u)
            again = stick_breaking(sticks_from_weights(pi))
            assert np.max(np.abs(again - pi)) < 1e-10

    @given(
        st.lists(st.floats(min_value=1e-9, max_value=1 - 1e-9), min_size=1, max_size=12)
    )
    @settings(max_examples=200, deadline=None)
    def test_simplex_property(self, sticks):
        pi = stick_breaking(np.array(sticks))
        assert abs(pi.sum() - 1.0) < 1e-12
        assert np.all(pi >= 0.0)


class TestStandardization:
    def test_centers_and_scales(self):
        rng = np.random.default_rng(2)
        X = rng.normal(3.0, 2.0, size=(200, 3))
        data = Dataset(X=X, y=rng.normal(size=200), class_id="s")
        out, std = standardize_features(data)
        assert np.allclose(out.X.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(out.X.std(axis=0), 1.0, atol=1e-12)
        assert out.y.mean() == pytest.approx(0.0, abs=1e-12)
        assert std.response_offset == pytest.approx(data.y.mean())

    def test_constant_column_untouched_and_flagged(self):
        X = np.column_stack([np.full(10, 7.0), np.arange(10.0)])
        data = Dataset(X=X, y=np.zeros(10), class_id="s")
        out, std = standardize_features(data)
        assert std.constant_mask[0] and not std.constant_mask[1]
        assert np.array_equal(out.X[:, 0], X[:, 0])


class TestInitState:
    def _data(self, n=40, p=3, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, p))
        y = X @ np.array([1.0, -1.0, 0.5])[:p] + 0.1 * rng.normal(size=n)
        return Dataset(X=X, y=y, class_id="i")

    def test_state_satisfies_invariants(self):
        hyper = Hyperparameters(J=5, K=2, n_iter=10, burn_in=5)
        state = init_state(self._data(), hyper, RandomSource(3))
        state.validate()

    def test_small_sample_fallback_warns(self):
        hyper = Hyperparameters(J=10, K=2, n_iter=10, burn_in=5)
        data = self._data(n=5)
        with pytest.warns(UserWarning, match="one component"):
            state = init_state(data, hyper, RandomSource(3))
        assert np.all(state.z == 0)

    def test_deterministic_given_seed(self):
        hyper = Hyperparameters(J=5, K=2, n_iter=10, burn_in=5)
        data = self._data()
        a = init_state(data, hyper, RandomSource(11))
        b = init_state(data, hyper, RandomSource(11))
        for name in ("u", "pi", "beta", "sigma2", "tau", "z", "c", "w",
                     "lambda1", "lambda2"):
            assert np.array_equal(getattr(a, name), getattr(b, name)), name
        assert a.alpha == b.alpha

    def test_quantile_binning_groups_by_response(self):
        hyper = Hyperparameters(J=4, K=1, n_iter=10, burn_in=5)
        data = self._data(n=100)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            state = init_state(data, hyper, RandomSource(5))
        order = np.argsort(data.y)
        assert np.all(np.diff(state.z[order]) >= 0)
