import numpy as np
import pytest

from pour.errors import ConfigError, DegenerateFrameError, EmptyClassError, ZeroDirectionError
from pour.geometry import EtfFrame, gram_residual, make_etf, projector_from_direction
from pour.metrics import linear_cka
from pour.synthetic import FeatureMatrix, NcGenConfig, sample_nc_features, split_forget_retain
from pour.toy_model import (
    Layer,
    ToyModel,
    TrainConfig,
    backward_cross_entropy,
    encoder_features,
    forward_features,
    init_model,
    predict,
    train_supervised,
)
from pour.unlearn import (
    UnlearnConfig,
    baseline_gradient_ascent,
    baseline_random_label,
    forget_direction,
    pour_d,
    pour_p,
    run_unlearning,
    uniformity_check,
)

from conftest import identity_model


def nc_data(sigma, n=200, seed=0, c=4, d=3):
    return sample_nc_features(NcGenConfig(make_etf(c, d, 0), sigma, n, seed))


@pytest.fixture(scope="module")
def trained():
    """A toy model trained on C=4, sigma=0.1 blobs (shared across the baseline tests)."""
    data = sample_nc_features(NcGenConfig(make_etf(4, 8, 0), 0.1, 100, 1))
    model = train_supervised(init_model(8, 4, 64, seed=0), data,
                             TrainConfig(steps=1500, step_size=0.1, optimizer="momentum", weight_decay=5e-4))
    return model, data


class TestPourP:
    def test_zero_noise_forget_features_vanish(self, tetra):
        model = identity_model(tetra)
        d_f, _ = split_forget_retain(nc_data(0.0), 1)
        out, proj = pour_p(model, UnlearnConfig(1))
        assert np.all(forward_features(out, d_f.rows) == 0.0)
        assert np.all(predict(out, d_f.rows) != 1)
        np.testing.assert_array_equal(out.head, model.head)
        assert model.projection is None

    def test_retained_means_form_etf(self):
        frame = make_etf(5, 7, 3)
        model = identity_model(frame)
        out, _ = pour_p(model, UnlearnConfig(2))
        _, d_r = split_forget_retain(sample_nc_features(NcGenConfig(frame, 0.0, 3)), 2)
        z = forward_features(out, d_r.rows)
        means = np.array([z[d_r.labels == c].mean(axis=0) for c in (0, 1, 3, 4)])
        means /= np.linalg.norm(means, axis=1, keepdims=True)
        assert gram_residual(EtfFrame(means)) < 1e-12

    def test_empirical_mean_matches_head_column(self, tetra):
        model = identity_model(tetra)
        d_f, _ = split_forget_retain(nc_data(0.0), 0)
        _, a = pour_p(model, UnlearnConfig(0, direction_source="head_column"))
        _, b = pour_p(model, UnlearnConfig(0, direction_source="empirical_mean"), d_f)
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_empirical_mean_needs_forget_set(self, tetra):
        with pytest.raises(EmptyClassError):
            pour_p(identity_model(tetra), UnlearnConfig(0, direction_source="empirical_mean"))
        with pytest.raises(EmptyClassError):
            pour_p(identity_model(tetra), UnlearnConfig(0, direction_source="empirical_mean"), np.zeros((0, 3)))

    def test_zero_direction(self, tetra):
        model = identity_model(tetra)
        model.head[:, 0] = 0.0
        with pytest.raises(ZeroDirectionError):
            pour_p(model, UnlearnConfig(0))

    def test_two_classes_rejected(self):
        with pytest.raises(DegenerateFrameError):
            pour_p(identity_model(make_etf(2, 1)), UnlearnConfig(0))

    def test_forget_class_out_of_range(self, tetra):
        with pytest.raises(ConfigError):
            forget_direction(identity_model(tetra), UnlearnConfig(4))


class TestUniformity:
    def test_zero_noise_is_exact(self, tetra):
        out, _ = pour_p(identity_model(tetra), UnlearnConfig(3))
        d_f, _ = split_forget_retain(nc_data(0.0), 3)
        assert uniformity_check(out, d_f.rows) == (0.0, 0.0)

    def test_mean_logit_within_gaussian_tail(self):
        frame = make_etf(4, 6, 1)
        out, _ = pour_p(identity_model(frame, scale=1.0), UnlearnConfig(0))
        sigma, n = 0.05, 200
        d_f, _ = split_forget_retain(sample_nc_features(NcGenConfig(frame, sigma, n, 4)), 0)
        logits = forward_features(out, d_f.rows) @ out.head
        retained = np.delete(logits, 0, axis=1)
        assert np.all(np.abs(retained.mean(axis=0)) < 3 * sigma / np.sqrt(n))

    def test_deviation_grows_with_sigma(self):
        frame = make_etf(4, 6, 1)
        out, _ = pour_p(identity_model(frame), UnlearnConfig(0))
        devs = []
        for sigma in (0.01, 0.05, 0.1):
            d_f, _ = split_forget_retain(sample_nc_features(NcGenConfig(frame, sigma, 200, 2)), 0)
            devs.append(uniformity_check(out, d_f.rows)[1])
        assert devs[0] < devs[1] < devs[2]

    def test_requires_projection(self, tetra):
        with pytest.raises(ConfigError):
            uniformity_check(identity_model(tetra), np.zeros((1, 3)))


class TestPourD:
    def test_fixed_point_when_direction_orthogonal(self):
        # Features live in the first two coordinates; the forget column points along the third.
        embed = Layer(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), np.zeros(3))
        model = ToyModel([embed], np.array([[0.0, 1.0, -1.0], [0.0, 1.0, 1.0], [1.0, 0.0, 0.0]]))
        x = np.random.default_rng(0).standard_normal((20, 2))
        result = pour_d(model, UnlearnConfig(0, "pour_d", train=TrainConfig(steps=10)), x)
        assert max(result.losses) == 0.0
        for a, b in zip(result.model.parameters(), model.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_converges_and_aligns(self, trained):
        model, _ = trained
        data = sample_nc_features(NcGenConfig(make_etf(4, 8, 0), 0.05, 200, 9))
        d_f, _ = split_forget_retain(data, 0)
        result = pour_d(model, UnlearnConfig(0, "pour_d"), d_f)
        teacher = result.projector.apply(encoder_features(model, d_f.rows))
        assert result.losses[-1] < 1e-3
        assert linear_cka(forward_features(result.model, d_f.rows), teacher) > 0.99
        np.testing.assert_array_equal(result.model.head, model.head)
        assert result.model.projection is None and result.model.masked_class is None

    def test_plain_gd_is_monotone(self, trained):
        model, data = trained
        d_f, _ = split_forget_retain(data, 2)
        cfg = UnlearnConfig(2, "pour_d", train=TrainConfig(steps=200, step_size=0.01))
        losses = pour_d(model, cfg, d_f).losses
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_snapshots(self, trained):
        model, data = trained
        d_f, _ = split_forget_retain(data, 1)
        cfg = UnlearnConfig(1, "pour_d", train=TrainConfig(steps=30, step_size=0.01), snapshot_every=10)
        steps = [s for s, _ in pour_d(model, cfg, d_f).snapshots]
        assert steps == [0, 10, 20, 30]

    def test_empty_forget_set(self, trained):
        with pytest.raises(EmptyClassError):
            pour_d(trained[0], UnlearnConfig(0, "pour_d"), np.zeros((0, 8)))


def _acc_f(model, data, u):
    d_f, _ = split_forget_retain(data, u)
    return np.mean(predict(model, d_f.rows) == u)


class TestBaselines:
    def test_random_label_two_classes(self):
        data = FeatureMatrix(np.random.default_rng(0).standard_normal((20, 2)), np.repeat([0, 1], 10), 2)
        model = init_model(2, 2, 4, seed=0)
        d_f, _ = split_forget_retain(data, 0)
        cfg = UnlearnConfig(0, "random_label", train=TrainConfig(steps=1))
        run = baseline_random_label(model, d_f, cfg)
        # Only class 1 is retained: one step equals a CE step towards all-ones labels.
        expected = backward_cross_entropy(model, d_f.rows, np.ones(10, dtype=int))
        np.testing.assert_allclose(model.head - 0.01 * expected.head, run.model.head, atol=1e-15)

    def test_random_label_forgets(self, trained):
        model, data = trained
        d_f, _ = split_forget_retain(data, 0)
        cfg = UnlearnConfig(0, "random_label", train=TrainConfig(steps=300, step_size=0.05))
        after = baseline_random_label(model, d_f, cfg).model
        assert _acc_f(after, data, 0) < _acc_f(model, data, 0)

    def test_random_label_deterministic(self, trained):
        model, data = trained
        d_f, _ = split_forget_retain(data, 0)
        cfg = UnlearnConfig(0, "random_label", train=TrainConfig(steps=5, seed=3))
        a, b = baseline_random_label(model, d_f, cfg), baseline_random_label(model, d_f, cfg)
        np.testing.assert_array_equal(a.model.head, b.model.head)

    def test_gradient_ascent_forgets_with_rising_loss(self, trained):
        model, data = trained
        d_f, _ = split_forget_retain(data, 3)
        cfg = UnlearnConfig(3, "gradient_ascent", train=TrainConfig(steps=100, step_size=1.0, update_clip=1.0))
        run = baseline_gradient_ascent(model, d_f, cfg)
        assert _acc_f(run.model, data, 3) < _acc_f(model, data, 3)
        assert all(b >= a - 1e-12 for a, b in zip(run.losses, run.losses[1:]))

    def test_gradient_ascent_needs_clip(self, trained):
        cfg = UnlearnConfig(0, "gradient_ascent", train=TrainConfig(steps=1))
        with pytest.raises(ConfigError):
            baseline_gradient_ascent(trained[0], np.ones((2, 8)), cfg)
        with pytest.raises(ConfigError):
            TrainConfig(update_clip=0.0)


class TestDispatch:
    @pytest.mark.parametrize("variant", ["pour_p", "pour_d", "random_label", "gradient_ascent"])
    def test_every_variant(self, trained, variant):
        model, data = trained
        d_f, _ = split_forget_retain(data, 0)
        result = run_unlearning(model, UnlearnConfig(0, variant, train=TrainConfig(steps=3, update_clip=1.0)), d_f)
        assert result.model.class_count == 4
        assert (result.projector is None) == (variant not in ("pour_p", "pour_d"))

    def test_bad_variant(self):
        with pytest.raises(ConfigError):
            UnlearnConfig(0, "finetune")
        with pytest.raises(ConfigError):
            UnlearnConfig(0, direction_source="oracle")

    def test_projector_is_from_head_column(self, trained):
        model, _ = trained
        _, proj = pour_p(model, UnlearnConfig(2))
        np.testing.assert_array_equal(proj.matrix, projector_from_direction(model.head[:, 2]).matrix)
