"""Loss models against hand derivations and finite-difference oracles."""

import numpy as np
import pytest

from apsgd import (
    CustomModel,
    DataError,
    DimensionError,
    LinearModel,
    LogisticModel,
    MeanModel,
)


def fd_gradient(model, theta, z):
    """Central finite differences of the loss, step 1e-6 * max(1, |theta_i|)."""
    out = np.empty_like(theta)
    for i in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[i]))
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (model.loss(up, z) - model.loss(dn, z)) / (2.0 * h)
    return out


def fd_hessian(model, theta, z):
    """Central finite differences of the gradient."""
    p = theta.size
    out = np.empty((p, p))
    for i in range(p):
        h = 1e-6 * max(1.0, abs(theta[i]))
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        out[:, i] = (model.gradient(up, z) - model.gradient(dn, z)) / (2.0 * h)
    return 0.5 * (out + out.T)


def random_observation(model, rng):
    if isinstance(model, MeanModel):
        return rng.standard_normal(model.obs_dim)
    x = rng.standard_normal(model.param_dim)
    if isinstance(model, LogisticModel):
        y = 1.0 if rng.random() < 0.5 else -1.0
        return np.concatenate(([y], x))
    return np.concatenate(([rng.standard_normal()], x))


class TestMeanModel:
    def test_gradient_vanishes_at_observation(self):
        m = MeanModel(3)
        z = np.array([0.3, -1.0, 2.0])
        np.testing.assert_allclose(m.gradient(z, z), np.zeros(3))

    def test_hand_derivative(self):
        m = MeanModel(2)
        np.testing.assert_allclose(m.gradient([0.0, 0.0], [1.0, 2.0]), [-1.0, -2.0])
        np.testing.assert_allclose(m.hessian([0.0, 0.0], [1.0, 2.0]), np.eye(2))

    def test_hessian_constant(self):
        m = MeanModel(2)
        rng = np.random.default_rng(0)
        for _ in range(5):
            theta, z = rng.standard_normal(2), rng.standard_normal(2)
            np.testing.assert_array_equal(m.hessian(theta, z), np.eye(2))


class TestLinearModel:
    def test_zero_residual(self):
        m = LinearModel(2)
        theta = np.array([1.0, -2.0])
        x = np.array([0.5, 3.0])
        z = np.concatenate(([x @ theta], x))
        np.testing.assert_allclose(m.gradient(theta, z), np.zeros(2), atol=1e-14)

    def test_hand_derivative(self):
        m = LinearModel(2)
        z = np.array([1.0, 1.0, 1.0])  # y=1, x=(1,1)
        np.testing.assert_allclose(m.gradient([0.0, 0.0], z), [-1.0, -1.0])
        np.testing.assert_allclose(m.hessian([0.0, 0.0], z), np.ones((2, 2)))

    def test_finite_difference_gradient(self):
        m = LinearModel(3)
        rng = np.random.default_rng(5)
        for _ in range(20):
            theta = rng.standard_normal(3)
            z = random_observation(m, rng)
            g = m.gradient(theta, z)
            np.testing.assert_allclose(
                fd_gradient(m, theta, z), g, atol=1e-6 * max(1.0, np.linalg.norm(g))
            )


class TestLogisticModel:
    def test_gradient_at_zero_margin(self):
        # sigmoid(0) = 1/2, so gradient is -x/2 and hessian xx'/4
        m = LogisticModel(2)
        x = np.array([0.7, -1.2])
        z = np.concatenate(([1.0], x))
        np.testing.assert_allclose(m.gradient(np.zeros(2), z), -x / 2.0)
        np.testing.assert_allclose(m.hessian(np.zeros(2), z), np.outer(x, x) / 4.0)

    def test_saturation_is_finite(self):
        """Margins of +-700 stay finite: loss, gradient, and hessian."""
        m = LogisticModel(1)
        for margin in (700.0, -700.0):
            z = np.array([1.0, 1.0])
            theta = np.array([margin])
            assert np.isfinite(m.loss(theta, z))
            g = m.gradient(theta, z)
            assert np.all(np.isfinite(g))
            assert np.linalg.norm(g) <= np.linalg.norm(z[1:]) + 1e-12
            assert np.all(np.isfinite(m.hessian(theta, z)))
        # correctly classified saturation: gradient goes to zero
        z = np.array([1.0, 1.0])
        assert np.linalg.norm(m.gradient(np.array([700.0]), z)) <= 1e-200

    def test_label_validation(self):
        m = LogisticModel(2)
        with pytest.raises(DataError):
            m.gradient(np.zeros(2), np.array([0.0, 1.0, 2.0]))

    def test_finite_difference_gradient_and_hessian(self):
        m = LogisticModel(3)
        rng = np.random.default_rng(8)
        for _ in range(20):
            theta = rng.standard_normal(3)
            z = random_observation(m, rng)
            g = m.gradient(theta, z)
            h = m.hessian(theta, z)
            np.testing.assert_allclose(
                fd_gradient(m, theta, z), g, atol=1e-6 * max(1.0, np.linalg.norm(g))
            )
            np.testing.assert_allclose(
                fd_hessian(m, theta, z), h, atol=1e-4 * max(1.0, np.linalg.norm(h, 2))
            )


class TestCustomModel:
    def test_wrapping_is_transparent(self):
        inner = MeanModel(2)
        wrapped = CustomModel(2, 2, inner.loss, inner.gradient, inner.hessian)
        rng = np.random.default_rng(1)
        for _ in range(5):
            theta, z = rng.standard_normal(2), rng.standard_normal(2)
            assert wrapped.loss(theta, z) == inner.loss(theta, z)
            np.testing.assert_array_equal(wrapped.gradient(theta, z), inner.gradient(theta, z))
            np.testing.assert_array_equal(wrapped.hessian(theta, z), inner.hessian(theta, z))

    def test_gaussian_likelihood_matches_scaled_linear(self):
        """Gaussian log-likelihood with known variance is the linear loss / sigma^2."""
        sigma2 = 4.0
        lin = LinearModel(2)

        def loss(theta, z):
            return lin.loss(theta, z) / sigma2

        def gradient(theta, z):
            return lin.gradient(theta, z) / sigma2

        def hessian(theta, z):
            return lin.hessian(theta, z) / sigma2

        model = CustomModel(2, 3, loss, gradient, hessian)
        rng = np.random.default_rng(2)
        theta = rng.standard_normal(2)
        z = random_observation(lin, rng)
        np.testing.assert_allclose(
            model.gradient(theta, z) * sigma2, lin.gradient(theta, z), atol=1e-14
        )

    def test_poisson_regression_finite_differences(self):
        """Count-model negative log-likelihood: exp(x.theta) - y x.theta."""

        def loss(theta, z):
            y, x = z[0], z[1:]
            return float(np.exp(x @ theta) - y * (x @ theta))

        def gradient(theta, z):
            y, x = z[0], z[1:]
            return (np.exp(x @ theta) - y) * x

        def hessian(theta, z):
            x = z[1:]
            return np.exp(x @ theta) * np.outer(x, x)

        model = CustomModel(2, 3, loss, gradient, hessian)
        rng = np.random.default_rng(3)
        for _ in range(20):
            theta = 0.5 * rng.standard_normal(2)
            x = rng.standard_normal(2)
            y = float(rng.poisson(np.exp(np.clip(x @ theta, -5, 5))))
            z = np.concatenate(([y], x))
            g = model.gradient(theta, z)
            np.testing.assert_allclose(
                fd_gradient(model, theta, z), g, atol=1e-6 * max(1.0, np.linalg.norm(g))
            )

    def test_dimension_mismatch_surfaces_at_first_call(self):
        bad = CustomModel(
            2, 2, lambda t, z: 0.0, lambda t, z: np.zeros(3), lambda t, z: np.eye(2)
        )
        with pytest.raises(DimensionError):
            bad.gradient(np.zeros(2), np.zeros(2))


class TestGradientOracleSweep:
    """Finite-difference agreement at 100 random points per built-in family."""

    @pytest.mark.parametrize("factory", [MeanModel, LinearModel, LogisticModel])
    def test_gradient_and_hessian(self, factory):
        model = factory(4)
        rng = np.random.default_rng(42)
        for _ in range(100):
            theta = rng.standard_normal(4)
            z = random_observation(model, rng)
            g = model.gradient(theta, z)
            h = model.hessian(theta, z)
            assert np.linalg.norm(fd_gradient(model, theta, z) - g) <= 1e-5 * max(
                1.0, np.linalg.norm(g)
            )
            assert np.linalg.norm(fd_hessian(model, theta, z) - h, 2) <= 1e-4 * max(
                1.0, np.linalg.norm(h, 2)
            )
            np.testing.assert_array_equal(h, h.T)
