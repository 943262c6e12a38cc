"""Per-observation loss models: loss value, gradient, and Hessian.

A model knows its parameter dimension ``param_dim`` and the layout of one
observation (``obs_dim``).  Regression observations are the concatenation
``(y, x)`` with the response first.  Models are immutable after construction
and their evaluations are pure, so instances are safe to share across
threads.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.special import expit

from .exceptions import DataError, DimensionError


class LossModel:
    """Interface: a twice-differentiable loss of (parameters, observation).

    Subclasses provide ``loss``, ``gradient`` and ``hessian``, each taking a
    parameter vector of length ``param_dim`` and an observation vector of
    length ``obs_dim``.  The Hessian must be symmetric.
    """

    param_dim: int
    obs_dim: int
    family: str = "custom"

    def loss(self, theta: np.ndarray, z: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, theta: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, theta: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, theta, z) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        z = np.asarray(z, dtype=float)
        if theta.shape != (self.param_dim,):
            raise DimensionError(
                f"theta has shape {theta.shape}, expected ({self.param_dim},)"
            )
        if z.shape != (self.obs_dim,):
            raise DimensionError(
                f"observation has shape {z.shape}, expected ({self.obs_dim},)"
            )
        return theta, z


def _positive_dim(p: int) -> int:
    if int(p) != p or p < 1:
        raise DimensionError(f"parameter dimension must be a positive integer, got {p}")
    return int(p)


class MeanModel(LossModel):
    """Squared-error location loss ``0.5 * ||z - theta||^2``."""

    family = "mean"

    def __init__(self, p: int):
        self.param_dim = _positive_dim(p)
        self.obs_dim = self.param_dim
        self._eye = np.eye(self.param_dim)
        self._eye.setflags(write=False)

    def loss(self, theta, z) -> float:
        theta, z = self._check(theta, z)
        diff = z - theta
        return 0.5 * float(diff @ diff)

    def gradient(self, theta, z) -> np.ndarray:
        theta, z = self._check(theta, z)
        return theta - z

    def hessian(self, theta, z) -> np.ndarray:
        self._check(theta, z)
        return self._eye


class LinearModel(LossModel):
    """Least-squares regression loss ``0.5 * (y - x @ theta)^2``.

    Observations are ``(y, x_1, ..., x_p)``.
    """

    family = "linear"

    def __init__(self, p: int):
        self.param_dim = _positive_dim(p)
        self.obs_dim = self.param_dim + 1

    def loss(self, theta, z) -> float:
        theta, z = self._check(theta, z)
        resid = z[0] - z[1:] @ theta
        return 0.5 * float(resid * resid)

    def gradient(self, theta, z) -> np.ndarray:
        theta, z = self._check(theta, z)
        x = z[1:]
        return -(z[0] - x @ theta) * x

    def hessian(self, theta, z) -> np.ndarray:
        theta, z = self._check(theta, z)
        x = z[1:]
        return np.outer(x, x)


class LogisticModel(LossModel):
    """Logistic loss ``log(1 + exp(-y * x @ theta))`` with labels in {-1, +1}.

    All three evaluations go through ``log1p``/``expit`` style formulations,
    so they stay finite for margins as extreme as ``|x @ theta| = 700``: the
    loss is computed as ``logaddexp(0, -u)`` and the gradient weight as
    ``expit(-u)``, which saturate instead of overflowing.
    """

    family = "logistic"

    def __init__(self, p: int):
        self.param_dim = _positive_dim(p)
        self.obs_dim = self.param_dim + 1

    def _split(self, z) -> tuple[float, np.ndarray]:
        y = z[0]
        if y != 1.0 and y != -1.0:
            raise DataError(f"logistic label must be -1 or +1, got {y}")
        return y, z[1:]

    def loss(self, theta, z) -> float:
        theta, z = self._check(theta, z)
        y, x = self._split(z)
        u = y * (x @ theta)
        return float(np.logaddexp(0.0, -u))

    def gradient(self, theta, z) -> np.ndarray:
        theta, z = self._check(theta, z)
        y, x = self._split(z)
        u = y * (x @ theta)
        return (-y * expit(-u)) * x

    def hessian(self, theta, z) -> np.ndarray:
        theta, z = self._check(theta, z)
        _, x = self._split(z)
        u = z[0] * (x @ theta)
        s = expit(-u)
        return (s * (1.0 - s)) * np.outer(x, x)


class CustomModel(LossModel):
    """User-supplied loss/gradient/Hessian callables behind the same interface.

    The Hessian callable is required even though the iteration itself only
    consumes gradients: the streaming curvature average needs it, and making
    it mandatory keeps inference available for every model.  Output shapes
    are validated on every evaluation, so a mismatch surfaces at the first
    call rather than deep inside the estimator.
    """

    def __init__(
        self,
        p: int,
        obs_dim: int,
        loss_fn: Callable[[np.ndarray, np.ndarray], float],
        gradient_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        hessian_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    ):
        self.param_dim = _positive_dim(p)
        self.obs_dim = _positive_dim(obs_dim)
        self._loss_fn = loss_fn
        self._gradient_fn = gradient_fn
        self._hessian_fn = hessian_fn

    def loss(self, theta, z) -> float:
        theta, z = self._check(theta, z)
        return float(self._loss_fn(theta, z))

    def gradient(self, theta, z) -> np.ndarray:
        theta, z = self._check(theta, z)
        g = np.asarray(self._gradient_fn(theta, z), dtype=float)
        if g.shape != (self.param_dim,):
            raise DimensionError(
                f"gradient callable returned shape {g.shape}, "
                f"expected ({self.param_dim},)"
            )
        return g

    def hessian(self, theta, z) -> np.ndarray:
        theta, z = self._check(theta, z)
        h = np.asarray(self._hessian_fn(theta, z), dtype=float)
        if h.shape != (self.param_dim, self.param_dim):
            raise DimensionError(
                f"hessian callable returned shape {h.shape}, "
                f"expected ({self.param_dim}, {self.param_dim})"
            )
        return h


#: Model families constructible from a name and a parameter dimension.
MODEL_FAMILIES: dict[str, type[LossModel]] = {
    "mean": MeanModel,
    "linear": LinearModel,
    "logistic": LogisticModel,
}
