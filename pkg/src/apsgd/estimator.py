"""Online projected-SGD state machine with iterate averaging.

One ``EstimatorState`` owns a single stream: call ``step`` once per
observation, in order.  Each step projects the gradient update back onto the
affine feasible set, folds the new iterate into the running average, and
advances the streaming curvature / gradient-outer-product averages that
inference consumes later.  States may be handed between threads between
steps; distinct states (for example the constrained and unconstrained sides
of a specification test) can advance fully in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import ApsgdError, DimensionError, DomainError, NumericalError
from .linalg import Constraint
from .models import LossModel

#: Steps between feasibility re-projections of the iterate.  Mathematically a
#: no-op; keeps floating-point drift off the affine set bounded on very long
#: streams.
REPROJECT_EVERY = 10_000


@dataclass(frozen=True)
class LearningRate:
    """Polynomial decay ``gamma * t**(-rho)``.

    ``rho`` must lie strictly inside (1/2, 1); that decay window is what the
    averaged iterate's root-T asymptotics require.
    """

    gamma: float = 1.0
    rho: float = 0.505

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if not 0.5 < self.rho < 1.0:
            raise DomainError(f"rho must lie strictly in (1/2, 1), got {self.rho}")

    def at(self, t: int) -> float:
        """Step size used for the t-th update (t starts at 1)."""
        return self.gamma * float(t) ** -self.rho


class EstimatorState:
    """Iterate, running average, and moment recursions for one stream.

    Parameters
    ----------
    model : LossModel
        Per-observation loss with gradient and Hessian.
    constraint : Constraint
        Feasible set; use ``Constraint.unconstrained(p)`` for plain averaged
        SGD.
    schedule : LearningRate, optional
        Defaults to ``gamma=1, rho=0.505``.
    theta0 : array-like, optional
        Starting point; it is projected onto the feasible set.  Defaults to
        the constraint's minimum-norm feasible point, so feasibility holds
        from step zero.

    Attributes
    ----------
    t : int
        Number of observations consumed.
    theta : ndarray
        Current iterate (always feasible).
    theta_bar : ndarray
        Running average of the iterates; this is the estimate.
    g_hat, s_hat : ndarray
        Streaming averages of per-observation Hessians and of gradient outer
        products, both evaluated at the running average.
    """

    def __init__(
        self,
        model: LossModel,
        constraint: Constraint,
        schedule: LearningRate | None = None,
        theta0=None,
    ):
        p = model.param_dim
        if constraint.p != p:
            raise DimensionError(
                f"constraint is on R^{constraint.p} but model has {p} parameters"
            )
        self.model = model
        self.constraint = constraint
        self.schedule = schedule if schedule is not None else LearningRate()
        if theta0 is None:
            theta = constraint.c.copy()
        else:
            theta = np.asarray(theta0, dtype=float)
            if theta.shape != (p,):
                raise DimensionError(
                    f"theta0 has shape {theta.shape}, expected ({p},)"
                )
            theta = constraint.project(theta)
        self.t = 0
        self.theta = theta
        self.theta_bar = theta.copy()
        self.g_hat = np.zeros((p, p))
        self.s_hat = np.zeros((p, p))

    def step(self, z) -> "EstimatorState":
        """Consume one observation and return the (mutated) state.

        Order of operations: projected iterate update, then the average,
        then the moment recursions evaluated at the new average.
        """
        z = np.asarray(z, dtype=float)
        t_next = self.t + 1
        grad = self.model.gradient(self.theta, z)
        if not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"non-finite gradient at step {t_next} (theta={self.theta.tolist()})"
            )
        gamma_t = self.schedule.at(t_next)
        self.theta = self.constraint.project(self.theta - gamma_t * grad)
        if t_next % REPROJECT_EVERY == 0:
            self.theta = self.constraint.project(self.theta)

        w_old = (t_next - 1.0) / t_next
        w_new = 1.0 / t_next
        self.theta_bar = w_old * self.theta_bar + w_new * self.theta

        hess = self.model.hessian(self.theta_bar, z)
        grad_bar = self.model.gradient(self.theta_bar, z)
        if not (np.all(np.isfinite(hess)) and np.all(np.isfinite(grad_bar))):
            raise NumericalError(
                f"non-finite moment update at step {t_next} "
                f"(theta={self.theta.tolist()})"
            )
        self.g_hat = w_old * self.g_hat + w_new * hess
        self.s_hat = w_old * self.s_hat + w_new * np.outer(grad_bar, grad_bar)
        self.t = t_next
        return self

    def run_stream(self, observations) -> "EstimatorState":
        """Fold ``step`` over an iterable of observations, in order.

        Errors raised by ``step`` are re-raised with the offending
        observation's position prepended.
        """
        for idx, z in enumerate(observations):
            try:
                self.step(z)
            except ApsgdError as exc:
                raise type(exc)(f"observation {idx}: {exc}") from exc
        return self

    # -- snapshot serialization ------------------------------------------------

    def to_record(self) -> dict:
        """Self-describing snapshot of everything except the model.

        The model holds callables and cannot be serialized; supply it again
        to ``from_record``.  Floats survive the JSON round trip exactly.
        """
        con = self.constraint
        return {
            "t": self.t,
            "theta": self.theta.tolist(),
            "theta_bar": self.theta_bar.tolist(),
            "g_hat": self.g_hat.tolist(),
            "s_hat": self.s_hat.tolist(),
            "constraint": {
                "B": con.B.tolist(),
                "b": con.b.tolist(),
                "P": con.P.tolist(),
                "c": con.c.tolist(),
                "d": con.d,
            },
            "schedule": {"gamma": self.schedule.gamma, "rho": self.schedule.rho},
        }

    @classmethod
    def from_record(cls, record: dict, model: LossModel) -> "EstimatorState":
        """Rebuild a snapshot produced by ``to_record``."""
        con_rec = record["constraint"]
        p = model.param_dim
        constraint = Constraint(
            B=np.asarray(con_rec["B"], dtype=float).reshape(-1, p),
            b=np.asarray(con_rec["b"], dtype=float).reshape(-1),
            P=np.asarray(con_rec["P"], dtype=float),
            c=np.asarray(con_rec["c"], dtype=float),
            d=int(con_rec["d"]),
        )
        schedule = LearningRate(**record["schedule"])
        return cls._restore(
            model,
            constraint,
            schedule,
            t=int(record["t"]),
            theta=np.asarray(record["theta"], dtype=float),
            theta_bar=np.asarray(record["theta_bar"], dtype=float),
            g_hat=np.asarray(record["g_hat"], dtype=float),
            s_hat=np.asarray(record["s_hat"], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text: str, model: LossModel) -> "EstimatorState":
        return cls.from_record(json.loads(text), model)

    @classmethod
    def _restore(
        cls, model, constraint, schedule, t, theta, theta_bar, g_hat, s_hat
    ) -> "EstimatorState":
        """Assemble a state from already-computed parts (no projection)."""
        p = model.param_dim
        for name, arr, shape in (
            ("theta", theta, (p,)),
            ("theta_bar", theta_bar, (p,)),
            ("g_hat", g_hat, (p, p)),
            ("s_hat", s_hat, (p, p)),
        ):
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
        state = cls.__new__(cls)
        state.model = model
        state.constraint = constraint
        state.schedule = schedule
        state.t = t
        state.theta = theta
        state.theta_bar = theta_bar
        state.g_hat = g_hat
        state.s_hat = s_hat
        return state
