"""Coverage-penalized selective training objective.

The selective loss is the empirical selective risk plus a quadratic penalty
on the coverage shortfall,

    L(f, g) = r_hat + lambda * psi(c - phi_hat),    psi(a) = max(0, a)^2,

where phi_hat is the mean of the soft selection values and r_hat the
coverage-normalized weighted mean task loss. The auxiliary head is trained
with the plain (full-coverage) mean loss, and the two are mixed by a convex
combination with weight alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import DomainError, Tensor, clamp_min, log, max0, square
from .layers import ConfigurationError, ContractError

__all__ = [
    "CROSS_ENTROPY",
    "SQUARED",
    "LossConfig",
    "DegenerateCoverageError",
    "task_loss",
    "psi",
    "empirical_coverage",
    "empirical_selective_risk",
    "selective_loss",
    "auxiliary_loss",
    "total_loss",
]

CROSS_ENTROPY = "cross-entropy"
SQUARED = "squared"

# Floor on predicted class probability inside the log, to keep cross-entropy
# finite on saturated softmax outputs.
_CE_CLAMP = 1e-12


class DegenerateCoverageError(ValueError):
    """All selection values are zero: the selective risk is undefined."""


@dataclass
class LossConfig:
    target_coverage: float = 0.8
    penalty_weight: float = 32.0
    alpha: float = 0.5
    task_loss: str = SQUARED

    def validate(self):
        if not 0.0 < self.target_coverage <= 1.0:
            raise ConfigurationError(
                f"target coverage must be in (0,1], got {self.target_coverage}")
        if self.penalty_weight < 0.0:
            raise ConfigurationError("penalty weight must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in [0,1], got {self.alpha}")
        if self.task_loss not in (CROSS_ENTROPY, SQUARED):
            raise ConfigurationError(f"unknown task loss {self.task_loss!r}")

    def to_dict(self):
        return {
            "target_coverage": self.target_coverage,
            "penalty_weight": self.penalty_weight,
            "alpha": self.alpha,
            "task_loss": self.task_loss,
        }

    @staticmethod
    def from_dict(d):
        return LossConfig(**d)


class DataError(ValueError):
    """Labels inconsistent with the prediction shape."""


def task_loss(kind, prediction, labels):
    """Per-sample loss vector for the given task loss.

    Cross-entropy expects row-stochastic predictions and integer class
    labels; squared loss expects a real vector prediction and real targets.
    """
    if kind == CROSS_ENTROPY:
        labels = np.asarray(labels)
        m, k = prediction.data.shape
        if labels.shape != (m,):
            raise DataError(f"expected {m} labels, got shape {labels.shape}")
        idx = labels.astype(np.int64)
        if np.any((idx < 0) | (idx >= k)):
            raise DataError(f"class label out of range for {k} classes")
        onehot = np.zeros((m, k))
        onehot[np.arange(m), idx] = 1.0
        true_prob = (prediction * Tensor(onehot)).sum(axis=1)
        return -log(clamp_min(true_prob, _CE_CLAMP))
    if kind == SQUARED:
        pred = prediction.reshape(-1)
        y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if pred.data.shape != y.shape:
            raise DataError(
                f"prediction shape {pred.data.shape} != target shape {y.shape}")
        d = pred - Tensor(y)
        return d * d
    raise ConfigurationError(f"unknown task loss {kind!r}")


def psi(a):
    """Quadratic penalty max(0, a)^2; derivative 2*max(0, a)."""
    if not isinstance(a, Tensor):
        a = Tensor(a)
    return square(max0(a))


def empirical_coverage(g_values):
    """Mean of the (soft) selection values."""
    if g_values.data.size == 0:
        raise ContractError("empirical coverage of an empty batch is undefined")
    return g_values.mean()


def empirical_selective_risk(losses, g_values):
    """Coverage-normalized weighted mean loss, differentiable in both inputs."""
    if losses.data.shape != g_values.data.shape:
        raise ContractError(
            f"losses {losses.data.shape} and g {g_values.data.shape} must match")
    phi = empirical_coverage(g_values)
    if phi.data == 0.0:
        raise DegenerateCoverageError(
            "all selection values are zero; selective risk is undefined")
    return (losses * g_values).mean() / phi


def selective_loss(losses, g_values, config):
    """r_hat + lambda * psi(c - phi_hat) over one batch."""
    config.validate()
    risk = empirical_selective_risk(losses, g_values)
    shortfall = config.target_coverage - empirical_coverage(g_values)
    return risk + config.penalty_weight * psi(shortfall)


def auxiliary_loss(h_losses):
    """Plain mean of the auxiliary head's per-sample losses (full coverage)."""
    if h_losses.data.size == 0:
        raise ContractError("auxiliary loss of an empty batch is undefined")
    return h_losses.mean()


def total_loss(selective, auxiliary, alpha):
    """Convex combination alpha * selective + (1 - alpha) * auxiliary."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must be in [0,1], got {alpha}")
    return alpha * selective + (1.0 - alpha) * auxiliary
