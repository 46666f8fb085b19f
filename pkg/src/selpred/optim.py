"""Parameter update rules and the training loop.

SGD with momentum (halving learning-rate schedule) and Adam with bias
correction, both with coupled L2 weight decay. The training loop is
deterministic given (seed, config, dataset): shuffling and dropout masks are
drawn from a generator seeded by the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import zero_grads
from .layers import ConfigurationError, ContractError, TRAIN
from .losses import (
    DegenerateCoverageError,
    LossConfig,
    auxiliary_loss,
    selective_loss,
    task_loss,
    total_loss,
)

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "TrainingDivergedError",
    "SGD",
    "Adam",
    "lr_schedule",
    "train",
]


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""


@dataclass
class TrainConfig:
    optimizer: str = "adam"  # "adam" | "sgd"
    learning_rate: float = 5e-4
    epochs: int = 800
    batch_size: int = 256
    weight_decay: float = 1e-4
    momentum: float = 0.9            # sgd only
    lr_halving_period: int = 25      # sgd only; 0 disables
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    loss: LossConfig = field(default_factory=LossConfig)
    checkpoint_every: int = 0        # epochs; 0 disables
    checkpoint_path: str | None = None

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        self.loss.validate()


@dataclass
class TrainHistory:
    """One record per completed epoch (batch-size weighted epoch means)."""

    total_loss: list = field(default_factory=list)
    selective_loss: list = field(default_factory=list)
    auxiliary_loss: list = field(default_factory=list)
    soft_coverage: list = field(default_factory=list)
    hard_coverage: list = field(default_factory=list)
    selective_risk: list = field(default_factory=list)


class SGD:
    """Momentum SGD: v <- mu*v + grad; theta <- theta - lr*(v + wd*theta)."""

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            grad = p.grad if p.grad is not None else 0.0
            if np.shape(grad) not in ((), p.data.shape):
                raise ContractError("gradient shape does not match parameter")
            v *= self.momentum
            v += grad
            p.data -= self.lr * (v + self.weight_decay * p.data)


class Adam:
    """Adam with bias correction and coupled L2 weight decay."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            mhat = m / c1
            vhat = v / c2
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
            p.data -= self.lr * self.weight_decay * p.data


def lr_schedule(epoch, config):
    """Halving schedule for SGD; Adam runs at a constant rate."""
    if epoch < 0:
        raise ConfigurationError("epoch must be >= 0")
    if config.optimizer == "sgd" and config.lr_halving_period:
        return config.learning_rate * 0.5 ** (epoch // config.lr_halving_period)
    return config.learning_rate


def _batches(indices, batch_size, need_min2):
    """Contiguous slices of ``indices``; a trailing slice of one sample is
    merged into the previous batch when batchnorm needs batch >= 2."""
    out = [indices[i:i + batch_size] for i in range(0, len(indices), batch_size)]
    if need_min2 and len(out) > 1 and len(out[-1]) < 2:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def train(model, features, labels, config):
    """Minimize the combined objective over the given training split.

    For a selective model this is alpha*L(f,g) + (1-alpha)*Lh per batch; the
    baseline twin is trained on the plain mean task loss. Returns a
    ``TrainHistory``; the model is updated in place and its
    ``target_coverage`` is stamped from the loss config.
    """
    config.validate()
    features = np.asarray(features, dtype=np.float64)
    m = features.shape[0]
    if m == 0:
        raise ConfigurationError("training set is empty")
    has_bn = model.config.batchnorm
    if has_bn and config.batch_size < 2 and m > 1:
        raise ConfigurationError("batch size must be >= 2 with batchnorm")

    params = model.parameters()
    if config.optimizer == "adam":
        opt = Adam(params, config.learning_rate, config.adam_beta1,
                   config.adam_beta2, config.adam_eps, config.weight_decay)
    else:
        opt = SGD(params, config.learning_rate, config.momentum,
                  config.weight_decay)

    rng = np.random.default_rng(config.seed)
    lcfg = config.loss
    history = TrainHistory()

    for epoch in range(config.epochs):
        opt.lr = lr_schedule(epoch, config)
        order = rng.permutation(m) if config.shuffle else np.arange(m)
        sums = np.zeros(6)
        count = 0
        for b, idx in enumerate(_batches(order, config.batch_size, has_bn)):
            xb, yb = features[idx], labels[idx]
            f_out, g_out, h_out = model.forward(xb, mode=TRAIN, rng=rng)
            losses = task_loss(lcfg.task_loss, f_out, yb)
            if model.selective:
                try:
                    sel = selective_loss(losses, g_out, lcfg)
                except DegenerateCoverageError:
                    raise TrainingDivergedError(
                        f"selection head collapsed to zero at epoch {epoch}, "
                        f"batch {b}")
                if h_out is not None:
                    aux = auxiliary_loss(task_loss(lcfg.task_loss, h_out, yb))
                    loss = total_loss(sel, aux, lcfg.alpha)
                else:
                    aux = sel
                    loss = sel
                soft_cov = float(g_out.data.mean())
                hard_cov = float((g_out.data >= 0.5).mean())
                risk = float((losses.data * g_out.data).mean()
                             / max(soft_cov, 1e-300))
                row = (float(loss.data), float(sel.data), float(aux.data),
                       soft_cov, hard_cov, risk)
            else:
                loss = losses.mean()
                v = float(loss.data)
                row = (v, v, v, 1.0, 1.0, v)
            if not np.isfinite(float(loss.data)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b}")
            zero_grads(params)
            loss.backward()
            opt.step()
            n = len(idx)
            sums += n * np.asarray(row)
            count += n
        avg = sums / count
        history.total_loss.append(avg[0])
        history.selective_loss.append(avg[1])
        history.auxiliary_loss.append(avg[2])
        history.soft_coverage.append(avg[3])
        history.hard_coverage.append(avg[4])
        history.selective_risk.append(avg[5])

        if (config.checkpoint_every and config.checkpoint_path
                and (epoch + 1) % config.checkpoint_every == 0):
            from .persist import save_model
            save_model(model, None, config.checkpoint_path)

    model.target_coverage = lcfg.target_coverage if model.selective else 1.0
    return history
