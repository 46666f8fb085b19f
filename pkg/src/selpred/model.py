"""Three-headed selective network and its single-headed full-coverage twin.

A shared main body feeds a prediction head f, a selection head g (single
sigmoid unit) and an auxiliary head h that mirrors f and is used only during
training. The baseline variant keeps the body and f only and is what the
softmax-response and MC-dropout baselines are built on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import ShapeError, Tensor, no_grad, relu, sigmoid
from .layers import (
    EVAL,
    TRAIN,
    BatchNormLayer,
    ConfigurationError,
    DenseLayer,
    DropoutLayer,
    softmax,
)

__all__ = ["ArchitectureConfig", "SelectiveNet", "build_model", "build_baseline"]

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass
class ArchitectureConfig:
    """Widths and switches defining the network.

    ``dropout_rate=None`` means no dropout layers at all; a numeric rate
    (including 0.0) places a dropout layer after every hidden activation,
    which the MC-dropout baseline requires.
    """

    input_dim: int
    body_widths: list = field(default_factory=lambda: [64])
    task: str = REGRESSION
    n_classes: int = 0
    selection_hidden: int = 16
    batchnorm: bool = True
    dropout_rate: float | None = None
    auxiliary_head: bool = True

    def output_dim(self):
        return self.n_classes if self.task == CLASSIFICATION else 1

    def validate(self):
        if self.input_dim < 1:
            raise ConfigurationError("input_dim must be positive")
        if not self.body_widths or any(w < 1 for w in self.body_widths):
            raise ConfigurationError(f"invalid body widths {self.body_widths}")
        if self.selection_hidden < 1:
            raise ConfigurationError("selection_hidden must be positive")
        if self.task == CLASSIFICATION:
            if self.n_classes < 2:
                raise ConfigurationError("classification needs n_classes >= 2")
        elif self.task != REGRESSION:
            raise ConfigurationError(f"unknown task {self.task!r}")

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "body_widths": list(self.body_widths),
            "task": self.task,
            "n_classes": self.n_classes,
            "selection_hidden": self.selection_hidden,
            "batchnorm": self.batchnorm,
            "dropout_rate": self.dropout_rate,
            "auxiliary_head": self.auxiliary_head,
        }

    @staticmethod
    def from_dict(d):
        return ArchitectureConfig(**d)


class _Block:
    """One hidden block: dense -> [batchnorm] -> relu -> [dropout]."""

    def __init__(self, in_dim, out_dim, config, rng):
        self.dense = DenseLayer(in_dim, out_dim, rng, init="he")
        self.bn = BatchNormLayer(out_dim) if config.batchnorm else None
        self.dropout = (DropoutLayer(config.dropout_rate)
                        if config.dropout_rate is not None else None)

    def __call__(self, x, mode, rng=None):
        x = self.dense(x)
        if self.bn is not None:
            x = self.bn(x, TRAIN if mode == TRAIN else EVAL)
        x = relu(x)
        if self.dropout is not None:
            x = self.dropout(x, mode, rng)
        return x

    def parameters(self):
        ps = self.dense.parameters()
        if self.bn is not None:
            ps += self.bn.parameters()
        return ps

    def running_stats(self):
        return self.bn.running_stats() if self.bn is not None else []


class SelectiveNet:
    """Selective model (f, g) with auxiliary head h on a shared body.

    ``selective`` is False for the baseline twin, whose forward returns
    ``(f_out, None, None)``.
    """

    def __init__(self, config, seed, selective=True):
        config.validate()
        self.config = config
        self.seed = seed
        self.selective = selective
        self.target_coverage = None  # set by training
        rng = np.random.default_rng(seed)

        self.body = []
        width = config.input_dim
        for w in config.body_widths:
            self.body.append(_Block(width, w, config, rng))
            width = w
        self.rep_dim = width

        out_dim = config.output_dim()
        f_init = "glorot"
        self.f_head = DenseLayer(width, out_dim, rng, init=f_init)

        if selective:
            self.g_hidden = DenseLayer(width, config.selection_hidden, rng, init="he")
            self.g_bn = (BatchNormLayer(config.selection_hidden)
                         if config.batchnorm else None)
            self.g_out = DenseLayer(config.selection_hidden, 1, rng, init="glorot")
            self.h_head = (DenseLayer(width, out_dim, rng, init=f_init)
                           if config.auxiliary_head else None)
        else:
            self.g_hidden = self.g_bn = self.g_out = self.h_head = None

    # -- forward --------------------------------------------------------------

    def forward(self, x, mode=EVAL, rng=None):
        """Shared body pass feeding all heads.

        Returns ``(f_out, g_out, h_out)``; g_out is a [0,1] vector of length
        batch, h_out shares f's output form. For the baseline twin, g_out and
        h_out are None.
        """
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.data.ndim != 2 or x.data.shape[1] != self.config.input_dim:
            raise ShapeError(
                f"expected input (batch, {self.config.input_dim}), got {x.data.shape}")
        rep = x
        for block in self.body:
            rep = block(rep, mode, rng)

        f_out = self._head_output(self.f_head, rep)
        if not self.selective:
            return f_out, None, None

        g = self.g_hidden(rep)
        if self.g_bn is not None:
            g = self.g_bn(g, TRAIN if mode == TRAIN else EVAL)
        g = relu(g)
        g_out = sigmoid(self.g_out(g)).reshape(-1)
        h_out = self._head_output(self.h_head, rep) if self.h_head else None
        return f_out, g_out, h_out

    def _head_output(self, head, rep):
        z = head(rep)
        if self.config.task == CLASSIFICATION:
            return softmax(z)
        return z.reshape(-1)

    # -- inference ------------------------------------------------------------

    def selection_scores(self, x):
        """Eval-mode g(x) values as a plain array (no tape)."""
        if not self.selective:
            raise ConfigurationError("baseline model has no selection head")
        with no_grad():
            _, g_out, _ = self.forward(x, mode=EVAL)
        return g_out.data

    def predict(self, x, tau=0.5):
        """Predict-or-abstain at threshold tau (accept iff g(x) >= tau).

        Returns ``(predictions, accepted)``: class indices or regression
        values, and a boolean accept mask. Baseline models accept everything.
        """
        with no_grad():
            f_out, g_out, _ = self.forward(x, mode=EVAL)
        if self.config.task == CLASSIFICATION:
            preds = np.argmax(f_out.data, axis=1)
        else:
            preds = f_out.data
        if g_out is None:
            accepted = np.ones(preds.shape[0], dtype=bool)
        else:
            accepted = g_out.data >= tau
        return preds, accepted

    # -- parameter bookkeeping ------------------------------------------------

    def parameters(self):
        ps = []
        for block in self.body:
            ps += block.parameters()
        ps += self.f_head.parameters()
        if self.selective:
            ps += self.g_hidden.parameters()
            if self.g_bn is not None:
                ps += self.g_bn.parameters()
            ps += self.g_out.parameters()
            if self.h_head is not None:
                ps += self.h_head.parameters()
        return ps

    def running_stats(self):
        stats = []
        for block in self.body:
            stats += block.running_stats()
        if self.selective and self.g_bn is not None:
            stats += self.g_bn.running_stats()
        return stats

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())


def build_model(config, seed):
    """Build the three-headed model with seed-deterministic initialization."""
    return SelectiveNet(config, seed, selective=True)


def build_baseline(config, seed):
    """Build the full-coverage twin: same body and f head, no g or h.

    With the same seed, body and f initialization are bit-identical to the
    selective model's because the heads are drawn after them.
    """
    return SelectiveNet(config, seed, selective=False)
