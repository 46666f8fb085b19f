"""Selective metrics, rejection baselines, and risk-coverage machinery.

Classification risk is reported as 0/1 error in percent, regression risk as
MSE, both computed only over accepted samples and normalized by the hard
empirical coverage. The two baselines score confidence per sample (higher =
more confident): softmax response uses the maximum softmax activation, and
MC-dropout uses negative variance statistics over repeated stochastic
forward passes with dropout forced active.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .autograd import no_grad
from .calibrate import select_threshold
from .layers import ConfigurationError, ContractError, FORCED_ACTIVE
from .model import CLASSIFICATION, REGRESSION

__all__ = [
    "EvalReport",
    "UndefinedRiskError",
    "selective_metrics",
    "sr_confidence",
    "mc_dropout_confidence",
    "threshold_for_coverage",
    "risk_coverage_curve",
    "cross_calibration_grid",
    "compare_report",
    "write_csv",
]

# MC-dropout settings reported for the two task types.
MC_DROPOUT_CLASSIFICATION = {"passes": 100, "rate": 0.5}
MC_DROPOUT_REGRESSION = {"passes": 200, "rate": 0.05}


class UndefinedRiskError(ValueError):
    """No accepted samples: selective risk is undefined."""


@dataclass
class EvalReport:
    target_coverage: float
    coverage: float
    risk: float
    n_covered: int
    n_rejected: int
    risk_stderr: float | None = None

    @property
    def n_total(self):
        return self.n_covered + self.n_rejected


def per_sample_loss(predictions, labels, task):
    """0/1 error for classification, squared error for regression."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape[0] != labels.shape[0]:
        raise ContractError("predictions and labels must have equal length")
    if task == CLASSIFICATION:
        return (predictions != labels).astype(np.float64)
    return (predictions.astype(np.float64) - labels.astype(np.float64)) ** 2


def selective_metrics(predictions, labels, accept_mask, task,
                      target_coverage=None):
    """Hard-mask selective risk and coverage over an evaluation set."""
    accept_mask = np.asarray(accept_mask, dtype=bool)
    losses = per_sample_loss(predictions, labels, task)
    if accept_mask.shape != losses.shape:
        raise ContractError("accept mask length must match predictions")
    n = losses.size
    n_cov = int(accept_mask.sum())
    if n_cov == 0:
        raise UndefinedRiskError("no accepted samples; selective risk undefined")
    risk = float(losses[accept_mask].mean())
    if task == CLASSIFICATION:
        risk *= 100.0
    return EvalReport(
        target_coverage=target_coverage if target_coverage is not None
        else n_cov / n,
        coverage=n_cov / n,
        risk=risk,
        n_covered=n_cov,
        n_rejected=n - n_cov,
    )


def sr_confidence(softmax_output):
    """Softmax-response score: the maximum softmax activation per row."""
    p = np.asarray(softmax_output, dtype=np.float64)
    if p.ndim != 2:
        raise ContractError(f"expected (batch, classes) softmax rows, got {p.shape}")
    return p.max(axis=1)


def mc_dropout_confidence(model, inputs, passes, rate, seed, task):
    """Negative-variance confidence from repeated dropout-active passes.

    Classification: variance across passes of the probability assigned to
    the consensus class (argmax of the mean prediction). Regression:
    variance of the scalar output. Deterministic given the seed; identical
    passes (e.g. rate 0) yield exactly zero variance.
    """
    if passes < 2:
        raise ContractError("MC-dropout needs at least 2 passes")
    dropouts = [blk.dropout for blk in model.body if blk.dropout is not None]
    if not dropouts:
        raise ConfigurationError(
            "model has no dropout layers; build it with a dropout_rate")
    saved = [d.rate for d in dropouts]
    for d in dropouts:
        d.rate = rate
    try:
        rng = np.random.default_rng(seed)
        outs = []
        with no_grad():
            for _ in range(passes):
                f_out, _, _ = model.forward(inputs, mode=FORCED_ACTIVE, rng=rng)
                outs.append(f_out.data.copy())
    finally:
        for d, r in zip(dropouts, saved):
            d.rate = r
    outs = np.stack(outs)  # (passes, m, k) or (passes, m)
    identical = np.all(outs == outs[0], axis=0)
    if task == CLASSIFICATION:
        consensus = outs.mean(axis=0).argmax(axis=1)
        track = outs[:, np.arange(outs.shape[1]), consensus]
        var = track.var(axis=0)
        var[np.all(identical, axis=1)] = 0.0
    else:
        var = outs.var(axis=0)
        var[identical] = 0.0
    return -var


def threshold_for_coverage(scores, target_coverage):
    """Nearest-rank threshold; same rule as selection-score calibration."""
    return select_threshold(scores, target_coverage)


def risk_coverage_curve(cal_scores, test_scores, predictions, labels,
                        coverage_grid, task):
    """Trace selective risk against target coverage for one confidence score.

    Thresholds are fit on the calibration scores only; metrics come from the
    test split. The c = 1 point accepts everything so its risk equals the
    full-coverage risk exactly.
    """
    cal_scores = np.asarray(cal_scores, dtype=np.float64)
    test_scores = np.asarray(test_scores, dtype=np.float64)
    rows = []
    for c in coverage_grid:
        if not 0.0 < c <= 1.0:
            raise ContractError(f"coverage grid values must be in (0,1], got {c}")
        if c == 1.0:
            mask = np.ones(test_scores.size, dtype=bool)
        else:
            tau = threshold_for_coverage(cal_scores, c)
            mask = test_scores >= tau
        rep = selective_metrics(predictions, labels, mask, task,
                                target_coverage=c)
        rows.append((c, rep.coverage, rep.risk))
    return rows


def cross_calibration_grid(models, cal_inputs, test_inputs, test_labels,
                           coverages):
    """Matrix of selective risks: rows = training coverage, cols = calibration.

    Entry (i, j) is the risk of models[i] calibrated on ``cal_inputs`` to
    coverage ``coverages[j]`` and evaluated on the test split.
    """
    grid = np.empty((len(models), len(coverages)))
    for i, model in enumerate(models):
        cal_scores = model.selection_scores(cal_inputs)
        test_scores = model.selection_scores(test_inputs)
        preds, _ = model.predict(test_inputs, tau=-np.inf)
        for j, c in enumerate(coverages):
            tau = threshold_for_coverage(cal_scores, c)
            mask = test_scores >= tau
            rep = selective_metrics(preds, test_labels, mask,
                                    model.config.task, target_coverage=c)
            grid[i, j] = rep.risk
    return grid


def compare_report(coverages, selnet_risks, baseline_risks):
    """Side-by-side risks with percent improvement over each baseline.

    ``baseline_risks`` maps baseline name to a risk list on the same
    coverage grid. Improvement is 100*(baseline - selnet)/baseline, or None
    when the baseline risk is zero.
    """
    names = list(baseline_risks)
    for name in names:
        if len(baseline_risks[name]) != len(coverages):
            raise ContractError(f"baseline {name!r} grid does not match coverages")
    if len(selnet_risks) != len(coverages):
        raise ContractError("selective risk grid does not match coverages")
    rows = []
    for i, c in enumerate(coverages):
        row = {"coverage": c, "selnet_risk": selnet_risks[i]}
        for name in names:
            b = baseline_risks[name][i]
            row[f"{name}_risk"] = b
            row[f"{name}_improvement"] = (
                None if b == 0.0 else 100.0 * (b - selnet_risks[i]) / b)
        rows.append(row)
    return rows


def write_csv(path, comments, colnames, rows):
    """CSV with '#'-prefixed provenance comment lines before the header."""
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(colnames)
        for row in rows:
            writer.writerow(["n/a" if v is None else repr(float(v))
                             if isinstance(v, float) else v for v in row])
