"""Censoring-weighted cost regression.

Costs cut short by end of follow-up cannot simply be dropped or treated as
complete. The standard fix reweights fully observed records by the inverse
probability of remaining uncensored through their follow-up time, with that
probability estimated by a Kaplan-Meier curve in which censoring plays the
role of the event. Censored records get weight zero; complete records get
weight at least one; and when nothing is censored the weights are exactly
one, so the weighted fit reduces to the plain one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CostDataset
from .errors import EmptyDatasetError, ZeroProbabilityError
from .glm import DesignSpec, Family, FitResult, irls_fit


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous step function starting at 1.

    ``jump_times`` are the strictly increasing times at which the function
    drops; ``values`` holds the value from each jump onward.
    """

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("jump_times and values must be 1-d arrays of equal length")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("survival values must lie in [0, 1]")
        if values.size and np.any(np.diff(values) > 0):
            raise ValueError("survival values must be non-increasing")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "values", values)

    def evaluate(self, t) -> np.ndarray:
        """Value at ``t``, evaluated right-continuously (jumps included)."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.jump_times, t, side="right")
        padded = np.concatenate(([1.0], self.values))
        return padded[idx]

    def __call__(self, t):
        return self.evaluate(t)


def km_censoring_survival(times, uncensored) -> StepSurvival:
    """Kaplan-Meier survival of the censoring distribution.

    Censoring is the event here; failures count as censored observations of
    the censoring time. At a tied time, failures stay in the risk set for
    the censoring event and leave afterwards, so the factor at time ``t`` is
    ``1 - (#censorings at t) / (#records with time >= t)``.
    """
    times = np.asarray(times, dtype=np.float64)
    uncensored = np.asarray(uncensored, dtype=bool)
    if times.ndim != 1 or times.shape != uncensored.shape:
        raise ValueError("times and uncensored must be 1-d arrays of equal length")
    if times.size == 0:
        raise EmptyDatasetError("no records for the censoring curve")
    if np.any(times <= 0) or not np.all(np.isfinite(times)):
        raise ValueError("times must be finite and positive")

    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    censor_event = ~uncensored[order]

    distinct, start_idx, counts = np.unique(t_sorted, return_index=True, return_counts=True)
    n = times.size
    jump_times, values = [], []
    survival = 1.0
    for t, start, count in zip(distinct, start_idx, counts):
        at_risk = n - start
        d = int(np.count_nonzero(censor_event[start : start + count]))
        if d:
            survival *= 1.0 - d / at_risk
            jump_times.append(t)
            values.append(survival)
    return StepSurvival(np.array(jump_times), np.array(values))


def _weights_from_survival(times, uncensored, survival: StepSurvival) -> np.ndarray:
    probs = survival.evaluate(times)
    weights = np.zeros(times.shape[0])
    complete = np.asarray(uncensored, dtype=bool)
    bad = complete & (probs <= 0.0)
    if np.any(bad):
        record = int(np.flatnonzero(bad)[0])
        raise ZeroProbabilityError(
            f"record {record}: uncensored at time {times[record]:g} where the "
            "estimated censoring survival is zero",
            record=record,
        )
    weights[complete] = 1.0 / probs[complete]
    return weights


def ipw_weights(dataset: CostDataset, stratify_by_arm: bool = False) -> np.ndarray:
    """Inverse-probability-of-censoring weights, one per record.

    The censoring curve is pooled across arms by default; pass
    ``stratify_by_arm=True`` to estimate it separately within each arm.

    Raises
    ------
    ZeroProbabilityError
        An uncensored record sits where the estimated censoring survival
        is zero, identifying the record.
    """
    if not stratify_by_arm:
        survival = km_censoring_survival(dataset.time, dataset.uncensored)
        return _weights_from_survival(dataset.time, dataset.uncensored, survival)

    weights = np.zeros(len(dataset))
    for arm in (0, 1):
        mask = dataset.treatment == arm
        if not np.any(mask):
            continue
        survival = km_censoring_survival(dataset.time[mask], dataset.uncensored[mask])
        weights[mask] = _weights_from_survival(
            dataset.time[mask], dataset.uncensored[mask], survival
        )
    return weights


def cost_design(dataset: CostDataset):
    """Design matrix ``[1, treat, covariates]`` and matching term names."""
    X = np.column_stack(
        [
            np.ones(len(dataset)),
            dataset.treatment.astype(np.float64),
            dataset.covariates,
        ]
    )
    names = ("intercept", "treat") + dataset.covariate_names
    return X, names


def fit_censored_cost(
    dataset: CostDataset,
    stratify_censoring: bool = False,
    tolerance: float = 1e-8,
    max_iterations: int = 100,
) -> FitResult:
    """Censoring-weighted multiplicative cost regression.

    Fits the log-link moment model of cost on ``[1, treat, covariates]``
    with inverse-probability-of-censoring weights and robust covariance.
    On fully uncensored data every weight is exactly one, so the result
    coincides with the unweighted fit.
    """
    weights = ipw_weights(dataset, stratify_by_arm=stratify_censoring)
    X, _ = cost_design(dataset)
    spec = DesignSpec(
        response=dataset.cost, design=X, weights=weights, family=Family.LOG_GAMMA
    )
    return irls_fit(spec, tolerance=tolerance, max_iterations=max_iterations)


def fit_cost_unweighted(
    dataset: CostDataset, tolerance: float = 1e-8, max_iterations: int = 100
) -> FitResult:
    """Plain (unweighted) multiplicative cost regression, ignoring censoring."""
    X, _ = cost_design(dataset)
    spec = DesignSpec(
        response=dataset.cost,
        design=X,
        weights=np.ones(len(dataset)),
        family=Family.LOG_GAMMA,
    )
    return irls_fit(spec, tolerance=tolerance, max_iterations=max_iterations)
