"""Empirical plausibility checks for the conditional independence assumption.

The correction assumes the unmeasured covariate is independent of the
measured ones within each treatment arm. That assumption is untestable
for the unmeasured covariate itself, but the analogous quantity is
observable for each measured covariate: leave it out, estimate the
propensity score from the rest, and correlate. If every measured
covariate shows only weak within-arm correlation with the others'
combined effect, positing the same for the unmeasured one is easier to
defend. Corrections stay reliable while within-stratum correlations
remain under about 0.15.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .data import CostDataset
from .errors import EmptyFitError, SeparationError
from .glm import DesignSpec, Family, irls_fit

WITHIN_STRATUM_THRESHOLD = 0.15


def _fit_propensity(response: np.ndarray, covariates: np.ndarray, names,
                    tolerance: float, max_iterations: int) -> np.ndarray:
    n = response.size
    design = np.column_stack([np.ones(n), covariates])
    spec = DesignSpec(response=response, design=design, weights=np.ones(n),
                      family=Family.LOGIT_BINOMIAL)
    fit = irls_fit(spec, tolerance=tolerance, max_iterations=max_iterations)
    scores = expit(design @ fit.coefficients)
    _raise_on_separation(response, scores, fit.coefficients, covariates, names)
    return scores


def _raise_on_separation(response, scores, coefficients, covariates, names) -> None:
    treated = response == 1.0
    if treated.sum() == 0 or treated.sum() == response.size:
        return
    perfectly_split = scores[treated].min() > 1.0 - 1e-6 and scores[~treated].max() < 1e-6
    if not perfectly_split:
        return
    slopes = np.asarray(coefficients[1:], dtype=float)
    if slopes.size == 0:
        raise SeparationError("treatment arms are perfectly separated")
    spread = covariates.std(axis=0)
    strength = np.abs(slopes) * np.where(spread > 0, spread, 1.0)
    worst = int(np.argmax(strength))
    direction = "increasing" if slopes[worst] > 0 else "decreasing"
    raise SeparationError(
        f"treatment arms are perfectly separated; strongest direction is "
        f"{direction} {names[worst]!r}"
    )


def propensity_scores(dataset: CostDataset, tolerance: float = 1e-8,
                      max_iterations: int = 100) -> np.ndarray:
    """Fitted treatment probabilities from a logit model on the covariates.

    Raises
    ------
    EmptyFitError
        One of the treatment arms is empty.
    SeparationError
        The fitted model classifies the arms perfectly, so the maximum
        likelihood estimate does not exist; the message names the
        covariate carrying the strongest separating direction.
    """
    treated = dataset.treatment == 1.0
    if treated.sum() == 0 or (~treated).sum() == 0:
        raise EmptyFitError("propensity fit needs records in both treatment arms")
    return _fit_propensity(dataset.treatment, dataset.covariates,
                           dataset.covariate_names, tolerance, max_iterations)


def _corr(a: np.ndarray, b: np.ndarray, method: str) -> float:
    if a.size < 3:
        return float("nan")
    if method == "spearman":
        a, b = rankdata(a), rankdata(b)
    if np.std(a) == 0.0 or np.std(b) == 0.0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def _largest_pairwise(column: np.ndarray, others: np.ndarray, method: str) -> float:
    best = float("nan")
    for j in range(others.shape[1]):
        r = _corr(column, others[:, j], method)
        if np.isnan(r):
            continue
        if np.isnan(best) or abs(r) > abs(best):
            best = r
    return best


@dataclass(frozen=True)
class CorrelationReport:
    """How one covariate relates to the combined effect of the others.

    Score correlations use the propensity fitted without this covariate;
    ``largest_individual_*`` is the signed value of the largest-magnitude
    pairwise correlation with any single other covariate within the
    stratum. Cells with under 3 records or no variation are NaN.
    """

    covariate: str
    corr_unconditional: float
    corr_treated: float
    corr_control: float
    largest_individual_corr_treated: float
    largest_individual_corr_control: float

    def flagged(self, threshold: float = WITHIN_STRATUM_THRESHOLD) -> bool:
        """True when a within-stratum score correlation exceeds the threshold."""
        values = [abs(v) for v in (self.corr_treated, self.corr_control) if not np.isnan(v)]
        return bool(values) and max(values) > threshold


def loo_correlation_report(dataset: CostDataset, covariate: str,
                           method: str = "pearson") -> CorrelationReport:
    """Correlations of one covariate with the leave-it-out propensity score."""
    if method not in ("pearson", "spearman"):
        raise ValueError(f"method must be 'pearson' or 'spearman', got {method!r}")
    names = list(dataset.covariate_names)
    if covariate not in names:
        raise KeyError(f"no covariate named {covariate!r}")
    if len(names) < 2:
        raise ValueError("leave-one-out correlations need at least 2 covariates")
    index = names.index(covariate)
    keep = [j for j in range(len(names)) if j != index]
    column = dataset.covariates[:, index]
    others = dataset.covariates[:, keep]
    other_names = [names[j] for j in keep]

    scores = _fit_propensity(dataset.treatment, others, other_names, 1e-8, 100)
    treated = dataset.treatment == 1.0
    return CorrelationReport(
        covariate=covariate,
        corr_unconditional=_corr(column, scores, method),
        corr_treated=_corr(column[treated], scores[treated], method),
        corr_control=_corr(column[~treated], scores[~treated], method),
        largest_individual_corr_treated=_largest_pairwise(
            column[treated], others[treated], method),
        largest_individual_corr_control=_largest_pairwise(
            column[~treated], others[~treated], method),
    )


def correlation_report(dataset: CostDataset, method: str = "pearson") -> list[CorrelationReport]:
    """One leave-one-out report per covariate, in covariate order."""
    return [
        loo_correlation_report(dataset, name, method=method)
        for name in dataset.covariate_names
    ]
