"""Linear-scaling fitness: ridge fit of program outputs plus LOOCV case errors.

A program's raw output z is mapped to predictions alpha*z + beta by a ridge
regression on the augmented design [z 1].  Per-case errors are the exact
leave-one-out squared prediction errors obtained from the hat-matrix
shortcut, so no refits are needed during evolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exprtree import ExpressionTree, evaluate

DEFAULT_RIDGE = 1e-6

# A raw output column whose spread falls below this is treated as constant:
# the scale coefficient is unidentifiable, so the fit degenerates to the mean.
_DEGENERATE_STD = 1e-12

# Floor for 1 - leverage in the LOOCV shortcut denominator.
_LEVERAGE_EPS = 1e-12


@dataclass
class ScalingFit:
    alpha: float
    beta: float
    residuals: np.ndarray
    leverage: np.ndarray


def fit_linear_scaling(z: np.ndarray, y: np.ndarray, lam: float = DEFAULT_RIDGE) -> ScalingFit:
    """Ridge-regress y on [z 1] with penalty lam on both coefficients.

    Degenerate columns (constant z, or a singular normal system) fall back
    to alpha=0, beta=mean(y); that fallback is an intercept-only least
    squares fit, so its leverage is the exact hat diagonal 1/n.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = z.size
    s1 = z.sum()
    s2 = float(z @ z)
    a00 = s2 + lam
    a11 = n + lam
    det = a00 * a11 - s1 * s1
    degenerate = z.std() < _DEGENERATE_STD * max(1.0, float(np.abs(z).max(initial=0.0)))
    if degenerate or not np.isfinite(det) or abs(det) < 1e-12 * max(1.0, a00 * a11):
        beta = float(y.mean())
        residuals = y - beta
        leverage = np.full(n, 1.0 / n)
        return ScalingFit(0.0, beta, residuals, leverage)
    b0 = float(z @ y)
    b1 = y.sum()
    alpha = (b0 * a11 - b1 * s1) / det
    beta = (b1 * a00 - b0 * s1) / det
    residuals = y - (alpha * z + beta)
    # Hat diagonal of row [z_j 1]: quadratic form with the inverse system.
    leverage = (z * z * a11 - 2.0 * z * s1 + a00) / det
    return ScalingFit(float(alpha), float(beta), residuals, leverage)


def loocv_case_errors(fit: ScalingFit) -> np.ndarray:
    """Exact leave-one-out squared errors via the hat-matrix identity."""
    denom = np.maximum(1.0 - fit.leverage, _LEVERAGE_EPS)
    return (fit.residuals / denom) ** 2


def r2_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    sse = float(np.sum((y_true - y_pred) ** 2))
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    if sst == 0.0:
        return 1.0 if sse == 0.0 else 0.0
    return 1.0 - sse / sst


class Individual:
    """A scored program: genome plus cached training phenotype.

    Selection operators only touch case_values, predicted_values, y, height
    and len(); that same surface is what crosses the hosted-script wire.
    Instances hash by identity so populations may hold duplicates.
    """

    __slots__ = (
        "genome",
        "alpha",
        "beta",
        "case_values",
        "predicted_values",
        "y",
        "loocv_total",
    )

    def __init__(self, genome, alpha, beta, case_values, predicted_values, y):
        self.genome = genome
        self.alpha = alpha
        self.beta = beta
        self.case_values = case_values
        self.predicted_values = predicted_values
        self.y = y
        self.loocv_total = float(case_values.sum())

    def __len__(self) -> int:
        return len(self.genome)

    @property
    def height(self) -> int:
        return self.genome.height

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.alpha * evaluate(self.genome, X) + self.beta

    def __repr__(self) -> str:
        return f"Individual(loocv={self.loocv_total:.4g}, size={len(self)})"


def evaluate_individual(
    tree: ExpressionTree, X: np.ndarray, y: np.ndarray, lam: float = DEFAULT_RIDGE
) -> Individual:
    z = evaluate(tree, X)
    fit = fit_linear_scaling(z, y, lam)
    case_values = loocv_case_errors(fit)
    predicted = fit.alpha * z + fit.beta
    return Individual(tree, fit.alpha, fit.beta, case_values, predicted, y)
