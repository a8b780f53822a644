"""
Statistics for multi-seed experiments.

Summaries with standard errors, Gaussian error propagation, significance,
convergence counting and thresholds, stability (average relative uncertainty),
the computational effort model, the patience gain and the weighted polynomial
law of f1 in 1/(N_epochs * x). Also the parenthesis notation used in reports,
e.g. 0.6112(97) for 0.6112 +- 0.0097.
"""

import logging
import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from uncertainties import UFloat, ufloat

logger = logging.getLogger(__name__)

DEFAULT_DELTA_FLOOR = 1e-4


class FitError(ValueError):
    """Raised when the polynomial law cannot be fitted."""


@dataclass(frozen=True)
class Summary:
    mean: float
    delta: float
    n: int = 1
    sigma: float = 0.0

    @classmethod
    def from_delta(cls, mean: float, delta: float, n: int = 5) -> "Summary":
        """Build a summary from a published mean and standard error."""
        return cls(mean=mean, delta=delta, n=n, sigma=delta * math.sqrt(n))

    def format(self, decimals: int) -> str:
        return format_parenthesis(self.mean, self.delta, decimals)


def summarize(values: Sequence[float]) -> Summary:
    """Mean, sample standard deviation (n - 1) and standard error of the mean."""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ValueError("cannot summarize an empty list")
    if not np.all(np.isfinite(data)):
        raise ValueError("values must be finite")
    n = int(data.size)
    sigma = float(data.std(ddof=1)) if n > 1 else 0.0
    return Summary(mean=float(data.mean()), delta=sigma / math.sqrt(n), n=n, sigma=sigma)


def _as_ufloat(summary: Summary) -> UFloat:
    return ufloat(summary.mean, summary.delta)


def _derived(value: UFloat, a: Summary, b: Summary) -> Summary:
    n = min(a.n, b.n)
    delta = float(value.std_dev)
    return Summary(mean=float(value.nominal_value), delta=delta, n=n, sigma=delta * math.sqrt(n))


def ratio_with_uncertainty(a: Summary, b: Summary) -> Summary:
    """First-order propagation for a / b with independent inputs."""
    if b.mean == 0:
        raise ZeroDivisionError("ratio denominator has zero mean")
    return _derived(_as_ufloat(a) / _as_ufloat(b), a, b)


def difference_with_uncertainty(a: Summary, b: Summary) -> Summary:
    return _derived(_as_ufloat(a) - _as_ufloat(b), a, b)


def is_significant(a: Summary, b: Summary) -> bool:
    """True iff the difference exceeds one propagated standard error."""
    difference = difference_with_uncertainty(a, b)
    return abs(difference.mean) > difference.delta


# --- Convergence and stability ---

def convergence_count(f1_values: Sequence[float]) -> int:
    return sum(1 for value in f1_values if value > 0)


def convergence_threshold(cv_table: Mapping[Tuple[str, float], int], n_runs: int) -> Optional[float]:
    """
    Smallest x above which every approach converged in all runs.

    Args:
        cv_table: (approach, x) -> number of converged runs
        n_runs: Runs per experiment

    Returns:
        The threshold, or None when even the largest x has a non-converged run
    """
    approaches = sorted({a for a, _ in cv_table})
    grid = sorted({x for _, x in cv_table})
    missing = [(a, x) for a in approaches for x in grid if (a, x) not in cv_table]
    if missing:
        raise ValueError(f"cv_table lacks cells {missing}")

    threshold = None
    for x in reversed(grid):
        if all(cv_table[(a, x)] == n_runs for a in approaches):
            threshold = x
        else:
            break
    return threshold


def average_relative_uncertainty(summaries: Mapping[float, Summary], x_threshold: float) -> float:
    selected = [summaries[x] for x in sorted(summaries) if x >= x_threshold]
    if not selected:
        raise ValueError(f"no summaries at x >= {x_threshold}")
    if any(s.mean == 0 for s in selected):
        raise ZeroDivisionError("relative uncertainty of a zero mean")
    return float(np.mean([s.delta / s.mean for s in selected]))


def global_average_relative_uncertainty(per_c: Sequence[float]) -> float:
    if not per_c:
        raise ValueError("need at least one dataset-model combination")
    return float(np.mean(per_c))


def mean_epochs_over_converged(epochs: Sequence[float], f1_values: Sequence[float]) -> Optional[Summary]:
    kept = [e for e, f1 in zip(epochs, f1_values) if f1 > 0]
    return summarize(kept) if kept else None


# --- Computational effort ---

@dataclass(frozen=True)
class EffortInputs:
    n_train: int
    n_val: int
    n_epochs_adaptive: float
    n_epochs_fixed_list: Tuple[float, ...]
    # backward pass cost in units of a forward pass
    backward_cost_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "n_epochs_fixed_list", tuple(self.n_epochs_fixed_list))
        if self.n_train <= 0 or self.n_val < 0:
            raise ValueError("n_train must be positive and n_val non-negative")
        if not self.n_epochs_fixed_list or any(n <= 0 for n in self.n_epochs_fixed_list):
            raise ValueError("need at least one positive fixed epoch count")
        if self.n_epochs_adaptive <= 0 or self.backward_cost_factor <= 0:
            raise ValueError("epoch count and backward cost factor must be positive")


@dataclass(frozen=True)
class EffortResult:
    ratio: float
    alpha: float
    # without neglecting the single validation pass of each fixed run
    exact_ratio: float


def effort_ratio(inputs: EffortInputs) -> EffortResult:
    train_cost = (1.0 + inputs.backward_cost_factor) * inputs.n_train
    alpha = 1.0 + inputs.n_val / train_cost
    fixed_total = float(sum(inputs.n_epochs_fixed_list))
    ratio = inputs.n_epochs_adaptive / fixed_total * alpha
    exact = ((train_cost + inputs.n_val) * inputs.n_epochs_adaptive
             / (train_cost * fixed_total + inputs.n_val * len(inputs.n_epochs_fixed_list)))
    return EffortResult(ratio=ratio, alpha=alpha, exact_ratio=exact)


def gain(f1_by_x_at_p: Mapping[float, float], f1_by_x_at_p_minus_2: Mapping[float, float]) -> float:
    """Sum over x of x * (f1 at patience p - f1 at patience p - 2)."""
    if set(f1_by_x_at_p) != set(f1_by_x_at_p_minus_2):
        raise ValueError("both maps need the same x grid")
    return float(sum(x * (f1_by_x_at_p[x] - f1_by_x_at_p_minus_2[x]) for x in sorted(f1_by_x_at_p)))


# --- Polynomial law f1 = a0 - a1 u - a2 u^2, u = 1 / (N_epochs * x) ---

@dataclass(frozen=True)
class FitPoint:
    inv_nx: float
    f1: float
    delta: float


@dataclass
class FitResult:
    coefficients: Tuple[float, ...]
    residual: float
    covariance: np.ndarray
    adjusted_r2: float
    dropped_terms: Tuple[int, ...] = ()

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def coefficient(self, k: int) -> float:
        return self.coefficients[k] if k < len(self.coefficients) else 0.0

    @property
    def a0(self) -> float:
        return self.coefficient(0)

    @property
    def a1(self) -> float:
        return self.coefficient(1)

    @property
    def a2(self) -> float:
        return self.coefficient(2)

    def predict(self, inv_nx: float) -> float:
        return self.coefficients[0] - sum(
            self.coefficients[k] * inv_nx ** k for k in range(1, len(self.coefficients))
        )


def _as_points(points: Sequence) -> List[FitPoint]:
    return [p if isinstance(p, FitPoint) else FitPoint(*p) for p in points]


def _design(inv_nx: np.ndarray, order: int) -> np.ndarray:
    columns = [np.ones_like(inv_nx)] + [-inv_nx ** k for k in range(1, order + 1)]
    return np.column_stack(columns)


def fit_polynomial(points: Sequence, order: int = 2,
                   delta_floor: float = DEFAULT_DELTA_FLOOR) -> FitResult:
    """
    Weighted least squares fit of f1 = a0 - sum_k a_k u^k with all a_k >= 0.

    Weights are 1/delta^2 (deltas below `delta_floor` are raised to it). A
    negative coefficient drops its term and the fit is repeated.

    Args:
        points: FitPoint or (inv_nx, f1, delta) tuples
        order: Highest power of u, 1 to 3

    Returns:
        FitResult with weighted residual sum of squares and coefficient covariance
    """
    if not 1 <= order <= 3:
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    fit_points = _as_points(points)
    if len(fit_points) < order + 1:
        raise FitError(f"need at least {order + 1} points, got {len(fit_points)}")

    u = np.array([p.inv_nx for p in fit_points], dtype=np.float64)
    y = np.array([p.f1 for p in fit_points], dtype=np.float64)
    delta = np.maximum(np.array([p.delta for p in fit_points], dtype=np.float64), delta_floor)
    weights = 1.0 / delta ** 2
    sqrt_w = np.sqrt(weights)

    full = _design(u, order)
    if np.linalg.matrix_rank(full * sqrt_w[:, None]) < order + 1:
        raise FitError("rank-deficient design matrix (too few distinct inv_nx values)")

    active = list(range(order + 1))
    while True:
        design = full[:, active] * sqrt_w[:, None]
        solution, _, _, _ = scipy.linalg.lstsq(design, y * sqrt_w)
        negative = [(value, term) for value, term in zip(solution, active) if value < 0]
        if not negative:
            break
        _, worst = min(negative)
        logger.debug(f"[Fit] dropping term {worst} with coefficient {min(negative)[0]:.3e}")
        active.remove(worst)
        if not active:
            solution = np.zeros(0)
            break

    coefficients = np.zeros(order + 1)
    coefficients[active] = solution
    covariance = np.zeros((order + 1, order + 1))
    if active:
        design = full[:, active] * sqrt_w[:, None]
        covariance[np.ix_(active, active)] = scipy.linalg.pinvh(design.T @ design)

    fitted = full @ coefficients
    residual = float(np.sum(weights * (y - fitted) ** 2))
    weighted_mean = float(np.sum(weights * y) / np.sum(weights))
    total = float(np.sum(weights * (y - weighted_mean) ** 2))
    n, predictors = len(y), max(len(active) - 1, 0)
    if total == 0.0:
        r2 = 1.0 if residual == 0.0 else 0.0
    else:
        r2 = 1.0 - residual / total
    dof = n - predictors - 1
    adjusted = 1.0 - (1.0 - r2) * (n - 1) / dof if dof > 0 else float("nan")

    dropped = tuple(sorted(set(range(order + 1)) - set(active)))
    return FitResult(tuple(float(c) for c in coefficients), residual, covariance, adjusted, dropped)


def fit_quadratic(points: Sequence, delta_floor: float = DEFAULT_DELTA_FLOOR) -> FitResult:
    if len(points) < 3:
        raise FitError(f"need at least 3 points, got {len(points)}")
    return fit_polynomial(points, order=2, delta_floor=delta_floor)


def select_polynomial_order(points: Sequence, delta_floor: float = DEFAULT_DELTA_FLOOR
                            ) -> Tuple[int, Dict[int, FitResult]]:
    """Fit orders 1 to 3 (where enough points exist) and pick the best adjusted R^2."""
    fits: Dict[int, FitResult] = {}
    for order in (1, 2, 3):
        try:
            fits[order] = fit_polynomial(points, order, delta_floor)
        except FitError:
            continue
    if not fits:
        raise FitError("no polynomial order could be fitted")
    scored = {o: f.adjusted_r2 for o, f in fits.items() if not math.isnan(f.adjusted_r2)}
    best = max(scored, key=lambda o: (scored[o], -o)) if scored else min(fits)
    return best, fits


def apply_epoch_threshold(n_epochs: float, threshold_T: float) -> float:
    if n_epochs <= 0 or threshold_T <= 0:
        raise ValueError("epoch count and threshold must be positive")
    return min(n_epochs, threshold_T)


def predict_f1(fit: FitResult, n_epochs: float, x: float, threshold_T: Optional[float] = None) -> float:
    """Evaluate the fitted law, capping N_epochs at threshold_T when given."""
    if threshold_T is not None:
        n_epochs = apply_epoch_threshold(n_epochs, threshold_T)
    return fit.predict(1.0 / (n_epochs * x))


# --- Parenthesis notation ---

PARENTHESIS_PATTERN = re.compile(r"^\s*(-?\d+(?:\.(\d+))?)\((\d+(?:\.\d+)?)\)\s*$")


def _quantize(value: float, decimals: int) -> Decimal:
    return Decimal(repr(float(value))).quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP)


def format_rounded(value: float, decimals: int) -> str:
    """Half-up rounding for display, e.g. 4.6468 -> "4.647"."""
    return f"{_quantize(value, decimals):.{decimals}f}"


def format_parenthesis(mean: float, delta: float, decimals: int) -> str:
    """
    Format mean and uncertainty as in "0.6112(97)".

    The uncertainty is written in units of the last shown decimal of the mean,
    unless it is 1 or larger, in which case it is written out ("49.4(1.9)").
    """
    if decimals < 0 or delta < 0:
        raise ValueError("decimals and delta must be non-negative")
    mean_text = f"{_quantize(mean, decimals):.{decimals}f}"
    rounded_delta = _quantize(delta, decimals)
    if rounded_delta >= 1:
        delta_text = f"{rounded_delta:.{decimals}f}"
    else:
        delta_text = str(int(rounded_delta.scaleb(decimals)))
    return f"{mean_text}({delta_text})"


def parse_parenthesis(text: str) -> Tuple[float, float, int]:
    """Inverse of format_parenthesis: returns (mean, delta, decimals)."""
    match = PARENTHESIS_PATTERN.match(text)
    if not match:
        raise ValueError(f"not in parenthesis notation: {text!r}")
    mean_text, fraction, delta_text = match.groups()
    decimals = len(fraction) if fraction else 0
    if "." in delta_text:
        delta = float(delta_text)
    else:
        delta = float(Decimal(delta_text).scaleb(-decimals))
    return float(mean_text), delta, decimals
