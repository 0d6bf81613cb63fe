"""
Statistics for evaluation reports

Success-rate intervals, progress-normalised completion time, gate agreement,
plug-in mutual information between the arms' actions and support coverage of
a product action region.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from skilllab.errors import EvaluationError


def success_rate(successes: Sequence[bool]) -> Dict[str, float]:
    """
    Rate of successes with its standard error and Wilson 95% interval

    Parameters:
    -----------
    successes : sequence of bool
        One entry per trial

    Returns:
    --------
    dict with keys successes, trials, rate, se, ci_low, ci_high
    """
    s = np.asarray(successes, dtype=bool)
    n = int(s.size)
    k = int(s.sum())
    if n == 0:
        return {'successes': 0, 'trials': 0, 'rate': np.nan, 'se': np.nan, 'ci_low': np.nan, 'ci_high': np.nan}
    rate = k / n
    lo, hi = proportion_confint(k, n, alpha=0.05, method='wilson')
    return {'successes': k, 'trials': n, 'rate': rate, 'se': float(np.sqrt(rate * (1.0 - rate) / n)),
            'ci_low': float(lo), 'ci_high': float(hi)}


def t_norm(times: Sequence[float], progress: Sequence[float]) -> Optional[float]:
    """
    Progress-normalised completion time: mean of t_i / s_i over episodes with s_i > 0

    Returns None when no episode made progress.
    """
    t = np.asarray(times, dtype=np.float64)
    s = np.asarray(progress, dtype=np.float64)
    keep = s > 0
    if not keep.any():
        return None
    return float(np.mean(t[keep] / s[keep]))


def gate_stage_agreement(alpha: Sequence[float], priors: Sequence[int], threshold: float = 0.5) -> float:
    """Fraction of steps whose applied gate (thresholded) equals the stage's cooperation prior."""
    a = np.asarray(alpha, dtype=np.float64) >= threshold
    p = np.asarray(priors, dtype=np.int64) == 1
    if a.size == 0:
        return np.nan
    return float(np.mean(a == p))


def within_stage_variance(alpha: Sequence[float], stage_index: Sequence[int]) -> float:
    """Step-weighted mean variance of the gate value inside each contiguous stage block."""
    a = np.asarray(alpha, dtype=np.float64)
    idx = np.asarray(stage_index)
    if a.size == 0:
        return np.nan
    breaks = np.flatnonzero(np.diff(idx)) + 1
    blocks = np.split(a, breaks)
    return float(sum(b.size * b.var() for b in blocks) / a.size)


# ---------------------------------------------------------------------------
# mutual information

def cell_index(actions: np.ndarray, bins: int) -> np.ndarray:
    """Equal-width cells over [-1, 1] per component, flattened to one index per row."""
    a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    per_dim = np.clip(np.floor((a + 1.0) / 2.0 * bins), 0, bins - 1).astype(np.int64)
    return np.ravel_multi_index(tuple(per_dim.T), (bins,) * a.shape[1])


def plugin_mi(x: np.ndarray, y: np.ndarray, nx: int, ny: int) -> float:
    """Plug-in mutual information (nats) between two integer label arrays."""
    joint, _, _ = np.histogram2d(x, y, bins=[nx, ny], range=[[0, nx], [0, ny]])
    h_x = stats.entropy(joint.sum(axis=1))
    h_y = stats.entropy(joint.sum(axis=0))
    h_xy = stats.entropy(joint.reshape(-1))
    return max(0.0, float(h_x + h_y - h_xy))


@dataclass
class MIDiagnostic:
    context: str
    bins: int
    n_samples: int
    mi: float
    bias_floor: float
    floor_se: float

    def independent(self, k: float = 2.0) -> bool:
        """True when the estimate is within k standard errors of the bias floor."""
        return self.mi <= self.bias_floor + k * self.floor_se

    def as_row(self) -> Dict[str, float]:
        return {'context': self.context, 'bins': self.bins, 'n_samples': self.n_samples, 'mi': self.mi,
                'bias_floor': self.bias_floor, 'floor_se': self.floor_se}


def mi_from_samples(a_L: np.ndarray, a_R: np.ndarray, bins: int, rng: np.random.Generator,
                    n_shuffles: int = 10, context: str = "") -> MIDiagnostic:
    """
    Plug-in MI between the two arms' action cells with a shuffle bias floor

    The floor is the same estimator applied to the samples after permuting one
    arm, which destroys any dependence while keeping both marginals. Its spread
    over the shuffles is the standard error of a single estimate.
    """
    if bins < 2:
        raise EvaluationError("bins must be at least 2")
    n = len(a_L)
    if n < 100 * bins ** 2:
        raise EvaluationError(f"{n} samples are too few for {bins} bins per dimension "
                              f"(need at least {100 * bins ** 2})")
    x, y = cell_index(a_L, bins), cell_index(a_R, bins)
    nx, ny = bins ** np.atleast_2d(a_L).shape[1], bins ** np.atleast_2d(a_R).shape[1]
    mi = plugin_mi(x, y, nx, ny)
    floors = np.array([plugin_mi(x, rng.permutation(y), nx, ny) for _ in range(max(1, n_shuffles))])
    se = float(floors.std(ddof=1)) if len(floors) > 1 else 0.0
    return MIDiagnostic(context, bins, n, mi, float(floors.mean()), se)


def binned_mi(x: np.ndarray, y: np.ndarray, bins: int = 8, value_range=None) -> float:
    """Plug-in MI (nats) of two scalar samples on an equal-width bins x bins grid."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if value_range is None:
        value_range = [[x.min(), x.max()], [y.min(), y.max()]]
    joint, _, _ = np.histogram2d(x, y, bins=bins, range=value_range)
    h = stats.entropy(joint.sum(axis=1)) + stats.entropy(joint.sum(axis=0)) - stats.entropy(joint.reshape(-1))
    return max(0.0, float(h))


def gaussian_mi(rho: float) -> float:
    """Analytic MI (nats) of a bivariate normal with correlation rho."""
    return float(-0.5 * np.log(1.0 - rho ** 2))


# ---------------------------------------------------------------------------
# support coverage

@dataclass(frozen=True)
class ProductRegion:
    """Axis-aligned box per arm; the target is their Cartesian product."""
    lo_L: np.ndarray
    hi_L: np.ndarray
    lo_R: np.ndarray
    hi_R: np.ndarray

    @classmethod
    def around(cls, center_L, center_R, tolerance: float) -> "ProductRegion":
        c_l, c_r = np.asarray(center_L, dtype=np.float64), np.asarray(center_R, dtype=np.float64)
        return cls(np.clip(c_l - tolerance, -1, 1), np.clip(c_l + tolerance, -1, 1),
                   np.clip(c_r - tolerance, -1, 1), np.clip(c_r + tolerance, -1, 1))

    @classmethod
    def full(cls, dim: int = 3) -> "ProductRegion":
        lo, hi = -np.ones(dim), np.ones(dim)
        return cls(lo, hi, lo.copy(), hi.copy())

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi_L - self.lo_L) * np.prod(self.hi_R - self.lo_R))

    def contains(self, a_L: np.ndarray, a_R: np.ndarray) -> np.ndarray:
        a_L, a_R = np.atleast_2d(a_L), np.atleast_2d(a_R)
        in_l = np.all((a_L >= self.lo_L) & (a_L <= self.hi_L), axis=1)
        in_r = np.all((a_R >= self.lo_R) & (a_R <= self.hi_R), axis=1)
        return in_l & in_r


def coverage_fraction(a_L: np.ndarray, a_R: np.ndarray, region: ProductRegion) -> float:
    """Fraction of joint action samples inside the product region."""
    if not region.volume > 0:
        raise EvaluationError("degenerate target region (zero volume)")
    inside = region.contains(a_L, a_R)
    if inside.size == 0:
        raise EvaluationError("no samples to measure coverage on")
    return float(np.mean(inside))
