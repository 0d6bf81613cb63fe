"""
Central-difference gradient checking
"""
from typing import Callable, Optional, Tuple

import numpy as np

from skilllab.diffcore.optim import ParameterSet
from skilllab.diffcore.tensor import Tensor, no_grad, precision, reset_tape
from skilllab.errors import NumericalError


def _value(f: Callable[[ParameterSet], Tensor], params: ParameterSet) -> float:
    with no_grad():
        out = float(f(params).data.reshape(-1)[0])
    if not np.isfinite(out):
        raise NumericalError("grad_check: function value is not finite")
    return out


def grad_check_errors(f: Callable[[ParameterSet], Tensor], params: ParameterSet, eps: float = 1e-3,
                      max_entries: Optional[int] = None, rng: Optional[np.random.Generator] = None,
                      floor: float = 1e-2) -> Tuple[float, float]:
    """
    Maximum relative and absolute errors between reverse-mode and central-difference gradients

    Everything runs in float64. The relative error of one entry is
    |analytic - numeric| / max(|analytic|, |numeric|, floor). Gradients below
    the floor are judged by the absolute error, reported alongside.

    Parameters:
    -----------
    f : callable
        Deterministic scalar function of the parameter set
    params : ParameterSet
        Parameters to perturb; restored (and cast back to float32) afterwards
    eps : float
        Finite-difference step
    max_entries : int, optional
        Check at most this many randomly chosen entries per parameter
    rng : numpy.random.Generator, optional
        Chooses the entries when max_entries is set
    floor : float
        Smallest denominator of the relative error

    Returns:
    --------
    (max_rel, max_abs): the worst relative and the worst absolute error
    """
    rng = rng or np.random.default_rng(0)
    with precision(np.float64):
        params.cast(np.float64)
        try:
            reset_tape()
            params.zero_grad()
            loss = f(params)
            if not np.all(np.isfinite(loss.data)):
                raise NumericalError("grad_check: function value is not finite")
            loss.backward()
            # parameters the function never reaches have a zero gradient
            analytic = {name: (np.zeros(t.data.size) if t.grad is None
                               else t.grad.astype(np.float64).reshape(-1).copy())
                        for name, t in params.items()}
            worst, worst_abs = 0.0, 0.0
            for name, t in params.items():
                flat = t.data.reshape(-1)
                entries = np.arange(flat.size)
                if max_entries is not None and flat.size > max_entries:
                    entries = rng.choice(flat.size, size=max_entries, replace=False)
                for i in entries:
                    original = flat[i]
                    flat[i] = original + eps
                    f_plus = _value(f, params)
                    flat[i] = original - eps
                    f_minus = _value(f, params)
                    flat[i] = original
                    numeric = (f_plus - f_minus) / (2.0 * eps)
                    a = analytic[name][i]
                    err = abs(a - numeric)
                    worst = max(worst, err / max(abs(a), abs(numeric), floor))
                    worst_abs = max(worst_abs, err)
        finally:
            params.cast(np.float32)
            params.clear_grad()
            reset_tape()
    return float(worst), float(worst_abs)


def grad_check(f: Callable[[ParameterSet], Tensor], params: ParameterSet, eps: float = 1e-3,
               max_entries: Optional[int] = None, rng: Optional[np.random.Generator] = None,
               floor: float = 1e-2) -> float:
    """Maximum relative error of `grad_check_errors`."""
    return grad_check_errors(f, params, eps, max_entries, rng, floor)[0]
