"""Central finite-difference gradient checking."""

from typing import Callable, Sequence

import numpy as np

from crossl.kernel.tensor import Parameter, Tensor, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-2) -> np.ndarray:
    """
    Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    Entries whose magnitude is below ``floor`` are compared in absolute terms:
    a tolerance ``tol`` on this error bounds ``|a - n|`` by ``tol * floor``
    there. Pass a smaller floor for a stricter check on tiny gradients.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def gradient_check(
    fn: Callable[[Sequence[Tensor]], Tensor],
    arrays: Sequence[np.ndarray],
    h: float = 1e-5,
    floor: float = 1e-2,
) -> float:
    """
    Compare backward() against central differences.

    Args:
        fn: Builds a scalar loss from one tensor per input array
        arrays: Points at which to check
        h: Finite-difference step
        floor: Denominator floor of the relative error (see ``relative_error``)

    Returns:
        Worst elementwise relative error across all inputs
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    params = [Parameter(a, name=f"input{i}") for i, a in enumerate(arrays)]
    backward(fn(params))

    worst = 0.0
    for index, base in enumerate(arrays):
        numeric = np.zeros_like(base)
        for position in np.ndindex(base.shape):
            probes = []
            for step in (h, -h):
                shifted = [a.copy() for a in arrays]
                shifted[index][position] += step
                probes.append(fn([Tensor(a) for a in shifted]).item())
            numeric[position] = (probes[0] - probes[1]) / (2.0 * h)
        if base.size:
            worst = max(worst, float(relative_error(params[index].grad, numeric, floor).max()))
    return worst
