"""
Numerical helpers shared by the transport, fundamental-solution and
extension code: a fixed-step classical Runge-Kutta integrator and decimal
formatting of results.
"""

import math
from typing import Callable, Sequence

import numpy as np

from transport_core.exceptions import PreconditionError


# (t, y) -> dy/dt, y of any array shape
RightHandSide = Callable[[float, np.ndarray], np.ndarray]

SIGNIFICANT_DIGITS = 12


def substep_count(span: float, step: float) -> int:
    """Number of equal RK4 substeps needed so that none exceeds ``step``."""
    if step <= 0:
        raise PreconditionError(f"Integrator step must be positive, got {step}")
    # tolerance keeps exact multiples (e.g. 1.0 / 1e-3) from gaining a step
    return max(1, math.ceil(abs(span) / step - 1e-9))


def rk4_integrate(
    rhs: RightHandSide,
    y0: np.ndarray,
    t_start: float,
    t_end: float,
    step: float
) -> np.ndarray:
    """Integrate y' = rhs(t, y) from t_start to t_end with classical RK4.

    The interval is split into equal substeps no longer than ``step``;
    integration runs backwards when t_end < t_start.

    Args:
        rhs: Right-hand side, vectorised over the shape of y
        y0: Initial value
        t_start: Initial time
        t_end: Final time
        step: Maximal substep length (> 0)

    Returns:
        Value at t_end
    """
    y = np.array(y0, dtype=float, copy=True)
    if t_end == t_start:
        return y

    n = substep_count(t_end - t_start, step)
    h = (t_end - t_start) / n
    t = t_start
    for j in range(n):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + (h / 2) * k1)
        k3 = rhs(t + h / 2, y + (h / 2) * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_start + (j + 1) * h
    return y


def rk4_trajectory(
    rhs: RightHandSide,
    y0: np.ndarray,
    times: Sequence[float],
    step: float
) -> np.ndarray:
    """Integrate through a monotone sequence of times, keeping every value.

    ``times[0]`` is the initial time. Returns an array whose first axis runs
    over ``times``.
    """
    values = [np.array(y0, dtype=float, copy=True)]
    for t_prev, t_next in zip(times[:-1], times[1:]):
        values.append(rk4_integrate(rhs, values[-1], t_prev, t_next, step))
    return np.stack(values)


def format_number(value: float, digits: int = SIGNIFICANT_DIGITS) -> str:
    """Render a real number in positional decimal with ``digits`` significant digits."""
    if not math.isfinite(value):
        return str(value)
    return np.format_float_positional(
        float(value), precision=digits, unique=False, fractional=False, trim="0"
    )


def format_vector(values: Sequence[float], digits: int = SIGNIFICANT_DIGITS) -> str:
    """Comma-separated rendering of a vector."""
    return ",".join(format_number(v, digits) for v in np.ravel(values))
