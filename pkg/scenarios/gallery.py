"""
Closed-form functions used by the counterexample scenarios.

The bump b(x) = exp(-1/(1 - x^2)) on (-1, 1), the smooth step g that
rises from 0 at x = -1 to 1 at x = 0, its reflection h(x) = g(-x), the
one-sided powers x_+^k and their derivatives. Everything is vectorised
over numpy arrays.
"""

from functools import lru_cache
import math

import numpy as np
from scipy.integrate import cumulative_simpson

from transport_core.exceptions import PreconditionError


DEFAULT_PANELS = 2 ** 12
MIN_PANELS = 16


def bump(x):
    """b(x) = exp(-1/(1 - x^2)) for |x| < 1, else 0.

    Example:
        >>> round(float(bump(0.0)), 7)
        0.3678794
    """
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    safe = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe * safe)), 0.0)


def bump_derivative(x):
    """b'(x) = -2x b(x) / (1 - x^2)^2."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    safe = np.where(inside, x, 0.0)
    return np.where(inside, -2.0 * safe * bump(safe) / (1.0 - safe * safe) ** 2, 0.0)


class SmoothStep:
    """Normalised primitive of the bump, rescaled to rise on [-1, 0].

    The primitive of b on [-1, 1] is tabulated once with cumulative Simpson
    on ``panels`` panels; a point between table nodes adds one Simpson panel
    from the node below it.
    """

    def __init__(self, panels: int = DEFAULT_PANELS):
        if panels < MIN_PANELS or panels % 2:
            raise PreconditionError(f"Quadrature needs an even panel count >= {MIN_PANELS}, got {panels}")
        self.panels = panels
        self.nodes = np.linspace(-1.0, 1.0, panels + 1)
        self.width = 2.0 / panels
        table = cumulative_simpson(bump(self.nodes), x=self.nodes, initial=0.0)
        self.total = float(table[-1])
        self.table = table

    def primitive(self, u) -> np.ndarray:
        """int_{-1}^{u} b, clamped outside [-1, 1]."""
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        k = np.clip(np.floor((u + 1.0) / self.width).astype(int), 0, self.panels)
        base = self.nodes[k]
        span = u - base
        partial = span / 6.0 * (bump(base) + 4.0 * bump(base + span / 2) + bump(u))
        return self.table[k] + partial

    def __call__(self, x) -> np.ndarray:
        """g(x): 0 for x <= -1, 1 for x >= 0."""
        x = np.asarray(x, dtype=float)
        value = self.primitive(2.0 * x + 1.0) / self.total
        return np.where(x <= -1.0, 0.0, np.where(x >= 0.0, 1.0, value))

    def derivative(self, x) -> np.ndarray:
        """g'(x) = 2 b(2x + 1) / int b."""
        return 2.0 * bump(2.0 * np.asarray(x, dtype=float) + 1.0) / self.total


@lru_cache(maxsize=8)
def get_smooth_step(panels: int = DEFAULT_PANELS) -> SmoothStep:
    return SmoothStep(panels)


def smooth_step(x, panels: int = DEFAULT_PANELS):
    """g(x) with ``panels`` quadrature panels.

    Example:
        >>> round(smooth_step(-0.5), 10)
        0.5
    """
    value = get_smooth_step(panels)(x)
    return float(value) if np.ndim(x) == 0 else value


def reflected_step(x, panels: int = DEFAULT_PANELS):
    """h(x) = g(-x): 1 for x <= 0, 0 for x >= 1."""
    value = get_smooth_step(panels)(-np.asarray(x, dtype=float))
    return float(value) if np.ndim(x) == 0 else value


def reflected_step_derivative(x, panels: int = DEFAULT_PANELS):
    return -get_smooth_step(panels).derivative(-np.asarray(x, dtype=float))


def positive_power(x, k: int):
    """x_+^k: 0 for x < 0, x^k otherwise."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, np.maximum(x, 0.0) ** k, 0.0)


def positive_power_derivative(x, k: int):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, k * np.maximum(x, 0.0) ** (k - 1), 0.0)


def expected_jump(n: int) -> float:
    """b(0)^(n-1): the jump of the noextension section across x_n = 0."""
    return math.exp(-(n - 1))
