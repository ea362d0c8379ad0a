"""
Parameter-dependent fundamental matrix solutions.

For a coefficient map A(t, y) the fundamental solution X(t, y) solves
X' = A(t, y) X with X(t0, y) = I. The sweep over parameter nodes is
vectorised: every RK4 stage evaluates A once for all parameters.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union
import logging
import time

import numpy as np
import pandas as pd
from scipy.integrate import simpson

from transport_core.exceptions import EvaluationError, NumericError, PreconditionError
from transport_core.logging_config import StructuredLogger
from transport_core.sets import Grid
from utils.numerics import rk4_trajectory


logger = logging.getLogger(__name__)
structured = StructuredLogger(__name__)

# (t, Y) with Y of shape (P, m) -> (P, r, r)
CoefficientMap = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FundamentalSolution:
    """Fundamental matrices on a time x parameter grid.

    Attributes:
        t0: Base time; X(t0, y) is the identity
        times: Sorted time nodes, t0 included
        params: Parameter nodes, shape (P, m)
        param_shape: Grid shape of the parameter nodes (P,) for scattered nodes
        matrices: X per (time node, parameter node), shape (T, P, r, r)
        base_index: Position of t0 in ``times``
        step: RK4 step used
    """
    t0: float
    times: np.ndarray
    params: np.ndarray
    param_shape: Tuple[int, ...]
    matrices: np.ndarray
    base_index: int
    step: float

    @property
    def rank(self) -> int:
        return self.matrices.shape[-1]

    def at_time(self, t: float) -> np.ndarray:
        """Matrices at the time node equal to ``t``, shape (P, r, r)."""
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-12))
        if hits.size == 0:
            raise PreconditionError(f"t={t} is not a node of the time grid")
        return self.matrices[hits[0]]

    def to_dataframe(self) -> pd.DataFrame:
        """Rows per (time, parameter): time, y_1..y_m, x_11..x_rr (row-major)."""
        T, P, r, _ = self.matrices.shape
        m = self.params.shape[1]
        data = {"time": np.repeat(self.times, P)}
        tiled = np.tile(self.params, (T, 1))
        data.update({f"y_{k + 1}": tiled[:, k] for k in range(m)})
        flat = self.matrices.reshape(T * P, r * r)
        data.update({f"x_{a + 1}{b + 1}": flat[:, a * r + b] for a in range(r) for b in range(r)})
        return pd.DataFrame(data)


def _parameter_nodes(param_grid: Union[Grid, np.ndarray, Sequence]) -> Tuple[np.ndarray, Tuple[int, ...]]:
    if isinstance(param_grid, Grid):
        return param_grid.points, param_grid.shape
    params = np.asarray(param_grid, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    return params, (params.shape[0],)


def evaluate_coefficient(A: CoefficientMap, t: float, params: np.ndarray, rank: Optional[int] = None) -> np.ndarray:
    """A(t, params) as a checked (P, r, r) array.

    Raises:
        EvaluationError: If A fails or is not finite; carries t and the first bad y
    """
    try:
        values = np.asarray(A(t, params), dtype=float)
    except (ArithmeticError, ValueError) as e:
        raise EvaluationError(f"Coefficient evaluation failed at t={t}: {e}", t=t, location=params[0]) from e

    if values.ndim == 2 and rank in (None, 1) and values.shape[-1] == 1:
        values = values.reshape(-1, 1, 1)
    if values.ndim != 3 or values.shape[0] != params.shape[0] or values.shape[1] != values.shape[2]:
        raise EvaluationError(
            f"Coefficient map returned shape {values.shape}, expected ({params.shape[0]}, r, r)",
            t=t, location=params[0]
        )
    finite = np.isfinite(values).all(axis=(1, 2))
    if not finite.all():
        bad = params[np.argmin(finite)]
        raise EvaluationError(f"Coefficient is not finite at t={t}, y={tuple(bad)}", t=t, location=bad)
    return values


def fundamental_matrix(
    A: CoefficientMap,
    t0: float,
    time_grid: Sequence[float],
    param_grid: Union[Grid, np.ndarray, Sequence],
    step: float
) -> FundamentalSolution:
    """Integrate X' = A(t, y) X from t0 in both time directions.

    Args:
        A: Coefficient map, vectorised over parameter nodes
        t0: Base time inside the span of ``time_grid``; added to the grid if missing
        time_grid: Time nodes
        param_grid: Parameter Grid or array of parameter nodes
        step: Maximal RK4 step

    Raises:
        PreconditionError: If t0 is outside the time interval or step <= 0
        EvaluationError: If A fails at some (t, y)
    """
    if step <= 0:
        raise PreconditionError(f"step must be positive, got {step}")
    grid_times = np.asarray(time_grid, dtype=float)
    if grid_times.size == 0 or not (grid_times.min() <= t0 <= grid_times.max()):
        raise PreconditionError(f"t0={t0} lies outside the time interval")

    times = np.unique(np.append(grid_times, float(t0)))
    base = int(np.searchsorted(times, t0))
    params, param_shape = _parameter_nodes(param_grid)
    P = params.shape[0]

    rank = evaluate_coefficient(A, float(t0), params).shape[-1]
    identity = np.broadcast_to(np.eye(rank), (P, rank, rank)).copy()

    def rhs(t: float, X: np.ndarray) -> np.ndarray:
        return evaluate_coefficient(A, t, params, rank) @ X

    started = time.perf_counter()
    structured.debug("Fundamental sweep started", extra={
        "t0": float(t0), "time_nodes": int(times.size), "parameters": P, "rank": rank, "step": step
    })

    matrices = np.empty((times.size, P, rank, rank))
    matrices[base:] = rk4_trajectory(rhs, identity, times[base:], step)
    matrices[:base + 1] = rk4_trajectory(rhs, identity, times[base::-1], step)[::-1]
    matrices[base] = identity

    structured.debug("Fundamental sweep complete", extra={
        "elapsed_s": round(time.perf_counter() - started, 4)
    })
    return FundamentalSolution(
        t0=float(t0), times=times, params=params, param_shape=param_shape,
        matrices=matrices, base_index=base, step=step
    )


def liouville_defect(fs: FundamentalSolution, A: CoefficientMap, panels: int = 16) -> float:
    """max |det X(t, y) - exp(int_{t0}^{t} trace A(tau, y) dtau)| over all nodes.

    The trace integral uses composite Simpson with ``panels`` sub-panels on
    every interval of the time grid.
    """
    if panels < 2 or panels % 2:
        raise PreconditionError(f"Simpson needs an even panel count, got {panels}")

    T = fs.times.size
    increments = np.zeros((T, fs.params.shape[0]))
    for k in range(T - 1):
        taus = np.linspace(fs.times[k], fs.times[k + 1], panels + 1)
        traces = np.stack([
            np.trace(evaluate_coefficient(A, float(tau), fs.params, fs.rank), axis1=1, axis2=2)
            for tau in taus
        ])
        increments[k + 1] = simpson(traces, x=taus, axis=0)

    cumulative = np.cumsum(increments, axis=0)
    integrals = cumulative - cumulative[fs.base_index]
    determinants = np.linalg.det(fs.matrices)
    defect = float(np.max(np.abs(determinants - np.exp(integrals))))
    logger.debug(f"Liouville defect {defect:.3e} over {T} time nodes")
    return defect


def parameter_continuity_modulus(fs: FundamentalSolution) -> float:
    """max ||X(t, y) - X(t, y')||_F / ||y - y'|| over parameter-grid neighbours.

    Raises:
        PreconditionError: If some parameter axis has fewer than two nodes
        NumericError: If the modulus is not finite
    """
    shape = fs.param_shape
    if any(count < 2 for count in shape):
        raise PreconditionError(f"Need at least two parameter nodes per axis, got shape {shape}")

    T, _, r, _ = fs.matrices.shape
    X = fs.matrices.reshape((T,) + shape + (r, r))
    Y = fs.params.reshape(shape + (fs.params.shape[1],))

    modulus = 0.0
    for axis in range(len(shape)):
        dX = np.linalg.norm(np.diff(X, axis=axis + 1), axis=(-2, -1))
        dY = np.linalg.norm(np.diff(Y, axis=axis), axis=-1)
        modulus = max(modulus, float(np.max(dX / dY[None])))

    if not np.isfinite(modulus):
        raise NumericError("Parameter continuity modulus is not finite")
    return modulus
