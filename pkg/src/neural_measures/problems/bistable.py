"""Bistable scalar ODE ``du/dt = r (u-1)(2-u)(u-3)`` with random ``u0`` and ``r``.

Equilibria 1 and 3 are stable, 2 is unstable.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import DomainSpec, ParameterSpace, RandomProblem

T_FINAL = 8.0
PARAMS = ParameterSpace((("u0", 0.0, 4.0), ("r", 0.8, 1.2)))


class NewtonFailure(RuntimeError):
    pass


def bistable_rhs(u, r):
    return r * (u - 1.0) * (2.0 - u) * (u - 3.0)


def _rhs_du(u, r):
    # d/du of r(u-1)(2-u)(u-3) = -r (3u^2 - 12u + 11)
    return -r * (3.0 * u * u - 12.0 * u + 11.0)


def _interior(ev, x, t, xi):
    return ev.u_t - bistable_rhs(ev.u, xi[:, 1])


def _initial(ev, x, xi):
    return ev.u - xi[:, 0]


def make_problem() -> RandomProblem:
    return RandomProblem(
        name="bistable",
        domain=DomainSpec((0.0, T_FINAL), None, "ode"),
        params=PARAMS,
        interior_residual=_interior,
        initial_residual=_initial,
        derivatives=frozenset({"t"}),
    )


def solve_bistable_reference(u0, r, t_grid, max_step: float = 1e-3,
                             tol: float = 1e-12, max_newton: int = 50) -> np.ndarray:
    """Backward Euler with a Newton solve per step, vectorized over draws.

    ``u0`` and ``r`` broadcast to a common shape ``(S,)``; ``t_grid`` is
    ascending and starts at 0. Returns ``(S, len(t_grid))``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a nonempty 1-D array")
    if t_grid[0] < 0 or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be ascending from 0")
    u0, r = np.broadcast_arrays(np.atleast_1d(np.asarray(u0, dtype=float)),
                                np.atleast_1d(np.asarray(r, dtype=float)))
    u = u0.astype(float).copy()
    out = np.empty(u.shape + (t_grid.size,))
    t_now = 0.0
    for j, t_target in enumerate(t_grid):
        span = t_target - t_now
        if span > 0:
            n_steps = max(1, math.ceil(span / max_step - 1e-9))
            h = span / n_steps
            for _ in range(n_steps):
                u = _backward_euler_step(u, r, h, tol, max_newton)
            t_now = t_target
        out[:, j] = u
    return out


def _backward_euler_step(u_prev, r, h, tol, max_newton):
    v = u_prev + h * bistable_rhs(u_prev, r)
    for _ in range(max_newton):
        residual = v - h * bistable_rhs(v, r) - u_prev
        step = residual / (1.0 - h * _rhs_du(v, r))
        v = v - step
        if np.max(np.abs(step)) < tol:
            return v
    raise NewtonFailure(f"Newton did not converge within {max_newton} iterations (h={h})")
