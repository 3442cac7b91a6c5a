"""Reaction-diffusion ``u_t - D u_xx + g u^3 = f`` on [-1, 1] x [0, 4].

``g(x) = 0.2 + exp(r1 x) cos^2(r2 x)`` and
``f(x) = exp(-(x - 0.25)^2 / (2 k1^2)) sin^2(k2 x)``; ``u = 0.5`` on both
walls and ``u(0, x) = 0.5 cos^2(pi x)``.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from ..core import Boundary, DomainSpec, ParameterSpace, RandomProblem

DIFFUSIVITY = 0.01
T_FINAL = 4.0
WALL_VALUE = 0.5
PARAMS = ParameterSpace((("r1", 0.5, 1.0), ("r2", 3.0, 4.0), ("k1", 0.2, 0.8), ("k2", 1.0, 4.0)))
DOMAIN = DomainSpec((0.0, T_FINAL), (-1.0, 1.0), "pde_1d")


class NewtonFailure(RuntimeError):
    pass


def _lib(v):
    return torch if isinstance(v, torch.Tensor) else np


def reaction_g(x, r1, r2):
    lib = _lib(x)
    return 0.2 + lib.exp(r1 * x) * lib.cos(r2 * x) ** 2


def forcing_f(x, k1, k2):
    lib = _lib(x)
    return lib.exp(-((x - 0.25) ** 2) / (2.0 * k1 ** 2)) * lib.sin(k2 * x) ** 2


def initial_profile(x):
    lib = _lib(x)
    return 0.5 * lib.cos(math.pi * x) ** 2


def _interior(ev, x, t, xi):
    g = reaction_g(x, xi[:, 0], xi[:, 1])
    f = forcing_f(x, xi[:, 2], xi[:, 3])
    return ev.u_t - DIFFUSIVITY * ev.u_xx + g * ev.u ** 3 - f


def _wall(ev, t, xi):
    return ev.u - WALL_VALUE


def _initial(ev, x, xi):
    return ev.u - initial_profile(x)


def make_problem() -> RandomProblem:
    return RandomProblem(
        name="reaction_diffusion",
        domain=DOMAIN,
        params=PARAMS,
        interior_residual=_interior,
        initial_residual=_initial,
        boundaries=(Boundary(-1.0, _wall, "left"), Boundary(1.0, _wall, "right")),
        derivatives=frozenset({"t", "xx"}),
    )


def _thomas(lower: float, diag: np.ndarray, upper: float, rhs: np.ndarray) -> np.ndarray:
    """Solve tridiagonal systems with constant off-diagonals.

    ``diag`` and ``rhs`` have shape ``(n, S)``: node index first, batch second.
    """
    n = diag.shape[0]
    c = np.empty_like(diag)
    d = np.empty_like(rhs)
    c[0] = upper / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower * c[i - 1]
        c[i] = upper / denom
        d[i] = (rhs[i] - lower * d[i - 1]) / denom
    out = np.empty_like(rhs)
    out[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        out[i] = d[i] - c[i] * out[i + 1]
    return out


def crank_nicolson_cubic(g, f, u_init, left, right, diffusivity, t_final, nt,
                         keep=None, length: float = 2.0, tol: float = 1e-10,
                         max_newton: int = 30):
    """Crank-Nicolson for ``u_t = D u_xx - g u^3 + f`` with Dirichlet walls.

    ``g``, ``f``, ``u_init`` have shape ``(S, nx+1)`` on a uniform grid of
    the given ``length``. ``keep`` selects the time levels returned (default
    all). Returns ``(S, len(keep), nx+1)``.
    """
    g = np.atleast_2d(g)
    f = np.atleast_2d(f)
    u = np.array(np.broadcast_to(u_init, g.shape), dtype=float)
    n_nodes = g.shape[1]
    nx = n_nodes - 1
    dx = length / nx
    dt = t_final / nt
    keep = np.arange(nt + 1) if keep is None else np.asarray(keep, dtype=int)
    out = np.empty((g.shape[0], len(keep), n_nodes))
    slot = {int(k): i for i, k in enumerate(keep)}

    u[:, 0] = left
    u[:, -1] = right
    # interior unknowns, stored node-major for the batched tridiagonal sweep
    gi = g[:, 1:-1].T
    fi = f[:, 1:-1].T
    v = u[:, 1:-1].T.copy()
    lam = diffusivity / dx ** 2
    off = -0.5 * dt * lam

    def operator(w):
        lap = -2.0 * w
        lap[1:] += w[:-1]
        lap[:-1] += w[1:]
        lap[0] += left
        lap[-1] += right
        return lam * lap - gi * w ** 3 + fi

    if 0 in slot:
        out[:, slot[0], :] = u
    for step in range(1, nt + 1):
        explicit = v + 0.5 * dt * operator(v)
        w = v.copy()
        for _ in range(max_newton):
            resid = w - 0.5 * dt * operator(w) - explicit
            diag = 1.0 + 0.5 * dt * (2.0 * lam + 3.0 * gi * w ** 2)
            delta = _thomas(off, diag, off, resid)
            w -= delta
            if np.max(np.abs(delta)) < tol:
                break
        else:
            raise NewtonFailure(
                f"Newton did not converge at step {step}; try a smaller time step (more nt)")
        v = w
        if step in slot:
            out[:, slot[step], 0] = left
            out[:, slot[step], -1] = right
            out[:, slot[step], 1:-1] = v.T
    return out


def solve_reaction_diffusion_reference(r1, r2, k1, k2, nx: int = 160, nt: int = 400, keep=None):
    """Method-of-lines reference: central differences in x, Crank-Nicolson in t.

    Parameters broadcast to ``(S,)``. Returns ``(x_nodes, t_levels, field)``
    with ``field`` of shape ``(S, len(t_levels), nx+1)``.
    """
    if nx < 16 or nt < 16:
        raise ValueError("nx and nt must be >= 16")
    r1, r2, k1, k2 = (np.atleast_1d(np.asarray(p, dtype=float)) for p in (r1, r2, k1, k2))
    r1, r2, k1, k2 = np.broadcast_arrays(r1, r2, k1, k2)
    x = np.linspace(-1.0, 1.0, nx + 1)
    g = reaction_g(x[None, :], r1[:, None], r2[:, None])
    f = forcing_f(x[None, :], k1[:, None], k2[:, None])
    u0 = np.broadcast_to(initial_profile(x), g.shape)
    keep = np.arange(nt + 1) if keep is None else np.asarray(keep, dtype=int)
    field = crank_nicolson_cubic(g, f, u0, WALL_VALUE, WALL_VALUE, DIFFUSIVITY, T_FINAL, nt, keep)
    return x, keep * (T_FINAL / nt), field
