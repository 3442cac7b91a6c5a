"""Diffusion ``u_t - (a/k^2) u_xx = 0`` on [0, pi] x [0, 1] with random ``a``, ``k``.

Exact solution ``exp(-a t) sin(k x)``.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from ..core import Boundary, DomainSpec, ParameterSpace, RandomProblem

PARAMS = ParameterSpace((("a", 1.0, 3.0), ("k", 1.0, 3.0)))
DOMAIN = DomainSpec((0.0, 1.0), (0.0, math.pi), "pde_1d")


def _lib(v):
    return torch if isinstance(v, torch.Tensor) else np


def diffusion_exact(a, k, x, t):
    lib = _lib(x) if isinstance(x, torch.Tensor) else _lib(t)
    return lib.exp(-a * t) * lib.sin(k * x)


def _exact(x, t, xi):
    return diffusion_exact(xi[:, 0], xi[:, 1], x, t)


def _interior(ev, x, t, xi):
    a, k = xi[:, 0], xi[:, 1]
    return ev.u_t - a / k ** 2 * ev.u_xx


def _left(ev, t, xi):
    return ev.u


def _right(ev, t, xi):
    a, k = xi[:, 0], xi[:, 1]
    return ev.u - torch.exp(-a * t) * torch.sin(math.pi * k)


def _initial(ev, x, xi):
    return ev.u - torch.sin(xi[:, 1] * x)


def make_problem() -> RandomProblem:
    return RandomProblem(
        name="diffusion",
        domain=DOMAIN,
        params=PARAMS,
        interior_residual=_interior,
        initial_residual=_initial,
        boundaries=(Boundary(0.0, _left, "left"), Boundary(math.pi, _right, "right")),
        exact_solution=_exact,
        derivatives=frozenset({"t", "xx"}),
    )
