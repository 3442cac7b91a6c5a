"""Benchmark random problems and their reference ensembles."""

from __future__ import annotations

import hashlib
import math
import os
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..core import RandomProblem, sample_parameters
from ..metrics import EmpiricalEnsemble
from . import bistable, diffusion, reaction_diffusion
from .bistable import bistable_rhs, solve_bistable_reference
from .diffusion import diffusion_exact
from .reaction_diffusion import forcing_f, reaction_g, solve_reaction_diffusion_reference

PROBLEMS: dict[str, Callable[[], RandomProblem]] = {
    "bistable": bistable.make_problem,
    "diffusion": diffusion.make_problem,
    "reaction_diffusion": reaction_diffusion.make_problem,
}

# (x values, t values) of the default reference grids
DEFAULT_GRIDS = {
    "bistable": (None, np.linspace(0.0, bistable.T_FINAL, 33)),
    "diffusion": (np.linspace(0.0, math.pi, 17), np.linspace(0.0, 1.0, 11)),
    "reaction_diffusion": (np.linspace(-1.0, 1.0, 21), np.linspace(0.0, reaction_diffusion.T_FINAL, 17)),
}

CACHE_ENV = "NEURAL_MEASURES_CACHE"


def get_problem(name: str) -> RandomProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def cartesian_grid(x_values: Optional[np.ndarray], t_values) -> tuple[np.ndarray, np.ndarray]:
    """Flatten an (x, t) product grid, time-major. ODE grids get ``x = 0``."""
    t_values = np.asarray(t_values, dtype=float)
    if x_values is None:
        return np.zeros_like(t_values), t_values.copy()
    x_values = np.asarray(x_values, dtype=float)
    return np.tile(x_values, t_values.size), np.repeat(t_values, x_values.size)


def reference_ensemble(name: str, n_samples: int, seed: int, x_values=None, t_values=None,
                       rd_resolution: tuple[int, int] = (160, 400), chunk: int = 2500) -> EmpiricalEnsemble:
    """Ground-truth ensemble for ``n_samples`` parameter draws on a product grid."""
    problem = get_problem(name)
    dx, dt = DEFAULT_GRIDS[name]
    x_values = dx if x_values is None else np.asarray(x_values, dtype=float)
    t_values = dt if t_values is None else np.asarray(t_values, dtype=float)
    if not problem.domain.has_space:
        x_values = None
    problem.domain.check(x_values, t_values)
    xi = sample_parameters(problem.params, n_samples, seed)
    gx, gt = cartesian_grid(x_values, t_values)

    if name == "bistable":
        values = solve_bistable_reference(xi[:, 0], xi[:, 1], t_values)
    elif name == "diffusion":
        values = diffusion_exact(xi[:, :1], xi[:, 1:2], gx[None, :], gt[None, :])
    elif name == "reaction_diffusion":
        values = _reaction_diffusion_on_grid(xi, x_values, t_values, rd_resolution, chunk)
    else:  # pragma: no cover - registry and branches move together
        raise ValueError(name)
    meta = {"problem": name, "seed": seed, "kind": "reference"}
    return EmpiricalEnsemble(values, gx, gt, meta)


def _reaction_diffusion_on_grid(xi, x_values, t_values, resolution, chunk):
    nx, nt = resolution
    dt = reaction_diffusion.T_FINAL / nt
    levels = np.rint(t_values / dt).astype(int)
    if not np.allclose(levels * dt, t_values, atol=1e-9):
        raise ValueError(f"reference times must be multiples of the solver step {dt}")
    out = []
    for start in range(0, len(xi), chunk):
        p = xi[start:start + chunk]
        x_nodes, _, field = solve_reaction_diffusion_reference(
            p[:, 0], p[:, 1], p[:, 2], p[:, 3], nx=nx, nt=nt, keep=levels)
        # linear interpolation in x onto the requested points
        pos = np.interp(x_values, x_nodes, np.arange(x_nodes.size))
        lo = np.clip(np.floor(pos).astype(int), 0, x_nodes.size - 2)
        w = pos - lo
        sampled = field[:, :, lo] * (1 - w) + field[:, :, lo + 1] * w  # (S, nT, nX)
        out.append(sampled.reshape(len(p), -1))
    return np.concatenate(out, axis=0)


def cache_root() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "neural_measures"))


def cache_key(name: str, n_samples: int, seed: int, gx, gt) -> str:
    digest = hashlib.sha256(np.ascontiguousarray(np.stack([gx, gt])).tobytes()).hexdigest()[:16]
    return f"{name}-n{n_samples}-s{seed}-{digest}"


def cached_reference(name: str, n_samples: int, seed: int, x_values=None, t_values=None,
                     root: Optional[Path] = None) -> tuple[Path, bool]:
    """Reference ensemble CSV from the cache, computing it on a miss.

    Returns ``(path, hit)``. Writes go through a temporary file and an atomic
    rename.
    """
    dx, dt = DEFAULT_GRIDS[name]
    x_values = dx if x_values is None else x_values
    t_values = dt if t_values is None else t_values
    problem = get_problem(name)
    gx, gt = cartesian_grid(x_values if problem.domain.has_space else None, t_values)
    root = Path(root) if root is not None else cache_root()
    root.mkdir(parents=True, exist_ok=True)
    path = root / (cache_key(name, n_samples, seed, gx, gt) + ".csv")
    if path.exists():
        return path, True
    ens = reference_ensemble(name, n_samples, seed, x_values, t_values)
    ens.to_csv(path)
    return path, False


__all__ = [
    "PROBLEMS", "DEFAULT_GRIDS", "get_problem", "cartesian_grid", "reference_ensemble",
    "cached_reference", "cache_root", "bistable_rhs", "solve_bistable_reference",
    "diffusion_exact", "reaction_g", "forcing_f", "solve_reaction_diffusion_reference",
]
