"""Physics residual loss and collocation sampling.

Against a Dirac target at zero the squared 2-Wasserstein distance of a
residual's pushforward is its mean square, so the objective is a weighted
sum of mean-square interior, boundary and initial residuals over sampled
points and parameter draws.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import torch

from .core import RandomProblem, sample_parameters

STRATEGIES = ("uniform_random", "cartesian_product")
COUPLINGS = ("product", "paired")


class NonFiniteResidual(FloatingPointError):
    pass


@dataclass(frozen=True)
class LossWeights:
    interior: float = 1.0
    boundary: float = 1.0
    initial: float = 1.0

    def __post_init__(self):
        vals = (self.interior, self.boundary, self.initial)
        if any(w < 0 for w in vals) or not any(w > 0 for w in vals):
            raise ValueError(f"weights must be >= 0 with at least one > 0, got {vals}")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.interior * factor, self.boundary * factor, self.initial * factor)


@dataclass(frozen=True)
class CollocationBatch:
    """Collocation points plus a shared batch of parameter draws.

    ``interior_x`` and ``initial_x`` are ``None`` for ODE problems, where the
    initial term is the single point ``t = t0``. ``boundary`` pairs each
    boundary location with its sampled times.
    """

    interior_t: np.ndarray
    interior_x: Optional[np.ndarray] = None
    boundary: tuple[tuple[float, np.ndarray], ...] = ()
    initial_x: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None

    def with_xi(self, xi: np.ndarray) -> "CollocationBatch":
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if len(xi) < 1:
            raise ValueError("need at least one parameter draw")
        return replace(self, xi=xi)

    @property
    def n_interior(self) -> int:
        return len(self.interior_t)

    def permuted(self, seed: int) -> "CollocationBatch":
        """Same batch with every point set shuffled (for order-invariance checks)."""
        rng = np.random.default_rng(seed)
        perm = rng.permutation(self.n_interior)
        return CollocationBatch(
            self.interior_t[perm],
            None if self.interior_x is None else self.interior_x[perm],
            tuple((loc, rng.permutation(t)) for loc, t in self.boundary),
            None if self.initial_x is None else rng.permutation(self.initial_x),
            None if self.xi is None else self.xi[rng.permutation(len(self.xi))],
        )


def sample_collocation(problem: RandomProblem, n_x: int, n_t: int, n_boundary: int, n_initial: int,
                       strategy: str = "cartesian_product", seed=0) -> CollocationBatch:
    """Collocation points without parameter draws.

    Interior times are drawn from (t0, t1]; for ODEs the interior has ``n_t``
    points and ``n_x`` is ignored.
    """
    for name, n in (("n_x", n_x), ("n_t", n_t), ("n_boundary", n_boundary), ("n_initial", n_initial)):
        if n < 1:
            raise ValueError(f"{name} must be >= 1, got {n}")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    rng = np.random.default_rng(seed)
    t0, t1 = problem.domain.time_interval

    def times(n):
        return t1 - (t1 - t0) * rng.random(n)

    if not problem.domain.has_space:
        return CollocationBatch(interior_t=times(n_t))

    x0, x1 = problem.domain.space_interval
    if strategy == "cartesian_product":
        xs = x0 + (x1 - x0) * rng.random(n_x)
        ts = times(n_t)
        interior_x = np.tile(xs, n_t)
        interior_t = np.repeat(ts, n_x)
    else:
        interior_x = x0 + (x1 - x0) * rng.random(n_x * n_t)
        interior_t = times(n_x * n_t)
    boundary = tuple((b.location, times(n_boundary)) for b in problem.boundaries)
    initial_x = x0 + (x1 - x0) * rng.random(n_initial)
    return CollocationBatch(interior_t, interior_x, boundary, initial_x)


def resample_due(iteration: int, domain_period: int, param_period: int) -> tuple[bool, bool]:
    if domain_period < 1 or param_period < 1:
        raise ValueError("resample periods must be >= 1")
    if iteration <= 0:
        return False, False
    return iteration % domain_period == 0, iteration % param_period == 0


def _rows(n_points: int, n_xi: int, coupling: str):
    """Point and parameter row indices for one residual term."""
    if coupling == "product":
        return np.tile(np.arange(n_points), n_xi), np.repeat(np.arange(n_xi), n_points)
    n = max(n_points, n_xi)
    return np.arange(n) % n_points, np.arange(n) % n_xi


def _mean_square(res: torch.Tensor, where: str, xs, ts, xi) -> torch.Tensor:
    if not torch.all(torch.isfinite(res)):
        bad = int(torch.nonzero(~torch.isfinite(res))[0, 0])
        x_desc = "" if xs is None else f"x={float(xs[bad])}, "
        raise NonFiniteResidual(
            f"non-finite {where} residual at ({x_desc}t={float(ts[bad])}), xi={xi[bad].tolist()}")
    return torch.mean(res * res)


def residual_terms(measure, problem: RandomProblem, batch: CollocationBatch,
                   coupling: str = "product") -> dict[str, torch.Tensor]:
    """Mean-square interior, boundary and initial residuals (unweighted)."""
    if batch.xi is None:
        raise ValueError("collocation batch has no parameter draws")
    if coupling not in COUPLINGS:
        raise ValueError(f"unknown coupling {coupling!r}; choose from {COUPLINGS}")
    xi_all = torch.as_tensor(batch.xi)
    S = len(batch.xi)
    wanted = problem.derivatives
    has_space = problem.domain.has_space
    t_start = problem.domain.time_interval[0]
    out = {}

    pi, qi = _rows(batch.n_interior, S, coupling)
    t = torch.as_tensor(batch.interior_t[pi])
    x = torch.as_tensor(batch.interior_x[pi]) if has_space else None
    xi = xi_all[qi]
    ev = measure.evaluate(x, t, xi, wanted, check=False)
    out["interior"] = _mean_square(problem.interior_residual(ev, x, t, xi), "interior", x, t, xi)

    if problem.boundaries:
        parts = []
        for bnd, (loc, bt) in zip(problem.boundaries, batch.boundary):
            pi, qi = _rows(len(bt), S, coupling)
            t = torch.as_tensor(bt[pi])
            x = torch.full_like(t, loc)
            xi = xi_all[qi]
            ev = measure.evaluate(x, t, xi, frozenset(), check=False)
            parts.append(_mean_square(bnd.residual(ev, t, xi), f"boundary x={loc}", x, t, xi))
        out["boundary"] = torch.stack(parts).mean()
    else:
        out["boundary"] = torch.zeros(())

    n_init = len(batch.initial_x) if has_space else 1
    pi, qi = _rows(n_init, S, coupling)
    x = torch.as_tensor(batch.initial_x[pi]) if has_space else None
    t = torch.full((len(pi),), float(t_start))
    xi = xi_all[qi]
    ev = measure.evaluate(x, t, xi, frozenset(), check=False)
    out["initial"] = _mean_square(problem.initial_residual(ev, x, xi), "initial", x, t, xi)
    return out


def residual_loss(measure, problem: RandomProblem, batch: CollocationBatch,
                  weights: LossWeights = LossWeights(), coupling: str = "product") -> torch.Tensor:
    """Weighted sum of mean-square residual terms; differentiable in the measure's parameters."""
    terms = residual_terms(measure, problem, batch, coupling)
    return (weights.interior * terms["interior"] + weights.boundary * terms["boundary"]
            + weights.initial * terms["initial"])


def draw_batch(problem: RandomProblem, n_x: int, n_t: int, n_xi: int, n_boundary: int,
               n_initial: int, strategy: str, domain_seed, param_seed) -> CollocationBatch:
    batch = sample_collocation(problem, n_x, n_t, n_boundary, n_initial, strategy, domain_seed)
    return batch.with_xi(sample_parameters(problem.params, n_xi, param_seed))
