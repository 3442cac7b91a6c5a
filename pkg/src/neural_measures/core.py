"""Shared domain types: parameter spaces, domains, random problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

DERIVATIVES = frozenset({"t", "x", "xx"})


class InvalidSample(ValueError):
    """A parameter or space-time point lies outside its declared set."""


@dataclass(frozen=True)
class ParameterSpace:
    """Independent uniform parameters ``name ~ U(lower, upper)``."""

    entries: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        entries = tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ValueError("parameter space needs at least one entry")
        for name, lo, hi in entries:
            if not lo < hi:
                raise ValueError(f"parameter {name!r}: lower={lo} must be < upper={hi}")
        names = [e[0] for e in entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e[0] for e in self.entries]

    @property
    def lower(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries])

    @property
    def upper(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def sample(self, n: int, seed) -> np.ndarray:
        return sample_parameters(self, n, seed)

    def contains(self, xi, tol: float = 1e-12) -> bool:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        width = self.upper - self.lower
        return bool(
            np.all(xi >= self.lower - tol * width) and np.all(xi <= self.upper + tol * width)
        )


def sample_parameters(space: ParameterSpace, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. samples, shape ``(n, dim)``.

    ``seed`` is anything ``numpy.random.default_rng`` accepts, including a
    ``Generator`` (which is then advanced).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random((n, space.dim))
    return space.lower + u * (space.upper - space.lower)


def standardize_parameters(space: ParameterSpace, xi) -> np.ndarray:
    """Affine map of each coordinate onto [-1, 1]."""
    xi = np.asarray(xi, dtype=float)
    if not space.contains(xi):
        raise InvalidSample(f"parameter sample outside bounds {space.entries}")
    z = 2.0 * (xi - space.lower) / (space.upper - space.lower) - 1.0
    return np.clip(z, -1.0, 1.0)


def unstandardize_parameters(space: ParameterSpace, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return space.lower + 0.5 * (z + 1.0) * (space.upper - space.lower)


@dataclass(frozen=True)
class DomainSpec:
    time_interval: tuple[float, float]
    space_interval: Optional[tuple[float, float]] = None
    kind: str = "ode"

    def __post_init__(self):
        t0, t1 = self.time_interval
        if not t0 < t1:
            raise ValueError(f"time interval needs t0 < t1, got {self.time_interval}")
        if self.kind not in ("ode", "pde_1d"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "pde_1d":
            if self.space_interval is None:
                raise ValueError("pde_1d domain requires a space interval")
            x0, x1 = self.space_interval
            if not x0 < x1:
                raise ValueError(f"space interval needs x0 < x1, got {self.space_interval}")
        elif self.space_interval is not None:
            raise ValueError("ode domain takes no space interval")

    @property
    def has_space(self) -> bool:
        return self.kind == "pde_1d"

    def check(self, x, t, tol: float = 1e-10) -> None:
        """Raise ``InvalidSample`` if any (x, t) lies outside the closed domain."""
        t = _as_numpy(t)
        t0, t1 = self.time_interval
        span = t1 - t0
        if t.size and (t.min() < t0 - tol * span or t.max() > t1 + tol * span):
            raise InvalidSample(f"time outside [{t0}, {t1}]")
        if self.has_space:
            if x is None:
                raise InvalidSample("spatial coordinate required for a pde_1d domain")
            x = _as_numpy(x)
            x0, x1 = self.space_interval
            w = x1 - x0
            if x.size and (x.min() < x0 - tol * w or x.max() > x1 + tol * w):
                raise InvalidSample(f"space coordinate outside [{x0}, {x1}]")


def _as_numpy(a) -> np.ndarray:
    if isinstance(a, torch.Tensor):
        return a.detach().cpu().numpy()
    return np.asarray(a, dtype=float)


@dataclass
class ModelEval:
    """Model values and the input derivatives a residual asked for.

    All fields are tensors of a common shape; unrequested derivatives are
    ``None``.
    """

    u: torch.Tensor
    u_t: Optional[torch.Tensor] = None
    u_x: Optional[torch.Tensor] = None
    u_xx: Optional[torch.Tensor] = None

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, "u_" + name) is None:
                raise ValueError(f"derivative u_{name} was not computed")

    def map(self, fn) -> "ModelEval":
        return ModelEval(*(None if v is None else fn(v) for v in (self.u, self.u_t, self.u_x, self.u_xx)))


# interior(ev, x, t, xi) and initial(ev, x, xi) take paired rows: tensors of
# shape (N,) for x/t and (N, dim) for raw xi. x is None for ODEs.
InteriorResidual = Callable[[ModelEval, Optional[torch.Tensor], torch.Tensor, torch.Tensor], torch.Tensor]
BoundaryResidual = Callable[[ModelEval, torch.Tensor, torch.Tensor], torch.Tensor]
InitialResidual = Callable[[ModelEval, Optional[torch.Tensor], torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class Boundary:
    """Dirichlet-type residual on the line ``x = location``."""

    location: float
    residual: BoundaryResidual
    name: str = ""


@dataclass(frozen=True)
class RandomProblem:
    name: str
    domain: DomainSpec
    params: ParameterSpace
    interior_residual: InteriorResidual
    initial_residual: InitialResidual
    boundaries: tuple[Boundary, ...] = ()
    exact_solution: Optional[Callable] = None
    derivatives: frozenset = field(default_factory=lambda: frozenset({"t"}))

    def __post_init__(self):
        object.__setattr__(self, "boundaries", tuple(self.boundaries))
        object.__setattr__(self, "derivatives", frozenset(self.derivatives))
        unknown = self.derivatives - DERIVATIVES
        if unknown:
            raise ValueError(f"unknown derivative names {sorted(unknown)}")
        if self.domain.has_space:
            x0, x1 = self.domain.space_interval
            for b in self.boundaries:
                if b.location not in (x0, x1):
                    raise ValueError(f"boundary at x={b.location} is not an endpoint of {self.domain.space_interval}")
        elif self.boundaries:
            raise ValueError("ODE problems have no spatial boundaries")

    @property
    def space_time_dim(self) -> int:
        return 2 if self.domain.has_space else 1

    def xi_columns(self, xi: torch.Tensor) -> dict[str, torch.Tensor]:
        return {name: xi[..., i] for i, name in enumerate(self.params.names)}


def check_wanted(wanted: Sequence[str]) -> frozenset:
    wanted = frozenset(wanted)
    unknown = wanted - DERIVATIVES
    if unknown:
        raise ValueError(f"unknown derivative request {sorted(unknown)}; choose from {sorted(DERIVATIVES)}")
    return wanted
