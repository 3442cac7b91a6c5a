"""Neural measures: maps from parameters to solution fields.

Three variants share one interface. ``evaluate`` works on paired rows
``(x_i, t_i, xi_i)`` and ``evaluate_grid`` on the product of a sample batch
with a point set, returning arrays of shape ``(n_samples, n_points)``.
Parameters are always standardized to [-1, 1] before they reach a network
or a chaos basis; space and time enter in physical units.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
import torch
from torch import nn

from .core import DomainSpec, InvalidSample, ModelEval, RandomProblem, check_wanted
from .networks import MLP, MLPArchitecture
from .pce import ChaosBasis, build_basis, eval_basis

VARIANTS = ("fullnn", "pce_nn", "galerkin_nn")


def _tensor(a) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a.to(torch.float64)
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


def chebyshev_with_derivatives(z: torch.Tensor, degree: int):
    """T_n(z), T_n'(z), T_n''(z) for n = 0..degree, each of shape ``(N, degree+1)``."""
    T = [torch.ones_like(z), z]
    dT = [torch.zeros_like(z), torch.ones_like(z)]
    d2T = [torch.zeros_like(z), torch.zeros_like(z)]
    for n in range(1, degree):
        T.append(2 * z * T[n] - T[n - 1])
        dT.append(2 * T[n] + 2 * z * dT[n] - dT[n - 1])
        d2T.append(4 * dT[n] + 2 * z * d2T[n] - d2T[n - 1])
    k = degree + 1
    return (torch.stack(T[:k], -1), torch.stack(dT[:k], -1), torch.stack(d2T[:k], -1))


class SpaceTimeBasis:
    """Tensor Chebyshev functions ``T_m(x_hat) T_n(t_hat)`` on the rescaled domain.

    Index ``m * (degree_t + 1) + n``. For ODE domains ``degree_x`` must be 0
    and the basis is ``T_n(t_hat)``.
    """

    def __init__(self, degrees: tuple[int, int], domain: DomainSpec):
        mx, mt = degrees
        if mx < 0 or mt < 0:
            raise ValueError(f"degrees must be >= 0, got {degrees}")
        if not domain.has_space and mx != 0:
            raise ValueError("ODE domains take degree_x = 0")
        self.degrees = (int(mx), int(mt))
        self.domain = domain

    @property
    def size(self) -> int:
        return (self.degrees[0] + 1) * (self.degrees[1] + 1)

    def evaluate(self, x, t, wanted=frozenset()) -> dict[str, torch.Tensor]:
        wanted = check_wanted(wanted)
        mx, mt = self.degrees
        t = _tensor(t)
        t0, t1 = self.domain.time_interval
        st = 2.0 / (t1 - t0)
        Tt, dTt, _ = chebyshev_with_derivatives(st * (t - t0) - 1.0, mt)
        if self.domain.has_space:
            x = _tensor(x)
            x0, x1 = self.domain.space_interval
            sx = 2.0 / (x1 - x0)
            Tx, dTx, d2Tx = chebyshev_with_derivatives(sx * (x - x0) - 1.0, mx)
        else:
            Tx = torch.ones(t.shape + (1,))
            dTx = d2Tx = torch.zeros(t.shape + (1,))
            sx = 1.0

        def outer(a, b):
            return (a[..., :, None] * b[..., None, :]).reshape(a.shape[:-1] + (-1,))

        out = {"u": outer(Tx, Tt)}
        if "t" in wanted:
            out["t"] = outer(Tx, dTt) * st
        if "x" in wanted:
            out["x"] = outer(dTx, Tt) * sx
        if "xx" in wanted:
            out["xx"] = outer(d2Tx, Tt) * sx * sx
        return out


class NeuralMeasure(nn.Module):
    """Base class; subclasses implement ``_paired`` and may override ``_grid``."""

    variant = ""

    def __init__(self, problem: RandomProblem, net: Optional[MLP]):
        super().__init__()
        self.problem = problem
        self.net = net
        space = problem.params
        self.register_buffer("_lower", torch.as_tensor(space.lower))
        self.register_buffer("_upper", torch.as_tensor(space.upper))

    @property
    def arch(self) -> MLPArchitecture:
        return self.net.arch

    def standardize(self, xi: torch.Tensor) -> torch.Tensor:
        return 2.0 * (xi - self._lower) / (self._upper - self._lower) - 1.0

    def _validate(self, x, t, xi) -> None:
        self.problem.domain.check(x, t)
        if not self.problem.params.contains(xi.detach().numpy()):
            raise InvalidSample("parameter sample outside bounds")

    def _prepare(self, x, t, xi):
        t = _tensor(t).reshape(-1)
        x = None if x is None or not self.problem.domain.has_space else _tensor(x).reshape(-1)
        xi = _tensor(xi).reshape(-1, self.problem.params.dim)
        return x, t, xi

    def evaluate(self, x, t, xi, wanted=frozenset(), check: bool = True) -> ModelEval:
        """Evaluate at paired rows; ``x``, ``t`` of shape (N,), ``xi`` raw of shape (N, dim)."""
        wanted = check_wanted(wanted)
        x, t, xi = self._prepare(x, t, xi)
        if not (t.shape[0] == xi.shape[0] and (x is None or x.shape[0] == t.shape[0])):
            raise ValueError("paired evaluation needs equal row counts")
        if check:
            self._validate(x, t, xi)
        return self._paired(x, t, xi, wanted)

    def evaluate_grid(self, x, t, xi, wanted=frozenset(), check: bool = True) -> ModelEval:
        """Evaluate every sample in ``xi`` (S, dim) at every point (P,); shape (S, P)."""
        wanted = check_wanted(wanted)
        x, t, xi = self._prepare(x, t, xi)
        if x is not None and x.shape != t.shape:
            raise ValueError("x and t must have equal length")
        if check:
            self._validate(x, t, xi)
        return self._grid(x, t, xi, wanted)

    def _grid(self, x, t, xi, wanted) -> ModelEval:
        S, P = xi.shape[0], t.shape[0]
        xr = None if x is None else x.repeat(S)
        ev = self._paired(xr, t.repeat(S), xi.repeat_interleave(P, dim=0), wanted)
        return ev.map(lambda v: v.reshape(S, P))

    def _paired(self, x, t, xi, wanted) -> ModelEval:
        raise NotImplementedError

    def sample_pushforward(self, xi_batch, grid_x, grid_t, chunk: int = 256):
        """Samples of the pushforward law on a grid; rows are sample paths."""
        from .metrics import EmpiricalEnsemble

        xi_batch = np.atleast_2d(np.asarray(xi_batch, dtype=float))
        if len(xi_batch) == 0 or len(np.atleast_1d(grid_t)) == 0:
            raise ValueError("sample batch and grid must be nonempty")
        rows = []
        with torch.no_grad():
            for start in range(0, len(xi_batch), chunk):
                ev = self.evaluate_grid(grid_x, grid_t, xi_batch[start:start + chunk])
                rows.append(ev.u.numpy())
        gx = np.zeros(len(np.atleast_1d(grid_t))) if grid_x is None else np.asarray(grid_x, float)
        return EmpiricalEnsemble(np.concatenate(rows, 0), gx, np.asarray(grid_t, float),
                                 {"problem": self.problem.name, "variant": self.variant})


class FullNNMeasure(NeuralMeasure):
    """Network of (x, t, standardized xi)."""

    variant = "fullnn"

    def __init__(self, problem: RandomProblem, net: MLP):
        expected = problem.space_time_dim + problem.params.dim
        if net.arch.input_dim != expected or net.arch.output_dim != 1:
            raise ValueError(f"fullnn needs a {expected}->1 network, got {net.arch}")
        super().__init__(problem, net)

    def _paired(self, x, t, xi, wanted):
        cols = [t[:, None], self.standardize(xi)]
        if x is not None:
            cols.insert(0, x[:, None])
        inputs = torch.cat(cols, dim=1)
        t_col = 1 if x is not None else 0
        out = self.net.forward_with_input_derivatives(
            inputs, t_col=t_col, x_col=0 if x is not None else None, wanted=wanted)
        return ModelEval(out["u"][:, 0], *(out[k][:, 0] if k in out else None for k in ("t", "x", "xx")))


class PCENNMeasure(NeuralMeasure):
    """``sum_n c_n(x, t) phi_n(xi_hat)`` with one network producing all ``c_n``."""

    variant = "pce_nn"

    def __init__(self, problem: RandomProblem, net: MLP, basis: ChaosBasis):
        if basis.dim != problem.params.dim:
            raise ValueError("chaos basis dimension does not match the parameter space")
        if net.arch.input_dim != problem.space_time_dim or net.arch.output_dim != basis.cardinality:
            raise ValueError(f"pce_nn needs a {problem.space_time_dim}->{basis.cardinality} network")
        super().__init__(problem, net)
        self.basis = basis

    def coefficients(self, x, t, wanted) -> dict[str, torch.Tensor]:
        inputs = t[:, None] if x is None else torch.stack([x, t], dim=1)
        return self.net.forward_with_input_derivatives(
            inputs, t_col=0 if x is None else 1, x_col=None if x is None else 0, wanted=wanted)

    def chaos(self, xi: torch.Tensor) -> torch.Tensor:
        z = self.standardize(xi).detach().clamp(-1.0, 1.0).numpy()
        return torch.from_numpy(eval_basis(self.basis, z))

    def _paired(self, x, t, xi, wanted):
        c = self.coefficients(x, t, wanted)
        phi = self.chaos(xi)
        return ModelEval(*((c[k] * phi).sum(-1) if k in c else None for k in ("u", "t", "x", "xx")))

    def _grid(self, x, t, xi, wanted):
        c = self.coefficients(x, t, wanted)
        phi = self.chaos(xi)
        return ModelEval(*(phi @ c[k].T if k in c else None for k in ("u", "t", "x", "xx")))


class GalerkinNNMeasure(NeuralMeasure):
    """``sum_n b_n(xi_hat) psi_n(x, t)`` over a fixed Chebyshev space-time basis."""

    variant = "galerkin_nn"

    def __init__(self, problem: RandomProblem, net: MLP, basis: SpaceTimeBasis):
        if net.arch.input_dim != problem.params.dim or net.arch.output_dim != basis.size:
            raise ValueError(f"galerkin_nn needs a {problem.params.dim}->{basis.size} network")
        super().__init__(problem, net)
        self.basis = basis

    def _paired(self, x, t, xi, wanted):
        b = self.net(self.standardize(xi))
        psi = self.basis.evaluate(x, t, wanted)
        return ModelEval(*((b * psi[k]).sum(-1) if k in psi else None for k in ("u", "t", "x", "xx")))

    def _grid(self, x, t, xi, wanted):
        b = self.net(self.standardize(xi))
        psi = self.basis.evaluate(x, t, wanted)
        return ModelEval(*(b @ psi[k].T if k in psi else None for k in ("u", "t", "x", "xx")))


class AnalyticMeasure(NeuralMeasure):
    """Closed-form field ``fn(x, t, xi)`` wrapped as a measure (derivatives by autograd).

    Used to embed an exact solution where a trained model would go.
    """

    variant = "analytic"

    def __init__(self, problem: RandomProblem, fn: Optional[Callable] = None):
        fn = fn or problem.exact_solution
        if fn is None:
            raise ValueError(f"problem {problem.name!r} has no exact solution")
        super().__init__(problem, None)
        self.fn = fn

    def _paired(self, x, t, xi, wanted):
        with torch.enable_grad():
            t = t.detach().requires_grad_("t" in wanted)
            if x is not None:
                x = x.detach().requires_grad_(bool(wanted & {"x", "xx"}))
            u = self.fn(x, t, xi)
            if u.ndim == 0:
                u = u.expand_as(t)
            ev = ModelEval(u)
            if "t" in wanted:
                ev.u_t = _grad(u, t)
            if wanted & {"x", "xx"}:
                ux = _grad(u, x)
                ev.u_x = ux
                if "xx" in wanted:
                    ev.u_xx = _grad(ux, x)
        return ev


def _grad(y, x):
    g = torch.autograd.grad(y.sum(), x, create_graph=True, allow_unused=True)[0]
    return torch.zeros_like(x) if g is None else g


def build_measure(
    problem: RandomProblem,
    variant: str,
    hidden_layers: int,
    hidden_width: int,
    activation: str = "snake",
    pce_degree: int = 5,
    galerkin_degrees: tuple[int, int] = (8, 8),
    seed: int = 0,
) -> NeuralMeasure:
    """Construct a freshly initialized measure of the given variant."""
    if variant == "fullnn":
        arch = MLPArchitecture(problem.space_time_dim + problem.params.dim, 1,
                               hidden_layers, hidden_width, activation)
        return FullNNMeasure(problem, MLP(arch, seed))
    if variant == "pce_nn":
        basis = build_basis(problem.params.dim, pce_degree)
        arch = MLPArchitecture(problem.space_time_dim, basis.cardinality,
                               hidden_layers, hidden_width, activation)
        return PCENNMeasure(problem, MLP(arch, seed), basis)
    if variant == "galerkin_nn":
        degrees = tuple(galerkin_degrees)
        if not problem.domain.has_space:
            degrees = (0, degrees[1])
        basis = SpaceTimeBasis(degrees, problem.domain)
        arch = MLPArchitecture(problem.params.dim, basis.size, hidden_layers, hidden_width, activation)
        return GalerkinNNMeasure(problem, MLP(arch, seed), basis)
    raise ValueError(f"unknown measure variant {variant!r}; choose from {VARIANTS}")


def eval_point(measure: NeuralMeasure, x, t, xi, wanted=frozenset()) -> ModelEval:
    """Single-point evaluation returning Python floats."""
    xs = None if x is None else [float(x)]
    ev = measure.evaluate(xs, [float(t)], np.atleast_2d(np.asarray(xi, dtype=float)), wanted)
    return ev.map(lambda v: float(v.detach()[0]))
