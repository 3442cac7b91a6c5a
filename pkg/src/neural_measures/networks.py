"""Fully connected networks with snake activation and exact input derivatives.

Input derivatives are propagated layer by layer in forward mode (value,
first and second directional derivatives), which is exact algorithmic
differentiation and stays differentiable with respect to the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn

torch.set_default_dtype(torch.float64)

ACTIVATIONS = ("snake", "tanh")
MIN_FREQUENCY = 1e-6


def snake(x, a):
    """``x + sin(a x)^2 / a``."""
    if isinstance(a, torch.Tensor):
        if torch.any(a == 0):
            raise ZeroDivisionError("snake frequency must be nonzero")
        return x + torch.sin(a * x) ** 2 / a
    if a == 0:
        raise ZeroDivisionError("snake frequency must be nonzero")
    if isinstance(x, torch.Tensor):
        return x + torch.sin(a * x) ** 2 / a
    return x + np.sin(a * x) ** 2 / a


@dataclass(frozen=True)
class MLPArchitecture:
    input_dim: int
    output_dim: int
    hidden_layers: int
    hidden_width: int
    activation: str = "snake"

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "hidden_layers", "hidden_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]

    @property
    def parameter_count(self) -> int:
        w = self.widths
        n = sum(w[k + 1] * (w[k] + 1) for k in range(len(w) - 1))
        if self.activation == "snake":
            n += self.hidden_layers
        return n

    def header(self) -> str:
        return (
            f"arch: {self.input_dim},{self.output_dim},{self.hidden_layers},"
            f"{self.hidden_width},{self.activation}"
        )

    @classmethod
    def from_header(cls, line: str) -> "MLPArchitecture":
        if not line.startswith("arch: "):
            raise ValueError(f"not a checkpoint header: {line!r}")
        fields = line[len("arch: "):].strip().split(",")
        if len(fields) != 5:
            raise ValueError(f"malformed checkpoint header: {line!r}")
        i, o, layers, width = (int(f) for f in fields[:4])
        return cls(i, o, layers, width, fields[4])


class _Frequencies(nn.Module):
    def __init__(self, n: int):
        super().__init__()
        self.a = nn.Parameter(torch.ones(n))


class MLP(nn.Module):
    """``C_L o sigma o C_{L-1} ... sigma o C_1`` with an affine output layer.

    Snake networks carry one trainable frequency per hidden layer.
    """

    def __init__(self, arch: MLPArchitecture, seed: int = 0):
        super().__init__()
        self.arch = arch
        w = arch.widths
        self.layers = nn.ModuleList(nn.Linear(w[k], w[k + 1]) for k in range(len(w) - 1))
        # held in a submodule registered after the layers so that
        # parameters() yields W_k, b_k first and the frequencies last
        self.snake = _Frequencies(arch.hidden_layers) if arch.activation == "snake" else None
        xavier_init(self, seed)

    @property
    def frequencies(self) -> Optional[nn.Parameter]:
        return None if self.snake is None else self.snake.a

    def _freq(self, k: int) -> torch.Tensor:
        a = self.frequencies[k]
        # keep |a| >= MIN_FREQUENCY without breaking the gradient
        return torch.where(a.abs() < MIN_FREQUENCY, torch.full_like(a, MIN_FREQUENCY).copysign(a), a)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        if inputs.shape[-1] != self.arch.input_dim:
            raise ValueError(f"expected input dim {self.arch.input_dim}, got {inputs.shape[-1]}")
        h = inputs
        for k, layer in enumerate(self.layers[:-1]):
            z = layer(h)
            if self.frequencies is not None:
                h = snake(z, self._freq(k))
            else:
                h = torch.tanh(z)
        return self.layers[-1](h)

    def forward_with_input_derivatives(
        self,
        inputs: torch.Tensor,
        t_col: Optional[int] = None,
        x_col: Optional[int] = None,
        wanted=frozenset(),
    ) -> dict[str, torch.Tensor]:
        """Outputs plus derivatives w.r.t. the tagged input columns.

        ``wanted`` is a subset of ``{"t", "x", "xx"}``. Returns a dict with
        key ``"u"`` and one key per requested derivative, each of shape
        ``(N, output_dim)``.
        """
        wanted = frozenset(wanted)
        if wanted - {"t", "x", "xx"}:
            raise ValueError(f"unknown derivative request {sorted(wanted)}")
        if "t" in wanted and t_col is None:
            raise ValueError("time derivative requested but no time column tagged")
        if wanted & {"x", "xx"} and x_col is None:
            raise ValueError("space derivative requested but no space column tagged")
        if inputs.shape[-1] != self.arch.input_dim:
            raise ValueError(f"expected input dim {self.arch.input_dim}, got {inputs.shape[-1]}")
        need_x = bool(wanted & {"x", "xx"})
        need_xx = "xx" in wanted

        first = self.layers[0]
        z = first(inputs)
        # directional derivative of the first affine map is a weight column
        zt = first.weight[:, t_col].expand_as(z) if "t" in wanted else None
        zx = first.weight[:, x_col].expand_as(z) if need_x else None
        zxx = None
        for k in range(self.arch.hidden_layers):
            if k > 0:
                layer = self.layers[k]
                z = layer(h)
                zt = ht @ layer.weight.T if ht is not None else None
                zx = hx @ layer.weight.T if hx is not None else None
                zxx = hxx @ layer.weight.T if hxx is not None else None
            if self.frequencies is not None:
                a = self._freq(k)
                s = torch.sin(a * z)
                c = torch.cos(a * z)
                h = z + s * s / a
                d1 = 1.0 + 2.0 * s * c
                d2 = 2.0 * a * (1.0 - 2.0 * s * s) if need_xx else None
            else:
                h = torch.tanh(z)
                d1 = 1.0 - h * h
                d2 = -2.0 * h * d1 if need_xx else None
            ht = d1 * zt if zt is not None else None
            hx = d1 * zx if zx is not None else None
            if need_xx:
                hxx = d2 * zx * zx
                if zxx is not None:
                    hxx = hxx + d1 * zxx
            else:
                hxx = None
        out = self.layers[-1]
        result = {"u": out(h)}
        if "t" in wanted:
            result["t"] = ht @ out.weight.T
        if "x" in wanted:
            result["x"] = hx @ out.weight.T
        if need_xx:
            result["xx"] = hxx @ out.weight.T
        return result

    # flat parameter vector: W_k (row-major), b_k for each layer, then the
    # per-layer snake frequencies
    def get_theta(self) -> torch.Tensor:
        return torch.nn.utils.parameters_to_vector(self.parameters()).detach().clone()

    def set_theta(self, theta) -> None:
        theta = torch.as_tensor(theta, dtype=torch.float64)
        if theta.numel() != self.arch.parameter_count:
            raise ValueError(f"theta has {theta.numel()} entries, expected {self.arch.parameter_count}")
        if not torch.all(torch.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        with torch.no_grad():
            torch.nn.utils.vector_to_parameters(theta, self.parameters())


def xavier_init(net: MLP, seed: int) -> MLP:
    """Glorot-normal weights (variance ``2/(fan_in+fan_out)``), zero biases, unit frequencies."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for layer in net.layers:
            fan_out, fan_in = layer.weight.shape
            std = math.sqrt(2.0 / (fan_in + fan_out))
            layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen) * std)
            layer.bias.zero_()
        if net.frequencies is not None:
            net.frequencies.fill_(1.0)
    return net


def save_checkpoint(net: MLP, path) -> Path:
    """Write ``arch: ...`` header line then little-endian float64 theta."""
    path = Path(path)
    theta = net.get_theta().numpy().astype("<f8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write((net.arch.header() + "\n").encode("ascii"))
        fh.write(theta.tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> MLP:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    arch = MLPArchitecture.from_header(raw[:nl].decode("ascii"))
    body = raw[nl + 1:]
    if len(body) != 8 * arch.parameter_count:
        raise ValueError(
            f"{path}: payload has {len(body)} bytes, expected {8 * arch.parameter_count}"
        )
    theta = np.frombuffer(body, dtype="<f8")
    net = MLP(arch)
    net.set_theta(torch.from_numpy(theta.astype(np.float64)))
    return net

