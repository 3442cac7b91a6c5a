"""Full-batch L-BFGS training with periodic resampling."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .config import TrainConfig
from .core import RandomProblem, sample_parameters
from .loss import (CollocationBatch, LossWeights, NonFiniteResidual, draw_batch, residual_loss, resample_due,
                   sample_collocation)
from .measures import NeuralMeasure, build_measure
from .networks import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

RECORD_HEADER = ["iteration", "train_loss", "test_loss", "seconds", "resampled_domain", "resampled_params"]
LOSS_HEADER = ["iteration", "train_loss", "test_loss"]


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainingRecord:
    """Loss history. Row 0 is the untrained model; row k follows outer step k."""

    iteration: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    resampled_domain: list[bool] = field(default_factory=list)
    resampled_params: list[bool] = field(default_factory=list)

    def append(self, iteration, train_loss, test_loss, seconds, rd=False, rp=False):
        if self.iteration and iteration <= self.iteration[-1]:
            raise ValueError("iteration indices must increase")
        self.iteration.append(int(iteration))
        self.train_loss.append(float(train_loss))
        self.test_loss.append(float(test_loss))
        self.seconds.append(float(seconds))
        self.resampled_domain.append(bool(rd))
        self.resampled_params.append(bool(rp))

    def __len__(self):
        return len(self.iteration)

    def to_csv(self, path) -> Path:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RECORD_HEADER)
            for row in zip(self.iteration, self.train_loss, self.test_loss, self.seconds,
                           self.resampled_domain, self.resampled_params):
                it, tr, te, sec, rd, rp = row
                w.writerow([it, repr(tr), repr(te), f"{sec:.3f}", int(rd), int(rp)])
        tmp.replace(path)
        return path

    def losses_to_csv(self, path) -> Path:
        """Loss columns only; unlike the full record this file is bitwise reproducible."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOSS_HEADER)
            for row in zip(self.iteration, self.train_loss, self.test_loss):
                w.writerow([row[0], repr(row[1]), repr(row[2])])
        tmp.replace(path)
        return path

    @classmethod
    def from_csv(cls, path) -> "TrainingRecord":
        rec = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != RECORD_HEADER:
                raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
            for row in reader:
                rec.append(int(row["iteration"]), float(row["train_loss"]), float(row["test_loss"]),
                           float(row["seconds"]), row["resampled_domain"] == "1",
                           row["resampled_params"] == "1")
        return rec


def make_measure(config: TrainConfig, problem: RandomProblem) -> NeuralMeasure:
    a = config.architecture
    return build_measure(problem, config.variant, a.hidden_layers, a.hidden_width, a.activation,
                         a.pce_degree, (a.galerkin_degree_x, a.galerkin_degree_t), config.seeds.init)


def load_measure(config: TrainConfig, problem: RandomProblem, checkpoint) -> NeuralMeasure:
    measure = make_measure(config, problem)
    net = load_checkpoint(checkpoint)
    if net.arch != measure.net.arch:
        raise ValueError(f"checkpoint architecture {net.arch} does not match config {measure.net.arch}")
    measure.net.set_theta(net.get_theta())
    return measure


def held_out_batch(config: TrainConfig, problem: RandomProblem) -> CollocationBatch:
    """Held-out batch drawn once from the dedicated test seed."""
    b = config.batch
    rng = np.random.default_rng(config.seeds.test)
    return draw_batch(problem, b.n_x, b.n_t, b.n_xi, b.n_boundary, b.n_initial, b.strategy, rng, rng)


def evaluate_test_loss(measure, problem, batch, weights: LossWeights, coupling: str = "product") -> float:
    with torch.no_grad():
        return float(residual_loss(measure, problem, batch, weights, coupling))


def _theta(measure) -> torch.Tensor:
    return torch.nn.utils.parameters_to_vector(measure.parameters()).detach().clone()


def _set_theta(measure, theta) -> None:
    with torch.no_grad():
        torch.nn.utils.vector_to_parameters(theta, measure.parameters())


def train(
    config: TrainConfig,
    run_dir=None,
    problem: Optional[RandomProblem] = None,
    measure: Optional[NeuralMeasure] = None,
    callback: Optional[Callable[[int, float, float], None]] = None,
) -> tuple[NeuralMeasure, TrainingRecord]:
    """Run the outer loop: resample, one L-BFGS call, record losses.

    With ``run_dir`` set, checkpoints go to ``run_dir/checkpoints`` every
    ``checkpoint_every`` outer steps and at the end (``final.ckpt``), the
    record is written to ``run_dir/training_record.csv`` and its loss
    columns alone to ``run_dir/losses.csv``.
    """
    if problem is None:
        from .problems import get_problem
        problem = get_problem(config.problem)
    if measure is None:
        measure = make_measure(config, problem)
    weights = config.weights.to_weights()
    b = config.batch
    coupling = b.coupling
    domain_rng = np.random.default_rng(config.seeds.domain)
    param_rng = np.random.default_rng(config.seeds.params)

    ckpt_dir = None
    if run_dir is not None:
        ckpt_dir = Path(run_dir) / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    points = sample_collocation(problem, b.n_x, b.n_t, b.n_boundary, b.n_initial, b.strategy, domain_rng)
    xi = sample_parameters(problem.params, b.n_xi, param_rng)
    batch = points.with_xi(xi)
    held_out = held_out_batch(config, problem)

    params = [p for p in measure.parameters() if p.requires_grad]
    opt = torch.optim.LBFGS(
        params,
        lr=config.optimizer.lr,
        max_iter=config.optimizer.max_inner_iterations,
        history_size=config.optimizer.history_size,
        line_search_fn="strong_wolfe",
    )
    record = TrainingRecord()
    start = time.perf_counter()

    def current_losses():
        with torch.no_grad():
            tr = float(residual_loss(measure, problem, batch, weights, coupling))
        return tr, evaluate_test_loss(measure, problem, held_out, weights, coupling)

    tr, te = current_losses()
    record.append(0, tr, te, 0.0)
    last_good = _theta(measure)

    for it in range(1, config.outer_iterations + 1):
        rd, rp = resample_due(it, config.resample.domain_period, config.resample.param_period)
        if rd:
            points = sample_collocation(problem, b.n_x, b.n_t, b.n_boundary, b.n_initial, b.strategy, domain_rng)
        if rp:
            xi = sample_parameters(problem.params, b.n_xi, param_rng)
        if rd or rp:
            batch = points.with_xi(xi)
            # curvature pairs from the old batch do not describe the new objective
            opt.state.clear()

        def closure():
            opt.zero_grad()
            loss = residual_loss(measure, problem, batch, weights, coupling)
            loss.backward()
            return loss

        try:
            opt.step(closure)
            tr, te = current_losses()
            reason = None
        except NonFiniteResidual as exc:
            tr = te = math.nan
            reason = str(exc)
        if not (math.isfinite(tr) and math.isfinite(te)) or not torch.all(torch.isfinite(_theta(measure))):
            _set_theta(measure, last_good)
            if ckpt_dir is not None:
                save_checkpoint(measure.net, ckpt_dir / "last_good.ckpt")
                record.to_csv(Path(run_dir) / "training_record.csv")
            raise TrainingDiverged(f"non-finite loss at outer iteration {it}"
                                   f"{'' if reason is None else ' (' + reason + ')'}; last good parameters kept")
        last_good = _theta(measure)
        record.append(it, tr, te, time.perf_counter() - start, rd, rp)
        if callback is not None:
            callback(it, tr, te)
        if ckpt_dir is not None and it % config.checkpoint_every == 0:
            save_checkpoint(measure.net, ckpt_dir / f"iter_{it:06d}.ckpt")
        if it % 50 == 0:
            log.info("iteration %d: train %.3e test %.3e", it, tr, te)

    if ckpt_dir is not None:
        save_checkpoint(measure.net, ckpt_dir / "final.ckpt")
        record.to_csv(Path(run_dir) / "training_record.csv")
        record.losses_to_csv(Path(run_dir) / "losses.csv")
    return measure, record
