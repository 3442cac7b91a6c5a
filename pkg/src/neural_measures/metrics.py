"""Ensemble statistics: 1-D Wasserstein distances, moments, histograms."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class EmpiricalEnsemble:
    """Sample paths on a space-time grid.

    ``values[i, j]`` is sample ``i`` at grid point ``(x[j], t[j])``. ODE grids
    carry ``x = 0``.
    """

    values: np.ndarray
    x: np.ndarray
    t: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n_grid = self.values.shape[1]
        if self.x.shape != (n_grid,) or self.t.shape != (n_grid,):
            raise ValueError(f"grid of length {len(self.t)} does not match {n_grid} columns")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ensemble contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def times(self) -> np.ndarray:
        return np.unique(self.t)

    def at_time(self, t: float, atol: float = 1e-9) -> np.ndarray:
        """All samples at time ``t``, pooled over space."""
        cols = np.abs(self.t - t) <= atol
        if not np.any(cols):
            raise ValueError(f"time {t} is not on the ensemble grid")
        return self.values[:, cols].reshape(-1)

    def same_grid(self, other: "EmpiricalEnsemble", atol: float = 1e-9) -> bool:
        return (self.t.shape == other.t.shape and np.allclose(self.t, other.t, atol=atol, rtol=0)
                and np.allclose(self.x, other.x, atol=atol, rtol=0))

    def to_csv(self, path) -> Path:
        """Write ``xi_index,x,t,u`` records, atomically."""
        path = Path(path)
        n, g = self.values.shape
        idx = np.repeat(np.arange(n), g)
        xs = np.tile(self.x, n)
        ts = np.tile(self.t, n)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
        with open(tmp, "w", newline="") as fh:
            fh.write("xi_index,x,t,u\n")
            body = np.column_stack([idx, xs, ts, self.values.reshape(-1)])
            np.savetxt(fh, body, fmt=["%d", "%.17g", "%.17g", "%.17g"], delimiter=",")
        tmp.replace(path)
        return path

    @classmethod
    def from_csv(cls, path, meta: dict | None = None) -> "EmpiricalEnsemble":
        path = Path(path)
        with open(path) as fh:
            header = fh.readline().strip()
        if header != "xi_index,x,t,u":
            raise ValueError(f"{path}: unexpected header {header!r}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        idx = data[:, 0].astype(int)
        n = idx.max() + 1
        g = len(idx) // n
        if len(idx) != n * g or not np.array_equal(idx, np.repeat(np.arange(n), g)):
            raise ValueError(f"{path}: records are not grouped by xi_index with a common grid")
        return cls(data[:, 3].reshape(n, g), data[:g, 1], data[:g, 2], dict(meta or {}))


def empirical_wasserstein_1d(a, b, p: int = 1) -> float:
    """Exact W_p between two equally sized empirical laws via sorted samples."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    if a.size != b.size:
        raise ValueError(f"sample sizes differ ({a.size} vs {b.size}); call match_sizes first")
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    diff = np.abs(np.sort(a) - np.sort(b))
    if p == 1:
        return float(diff.mean())
    return float(np.sqrt(np.mean(diff ** 2)))


def match_sizes(a, b, seed=0):
    """Shuffle both sample sets and truncate to the smaller size."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == b.size:
        return a, b
    rng = np.random.default_rng(seed)
    n = min(a.size, b.size)
    return rng.permutation(a)[:n], rng.permutation(b)[:n]


def wasserstein_over_time(model: EmpiricalEnsemble, ref: EmpiricalEnsemble, t_slices=None,
                          p: int = 1, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Distance between the time-``t`` marginals (pooled over space) per slice."""
    if not model.same_grid(ref):
        raise ValueError("model and reference ensembles are on different grids")
    times = ref.times() if t_slices is None else np.asarray(t_slices, dtype=float)
    dists = []
    for t in times:
        a, b = match_sizes(model.at_time(t), ref.at_time(t), seed)
        dists.append(empirical_wasserstein_1d(a, b, p))
    return times, np.array(dists)


def ensemble_moments(e: EmpiricalEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Per-grid-point sample mean and unbiased standard deviation."""
    if e.n_samples < 2:
        raise ValueError("need at least two samples for a standard deviation")
    return e.values.mean(axis=0), e.values.std(axis=0, ddof=1)


def histogram(samples, n_bins: int = 50, value_range=None) -> tuple[np.ndarray, np.ndarray]:
    """Bin edges and counts; a degenerate range puts all mass in one bin."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    lo, hi = (samples.min(), samples.max()) if value_range is None else value_range
    if hi <= lo:
        return np.array([lo, lo]), np.array([samples.size])
    counts, edges = np.histogram(samples, bins=n_bins, range=(lo, hi))
    return edges, counts


def error_heatmap(mean_a, mean_b) -> np.ndarray:
    return np.abs(np.asarray(mean_a, dtype=float) - np.asarray(mean_b, dtype=float))


def relative_l2_error(approx, exact) -> float:
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))


def write_csv(path, header: list[str], columns) -> Path:
    path = Path(path)
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
