"""Figures rendered from the CSV artifacts of a run.

Each figure is written as PNG and SVG next to a sidecar CSV holding exactly
the arrays that were plotted, so results can be checked without comparing
images. Rendering reads files only and never touches training artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EmpiricalEnsemble, histogram, read_csv, write_csv  # noqa: E402

FIGURES = ("loss_curves", "histograms", "wasserstein_series", "moment_fields", "error_heatmap")
FORMATS = ("png", "svg")
N_BINS = 50


class MissingArtifact(FileNotFoundError):
    pass


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifact(f"required artifact not found: {path}")
    return path


def latest_evaluation(run_dir) -> Path:
    root = _require(Path(run_dir) / "evaluation")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.isdigit())
    if not dirs:
        raise MissingArtifact(f"required artifact not found: {root}/<NNN> (run `evaluate` first)")
    return dirs[-1]


def reference_path(evaluation_dir) -> Path:
    manifest = json.loads(_require(Path(evaluation_dir) / "manifest.json").read_text())
    return _require(Path(manifest["reference"]["path"]))


def _save(fig, out_dir: Path, name: str) -> list[Path]:
    paths = []
    for ext in FORMATS:
        path = out_dir / f"{name}.{ext}"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        paths.append(path)
    plt.close(fig)
    return paths


def _loss_curves(run_dir: Path, out_dir: Path, **_) -> list[Path]:
    data = read_csv(_require(run_dir / "training_record.csv"))
    it, train, test = data["iteration"], data["train_loss"], data["test_loss"]
    sidecar = write_csv(out_dir / "loss_curves.csv", ["iteration", "train_loss", "test_loss"], [it, train, test])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(it, train, label="train")
    ax.plot(it, test, label="test")
    ax.set_yscale("log")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("loss")
    ax.legend()
    return _save(fig, out_dir, "loss_curves") + [sidecar]


def histogram_table(model: EmpiricalEnsemble, ref: EmpiricalEnsemble, t_slices, n_bins: int = N_BINS):
    """Binned counts per time slice over the pooled range of both ensembles."""
    rows = {k: [] for k in ("t", "bin_left", "bin_right", "model_count", "reference_count")}
    for t in t_slices:
        a, b = model.at_time(t), ref.at_time(t)
        lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
        edges, ca = histogram(a, n_bins, (lo, hi))
        _, cb = histogram(b, n_bins, (lo, hi))
        rows["t"].extend([t] * len(ca))
        rows["bin_left"].extend(edges[:-1])
        rows["bin_right"].extend(edges[1:])
        rows["model_count"].extend(ca)
        rows["reference_count"].extend(cb)
    return {k: np.asarray(v, dtype=float) for k, v in rows.items()}


def _histograms(run_dir: Path, out_dir: Path, evaluation: Path, t_slices, **_) -> list[Path]:
    model = EmpiricalEnsemble.from_csv(_require(evaluation / "model_ensemble.csv"))
    ref = EmpiricalEnsemble.from_csv(reference_path(evaluation))
    t_slices = _slices(t_slices, ref)
    table = histogram_table(model, ref, t_slices)
    sidecar = write_csv(out_dir / "histograms.csv", list(table), list(table.values()))
    fig, axes = plt.subplots(1, len(t_slices), figsize=(4 * len(t_slices), 3.5), squeeze=False)
    for ax, t in zip(axes[0], t_slices):
        sel = table["t"] == t
        left, right = table["bin_left"][sel], table["bin_right"][sel]
        width = np.maximum(right - left, 1e-12)
        ax.bar(left, table["reference_count"][sel], width=width, align="edge", alpha=0.5, label="reference")
        ax.bar(left, table["model_count"][sel], width=width, align="edge", alpha=0.5, label="model")
        ax.set_yscale("log")
        ax.set_xlabel("u")
        ax.set_ylabel("frequency")
        ax.set_title(f"t = {t:g}")
    axes[0][0].legend()
    return _save(fig, out_dir, "histograms") + [sidecar]


def _wasserstein_series(run_dir: Path, out_dir: Path, evaluation: Path, **_) -> list[Path]:
    data = read_csv(_require(evaluation / "wasserstein.csv"))
    sidecar = write_csv(out_dir / "wasserstein_series.csv", ["t", "wasserstein_p1"],
                        [data["t"], data["wasserstein_p1"]])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(data["t"], data["wasserstein_p1"], marker="o")
    ax.set_xlabel("t")
    ax.set_ylabel("W1(model, reference)")
    return _save(fig, out_dir, "wasserstein_series") + [sidecar]


def _moment_fields(run_dir: Path, out_dir: Path, evaluation: Path, t_slices, **_) -> list[Path]:
    model = read_csv(_require(evaluation / "moments_model.csv"))
    ref = read_csv(_require(evaluation / "moments_reference.csv"))
    is_ode = np.all(model["x"] == 0)
    if is_ode:
        keep = np.ones(model["t"].size, dtype=bool)
        axis, label = model["t"], "t"
    else:
        slices = _slices(t_slices, None, model["t"])
        keep = np.isin(model["t"], slices)
        axis, label = model["x"], "x"
    cols = [model["x"][keep], model["t"][keep], model["mean"][keep], model["std"][keep],
            ref["mean"][keep], ref["std"][keep]]
    sidecar = write_csv(out_dir / "moment_fields.csv",
                        ["x", "t", "model_mean", "model_std", "reference_mean", "reference_std"], cols)
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = [np.ones(keep.sum(), dtype=bool)] if is_ode else [cols[1] == t for t in np.unique(cols[1])]
    for g in groups:
        tag = "" if is_ode else f" t={cols[1][g][0]:g}"
        xs = axis[keep][g]
        for mean, std, style, who in ((cols[4], cols[5], "-", "reference"), (cols[2], cols[3], "--", "model")):
            line, = ax.plot(xs, mean[g], style, label=who + tag)
            ax.fill_between(xs, mean[g] - std[g], mean[g] + std[g], color=line.get_color(), alpha=0.15)
    ax.set_xlabel(label)
    ax.set_ylabel("mean ± std of u")
    ax.legend(fontsize="small")
    return _save(fig, out_dir, "moment_fields") + [sidecar]


def _error_heatmap(run_dir: Path, out_dir: Path, evaluation: Path, **_) -> list[Path]:
    paths = []
    for field in ("mean", "std"):
        data = read_csv(_require(evaluation / f"abs_error_{field}.csv"))
        name = f"error_heatmap_{field}"
        paths.append(write_csv(out_dir / f"{name}.csv", ["x", "t", "abs_error"],
                               [data["x"], data["t"], data["abs_error"]]))
        xs, ts = np.unique(data["x"]), np.unique(data["t"])
        fig, ax = plt.subplots(figsize=(6, 4))
        if xs.size == 1:
            ax.plot(data["t"], data["abs_error"])
            ax.set_xlabel("t")
            ax.set_ylabel(f"|{field} error|")
        else:
            # grid rows are time-major
            img = data["abs_error"].reshape(ts.size, xs.size)
            mesh = ax.pcolormesh(xs, ts, img, shading="nearest")
            fig.colorbar(mesh, ax=ax, label=f"|{field} error|")
            ax.set_xlabel("x")
            ax.set_ylabel("t")
        paths.extend(_save(fig, out_dir, name))
    return paths


def _slices(t_slices, ens: Optional[EmpiricalEnsemble], times=None) -> list[float]:
    grid = ens.times() if ens is not None else np.unique(times)
    if not t_slices:
        # a handful of evenly spread grid times
        picks = np.unique(np.linspace(0, grid.size - 1, min(4, grid.size)).round().astype(int))
        return [float(grid[i]) for i in picks]
    out = []
    for t in t_slices:
        hit = np.abs(grid - t) <= 1e-9
        if not np.any(hit):
            raise ValueError(f"time slice {t} is not on the evaluation grid")
        out.append(float(grid[hit][0]))
    return out


_RENDERERS = {
    "loss_curves": _loss_curves,
    "histograms": _histograms,
    "wasserstein_series": _wasserstein_series,
    "moment_fields": _moment_fields,
    "error_heatmap": _error_heatmap,
}


def render(run_dir, figures: Iterable[str], t_slices=None, out_dir=None, evaluation=None) -> list[Path]:
    """Render the requested figures; returns every file written."""
    figures = list(figures)
    unknown = [f for f in figures if f not in FIGURES]
    if unknown:
        raise ValueError(f"unknown figures {unknown}; choose from {FIGURES}")
    if not figures:
        return []
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "report"
    needs_eval = any(f != "loss_curves" for f in figures)
    if needs_eval and evaluation is None:
        evaluation = latest_evaluation(run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name in figures:
        written.extend(_RENDERERS[name](run_dir=run_dir, out_dir=out_dir,
                                        evaluation=None if evaluation is None else Path(evaluation),
                                        t_slices=t_slices))
    return written
