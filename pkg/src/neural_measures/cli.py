"""Command line entry point: train, reference, evaluate, report."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, from_dict, load_config
from .metrics import (
    EmpiricalEnsemble,
    ensemble_moments,
    error_heatmap,
    relative_l2_error,
    wasserstein_over_time,
    write_csv,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("neural_measures")

DEFAULT_REFERENCE_SAMPLES = 10_000
DEFAULT_EVAL_SEED = 12345


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def checksums(root: Path, skip=()) -> dict[str, str]:
    """sha256 of every file below ``root``, keyed by relative path."""
    out = {}
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root).as_posix()
        if path.is_file() and not any(rel == s or rel.startswith(s + "/") for s in skip):
            out[rel] = sha256(path)
    return out


def write_manifest(path: Path, data: dict) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)
    return path


def verify_manifest(directory) -> list[str]:
    """Relative paths whose checksum no longer matches the manifest."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return [rel for rel, digest in manifest["artifacts"].items()
            if not (directory / rel).exists() or sha256(directory / rel) != digest]


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(items) -> dict:
    """``section.key=value`` pairs into a nested dict (values parsed as TOML)."""
    out: dict = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError([f"override {item!r}: expected key=value"])
        key, value = item.split("=", 1)
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_value(value.strip())
    return out


def _floats(text):
    if text is None:
        return None
    return [float(v) for v in text.replace(",", " ").split()]


# ---------------------------------------------------------------- train

def cmd_train(args) -> Path:
    from .train import train

    config = load_config(args.config, parse_overrides(args.set))
    run_dir = Path(args.output or config.output_dir)
    if (run_dir / "manifest.json").exists():
        raise FileExistsError(f"{run_dir} already holds a run; choose a new output directory")
    run_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    (run_dir / "config.toml").write_text(config.to_toml())

    def progress(it, tr, te):
        if it % 50 == 0 or it == config.outer_iterations:
            log.info("iteration %d/%d: train %.3e test %.3e", it, config.outer_iterations, tr, te)

    _, record = train(config, run_dir=run_dir, callback=progress)
    manifest = {
        "kind": "train",
        "version": __version__,
        "config": config.to_dict(),
        "seeds": config.to_dict()["seeds"],
        "started": started,
        "finished": _now(),
        "final_train_loss": record.train_loss[-1],
        "final_test_loss": record.test_loss[-1],
        "artifacts": checksums(run_dir, skip=("manifest.json", "evaluation", "report")),
    }
    write_manifest(run_dir / "manifest.json", manifest)
    print(run_dir)
    return run_dir


# ------------------------------------------------------------ reference

def cmd_reference(args) -> Path:
    from .problems import cached_reference

    path, hit = cached_reference(args.problem, args.samples, args.seed, _floats(args.x), _floats(args.t))
    log.info("reference %s (%s)", path, "cache hit" if hit else "computed")
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(path, out)
        path = out
    print(path)
    return path


# ------------------------------------------------------------- evaluate

def _next_evaluation_dir(run_dir: Path) -> Path:
    root = run_dir / "evaluation"
    root.mkdir(exist_ok=True)
    taken = [int(p.name) for p in root.iterdir() if p.is_dir() and p.name.isdigit()]
    for n in range(max(taken, default=0) + 1, max(taken, default=0) + 1000):
        path = root / f"{n:03d}"
        try:
            path.mkdir()
            return path
        except FileExistsError:
            continue
    raise RuntimeError(f"could not allocate an evaluation directory in {root}")


def run_config(run_dir: Path):
    with open(run_dir / "config.toml", "rb") as fh:
        return from_dict(tomllib.load(fh), use_defaults=False)


def evaluate_run(run_dir, reference=None, samples=None, seed: int = DEFAULT_EVAL_SEED, t_slices=None,
                 checkpoint=None, n_reference: int = DEFAULT_REFERENCE_SAMPLES) -> Path:
    from .problems import cached_reference, get_problem
    from .train import load_measure

    run_dir = Path(run_dir)
    config = run_config(run_dir)
    problem = get_problem(config.problem)
    ckpt = Path(checkpoint) if checkpoint else run_dir / "checkpoints" / "final.ckpt"
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    if reference is None:
        reference, _ = cached_reference(config.problem, n_reference, seed=0)
    reference = Path(reference).resolve()
    ref = EmpiricalEnsemble.from_csv(reference)

    if not problem.domain.has_space and np.any(ref.x != 0):
        raise ValueError(f"grid mismatch: {reference} has spatial points but {config.problem} has no space axis")
    x_on_grid = ref.x if problem.domain.has_space else None
    problem.domain.check(x_on_grid, ref.t)
    times = ref.times()
    if t_slices is not None:
        t0, t1 = problem.domain.time_interval
        for t in t_slices:
            if not t0 - 1e-12 <= t <= t1 + 1e-12:
                raise ValueError(f"time slice {t} lies outside the time interval [{t0}, {t1}]")
            if not np.any(np.abs(times - t) <= 1e-9):
                raise ValueError(f"time slice {t} is not on the reference grid")
        times = np.asarray(t_slices, dtype=float)

    measure = load_measure(config, problem, ckpt)
    n = samples or ref.n_samples
    xi = problem.params.sample(n, seed)
    model = measure.sample_pushforward(xi, x_on_grid, ref.t)
    if not model.same_grid(ref):
        raise ValueError("model and reference grids differ")

    out = _next_evaluation_dir(run_dir)
    started = _now()
    model.to_csv(out / "model_ensemble.csv")
    ts, w = wasserstein_over_time(model, ref, times, p=1, seed=seed)
    write_csv(out / "wasserstein.csv", ["t", "wasserstein_p1"], [ts, w])
    m_mean, m_std = ensemble_moments(model)
    r_mean, r_std = ensemble_moments(ref)
    write_csv(out / "moments_model.csv", ["x", "t", "mean", "std"], [ref.x, ref.t, m_mean, m_std])
    write_csv(out / "moments_reference.csv", ["x", "t", "mean", "std"], [ref.x, ref.t, r_mean, r_std])
    err_mean, err_std = error_heatmap(m_mean, r_mean), error_heatmap(m_std, r_std)
    write_csv(out / "abs_error_mean.csv", ["x", "t", "abs_error"], [ref.x, ref.t, err_mean])
    write_csv(out / "abs_error_std.csv", ["x", "t", "abs_error"], [ref.x, ref.t, err_std])

    from .report import histogram_table

    table = histogram_table(model, ref, times)
    write_csv(out / "histograms.csv", list(table), list(table.values()))
    summary = {
        "problem": config.problem,
        "variant": config.variant,
        "n_samples": n,
        "relative_l2_mean": relative_l2_error(m_mean, r_mean),
        "relative_l2_std": relative_l2_error(m_std, r_std) if np.any(r_std) else None,
        "abs_error_mean_p95": float(np.percentile(err_mean, 95)),
        "abs_error_std_p95": float(np.percentile(err_std, 95)),
        "wasserstein_p1": {f"{t:g}": d for t, d in zip(ts, w)},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    manifest = {
        "kind": "evaluate",
        "version": __version__,
        "run": str(run_dir.resolve()),
        "checkpoint": {"path": str(ckpt.resolve()), "sha256": sha256(ckpt)},
        "reference": {"path": str(reference), "sha256": sha256(reference)},
        "seeds": {"xi": seed},
        "t_slices": [float(t) for t in times],
        "started": started,
        "finished": _now(),
        "artifacts": checksums(out, skip=("manifest.json",)),
    }
    write_manifest(out / "manifest.json", manifest)
    return out


def cmd_evaluate(args) -> Path:
    out = evaluate_run(args.run, args.reference, args.samples, args.seed, _floats(args.t), args.checkpoint)
    print(out)
    return out


# --------------------------------------------------------------- report

def cmd_report(args) -> list[Path]:
    from .report import render

    figures = [f for f in (args.figures or "").replace(",", " ").split() if f]
    written = render(args.run, figures, _floats(args.t), args.out, args.evaluation)
    for path in written:
        print(path)
    return written


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neural-measures", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a measure from a TOML config")
    p.add_argument("config", help="config file; fields not given fall back to the problem defaults")
    p.add_argument("--output", help="run directory (default: output_dir from the config)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. --set outer_iterations=10 --set batch.n_xi=50")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reference", help="compute or fetch a cached reference ensemble")
    p.add_argument("--problem", required=True)
    p.add_argument("--samples", type=int, default=DEFAULT_REFERENCE_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t", help="time grid, comma separated (default: problem grid)")
    p.add_argument("--x", help="space grid, comma separated (default: problem grid)")
    p.add_argument("--output", help="also copy the CSV here")
    p.set_defaults(func=cmd_reference)

    p = sub.add_parser("evaluate", help="compare a trained run with a reference ensemble")
    p.add_argument("--run", required=True)
    p.add_argument("--reference", help="reference CSV (default: cached 10^4-draw reference, seed 0)")
    p.add_argument("--samples", type=int, help="model samples (default: as many as the reference)")
    p.add_argument("--seed", type=int, default=DEFAULT_EVAL_SEED, help="seed for the model's parameter draws")
    p.add_argument("--t", help="time slices for the distance series, comma separated")
    p.add_argument("--checkpoint", help="checkpoint to evaluate (default: checkpoints/final.ckpt)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render figures from run artifacts")
    p.add_argument("--run", required=True)
    p.add_argument("--figures", default="loss_curves",
                   help="comma separated subset of loss_curves, histograms, wasserstein_series, "
                        "moment_fields, error_heatmap")
    p.add_argument("--t", help="time slices for histograms and moment fields")
    p.add_argument("--evaluation", help="evaluation directory (default: latest)")
    p.add_argument("--out", help="output directory (default: <run>/report)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, FileExistsError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
