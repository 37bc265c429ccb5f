"""Training loop, metric log, checkpoint/resume."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..autodiff import NonFiniteError, adam_step, load_checkpoint, save_checkpoint
from ..data import save_image
from .spec import ExperimentSpec
from .tasks import Task, build_task

LOG_FIELDS = ("step", "train_loss", "test_psnr", "wall_time", "param_count")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"non-finite loss at step {step}" + (f": {detail}" if detail else ""))
        self.step = step


@dataclass
class MetricRow:
    step: int
    train_loss: float
    test_psnr: float
    wall_time: float
    param_count: int


@dataclass
class MetricLog:
    """Append-only evaluation records, mirrored to a CSV file when ``path`` is set."""

    path: Path | None = None
    rows: list[MetricRow] = field(default_factory=list)
    step_losses: dict[int, float] = field(default_factory=dict)

    def append(self, row: MetricRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise ValueError(f"metric steps must increase: {row.step} after {self.rows[-1].step}")
        self.rows.append(row)
        if self.path is not None:
            new = not self.path.exists()
            with open(self.path, "a", newline="") as fh:
                w = csv.writer(fh)
                if new:
                    w.writerow(LOG_FIELDS)
                w.writerow([row.step, repr(row.train_loss), repr(row.test_psnr),
                            f"{row.wall_time:.3f}", row.param_count])

    @property
    def final_psnr(self) -> float:
        return self.rows[-1].test_psnr if self.rows else math.nan

    @classmethod
    def read(cls, path: str | os.PathLike) -> "MetricLog":
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append(MetricRow(int(r["step"]), float(r["train_loss"]), float(r["test_psnr"]),
                                      float(r["wall_time"]), int(r["param_count"])))
        return cls(None, rows)

    def truncated(self, last_step: int, path: Path | None) -> "MetricLog":
        """Copy keeping rows up to ``last_step``; rewrites ``path`` to match."""
        out = MetricLog(None)
        for r in self.rows:
            if r.step <= last_step:
                out.append(r)
        if path is not None:
            path.unlink(missing_ok=True)
            out.path = path
            kept, out.rows = out.rows, []
            for r in kept:
                out.append(r)
        return out


def lr_scale(spec: ExperimentSpec, step: int) -> float:
    """Learning-rate multiplier at ``step`` (exponential decay to ``lr_decay``)."""
    return spec.lr_decay ** (step / max(spec.steps, 1))


def train_step(task: Task, step: int) -> float:
    """One optimizer step on every store of ``task``; returns the loss."""
    try:
        loss = task.loss(step)
    except NonFiniteError as exc:
        raise NonFiniteLossError(step, str(exc)) from exc
    value = float(loss.data)
    if not math.isfinite(value):
        raise NonFiniteLossError(step)
    params = [p for s in task.stores.values() for p in s]
    try:
        ad.backward(ad.Graph.trace(loss), loss, params)
    except NonFiniteError as exc:
        raise NonFiniteLossError(step, str(exc)) from exc
    scale = lr_scale(task.spec, step)
    for key, store in task.stores.items():
        adam_step(store, task.lrs[key] * scale)
    return value


def save_samples(out_dir: Path, pairs, limit: int = 4) -> None:
    for i, (pred, target) in enumerate(pairs[:limit]):
        save_image(out_dir / f"sample_{i}.png", np.concatenate([np.clip(pred, 0, 1), target], axis=1))


def run_experiment(spec: ExperimentSpec, resume: bool = False, samples: bool = True,
                   task: Task | None = None, verbose: bool = False) -> MetricLog:
    """Train ``spec`` to its step budget with periodic held-out evaluation.

    Writes ``spec.json``, ``metrics.csv``, ``checkpoint.bin`` and sample
    images under ``spec.out_dir``. With ``resume`` and an existing checkpoint,
    training continues from the checkpointed step. A non-finite loss stops
    training; the offending step is written to ``failure.json`` and
    :class:`NonFiniteLossError` is raised.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec.save(out / "spec.json")
    task = task if task is not None else build_task(spec)
    ckpt = out / "checkpoint.bin"
    log_path = out / "metrics.csv"
    (out / "failure.json").unlink(missing_ok=True)
    t0 = time.perf_counter()
    start = 0
    if resume and ckpt.exists():
        load_checkpoint(ckpt, task.stores)
        start = task.stores["decoder"].t
        prior = MetricLog.read(log_path) if log_path.exists() else MetricLog()
        log = prior.truncated(start, log_path)
        if log.rows:
            t0 -= log.rows[-1].wall_time
    else:
        log_path.unlink(missing_ok=True)
        log = MetricLog(log_path)
        score, _ = task.evaluate()
        log.append(MetricRow(0, math.nan, score, time.perf_counter() - t0, task.param_count))

    pairs = None
    for step in range(start, spec.steps):
        try:
            value = train_step(task, step)
        except NonFiniteLossError as exc:
            (out / "failure.json").write_text(json.dumps({"step": exc.step, "error": str(exc)}))
            raise
        log.step_losses[step] = value
        done = step + 1
        if done % spec.checkpoint_every == 0 or done == spec.steps:
            save_checkpoint(ckpt, task.stores)
        if done % spec.eval_every == 0 or done == spec.steps:
            score, pairs = task.evaluate()
            log.append(MetricRow(done, value, score, time.perf_counter() - t0, task.param_count))
            if verbose:
                print(f"step {done:6d}  loss {value:.6f}  psnr {score:.3f}", flush=True)
    if samples:
        if pairs is None:
            _, pairs = task.evaluate()
        save_samples(out, pairs)
    return log
