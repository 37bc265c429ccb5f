"""Architecture x latent-size sweeps and the concatenation ablation."""

from __future__ import annotations

import csv
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..decoders import count_params
from .spec import ExperimentSpec
from .tasks import decoder_config
from .train import run_experiment

RESULT_FIELDS = ("label", "family", "latent_dim", "seed", "param_count", "final_psnr", "status", "error")

# name, concat_mode, num_splits; the order of the reported table
ABLATION_VARIANTS = (
    ("8-way split", "split", 8),
    ("4-way split", "split", 4),
    ("2-way split", "split", 2),
    ("1 skip connection", "skip", None),
    ("no split or skip connection", "none", None),
)


@dataclass
class CellResult:
    label: str
    family: str
    latent_dim: int
    seed: int
    param_count: int
    final_psnr: float
    status: str = "ok"
    error: str = ""

    def row(self) -> list:
        return [self.label, self.family, self.latent_dim, self.seed, self.param_count,
                repr(self.final_psnr), self.status, self.error]


def expand_sweep(base: ExperimentSpec, families, latent_dims, seeds, out_dir,
                 decoders: dict | None = None) -> list[tuple[str, ExperimentSpec]]:
    """One spec per (family, N, seed); ``decoders`` maps family to extra decoder fields."""
    cells = []
    for fam in families:
        dec = {**(decoders or {}).get(fam, {}), "family": fam}
        for n in latent_dims:
            for seed in seeds:
                label = f"{fam}_N{n}_s{seed}"
                spec = base.with_updates(decoder=dec, latent_dim=int(n), seed=int(seed),
                                         out_dir=str(Path(out_dir) / label))
                cells.append((label, spec))
    return cells


def run_cell(label: str, spec: ExperimentSpec) -> CellResult:
    """Train one cell; failures are captured in the result instead of raised."""
    fam = spec.family
    try:
        params = count_params(decoder_config(spec))
    except Exception:  # noqa: BLE001 - an invalid cell is reported, not fatal
        params = -1
    try:
        log = run_experiment(spec)
        return CellResult(label, fam, spec.latent_dim, spec.seed, params, log.final_psnr)
    except Exception as exc:  # noqa: BLE001
        Path(spec.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(spec.out_dir) / "error.txt").write_text(traceback.format_exc())
        return CellResult(label, fam, spec.latent_dim, spec.seed, params, math.nan,
                          "failed", f"{type(exc).__name__}: {exc}")


def _run_cell_args(args):
    return run_cell(*args)


def run_cells(cells, workers: int = 1) -> list[CellResult]:
    if workers <= 1:
        return [run_cell(label, spec) for label, spec in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_args, cells))


def write_results(path: str | os.PathLike, results: list[CellResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_FIELDS)
        for r in results:
            w.writerow(r.row())


def read_results(path: str | os.PathLike) -> list[CellResult]:
    with open(path, newline="") as fh:
        return [CellResult(r["label"], r["family"], int(r["latent_dim"]), int(r["seed"]),
                           int(r["param_count"]), float(r["final_psnr"]), r["status"], r["error"])
                for r in csv.DictReader(fh)]


def summary_table(results: list[CellResult]) -> tuple[list[str], list[int], dict]:
    """Mean PSNR and parameter count per (family, N), over successful seeds."""
    fams = list(dict.fromkeys(r.family for r in results))
    dims = sorted({r.latent_dim for r in results})
    table = {}
    for f in fams:
        for n in dims:
            cell = [r for r in results if r.family == f and r.latent_dim == n]
            ok = [r.final_psnr for r in cell if r.status == "ok"]
            table[f, n] = {
                "psnr": float(np.mean(ok)) if ok else math.nan,
                "std": float(np.std(ok)) if ok else math.nan,
                "params": cell[0].param_count if cell else -1,
                "failed": sum(r.status != "ok" for r in cell),
            }
    return fams, dims, table


def write_summary(out_dir: Path, results: list[CellResult]) -> None:
    fams, dims, table = summary_table(results)
    with open(out_dir / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family"] + [f"N={n}" for n in dims])
        for f in fams:
            w.writerow([f] + [f"{table[f, n]['psnr']:.3f}" for n in dims])
        for f in fams:
            w.writerow([f"{f} params"] + [table[f, n]["params"] for n in dims])
    with open(out_dir / "plot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["latent_dim", "family", "mean_psnr", "std_psnr", "param_count", "failed"])
        for f in fams:
            for n in dims:
                c = table[f, n]
                w.writerow([n, f, f"{c['psnr']:.4f}", f"{c['std']:.4f}", c["params"], c["failed"]])


def run_sweep(cells: list[tuple[str, ExperimentSpec]], out_dir: str | os.PathLike,
              workers: int = 1) -> list[CellResult]:
    """Run every cell and emit ``results.csv``, ``table.csv`` and ``plot.csv``.

    Each cell's own ``spec.json`` under its output directory re-runs it alone.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_cells(cells, workers)
    write_results(out / "results.csv", results)
    write_summary(out, results)
    return results


def ablation_cells(base: ExperimentSpec, seeds, out_dir) -> list[tuple[str, ExperimentSpec]]:
    if base.family != "concat":
        raise ValueError("the concatenation ablation needs a concat decoder")
    cells = []
    for name, mode, splits in ABLATION_VARIANTS:
        dec = {**base.decoder, "concat_mode": mode, "num_splits": splits}
        for seed in seeds:
            slug = name.split()[0].replace("-", "") + f"_{mode}"
            spec = base.with_updates(decoder=dec, seed=int(seed),
                                     out_dir=str(Path(out_dir) / f"{slug}_s{seed}"))
            cells.append((name, spec))
    return cells


def run_concat_ablation(base: ExperimentSpec, out_dir: str | os.PathLike, seeds=(0,),
                        workers: int = 1, variants=None) -> list[dict]:
    """Train the five concatenation variants at a fixed N; returns table rows in report order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = ablation_cells(base, seeds, out)
    if variants is not None:
        cells = [c for c in cells if c[0] in variants]
    results = run_cells(cells, workers)
    write_results(out / "results.csv", results)
    rows = []
    for name, _, _ in ABLATION_VARIANTS:
        cell = [r for r in results if r.label == name]
        if not cell:
            continue
        ok = [r.final_psnr for r in cell if r.status == "ok"]
        rows.append({"variant": name, "mean_psnr": float(np.mean(ok)) if ok else math.nan,
                     "seeds": len(cell), "failed": len(cell) - len(ok),
                     "param_count": cell[0].param_count})
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["variant", "mean_psnr", "seeds", "failed", "param_count"])
        w.writeheader()
        w.writerows(rows)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2))
    return rows
