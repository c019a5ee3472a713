"""Command-line harness: one subcommand per experiment, CSV/JSON artifacts
plus a manifest that is enough to rerun the command bit for bit."""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import click
import numpy as np
import scipy

from . import __version__, kernels
from .array import (FitDiverged, SingularNetwork, TABLE_TARGETS, calibrate,
                    exact_search_delay, exact_search_energy, nominal_delay_table)
from .config import ConfigError, SimConfig, load_config, save_config
from .device import NonConvergence
from .similarity import (BitDataset, fixed_radius_benchmark, load_embeddings, recsys_eval,
                         synthetic_recsys)
from .variation import MddSweep, NotResolvable, ser as ser_run
from .write import StepUnstable, run_sot_phase, wer_curve, write_energy

SCHEMA_VERSION = 1
OUT_ENV = "SOTCAM_OUT"

EXIT_CONFIG, EXIT_SIM, EXIT_CAL = 1, 2, 3

# column schema of each figure-style CSV
FIGURE_SCHEMAS = {
    "wer": ("write_time_ns", "wer", "ci_lo", "ci_hi"),
    "mdd": ("preset", "vs", "hdist", "mdd"),
    "mz_hist": ("i_sot_uA", "bin_lo", "bin_hi", "count"),
    "delay": ("preset", "vs", "hdist", "row_position", "sample_id", "delay_s"),
    "bench": ("preset", "vs", "metric", "value"),
    "pool": ("query", "pool_size"),
}


class MissingInput(ValueError):
    pass


# ---------------------------------------------------------------- output

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: Path, payload: Dict) -> None:
    body = {"schema_version": SCHEMA_VERSION, **_clean(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def emit_figure_data(kind: str, rows, path) -> Path:
    """Long-format CSV with the documented schema for ``kind``."""
    if kind not in FIGURE_SCHEMAS:
        raise ValueError(f"unknown figure kind {kind!r}")
    rows = list(rows) if rows is not None else []
    if not rows:
        raise MissingInput(f"no results to emit for {kind}")
    path = Path(path)
    write_csv(path, FIGURE_SCHEMAS[kind], rows)
    return path


class Run:
    """Per-command context: config, output dir and manifest bookkeeping."""

    def __init__(self, ctx: click.Context, command: str, params: Dict, seed=None):
        obj = ctx.obj
        self.cfg: SimConfig = obj["cfg"]
        self.out = Path(obj["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.params = params
        self.seed = seed
        self.files: List[str] = []
        self.overrides = obj["overrides"]
        self.config_path = obj["config_path"]

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def manifest(self) -> None:
        write_json(self.out / f"{self.command}.manifest.json", {
            "command": self.command,
            "params": self.params,
            "seed": self.seed,
            "config_path": self.config_path,
            "config_sha256": self.cfg.digest(),
            "overrides": list(self.overrides),
            "artifacts": sorted(self.files),
            "versions": {"sotcam": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "kernel_backend": kernels.BACKEND},
        })


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------- commands

@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML config file (defaults built in).")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
              help="Override a config value; repeatable.")
@click.option("--out", default=None, type=click.Path(file_okay=False),
              help=f"Output directory (default ${OUT_ENV} or ./results).")
@click.version_option(__version__)
@click.pass_context
def cli(ctx, config_path, overrides, out):
    """Behavioral simulator for an SOT-MTJ ternary CAM."""
    ctx.ensure_object(dict)
    ctx.obj["cfg"] = load_config(config_path, overrides)
    ctx.obj["overrides"] = overrides
    ctx.obj["config_path"] = config_path
    ctx.obj["out"] = out or os.environ.get(OUT_ENV, "results")


@cli.command("write-wer")
@click.option("--times", default="5,10,30", help="STT write times in ns.")
@click.option("--n-trials", default=10000, show_default=True)
@click.option("--seed", required=True, type=int)
@click.pass_context
def write_wer(ctx, times, n_trials, seed):
    """Write error rate against STT write time."""
    run = Run(ctx, "write-wer", {"times_ns": times, "n_trials": n_trials}, seed)
    ts = [t * 1e-9 for t in _floats(times)]
    res, mz = wer_curve(run.cfg.magnet, run.cfg.pulse, ts, n_trials, seed, per_trial=True)
    header = ["trial"] + [f"mz_{t:g}ns" for t in _floats(times)] + \
             [f"success_{t:g}ns" for t in _floats(times)]
    write_csv(run.path("write-wer.trials.csv"), header,
              ([i, *mz[i], *(int(v < 0) for v in mz[i])] for i in range(n_trials)))
    emit_figure_data("wer", [(r.t_write * 1e9, r.wer, r.ci_low, r.ci_high) for r in res],
                     run.path("write-wer.csv"))
    write_json(run.path("write-wer.json"), {"points": [r.__dict__ for r in res]})
    run.manifest()


@cli.command("sot-dist")
@click.option("--currents", default="400,700", help="SOT spin currents in uA.")
@click.option("--n-trials", default=1000, show_default=True)
@click.option("--bins", default=40, show_default=True)
@click.option("--seed", required=True, type=int)
@click.pass_context
def sot_dist(ctx, currents, n_trials, bins, seed):
    """mz distribution at the end of the SOT pulse."""
    run = Run(ctx, "sot-dist", {"currents_uA": currents, "n_trials": n_trials, "bins": bins},
              seed)
    edges = np.linspace(-1, 1, bins + 1)
    rows, stats = [], {}
    for i_ua in _floats(currents):
        sched = replace(run.cfg.pulse, i_sot_spin=i_ua * 1e-6)
        mz = run_sot_phase(run.cfg.magnet, sched, seed, n_trials)[:, 2]
        cnt, _ = np.histogram(mz, edges)
        rows += [(i_ua, edges[k], edges[k + 1], int(cnt[k])) for k in range(bins)]
        stats[f"{i_ua:g}"] = {"mean": float(mz.mean()), "std": float(mz.std())}
    emit_figure_data("mz_hist", rows, run.path("sot-dist.csv"))
    write_json(run.path("sot-dist.json"), {"mz": stats})
    run.manifest()


@cli.command("write-energy")
@click.pass_context
def write_energy_cmd(ctx):
    """Per-bit write energy for binary and X data."""
    run = Run(ctx, "write-energy", {})
    e = {p: write_energy(p, run.cfg.write_electrical) for p in ("0", "1", "X")}
    write_json(run.path("write-energy.json"), {"energy_pJ": {k: v * 1e12 for k, v in e.items()}})
    run.manifest()


@cli.command("delay-sweep")
@click.option("--preset", default="SOT5T")
@click.option("--vs", default="0.8,1.0")
@click.option("--hdists", default="1,2,5,10,20,30,40,64")
@click.pass_context
def delay_sweep(ctx, preset, vs, hdists):
    """Nominal matchline delay against Hamming distance at every row."""
    run = Run(ctx, "delay-sweep", {"preset": preset, "vs": vs, "hdists": hdists})
    hs = _ints(hdists)
    rows = []
    for v in _floats(vs):
        cfg = run.cfg.array.with_preset(preset, v_s=v)
        tab = nominal_delay_table(cfg, hs)
        # nominal devices: a single sample per row
        rows += [(preset, v, h, r, 0, tab[i, r]) for i, h in enumerate(hs)
                 for r in range(cfg.rows)]
    emit_figure_data("delay", rows, run.path("delay-sweep.csv"))
    run.manifest()


@cli.command("ser")
@click.option("--vs", default=0.8, type=float)
@click.option("--x-count", default=32, show_default=True)
@click.option("--word", default=128, show_default=True)
@click.option("--n-mc", default=1000, show_default=True)
@click.option("--preset", default="SOT5T")
@click.option("--workers", default=1, show_default=True)
@click.option("--seed", required=True, type=int)
@click.pass_context
def ser_cmd(ctx, vs, x_count, word, n_mc, preset, workers, seed):
    """Exact-match search error rate under device variation."""
    run = Run(ctx, "ser", {"vs": vs, "x_count": x_count, "word": word, "n_mc": n_mc,
                           "preset": preset}, seed)
    cfg = run.cfg.array.with_preset(preset)
    rep = ser_run(cfg, vs, x_count, word, n_mc, seed, workers=workers)
    write_csv(run.path("ser.samples.csv"), ("scenario", "sample_id", "delay_s"),
              [(name, i, d) for name, dist in (("match", rep.match_dist),
                                               ("mismatch", rep.mismatch_dist))
               for i, d in enumerate(dist.samples)])
    write_json(run.path("ser.json"), rep.summary())
    run.manifest()


@cli.command("mdd")
@click.option("--presets", default="SOT5T,SOT3T,SRAM,FEFET")
@click.option("--vs", default="0.8,1.0")
@click.option("--hdists", default="1,5,10,15,20,25,30")
@click.option("--n-mc", default=200, show_default=True)
@click.option("--cap", default=40, show_default=True)
@click.option("--seed", required=True, type=int)
@click.pass_context
def mdd_cmd(ctx, presets, vs, hdists, n_mc, cap, seed):
    """Minimum detectable distance sweep; unresolvable points are left blank."""
    run = Run(ctx, "mdd", {"presets": presets, "vs": vs, "hdists": hdists, "n_mc": n_mc,
                           "cap": cap}, seed)
    rows = []
    for p in presets.split(","):
        for v in _floats(vs):
            sw = MddSweep(run.cfg.array.with_preset(p, v_s=v), n_mc, seed, cap)
            for h, m in zip(_ints(hdists), sw.sweep(_ints(hdists))):
                rows.append((p, v, h, m))
    emit_figure_data("mdd", rows, run.path("mdd.csv"))
    run.manifest()


@cli.command("fixed-radius")
@click.option("--radius", default=20, show_default=True)
@click.option("--preset", default="SOT5T")
@click.option("--vs", default=0.8, type=float)
@click.option("--mode", type=click.Choice(["ideal", "realistic"]), default="realistic")
@click.option("--n", "n_items", default=10000, show_default=True)
@click.option("--word", default=128, show_default=True)
@click.option("--queries", default=10, show_default=True)
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Packed ternary dataset; queries are then its first rows.")
@click.option("--seed", required=True, type=int)
@click.pass_context
def fixed_radius(ctx, radius, preset, vs, mode, n_items, word, queries, dataset, seed):
    """Fixed-radius near-neighbour search quality."""
    run = Run(ctx, "fixed-radius", {"radius": radius, "preset": preset, "vs": vs, "mode": mode,
                                    "n": n_items, "word": word, "queries": queries,
                                    "dataset": dataset}, seed)
    if dataset:
        ds = BitDataset.load(dataset)
        qs = ds.vectors[:queries]
    else:
        ds, qs = BitDataset.planted(n_items, word, queries, seed)
    cfg = run.cfg.array.with_preset(preset, v_s=vs)
    m = fixed_radius_benchmark(ds, qs, radius, cfg, mode)
    write_json(run.path("fixed-radius.json"), m.__dict__)
    run.manifest()


@cli.command("recsys")
@click.option("--radius", default=20, show_default=True)
@click.option("--preset", default="SRAM")
@click.option("--vs", default=0.8, type=float)
@click.option("--mode", type=click.Choice(["ideal", "realistic"]), default="ideal")
@click.option("--n-queries", default=50, show_default=True)
@click.option("--items", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Item embeddings (text rows or packed binary).")
@click.option("--seed", required=True, type=int)
@click.pass_context
def recsys(ctx, radius, preset, vs, mode, n_queries, items, seed):
    """CAM candidate generation followed by dot-product ranking."""
    run = Run(ctx, "recsys", {"radius": radius, "preset": preset, "vs": vs, "mode": mode,
                              "n_queries": n_queries, "items": items}, seed)
    if items:
        emb = load_embeddings(items)
        rng = np.random.default_rng(seed)
        gt = rng.choice(emb.shape[0], n_queries, replace=False)
        q = emb[gt] + 0.6 * rng.standard_normal((n_queries, emb.shape[1])) / math.sqrt(emb.shape[1])
        uni = [np.concatenate([[g], rng.choice(np.delete(np.arange(emb.shape[0]), g),
                                               min(1000, emb.shape[0] - 1), replace=False)])
               for g in gt]
    else:
        emb, q, gt, uni = synthetic_recsys(n_queries=n_queries, seed=seed)
    cfg = run.cfg.array.with_preset(preset, v_s=vs)
    rep = recsys_eval(emb, q, gt, uni, radius, cfg, mode, seed=seed)
    write_json(run.path("recsys.json"), rep.summary())
    emit_figure_data("pool", list(enumerate(rep.pool_sizes)), run.path("recsys.pools.csv"))
    run.manifest()


@cli.command("calibrate")
@click.option("--presets", default=",".join(TABLE_TARGETS))
@click.option("--max-residual", default=0.5, show_default=True)
@click.option("--write-config", type=click.Path(dir_okay=False), default=None,
              help="Also save the calibrated configuration here.")
@click.pass_context
def calibrate_cmd(ctx, presets, max_residual, write_config):
    """Fit preset parameters to the reference exact-search delays."""
    run = Run(ctx, "calibrate", {"presets": presets, "max_residual": max_residual})
    res = calibrate(run.cfg.array, presets=presets.split(","), max_residual=max_residual)
    new = replace(run.cfg, array=res.config)
    save_config(new, run.path("calibrated.toml"))
    if write_config:
        save_config(new, write_config)
    write_json(run.path("calibrate.json"), {
        "params": res.params, "delay_residuals": res.residuals,
        "energy_pJ": {k: {kk: vv * 1e12 for kk, vv in v.items()}
                      for k, v in res.energies.items()}})
    run.manifest()


@cli.command("bench-all")
@click.option("--radius", default=20, show_default=True)
@click.option("--n", "n_items", default=10000, show_default=True)
@click.option("--queries", default=10, show_default=True)
@click.option("--seed", required=True, type=int)
@click.pass_context
def bench_all(ctx, radius, n_items, queries, seed):
    """Delay, energy, area and fixed-radius metrics for every preset and Vs."""
    run = Run(ctx, "bench-all", {"radius": radius, "n": n_items, "queries": queries}, seed)
    ds, qs = BitDataset.planted(n_items, run.cfg.array.cols, queries, seed)
    ideal = fixed_radius_benchmark(ds, qs, radius, None, "ideal")
    rows = [("ideal", "", "precision", ideal.precision), ("ideal", "", "recall", ideal.recall)]
    for name, pts in TABLE_TARGETS.items():
        for vs in pts:
            cfg = run.cfg.array.with_preset(name) if vs is None else \
                run.cfg.array.with_preset(name, v_s=vs)
            tag = "" if vs is None else vs
            m = fixed_radius_benchmark(ds, qs, radius, cfg, "realistic")
            rows += [(name, tag, "delay_ns", exact_search_delay(cfg) * 1e9),
                     (name, tag, "energy_pJ", exact_search_energy(cfg) * 1e12),
                     (name, tag, "area_um2", cfg.preset.area_um2),
                     (name, tag, "precision", m.precision),
                     (name, tag, "recall", m.recall),
                     (name, tag, "f_score", m.f_score)]
    emit_figure_data("bench", rows, run.path("bench-all.csv"))
    run.manifest()


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="sotcam", standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG
    except (ConfigError, KeyError) as e:
        click.echo(f"config error: {e}", err=True)
        return EXIT_CONFIG
    except FitDiverged as e:
        click.echo(f"calibration failed: {e}", err=True)
        return EXIT_CAL
    except (NonConvergence, SingularNetwork, StepUnstable, NotResolvable, MissingInput,
            ValueError, FloatingPointError) as e:
        click.echo(f"simulation error: {e}", err=True)
        return EXIT_SIM
    return 0


if __name__ == "__main__":
    sys.exit(main())
