"""Experiment configuration, dataset preparation and the resumable training sweep."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .analysis import RUN_FIELDS, RunRecord, canonical_source, runs_to_csv
from .augment import N_STORED, AugmentStrategy, precompute_augmentations, select_augmented
from .dataset import Dataset, WaveformSpace, get_space, split_train_val, subsample_per_class
from .density import load_kdes, save_kdes
from .nn import CldnnSpec, TrainingConfig, evaluate, train
from .pipeline import CaptureSurrogateConfig, capture_surrogate, fit_class_kdes, synth_dataset
from .rng import derive_seed
from .storage import read_dataset, write_dataset

SOURCES = ("Ω_C", "Ω_SS", "Ω_SK", "Ω_AS", "Ω_AK")
AUGMENTED = ("Ω_AS", "Ω_AK")
# directory names on disk (ASCII)
DIR_NAMES = {"Ω_C": "C", "Ω_TC": "TC", "Ω_SS": "SS", "Ω_SK": "SK", "Ω_TS": "TS",
             "Ω_AS": "AS_pool", "Ω_AK": "AK_pool"}


class ConfigError(ValueError):
    pass


def log_grid(lo: float, hi: float, n: int) -> list[int]:
    """``n`` integers spaced evenly in log10 between ``lo`` and ``hi``."""
    return [int(round(v)) for v in np.logspace(math.log10(lo), math.log10(hi), n)]


@dataclass(frozen=True)
class ModelOverrides:
    input_len: int = 1024
    conv_channels: int = 50
    dense_units: int = 256

    def spec(self, n_classes: int) -> CldnnSpec:
        return CldnnSpec(n_classes, input_len=self.input_len, conv_channels=self.conv_channels,
                         dense_units=self.dense_units)


@dataclass(frozen=True)
class ExperimentConfig:
    space: WaveformSpace
    sources: tuple[str, ...] = ("Ω_C", "Ω_SS")
    qty_grid: tuple[int, ...] = (200, 632, 2000)
    repeats: int = 3
    seed: int = 0
    test_qty_per_class: int = 200
    aug_factor: int = N_STORED
    capture: CaptureSurrogateConfig = field(default_factory=CaptureSurrogateConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    model: ModelOverrides = field(default_factory=ModelOverrides)
    val_frac: float = 0.1
    workers: int = 1

    def __post_init__(self):
        if not self.sources:
            raise ConfigError("at least one source is required")
        for s in self.sources:
            if s not in SOURCES:
                raise ConfigError(f"unknown training source {s!r}")
        if not self.qty_grid or list(self.qty_grid) != sorted(self.qty_grid) or len(set(self.qty_grid)) != len(self.qty_grid):
            raise ConfigError("qty_grid must be strictly ascending")
        if self.qty_grid[0] < 2:
            raise ConfigError("quantities must be at least 2 per class")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not 1 <= self.aug_factor <= N_STORED:
            raise ConfigError(f"aug_factor must be in [1, {N_STORED}]")
        if self.test_qty_per_class < 1 or self.workers < 1:
            raise ConfigError("test_qty_per_class and workers must be >= 1")

    @property
    def capture_train_qty(self) -> int:
        """Ω_C observations per class needed to serve every grid cell."""
        need = self.qty_grid[-1]
        if any(s in AUGMENTED for s in self.sources):
            need = max(need, max(_parents_for(q, self.aug_factor) for q in self.qty_grid))
        return need

    def to_json(self) -> dict:
        return {
            "space": self.space.name,
            "sources": [canonical_source(s).replace("Ω_", "") for s in self.sources],
            "qty_grid": list(self.qty_grid),
            "repeats": self.repeats,
            "seed": self.seed,
            "test_qty_per_class": self.test_qty_per_class,
            "aug_factor": self.aug_factor,
            "capture": self.capture.to_json(),
            "training": self.training.to_json(),
            "model": asdict(self.model),
            "val_frac": self.val_frac,
            "workers": self.workers,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        known = {"space", "sources", "qty_grid", "repeats", "seed", "test_qty_per_class", "aug_factor",
                 "capture", "training", "model", "val_frac", "workers"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = {}
            kw["space"] = get_space(d.get("space", "phi3"))
            if "sources" in d:
                kw["sources"] = tuple(canonical_source(s) for s in d["sources"])
            if "qty_grid" in d:
                g = d["qty_grid"]
                if isinstance(g, dict):
                    g = log_grid(g["min"], g["max"], g["n"])
                kw["qty_grid"] = tuple(int(q) for q in g)
            for k in ("repeats", "seed", "test_qty_per_class", "aug_factor", "workers"):
                if k in d:
                    kw[k] = int(d[k])
            if "val_frac" in d:
                kw["val_frac"] = float(d["val_frac"])
            if "capture" in d:
                kw["capture"] = CaptureSurrogateConfig.from_json(d["capture"])
            if "training" in d:
                kw["training"] = TrainingConfig(**d["training"])
            if "model" in d:
                kw["model"] = ModelOverrides(**d["model"])
            return cls(**kw)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_json(doc)


# ---------------------------------------------------------------- datasets


def _parents_for(qty: int, factor: int) -> int:
    return max(2, qty // factor)


def prepare_datasets(cfg: ExperimentConfig, data_dir: str | os.PathLike, log=None) -> Path:
    """Write every dataset the sweep needs under ``data_dir`` (existing ones are reused)."""
    root = Path(data_dir)
    root.mkdir(parents=True, exist_ok=True)
    say = log or (lambda s: None)
    sp, seed = cfg.space, cfg.seed

    def exists(name):
        return (root / DIR_NAMES[name] / "manifest.json").exists()

    if not (exists("Ω_C") and exists("Ω_TC")):
        # the 90/10 split holds out test_frac of the total; size the total so Ω_C is large enough
        frac = cfg.capture.test_frac
        total = max(int(math.ceil(cfg.capture_train_qty / (1.0 - frac))),
                    int(math.ceil(cfg.test_qty_per_class / frac)))
        while total - max(1, int(math.floor(total * frac + 1e-9))) < cfg.capture_train_qty:
            total += 1
        say(f"capture surrogate: {total} per class")
        c, tc = capture_surrogate(sp, total, cfg.capture, seed)
        write_dataset(c, root / DIR_NAMES["Ω_C"])
        write_dataset(tc, root / DIR_NAMES["Ω_TC"])
    kde_path = root / "kdes.json"
    if not kde_path.exists():
        c = read_dataset(root / DIR_NAMES["Ω_C"])
        save_kdes(fit_class_kdes(c.manifest), kde_path)
    if not exists("Ω_TS"):
        say("synthetic test set")
        write_dataset(synth_dataset(sp, cfg.test_qty_per_class, derive_seed(seed, "TS"), "Ω_TS"),
                      root / DIR_NAMES["Ω_TS"])
    n_synth = int(math.ceil(cfg.qty_grid[-1]))
    if "Ω_SS" in cfg.sources and not exists("Ω_SS"):
        say("synthetic uniform set")
        write_dataset(synth_dataset(sp, n_synth, derive_seed(seed, "SS"), "Ω_SS"), root / DIR_NAMES["Ω_SS"])
    if "Ω_SK" in cfg.sources and not exists("Ω_SK"):
        say("synthetic KDE set")
        write_dataset(synth_dataset(sp, n_synth, derive_seed(seed, "SK"), "Ω_SK", load_kdes(kde_path)),
                      root / DIR_NAMES["Ω_SK"])
    for src in AUGMENTED:
        if src in cfg.sources and not exists(src):
            say(f"augmentation pool {src}")
            c = read_dataset(root / DIR_NAMES["Ω_C"])
            strat = AugmentStrategy.uniform() if src == "Ω_AS" else AugmentStrategy.from_kdes(load_kdes(kde_path))
            pool = precompute_augmentations(c, strat, derive_seed(seed, src), name=src)
            write_dataset(pool, root / DIR_NAMES[src])
    return root


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class RunCell:
    source: str
    qty: int
    repeat: int

    def run_id(self, space: WaveformSpace, seed: int) -> str:
        return f"{space.name}-{self.source.replace('Ω_', '')}-q{self.qty}-r{self.repeat}-s{seed}"


def plan(cfg: ExperimentConfig) -> list[RunCell]:
    return [RunCell(s, q, r) for s in cfg.sources for q in cfg.qty_grid for r in range(cfg.repeats)]


@lru_cache(maxsize=16)
def _load(path: str) -> Dataset:
    return read_dataset(path)


def training_set(cfg: ExperimentConfig, cell: RunCell, data_dir: Path, run_seed: int) -> tuple[Dataset, int | None]:
    """The cell's training observations and, for augmented sources, the capture-parent count."""
    if cell.source in AUGMENTED:
        capture = _load(str(data_dir / DIR_NAMES["Ω_C"]))
        pool = _load(str(data_dir / DIR_NAMES[cell.source]))
        n_parents = _parents_for(cell.qty, cfg.aug_factor)
        parents = subsample_per_class(capture.manifest, n_parents, run_seed)
        chosen = select_augmented(pool.manifest, parents, cfg.aug_factor, run_seed, cell.source)
        return pool.select(chosen), n_parents
    src = _load(str(data_dir / DIR_NAMES[cell.source]))
    sub = subsample_per_class(src.manifest, cell.qty, run_seed, cell.source)
    return src.select(sub), (cell.qty if cell.source == "Ω_C" else None)


def run_cell(cfg: ExperimentConfig, cell: RunCell, data_dir: str | os.PathLike, strict: bool = True) -> RunRecord:
    data_dir = Path(data_dir)
    run_seed = derive_seed(cfg.seed, cell.source, cell.qty, cell.repeat) % (2**31)
    ds, capture_qty = training_set(cfg, cell, data_dir, run_seed)
    tr, va = split_train_val(ds.manifest, cfg.val_frac, run_seed)
    spec = cfg.model.spec(len(cfg.space))
    tcfg = replace(cfg.training, seed=run_seed)
    params, hist = train(spec, tcfg, ds.select(tr), ds.select(va), cfg.space, strict=strict)
    acc_tc = evaluate(params, _load(str(data_dir / DIR_NAMES["Ω_TC"])), cfg.space, strict=strict).accuracy
    acc_ts = evaluate(params, _load(str(data_dir / DIR_NAMES["Ω_TS"])), cfg.space, strict=strict).accuracy
    qty = len(ds.manifest.by_class()[cfg.space.classes[0]])
    return RunRecord(cell.run_id(cfg.space, cfg.seed), cfg.space.name, cell.source, qty,
                     acc_tc, acc_ts, len(hist), run_seed, capture_qty)


def _run_cell_safe(args):
    cfg, cell, data_dir, strict = args
    try:
        return cell, run_cell(cfg, cell, data_dir, strict), None
    except Exception as exc:  # a failed run is recorded; the sweep goes on
        return cell, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def read_completed(path: Path) -> dict[str, RunRecord]:
    if not path.exists():
        return {}
    text = path.read_text(encoding="utf-8")
    done = {}
    for row in csv.DictReader(io.StringIO(text)):
        try:
            rec = RunRecord.from_row(row)
        except (KeyError, TypeError, ValueError):
            continue  # torn or foreign row: rerun it
        done[rec.run_id] = rec
    return done


@dataclass
class SweepResult:
    runs: list[RunRecord]
    failures: dict[str, str]
    table_path: Path

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def sweep(cfg: ExperimentConfig, out_dir: str | os.PathLike, resume: bool = True, strict: bool = True,
          data_dir: str | os.PathLike | None = None, log=None, max_runs: int | None = None) -> SweepResult:
    """Train and evaluate every (source, qty, repeat) cell; returns the run table.

    Completed run ids already in ``runs.csv`` are skipped when ``resume`` is
    set. ``max_runs`` stops after that many new runs (for staged execution).
    """
    say = log or (lambda s: None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = Path(data_dir) if data_dir is not None else out / "datasets"
    prepare_datasets(cfg, data_dir, say)
    (out / "config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True, ensure_ascii=False),
                                     encoding="utf-8")
    table = out / "runs.csv"
    cells = plan(cfg)
    ids = [c.run_id(cfg.space, cfg.seed) for c in cells]
    done = read_completed(table) if resume else {}
    done = {k: v for k, v in done.items() if k in set(ids)}
    todo = [c for c, i in zip(cells, ids) if i not in done]
    if max_runs is not None:
        todo = todo[:max_runs]
    failures: dict[str, str] = {}

    def flush():
        ordered = [done[i] for i in ids if i in done]
        _atomic_write(table, runs_to_csv(ordered))
        fail_lines = "".join(f"{k}\t{v.splitlines()[0]}\n" for k, v in sorted(failures.items()))
        if failures:
            _atomic_write(out / "failures.tsv", "run_id\terror\n" + fail_lines)
        elif (out / "failures.tsv").exists():
            (out / "failures.tsv").unlink()

    jobs = [(cfg, c, str(data_dir), strict) for c in todo]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = ex.map(_run_cell_safe, jobs)
            for cell, rec, err in results:
                _record(cell, rec, err, cfg, done, failures, say)
                flush()
    else:
        for job in jobs:
            cell, rec, err = _run_cell_safe(job)
            _record(cell, rec, err, cfg, done, failures, say)
            flush()
    flush()
    return SweepResult([done[i] for i in ids if i in done], failures, table)


def _record(cell, rec, err, cfg, done, failures, say):
    rid = cell.run_id(cfg.space, cfg.seed)
    if rec is None:
        failures[rid] = err
        say(f"FAILED {rid}: {err.splitlines()[0]}")
    else:
        done[rid] = rec
        say(f"{rid}: acc_tc {rec.acc_tc:.4f} acc_ts {rec.acc_ts:.4f} epochs {rec.epochs}")


__all__ = ["AUGMENTED", "ConfigError", "ExperimentConfig", "ModelOverrides", "RUN_FIELDS", "RunCell",
           "SOURCES", "SweepResult", "load_config", "log_grid", "plan", "prepare_datasets", "run_cell",
           "sweep", "training_set"]
