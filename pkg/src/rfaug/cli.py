"""Command-line entry point: ``rfaug <command> ...``.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 partial failure (output written but some items failed), 4 no data.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_NO_DATA = 4


class CliConfigError(Exception):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CliConfigError("config must be a JSON object")
    return doc


# per-command keys that may share a config file with the experiment settings
COMMAND_KEYS = ("qty_per_class", "source", "kde")


def _experiment_config(args):
    from .experiment import ConfigError, ExperimentConfig

    doc = _read_config(args.config)
    doc = {k: v for k, v in doc.items() if k not in COMMAND_KEYS}
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        return ExperimentConfig.from_json(doc)
    except ConfigError as exc:
        raise CliConfigError(str(exc)) from None


def _require_out(args) -> Path:
    if not args.out:
        raise CliConfigError("--out is required")
    return Path(args.out)


def _write_failures(out: Path, failures: list) -> None:
    lines = ["seed_path\terror"] + [f"{'/'.join(map(str, k))}\t{msg}" for k, msg in failures]
    (out / "FAILURES.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "PARTIAL").write_text(f"{len(failures)} item(s) failed; see FAILURES.tsv\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    from .analysis import canonical_source
    from .density import load_kdes
    from .experiment import DIR_NAMES
    from .pipeline import synth_dataset
    from .rng import derive_seed
    from .storage import write_dataset

    doc = _read_config(args.config)
    cfg = _experiment_config(args)
    out = _require_out(args)
    try:
        qty = int(doc.get("qty_per_class", 100))
        source = canonical_source(doc.get("source", "SS"))
    except ValueError as exc:
        raise CliConfigError(str(exc)) from None
    if source not in ("Ω_SS", "Ω_SK", "Ω_TS"):
        raise CliConfigError("synth source must be SS, SK or TS")
    kdes = None
    if source == "Ω_SK":
        if "kde" not in doc:
            raise CliConfigError("source SK needs a 'kde' path")
        kdes = load_kdes(doc["kde"])
    out.mkdir(parents=True, exist_ok=True)
    failures: list = []
    targets = [(source, qty, kdes)]
    if source != "Ω_TS":
        targets.append(("Ω_TS", cfg.test_qty_per_class, None))
    for name, n, k in targets:
        ds = synth_dataset(cfg.space, n, derive_seed(cfg.seed, name.replace("Ω_", "")), name, k, failures)
        write_dataset(ds, out / DIR_NAMES[name])
        _log(f"{name}: {len(ds)} observations -> {out / DIR_NAMES[name]}")
    if failures:
        _write_failures(out, failures)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_capture_surrogate(args) -> int:
    from .density import save_kdes
    from .pipeline import capture_surrogate, fit_class_kdes
    from .storage import write_dataset

    doc = _read_config(args.config)
    cfg = _experiment_config(args)
    out = _require_out(args)
    qty = int(doc.get("qty_per_class", 1000))
    out.mkdir(parents=True, exist_ok=True)
    failures: list = []
    c, tc = capture_surrogate(cfg.space, qty, cfg.capture, cfg.seed, failures)
    write_dataset(c, out / "C")
    write_dataset(tc, out / "TC")
    save_kdes(fit_class_kdes(c.manifest), out / "kdes.json")
    _log(f"Ω_C: {len(c)}  Ω_TC: {len(tc)}  -> {out}")
    if failures:
        _write_failures(out, failures)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_kde(args) -> int:
    from .dataset import WaveformClass
    from .density import kde_sample, load_kdes, save_kdes
    from .pipeline import fit_class_kdes
    from .storage import read_dataset

    if args.kde_command == "fit":
        out = _require_out(args)
        models = fit_class_kdes(read_dataset(args.dataset).manifest)
        save_kdes(models, out)
        for cls, m in models.items():
            _log(f"{cls.value}: n={m.n} h={m.bandwidth_factor:.4f}")
        return EXIT_OK
    models = load_kdes(args.kde)
    try:
        cls = WaveformClass(args.cls)
    except ValueError:
        raise CliConfigError(f"unknown class {args.cls!r}") from None
    if cls not in models:
        raise CliConfigError(f"no model for class {cls.value}")
    draws = kde_sample(models[cls], args.n, args.seed if args.seed is not None else 0)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else nullcontext(sys.stdout)
    with fh as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["snr_db", "fo_frac", "srm"])
        for row in draws:
            w.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def cmd_augment(args) -> int:
    from .augment import AugmentStrategy, build_augmented
    from .density import load_kdes
    from .storage import read_dataset, write_dataset

    out = _require_out(args)
    if args.strategy == "kde":
        if not args.kde:
            raise CliConfigError("--kde is required for the kde strategy")
        strat = AugmentStrategy.from_kdes(load_kdes(args.kde))
    else:
        strat = AugmentStrategy.uniform()
    if not 1 <= args.factor <= 10:
        raise CliConfigError("--factor must be in [1, 10]")
    capture = read_dataset(args.dataset)
    ds = build_augmented(capture, strat, args.factor, args.seed if args.seed is not None else 0)
    write_dataset(ds, out)
    _log(f"{len(ds)} augmented observations from {len(capture)} parents -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from dataclasses import replace

    from .dataset import split_train_val
    from .nn import save_checkpoint, train
    from .storage import read_dataset

    cfg = _experiment_config(args)
    out = _require_out(args)
    ds = read_dataset(args.dataset)
    tr, va = split_train_val(ds.manifest, cfg.val_frac, cfg.seed)
    spec = cfg.model.spec(len(cfg.space))
    params, hist = train(spec, replace(cfg.training, seed=cfg.seed), ds.select(tr), ds.select(va), cfg.space,
                         strict=args.strict_determinism, log=_log)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "model.ckpt")
    hist.to_csv(out / "history.csv")
    _log(f"best epoch {hist.best_epoch} of {len(hist)} -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .dataset import get_space
    from .nn import evaluate, load_checkpoint
    from .storage import read_dataset

    params = load_checkpoint(args.model)
    ds = read_dataset(args.dataset)
    space = get_space(args.space) if args.space else ds.manifest.space
    res = evaluate(params, ds, space, strict=args.strict_determinism)
    doc = {
        "accuracy": res.accuracy,
        "classes": list(res.classes),
        "confusion": res.confusion.tolist(),
        "per_class": [None if math.isnan(v) else float(v) for v in res.per_class],
        "n": res.total,
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import sweep

    cfg = _experiment_config(args)
    out = _require_out(args)
    res = sweep(cfg, out, resume=args.resume, strict=args.strict_determinism, log=_log,
                data_dir=args.data_dir)
    _log(f"{len(res.runs)} runs in {res.table_path}; {len(res.failures)} failed")
    return EXIT_PARTIAL if res.partial else EXIT_OK


def _analysis(args):
    from .analysis import read_runs
    from .report import analyze, reference_analysis

    if args.reference:
        return reference_analysis()
    if not args.runs:
        raise CliConfigError("--runs is required unless --reference is given")
    try:
        runs = read_runs(args.runs)
    except (OSError, KeyError, ValueError) as exc:
        raise CliConfigError(f"cannot read run table {args.runs}: {exc}") from None
    return analyze(runs, args.metric)


def cmd_analyze(args) -> int:
    from .report import summary_markdown, write_analysis

    out = _require_out(args)
    res = _analysis(args)
    if res.empty and not res.forecasts:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(summary_markdown(res), encoding="utf-8")
        _log("no data: the run table is empty")
        return EXIT_NO_DATA
    files = write_analysis(res, out, figures=not args.reference)
    for n in res.notices:
        _log(n)
    _log(f"wrote {len(files)} files to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import summary_markdown

    code = cmd_analyze(args)
    if code == EXIT_OK:
        res = _analysis(args)
        Path(args.out, "report.md").write_text(summary_markdown(res), encoding="utf-8")
    return code


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--strict-determinism", action="store_true",
                        help="single-threaded numerics for bit-reproducible results")

    p = argparse.ArgumentParser(prog="rfaug", description="IQ dataset generation, CLDNN training and trend analysis")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="synthetic training set plus synthetic test set")
    sub.add_parser("capture-surrogate", parents=[common], help="emulated capture train/test sets and KDEs")

    kde = sub.add_parser("kde", help="fit or sample per-class parameter KDEs")
    ksub = kde.add_subparsers(dest="kde_command", required=True)
    kf = ksub.add_parser("fit", parents=[common])
    kf.add_argument("--dataset", required=True)
    ks = ksub.add_parser("sample", parents=[common])
    ks.add_argument("--kde", required=True)
    ks.add_argument("--class", dest="cls", required=True)
    ks.add_argument("--n", type=int, default=1000)

    aug = sub.add_parser("augment", parents=[common], help="augmented set from a capture dataset")
    aug.add_argument("--dataset", required=True)
    aug.add_argument("--strategy", choices=("uniform", "kde"), default="uniform")
    aug.add_argument("--kde")
    aug.add_argument("--factor", type=int, default=10)

    tr = sub.add_parser("train", parents=[common], help="train a CLDNN on a dataset")
    tr.add_argument("--dataset", required=True)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--space")

    sw = sub.add_parser("sweep", parents=[common], help="train/evaluate over a quantity grid")
    sw.add_argument("--resume", action="store_true", help="skip run ids already in the run table")
    sw.add_argument("--data-dir", help="dataset directory (default OUT/datasets)")

    for name, helptext in (("analyze", "fits, forecasts, contrasts and figures from a run table"),
                           ("report", "analyze plus a markdown summary")):
        a = sub.add_parser(name, parents=[common], help=helptext)
        a.add_argument("--runs", help="run table CSV")
        a.add_argument("--metric", choices=("acc_tc", "acc_ts"), default="acc_tc")
        a.add_argument("--reference", action="store_true",
                       help="use the stored reference fit parameters instead of runs")
    return p


COMMANDS = {
    "synth": cmd_synth,
    "capture-surrogate": cmd_capture_surrogate,
    "kde": cmd_kde,
    "augment": cmd_augment,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.strict_determinism:
        from threadpoolctl import threadpool_limits
        ctx = threadpool_limits(limits=1)
    else:
        ctx = nullcontext()
    try:
        with ctx, np.errstate(over="ignore"):
            return COMMANDS[args.command](args)
    except CliConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    except Exception as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
