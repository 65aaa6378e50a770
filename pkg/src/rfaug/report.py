"""Analysis of a run table: fits, forecasts, durations, contrasts and figures.

Everything here is a pure function of the run table and options.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (CAPTURE_FAMILY, LOG_LINEAR, LOG_LOGISTIC, REFERENCE_LOG_LINEAR, REFERENCE_LOG_LOGISTIC,
                       FitError, RunRecord, TrendFit, capture_duration_days, filter_outliers,
                       fit_log_linear, fit_log_logistic, forecast_qty, reference_fit)
from .dataset import get_space
from .stats import welch_ttest
from .svg import COLORS, MARKERS, Axis, Plot

FORECAST_ALPHA = {LOG_LINEAR: 1.0, LOG_LOGISTIC: 0.95}
SOURCE_ORDER = ("Ω_C", "Ω_AK", "Ω_AS", "Ω_SS", "Ω_SK")


@dataclass
class Analysis:
    runs: list[RunRecord]
    kept: list[RunRecord]
    bounds: dict
    fits: dict = field(default_factory=dict)           # (space, source, kind) -> TrendFit
    forecasts: list[dict] = field(default_factory=list)
    durations: list[dict] = field(default_factory=list)
    contrasts: list[dict] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.runs


def _sources(runs):
    present = {r.source for r in runs}
    return [s for s in SOURCE_ORDER if s in present]


def _spaces(runs):
    order = {"phi3": 0, "phi5": 1, "phi10": 2}
    return sorted({r.space for r in runs}, key=lambda s: order.get(s, 9))


def _forecast_rows(space: str, source: str, fit: TrendFit, origin: str) -> tuple[dict, dict | None]:
    alpha = FORECAST_ALPHA[fit.kind]
    qty = forecast_qty(fit, alpha)
    row = {"space": space, "source": source, "kind": fit.kind, "alpha": alpha, "qty_per_class": qty,
           "origin": origin}
    dur = None
    if source == "Ω_C":
        n = len(get_space(space))
        dur = {"space": space, "source": source, "kind": fit.kind, "alpha": alpha,
               "days": capture_duration_days(qty, n), "origin": origin}
    return row, dur


def analyze(runs: list[RunRecord], metric: str = "acc_tc") -> Analysis:
    """Outlier filter, per-(space, source) trends, forecasts, durations and Welch contrasts."""
    kept, bounds = filter_outliers(runs, metric)
    res = Analysis(runs, kept, bounds)
    for space in _spaces(runs):
        for source in _sources([r for r in runs if r.space == space]):
            pts = [(r.qty_per_class, getattr(r, metric)) for r in kept if r.space == space and r.source == source]
            for kind, fitter in ((LOG_LINEAR, fit_log_linear), (LOG_LOGISTIC, fit_log_logistic)):
                try:
                    fit = fitter(pts)
                except FitError as exc:
                    res.notices.append(f"{space} {source} {kind}: trend omitted ({exc})")
                    continue
                res.fits[(space, source, kind)] = fit
                if not fit.significant or fit.p1 <= 0:
                    res.notices.append(f"{space} {source} {kind}: no significant trend "
                                       f"(slope p={fit.slope_p:.3g}); no forecast")
                    continue
                try:
                    row, dur = _forecast_rows(space, source, fit, "runs")
                except (FitError, OverflowError) as exc:
                    res.notices.append(f"{space} {source} {kind}: forecast failed ({exc})")
                    continue
                res.forecasts.append(row)
                if dur:
                    res.durations.append(dur)
        res.contrasts.extend(_contrasts(space, [r for r in kept if r.space == space]))
    return res


def _contrasts(space: str, runs: list[RunRecord]) -> list[dict]:
    by = {}
    for r in runs:
        by.setdefault(r.source, []).append(r)
    out = []
    for a, b in (("Ω_SK", "Ω_SS"), ("Ω_AK", "Ω_AS"), ("Ω_C", "Ω_SS")):
        if a not in by or b not in by:
            continue
        for metric in ("acc_ts", "acc_tc"):
            xa = [getattr(r, metric) for r in by[a]]
            xb = [getattr(r, metric) for r in by[b]]
            row = {"space": space, "a": a, "b": b, "metric": metric, "n_a": len(xa), "n_b": len(xb)}
            if len(xa) >= 2 and len(xb) >= 2:
                row["mean_ratio"] = float(np.mean(xa) / np.mean(xb)) if np.mean(xb) > 0 else math.nan
                try:
                    t = welch_ttest(xa, xb)
                    row.update(t=t.t, dof=t.dof, p=t.p)
                except ValueError as exc:
                    row["note"] = str(exc)
            out.append(row)
    return out


def reference_analysis() -> Analysis:
    """Forecasts and durations from the stored reference fit parameters (no runs)."""
    res = Analysis([], [], {})
    for kind, table in ((LOG_LINEAR, REFERENCE_LOG_LINEAR), (LOG_LOGISTIC, REFERENCE_LOG_LOGISTIC)):
        for (space, source) in table:
            if source not in CAPTURE_FAMILY:
                continue
            fit = reference_fit(kind, space, source)
            res.fits[(space, source, kind)] = fit
            row, dur = _forecast_rows(space, source, fit, "reference")
            res.forecasts.append(row)
            if dur:
                res.durations.append(dur)
    return res


# ---------------------------------------------------------------- writers


def _csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_analysis(res: Analysis, out_dir: str | os.PathLike, figures: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    fits = [{"space": s, "source": src, **{k: _json_safe(v) for k, v in f.to_json().items()}}
            for (s, src, _), f in res.fits.items()]
    put("fits.json", json.dumps(fits, indent=2, ensure_ascii=False) + "\n")
    put("forecasts.csv", _csv(res.forecasts, ["space", "source", "kind", "alpha", "qty_per_class", "origin"]))
    put("durations.csv", _csv(res.durations, ["space", "source", "kind", "alpha", "days", "origin"]))
    put("contrasts.csv", _csv(res.contrasts, ["space", "a", "b", "metric", "n_a", "n_b", "mean_ratio",
                                              "t", "dof", "p", "note"]))
    bounds = [{"space": s, "family": "capture" if fam == CAPTURE_FAMILY else "synthetic", "bound": b}
              for (s, fam), b in res.bounds.items()]
    put("outlier_bounds.csv", _csv(bounds, ["space", "family", "bound"]))
    put("notices.txt", "".join(n + "\n" for n in res.notices))
    if figures:
        for space in _spaces(res.runs):
            put(f"compare_{space}.svg", compare_figure(res, space))
            put(f"quantity_{space}.svg", quantity_figure(res, space))
            if any(r.capture_qty for r in res.runs if r.space == space):
                put(f"capture_quantity_{space}.svg", quantity_figure(res, space, capture_axis=True))
    return written


# ---------------------------------------------------------------- figures


def compare_figure(res: Analysis, space: str) -> str:
    """acc on the capture test set (x) against acc on the synthetic test set (y)."""
    n = len(get_space(space))
    chance = 1.0 / n
    p = Plot(f"{get_space(space).label}: capture vs synthetic test accuracy", Axis(0, 1), Axis(0, 1),
             "accuracy on Ω_TC", "accuracy on Ω_TS")
    p.line([chance, chance], [0, 1], "#888")
    p.line([0, 1], [chance, chance], "#888")
    p.line([chance, 1], [chance, 1], "#444", dash="4,3")  # diagonal clipped at the chance lines
    kept = {id(r) for r in res.kept}
    for r in res.runs:
        if r.space != space:
            continue
        color = COLORS[r.source] if id(r) in kept else "#bbb"
        p.marker(r.acc_tc, r.acc_ts, MARKERS[r.source], color)
    for src in _sources([r for r in res.runs if r.space == space]):
        p.add_legend(src, MARKERS[src], COLORS[src])
    p.add_legend("outlier", "circle", "#bbb")
    return p.render()


def quantity_figure(res: Analysis, space: str, capture_axis: bool = False) -> str:
    """acc on Ω_TC (x) against per-class quantity (log y) with trends and 95% bands."""
    runs = [r for r in res.runs if r.space == space]
    if capture_axis:
        runs = [r for r in runs if r.capture_qty]
    qvals = [(r.capture_qty if capture_axis else r.qty_per_class) for r in runs] or [1, 10]
    qlo = 10 ** math.floor(math.log10(min(qvals)))
    qhi = 10 ** math.ceil(math.log10(max(qvals)) + 1e-9)
    if qhi <= qlo:
        qhi = qlo * 10
    ylab = "capture observations per class" if capture_axis else "observations per class"
    p = Plot(f"{get_space(space).label}: accuracy vs {ylab}", Axis(0, 1), Axis(qlo, qhi, log=True),
             "accuracy on Ω_TC", ylab)
    chance = 1.0 / len(get_space(space))
    p.line([chance, chance], [qlo, qhi], "#444")
    kept = {id(r) for r in res.kept}
    for r in runs:
        q = r.capture_qty if capture_axis else r.qty_per_class
        p.marker(r.acc_tc, q, MARKERS[r.source], COLORS[r.source] if id(r) in kept else "#bbb")
    qs = np.logspace(math.log10(qlo), math.log10(qhi), 60)
    for src in _sources(runs):
        p.add_legend(src, MARKERS[src], COLORS[src])
        if capture_axis or src not in CAPTURE_FAMILY:
            continue  # trends are drawn against total quantity for capture-derived sources
        lin = res.fits.get((space, src, LOG_LINEAR))
        if lin is not None and lin.significant:
            lo, hi = lin.band(qs)
            p.band(lo, hi, qs, COLORS[src])
            p.line(lo, qs, COLORS[src], 1.0, "5,3")
            p.line(hi, qs, COLORS[src], 1.0, "5,3")
            p.line(lin.predict(qs), qs, COLORS[src], 1.8)
        lg = res.fits.get((space, src, LOG_LOGISTIC))
        if lg is not None and lg.significant:
            p.line(lg.predict(qs), qs, COLORS[src], 1.2, "1,3")
    p.add_legend("chance", "line", "#444")
    return p.render()


def summary_markdown(res: Analysis, title: str = "Sweep report") -> str:
    lines = [f"# {title}", ""]
    if res.empty and not res.forecasts:
        return "\n".join(lines + ["No data.", ""])
    lines += [f"Runs: {len(res.runs)}; kept after outlier filter: {len(res.kept)}", ""]
    if res.fits:
        lines += ["## Trend fits", "", "| space | source | kind | p1 | p2 | n | slope p |", "|---|---|---|---|---|---|---|"]
        for (s, src, kind), f in res.fits.items():
            lines.append(f"| {s} | {src} | {kind} | {f.p1:.4g} | {f.p2:.4g} | {f.n_points} | {f.slope_p:.3g} |")
        lines.append("")
    if res.forecasts:
        lines += ["## Forecast quantity per class", "", "| space | source | kind | accuracy | qty |", "|---|---|---|---|---|"]
        for r in res.forecasts:
            lines.append(f"| {r['space']} | {r['source']} | {r['kind']} | {r['alpha']:.2f} | {r['qty_per_class']:.4g} |")
        lines.append("")
    if res.durations:
        lines += ["## Capture duration (days)", "", "| space | kind | days |", "|---|---|---|"]
        for r in res.durations:
            lines.append(f"| {r['space']} | {r['kind']} | {r['days']:.1f} |")
        lines.append("")
    if res.contrasts:
        lines += ["## Welch contrasts", "", "| space | a / b | metric | mean ratio | t | dof | p |",
                  "|---|---|---|---|---|---|---|"]
        for r in res.contrasts:
            if "p" in r:
                lines.append(f"| {r['space']} | {r['a']} / {r['b']} | {r['metric']} | {r['mean_ratio']:.3f} | "
                             f"{r['t']:.3f} | {r['dof']:.2f} | {r['p']:.3g} |")
        lines.append("")
    if res.notices:
        lines += ["## Notices", ""] + [f"- {n}" for n in res.notices] + [""]
    return "\n".join(lines)
