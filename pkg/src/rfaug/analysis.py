"""Run tables, outlier filtering, accuracy-vs-quantity trends and forecasts.

Quantity axes use log10. The log-logistic model is
``ln(a / (1 - a)) = p1 * (log10(qty) - p2)``, whose inverse is
``qty = 10 ** (-(ln((1 - a) / a) / p1 - p2))``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import SLICE_STRIDE, get_space
from .stats import t_ppf, t_sf_two_sided

RUN_FIELDS = ("run_id", "space", "source", "qty_per_class", "capture_qty", "acc_tc", "acc_ts", "epochs", "seed")

CAPTURE_FAMILY = ("Ω_C", "Ω_AK", "Ω_AS")
SYNTHETIC_FAMILY = ("Ω_SS", "Ω_SK")
SOURCE_ALIASES = {"C": "Ω_C", "AK": "Ω_AK", "AS": "Ω_AS", "SS": "Ω_SS", "SK": "Ω_SK",
                  "TC": "Ω_TC", "TS": "Ω_TS"}

LOG_LINEAR = "log_linear"
LOG_LOGISTIC = "log_logistic"


class FitError(ValueError):
    pass


def canonical_source(name: str) -> str:
    s = name.strip()
    for prefix in ("Ω_", "Omega_", "omega_"):
        if s.startswith(prefix):
            s = s[len(prefix):]
            break
    key = s.upper()
    if key not in SOURCE_ALIASES:
        raise ValueError(f"unknown dataset source {name!r}")
    return SOURCE_ALIASES[key]


def source_family(source: str) -> tuple[str, ...]:
    src = canonical_source(source)
    return CAPTURE_FAMILY if src in CAPTURE_FAMILY else SYNTHETIC_FAMILY


# ---------------------------------------------------------------- run table


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    space: str
    source: str
    qty_per_class: int
    acc_tc: float
    acc_ts: float
    epochs: int
    seed: int
    capture_qty: int | None = None

    def __post_init__(self):
        for a in (self.acc_tc, self.acc_ts):
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"accuracy {a} outside [0, 1]")
        if self.qty_per_class < 1:
            raise ValueError("qty_per_class must be >= 1")

    def row(self) -> dict:
        d = asdict(self)
        d["capture_qty"] = "" if self.capture_qty is None else self.capture_qty
        d["acc_tc"] = repr(float(self.acc_tc))
        d["acc_ts"] = repr(float(self.acc_ts))
        return {k: d[k] for k in RUN_FIELDS}

    @classmethod
    def from_row(cls, r: dict) -> "RunRecord":
        cq = r.get("capture_qty", "")
        return cls(r["run_id"], r["space"], canonical_source(r["source"]), int(r["qty_per_class"]),
                   float(r["acc_tc"]), float(r["acc_ts"]), int(r["epochs"]), int(r["seed"]),
                   int(cq) if cq not in ("", None) else None)


def runs_to_csv(runs, path: str | os.PathLike | None = None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RUN_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in runs:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_runs(path: str | os.PathLike) -> list[RunRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return [RunRecord.from_row(r) for r in csv.DictReader(io.StringIO(text))]


# ---------------------------------------------------------------- outliers


def outlier_bound(accs, n_classes: int) -> float:
    """Largest accuracy below twice chance, or -inf when there is none."""
    limit = 2.0 / n_classes
    below = [float(a) for a in accs if a < limit]
    return max(below) if below else -math.inf


def filter_outliers(runs: list[RunRecord], metric: str = "acc_tc") -> tuple[list[RunRecord], dict]:
    """Drop runs at or below their (space, source family) bound.

    Returns the survivors and the bound used for each group.
    """
    groups: dict[tuple[str, tuple], list[RunRecord]] = {}
    for r in runs:
        groups.setdefault((r.space, source_family(r.source)), []).append(r)
    bounds, keep = {}, []
    for (space, fam), members in groups.items():
        b = outlier_bound([getattr(r, metric) for r in members], len(get_space(space)))
        bounds[(space, fam)] = b
        keep.extend(r for r in members if getattr(r, metric) > b)
    order = {id(r): i for i, r in enumerate(runs)}
    keep.sort(key=lambda r: order[id(r)])
    return keep, bounds


# ---------------------------------------------------------------- trends


def _logit(a):
    a = np.asarray(a, dtype=np.float64)
    return np.log(a / (1.0 - a))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class TrendFit:
    """Straight line in transformed coordinates plus its 95% prediction band.

    For ``log_linear`` the line is ``a = p1*u + p2`` with ``u = log10(qty)``;
    for ``log_logistic`` it is ``logit(a) = p1*(u - p2)``.
    """

    kind: str
    p1: float
    p2: float
    n_points: int
    resid_var: float
    u_mean: float
    u_sxx: float
    t_crit: float
    slope_p: float

    @property
    def significant(self) -> bool:
        return self.slope_p < 0.05

    def _line(self, u):
        if self.kind == LOG_LINEAR:
            return self.p1 * u + self.p2
        return self.p1 * (u - self.p2)

    def predict(self, qty):
        u = np.log10(np.asarray(qty, dtype=np.float64))
        z = self._line(u)
        return z if self.kind == LOG_LINEAR else _sigmoid(z)

    def band(self, qty) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper 95% prediction limits of accuracy at ``qty``."""
        u = np.log10(np.asarray(qty, dtype=np.float64))
        half = self.t_crit * math.sqrt(self.resid_var) * np.sqrt(
            1.0 + 1.0 / self.n_points + (u - self.u_mean) ** 2 / self.u_sxx)
        z = self._line(u)
        if self.kind == LOG_LINEAR:
            return z - half, z + half
        return _sigmoid(z - half), _sigmoid(z + half)

    def to_json(self) -> dict:
        d = asdict(self)
        d["significant"] = self.significant
        return d

    @classmethod
    def from_params(cls, kind: str, p1: float, p2: float) -> "TrendFit":
        """A fit known only by its parameters (no band information)."""
        return cls(kind, float(p1), float(p2), 0, math.nan, math.nan, math.nan, math.nan, math.nan)


def _linreg(u: np.ndarray, z: np.ndarray):
    n = len(u)
    um = float(u.mean())
    sxx = float(np.sum((u - um) ** 2))
    if sxx <= 0:
        raise FitError("quantities have no spread")
    slope = float(np.sum((u - um) * (z - z.mean())) / sxx)
    icpt = float(z.mean() - slope * um)
    resid = z - (slope * u + icpt)
    rv = float(np.sum(resid**2) / (n - 2)) if n > 2 else math.nan
    if rv > 0:
        t_slope = slope / math.sqrt(rv / sxx)
        p = t_sf_two_sided(t_slope, n - 2)
    else:
        p = 0.0 if slope != 0 else 1.0
    return slope, icpt, rv, um, sxx, p


def _points(points) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise FitError(f"need at least 3 points, got {len(pts)}")
    if np.any(pts[:, 0] <= 0):
        raise FitError("quantities must be positive")
    return np.log10(pts[:, 0]), pts[:, 1]


def fit_log_linear(points) -> TrendFit:
    """Least squares of accuracy on log10(qty)."""
    u, a = _points(points)
    slope, icpt, rv, um, sxx, p = _linreg(u, a)
    return TrendFit(LOG_LINEAR, slope, icpt, len(u), rv, um, sxx, t_ppf(0.975, len(u) - 2), p)


def fit_log_logistic(points) -> TrendFit:
    """Least squares of the logit of accuracy on log10(qty)."""
    u, a = _points(points)
    if np.any(a <= 0) or np.any(a >= 1):
        raise FitError("accuracies must lie strictly between 0 and 1")
    slope, icpt, rv, um, sxx, p = _linreg(u, _logit(a))
    if slope == 0:
        raise FitError("flat logit trend has no pivot")
    return TrendFit(LOG_LOGISTIC, slope, -icpt / slope, len(u), rv, um, sxx, t_ppf(0.975, len(u) - 2), p)


def forecast_qty(fit: TrendFit, alpha: float) -> float:
    """Per-class quantity at which the trend reaches accuracy ``alpha``."""
    if fit.p1 == 0:
        raise FitError("zero slope: the trend never reaches a different accuracy")
    if fit.kind == LOG_LINEAR:
        return 10.0 ** ((alpha - fit.p2) / fit.p1)
    if not 0.0 < alpha < 1.0:
        raise FitError("a logistic trend reaches 100% accuracy only with infinite data")
    return 10.0 ** (-(math.log((1.0 - alpha) / alpha) / fit.p1 - fit.p2))


def capture_duration_days(qty_per_class: float, n_classes: int, sample_rate_hz: float = 40000.0,
                          samples_per_obs: int = SLICE_STRIDE) -> float:
    """Continuous capture time (days) to collect ``qty_per_class`` for every class."""
    if qty_per_class < 0 or n_classes < 1 or sample_rate_hz <= 0 or samples_per_obs < 1:
        raise ValueError("inputs must be positive")
    return qty_per_class * samples_per_obs * n_classes / sample_rate_hz / 86400.0


# ---------------------------------------------------------------- reference parameters

# (space, source) -> (p1, p2) fitted on the original over-the-air collection
REFERENCE_LOG_LINEAR = {
    ("phi3", "Ω_C"): (0.03237, 0.7485), ("phi5", "Ω_C"): (0.09351, 0.2995),
    ("phi3", "Ω_AK"): (0.05091, 0.6317), ("phi5", "Ω_AK"): (0.1138, 0.1402),
    ("phi3", "Ω_AS"): (0.05476, 0.5955), ("phi5", "Ω_AS"): (0.1022, 0.1686),
    ("phi3", "Ω_SS"): (0.04183, 0.2656), ("phi5", "Ω_SS"): (0.01537, 0.2030),
    ("phi3", "Ω_SK"): (0.002380, 0.4650), ("phi5", "Ω_SK"): (-0.002029, 0.3019),
    ("phi10", "Ω_C"): (0.1459, -0.01837), ("phi10", "Ω_AK"): (0.1540, -0.1294),
    ("phi10", "Ω_AS"): (0.1598, -0.2043), ("phi10", "Ω_SS"): (0.008621, 0.1721),
    ("phi10", "Ω_SK"): (-0.001438, 0.2050),
}
REFERENCE_LOG_LOGISTIC = {
    ("phi3", "Ω_C"): (0.3452, -1.705), ("phi5", "Ω_C"): (0.4674, 2.449),
    ("phi3", "Ω_AK"): (0.5275, 1.015), ("phi5", "Ω_AK"): (0.5548, 3.328),
    ("phi3", "Ω_AS"): (0.4944, 1.094), ("phi5", "Ω_AS"): (0.4821, 3.393),
    ("phi10", "Ω_C"): (0.6274, 3.573), ("phi10", "Ω_AK"): (0.6641, 4.087),
    ("phi10", "Ω_AS"): (0.6714, 4.399),
}
# reported per-class quantities for 100% (log-linear) and 95% (log-logistic) accuracy
REFERENCE_QTY_100 = {
    ("phi3", "Ω_C"): 58.9e6, ("phi5", "Ω_C"): 31.0e6, ("phi10", "Ω_C"): 9.5e6,
    ("phi3", "Ω_AK"): 17.2e6, ("phi5", "Ω_AK"): 35.8e6, ("phi10", "Ω_AK"): 21.5e6,
    ("phi3", "Ω_AS"): 24.3e6, ("phi5", "Ω_AS"): 135.5e6, ("phi10", "Ω_AS"): 34.3e6,
}
REFERENCE_QTY_95 = {
    ("phi3", "Ω_C"): 6.7e6, ("phi5", "Ω_C"): 560.4e6, ("phi10", "Ω_C"): 184.5e6,
    ("phi3", "Ω_AK"): 3.9e6, ("phi5", "Ω_AK"): 431.7e6, ("phi10", "Ω_AK"): 331.6e6,
    ("phi3", "Ω_AS"): 11.2e6, ("phi5", "Ω_AS"): 3169.8e6, ("phi10", "Ω_AS"): 609.1e6,
}
# reported capture durations (days) for Ω_C at 100% and 95% accuracy
REFERENCE_DAYS_100 = {"phi3": 104.7, "phi5": 91.7, "phi10": 56.4}
REFERENCE_DAYS_95 = {"phi3": 11.9, "phi5": 1660.7, "phi10": 1093.4}


def reference_fit(kind: str, space: str, source: str) -> TrendFit:
    table = REFERENCE_LOG_LINEAR if kind == LOG_LINEAR else REFERENCE_LOG_LOGISTIC
    return TrendFit.from_params(kind, *table[(get_space(space).name, canonical_source(source))])
