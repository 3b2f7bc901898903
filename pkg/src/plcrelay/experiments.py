"""Sweeps of closed-form and simulated metrics, with CSV/JSON output.

Configs and presets share one flat JSON format: any ``SystemConfig`` field,
plus the experiment keys listed in ``EXPERIMENT_KEYS``. A preset adds a
``series`` list, each entry a label and a mapping of overrides.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .analytic import METRICS, build_scenario, default_fit, evaluate
from .model import Strategy, SystemConfig
from .poweropt import AllocationProblem, derivatives, optimize_allocation, outage_of_pf
from .qapprox import GaussianSumFit, Target, fit_gaussian_sum
from .simulator import estimate_many


class ValidationError(ValueError):
    """Bad user input: unknown names, empty sweeps, malformed values."""


CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(SystemConfig) if not f.name.startswith("_"))
EXPERIMENT_KEYS = ("name", "description", "kind", "series", "sweep_param", "sweep_values",
                   "metrics", "strategies", "oracle", "trials", "seed", "fit", "workers")
KINDS = ("metrics", "power")
FITS = ("table1", "fitted")

METRIC_COLUMNS = ("series", "param", "x", "metric", "strategy", "method", "value", "stderr", "trials")
POWER_COLUMNS = ("series", "param", "x", "p_f", "outage_exact", "outage_approx", "first", "second",
                 "p_star", "p_star_exact", "certified")
_TYPES = {"series": str, "param": str, "metric": str, "strategy": str, "method": str,
          "trials": int, "certified": lambda s: s == "True"}


@dataclass(frozen=True)
class Series:
    label: str
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentSpec:
    config: SystemConfig = SystemConfig()
    name: str = "custom"
    description: str = ""
    kind: str = "metrics"
    series: tuple = (Series("base"),)
    sweep_param: str = "p_t_db"
    sweep_values: tuple = ()
    metrics: tuple = ("outage",)
    strategies: tuple = ("idf", "isdf")
    oracle: bool = True
    trials: int = 1_000_000
    seed: int = 2024
    fit: str = "table1"
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}; valid: {', '.join(KINDS)}")
        if self.sweep_param not in CONFIG_KEYS:
            raise ValidationError(f"unknown sweep parameter {self.sweep_param!r}; "
                                  f"valid: {', '.join(CONFIG_KEYS)}")
        vals = tuple(self.sweep_values) or (getattr(self.config, self.sweep_param),)
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValidationError("sweep values must be strictly increasing")
        object.__setattr__(self, "sweep_values", vals)
        if self.kind == "metrics":
            if not self.metrics:
                raise ValidationError(f"no metrics requested; valid: {', '.join(METRICS)}")
            for m in self.metrics:
                if m not in METRICS:
                    raise ValidationError(f"unknown metric {m!r}; valid: {', '.join(METRICS)}")
            valid = [s.value for s in Strategy]
            for s in self.strategies:
                if s not in valid:
                    raise ValidationError(f"unknown strategy {s!r}; valid: {', '.join(valid)}")
            if not self.strategies:
                raise ValidationError("no strategies requested")
        if self.fit not in FITS:
            raise ValidationError(f"unknown fit {self.fit!r}; valid: {', '.join(FITS)}")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")
        if not self.series:
            raise ValidationError("at least one series is required")
        for s in self.series:
            for k in s.overrides:
                if k not in CONFIG_KEYS:
                    raise ValidationError(f"unknown parameter {k!r} in series {s.label!r}; "
                                          f"valid: {', '.join(CONFIG_KEYS)}")

    def series_config(self, s: Series) -> SystemConfig:
        return make_config(self.config, s.overrides)

    def to_record(self) -> dict:
        return {
            "name": self.name, "description": self.description, "kind": self.kind,
            "config": config_record(self.config),
            "series": [{"label": s.label, "set": dict(s.overrides)} for s in self.series],
            "sweep_param": self.sweep_param, "sweep_values": list(self.sweep_values),
            "metrics": list(self.metrics), "strategies": list(self.strategies),
            "oracle": self.oracle, "trials": self.trials, "seed": self.seed, "fit": self.fit,
        }


def config_record(cfg: SystemConfig) -> dict:
    out = {}
    for k in CONFIG_KEYS:
        v = getattr(cfg, k)
        out[k] = v.value if isinstance(v, Strategy) else list(v) if isinstance(v, tuple) else v
    return out


def make_config(base: SystemConfig, overrides: dict) -> SystemConfig:
    bad = [k for k in overrides if k not in CONFIG_KEYS]
    if bad:
        raise ValidationError(f"unknown parameter {bad[0]!r}; valid: {', '.join(CONFIG_KEYS)}")
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
    try:
        return base.replace(**vals)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc


def parse_value(text: str):
    """Interpret a ``--set`` value as JSON when possible, else as a string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignments(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ValidationError(f"expected key=value, got {item!r}")
        out[key.strip()] = parse_value(val.strip())
    return out


def spec_from_mapping(data: dict) -> ExperimentSpec:
    data = dict(data)
    bad = [k for k in data if k not in CONFIG_KEYS and k not in EXPERIMENT_KEYS]
    if bad:
        raise ValidationError(f"unknown key {bad[0]!r}; valid: {', '.join(CONFIG_KEYS + EXPERIMENT_KEYS)}")
    cfg = make_config(SystemConfig(), {k: data.pop(k) for k in list(data) if k in CONFIG_KEYS})
    if "series" in data:
        raw = data.pop("series")
        if not isinstance(raw, list):
            raise ValidationError("series must be a list of {label, set} records")
        data["series"] = tuple(Series(str(r["label"]), dict(r.get("set", {}))) for r in raw)
    for k in ("sweep_values", "metrics", "strategies"):
        if k in data:
            data[k] = tuple(data[k]) if isinstance(data[k], list) else (data[k],)
    try:
        return ExperimentSpec(config=cfg, **data)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def load_mapping(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must hold a JSON object")
    return data


# --------------------------------------------------------------------------
#  Presets
# --------------------------------------------------------------------------

def list_presets() -> list[str]:
    root = resources.files("plcrelay") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def preset_mapping(name: str) -> dict:
    if name not in list_presets():
        raise ValidationError(f"unknown preset {name!r}; valid: {', '.join(list_presets())}")
    text = (resources.files("plcrelay") / "presets" / f"{name}.json").read_text()
    data = json.loads(text)
    data.setdefault("name", name)
    return data


# --------------------------------------------------------------------------
#  Result tables
# --------------------------------------------------------------------------

@dataclass
class ResultTable:
    columns: tuple
    rows: list
    metadata: dict = field(default_factory=dict)

    def __eq__(self, other):
        return (isinstance(other, ResultTable) and self.columns == other.columns
                and self.rows == other.rows and self.metadata == other.metadata)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        rec = {"metadata": self.metadata, "columns": list(self.columns),
               "rows": [list(r) for r in self.rows]}
        return json.dumps(rec, indent=1, sort_keys=True, allow_nan=True) + "\n"

    def dumps(self, fmt: str = "csv") -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValidationError(f"unknown format {fmt!r}; valid: csv, json")

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        reader = csv.reader(io.StringIO(text))
        columns = tuple(next(reader))
        rows = [tuple(_parse_cell(c, v) for c, v in zip(columns, row)) for row in reader]
        return cls(columns=columns, rows=rows)

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        rec = json.loads(text)
        return cls(columns=tuple(rec["columns"]), rows=[tuple(r) for r in rec["rows"]],
                   metadata=rec["metadata"])


def _parse_cell(column, text):
    if text == "":
        return None
    return _TYPES.get(column, float)(text)


# --------------------------------------------------------------------------
#  Running
# --------------------------------------------------------------------------

def _fits(spec: ExperimentSpec):
    if spec.fit == "table1":
        return default_fit(Target.Q), default_fit(Target.QOFEXP)
    return fit_gaussian_sum(Target.Q), fit_gaussian_sum(Target.QOFEXP)


def _fit_meta(fit: GaussianSumFit) -> dict:
    return {"source": fit.source, "domain": list(fit.domain), "rmse": fit.rmse}


def _point_rows(spec, label, cfg, key, qfit, efit):
    s = build_scenario(cfg)
    x = _sweep_x(cfg, spec.sweep_param)
    rows = []
    cf = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in spec.metrics:
            for st in spec.strategies:
                cf[m, st] = float(evaluate(s, m, st, qfit=qfit, efit=efit))
    mc = {}
    if spec.oracle:
        mc = estimate_many(s, spec.trials, spec.seed, spec.strategies, spec.metrics, key=key)
    for m in spec.metrics:
        for st in spec.strategies:
            rows.append((label, spec.sweep_param, x, m, st, "closed_form", cf[m, st], None, 0))
            if spec.oracle:
                e = mc[Strategy(st), m]
                rows.append((label, spec.sweep_param, x, m, st, "monte_carlo", e.value, e.stderr,
                             e.n_samples))
    return rows


def _sweep_x(cfg, param) -> float:
    v = getattr(cfg, param)
    return float(v[0] if isinstance(v, tuple) else v)


def _power_rows(spec, label, cfg, cache):
    problem = AllocationProblem.from_config(cfg)
    pkey = (problem.v, problem.u)
    if pkey not in cache:
        cache[pkey] = optimize_allocation(problem)
    res = cache[pkey]
    p = float(cfg.p_f) if spec.sweep_param == "p_f" else res.p_star
    first, second = derivatives(problem, p)
    return [(label, spec.sweep_param, _sweep_x(cfg, spec.sweep_param), p,
             float(outage_of_pf(problem, p, "exact")), float(outage_of_pf(problem, p, "approx")),
             float(first), float(second), res.p_star, res.p_star_exact, res.convexity_certified)]


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Evaluate every (series, sweep point) of ``spec``; rows follow grid order."""
    jobs = []
    for i, ser in enumerate(spec.series):
        base = spec.series_config(ser)
        for j, x in enumerate(spec.sweep_values):
            jobs.append((i, j, ser.label, make_config(base, {spec.sweep_param: x})))

    meta = {"version": __version__, "spec": spec.to_record(),
            "resolved": {ser.label: config_record(spec.series_config(ser)) for ser in spec.series}}
    if spec.kind == "power":
        cache = {}
        rows = [r for (_, _, label, cfg) in jobs for r in _power_rows(spec, label, cfg, cache)]
        return ResultTable(POWER_COLUMNS, rows, meta)

    qfit, efit = _fits(spec)
    meta["fits"] = {"Q": _fit_meta(qfit), "QofExp": _fit_meta(efit)}

    def one(job):
        i, j, label, cfg = job
        return _point_rows(spec, label, cfg, (i, j), qfit, efit)

    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as ex:
            parts = list(ex.map(one, jobs))
    else:
        parts = [one(job) for job in jobs]
    return ResultTable(METRIC_COLUMNS, [r for part in parts for r in part], meta)


def run_power_allocation(spec: ExperimentSpec) -> ResultTable:
    return run_experiment(dataclasses.replace(spec, kind="power"))


def column(table: ResultTable, name: str, **match) -> list:
    """Values of ``name`` in rows whose other columns equal ``match``."""
    idx = {c: k for k, c in enumerate(table.columns)}
    return [r[idx[name]] for r in table.rows if all(r[idx[c]] == v for c, v in match.items())]


def isfinite_table(table: ResultTable) -> bool:
    return all(math.isfinite(v) for r in table.rows for v in r if isinstance(v, float))
