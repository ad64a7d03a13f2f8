"""Truncated-vs-untruncated benchmark runs, metrics, CSV ingestion and reports."""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .datagen import (Dataset, NoiseSpec, gen_additive_dnn_data, gen_design, gen_response,
                      gen_true_theta)
from .losses import LossFn, sigmoid
from .model import LinearParams, MlpParams, predict, simulation_widths
from .solver import (AlphaInputs, DivergenceError, SearchSpec, SgdConfig, TruncatedObjective,
                     default_alpha, per_sample_loss, plugin_sup_risk, sgd_fit, tune_hyperparams)
from .truncation import HighOrderFn, TruncationSpec

log = logging.getLogger(__name__)

TASKS = ("logistic", "nbr", "quantile", "dnn_logistic", "dnn_nbr", "dnn_lad", "csv")
REPORT_COLUMNS = ("task", "noise", "beta_or_psi", "n", "p", "one_plus_eps", "arm", "metric",
                  "mean", "se", "alpha", "rho", "seed", "reps", "sd", "flag")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- metrics


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def l2_error(theta_hat, theta_star) -> float:
    a, b = _pair(theta_hat, theta_star)
    return float(np.linalg.norm(a - b))


def accuracy(y_hat, y) -> float:
    """Percentage of exact label matches."""
    a, b = _pair(y_hat, y)
    if a.size == 0:
        raise ValueError("empty label vectors")
    return 100.0 * float(np.mean(a == b))


def mae(y_hat, y) -> float:
    a, b = _pair(y_hat, y)
    if a.size == 0:
        raise ValueError("empty vectors")
    return float(np.mean(np.abs(a - b)))


def point_prediction(loss: LossFn, s) -> np.ndarray:
    """Label / mean / quantile implied by a score vector."""
    s = np.asarray(s, dtype=float)
    if loss.kind == "logistic":
        return (sigmoid(s) > 0.5).astype(float)
    if loss.kind == "nbr":
        return np.exp(np.minimum(s, 700.0))
    return s


# ---------------------------------------------------------------- CSV data


def export_csv(ds: Dataset, path, target: str = "y") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(ds.p)] + [target])
        for row, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi))])


def read_numeric_csv(path, target: str):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if target not in header:
            raise ValueError(f"{path}: target column {target!r} not in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            vals = []
            for name, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(f"{path}: line {lineno}: non-numeric value {cell!r} "
                                     f"in column {name!r}") from None
            rows.append(vals)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    t = header.index(target)
    feats = [h for i, h in enumerate(header) if i != t]
    return np.delete(data, t, axis=1), data[:, t], feats


def standardize(train: np.ndarray, *others, floor: float = 1e-12):
    mean = train.mean(axis=0)
    sd = train.std(axis=0)
    const = sd < floor
    sd = np.where(const, 1.0, sd)
    out = [np.where(const, 0.0, (train - mean) / sd)]
    out += [np.where(const, 0.0, (o - mean) / sd) for o in others]
    return out, mean, sd


def load_csv(path, target_column: str, split_fraction: float = 2.0 / 3.0, seed: int = 0,
             standardize_features: bool = True) -> Tuple[Dataset, Dataset]:
    """Seeded train/test split; features standardised with train statistics."""
    if not (0 < split_fraction < 1):
        raise ValueError("split_fraction must lie in (0, 1)")
    X, y, feats = read_numeric_csv(path, target_column)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two rows to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(max(1, int(round(split_fraction * n))), n - 1)
    tr, te = perm[:n_train], perm[n_train:]
    Xtr, Xte = X[tr], X[te]
    if standardize_features:
        (Xtr, Xte), _, _ = standardize(Xtr, Xte)
    meta = {"source": str(path), "features": feats, "target": target_column, "seed": seed}
    return (Dataset(Xtr, y[tr], meta=dict(meta, rows=tr)),
            Dataset(Xte, y[te], meta=dict(meta, rows=te)))


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    task: str = "logistic"
    n: int = 200
    p: int = 100
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec("pareto", beta=2.01))
    model: str = "linear"
    reps: int = 20
    seed: int = 0
    eps_grid: Tuple[float, ...] = (1.0,)
    alpha_mode: str = "theory"
    lam_kind: str = "chen"
    tau: float = 0.5
    eta: float = 0.1
    response_source: str = "clean"
    n_test: Optional[int] = None
    delta: float = 0.05
    radius: float = 10.0
    warm_epochs: int = 5
    sgd: SgdConfig = field(default_factory=SgdConfig)
    search: SearchSpec = field(default_factory=SearchSpec)
    csv_path: Optional[str] = None
    target: str = "y"
    split_fraction: float = 2.0 / 3.0
    jobs: int = 1
    output: Optional[str] = None
    fmt: str = "csv"

    def __post_init__(self) -> None:
        self.eps_grid = tuple(float(e) for e in self.eps_grid)
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.eps_grid or any(not (0 < e <= 1) for e in self.eps_grid):
            raise ConfigError("eps_grid must be a non-empty subset of (0, 1]")
        if self.alpha_mode not in ("theory", "search"):
            raise ConfigError("alpha_mode must be 'theory' or 'search'")
        if self.response_source not in ("clean", "contaminated"):
            raise ConfigError("response_source must be 'clean' or 'contaminated'")
        if self.fmt not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.task == "csv" and not self.csv_path:
            raise ConfigError("task csv needs csv_path")
        if not (self.model == "linear" or self.model.startswith("mlp")):
            raise ConfigError(f"unknown model {self.model!r}")

    @property
    def loss(self) -> LossFn:
        kind = self.task.replace("dnn_", "")
        if kind == "lad":
            return LossFn("quantile", tau=0.5)
        if kind == "csv":
            kind = "quantile"
        if kind == "quantile":
            return LossFn("quantile", tau=self.tau)
        if kind == "nbr":
            return LossFn("nbr", eta=self.eta)
        return LossFn("logistic")

    @property
    def metric(self) -> str:
        if self.task == "dnn_logistic":
            return "accuracy"
        if self.task in ("dnn_nbr", "dnn_lad", "csv"):
            return "mae"
        return "l2"

    @property
    def is_mlp(self) -> bool:
        return self.model.startswith("mlp") or self.task.startswith("dnn_")

    def widths(self, p: int) -> tuple:
        spec = self.model.split(":")[1:] if self.model.startswith("mlp") else []
        if len(spec) == 2:
            return (p,) + tuple(int(w) for w in spec[1].split(",")) + (1,)
        if len(spec) == 1 and int(spec[0]) != 2:
            depth = int(spec[0])
            return simulation_widths(p, tuple(np.linspace(0.6, 0.4, depth)) if depth > 1 else (0.6,))
        return simulation_widths(p)


def _coerce(value: str, target):
    if isinstance(target, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(target, int):
        return int(float(value))
    if isinstance(target, float):
        return float(value)
    if isinstance(target, tuple):
        parts = [v for v in value.replace(";", ",").split(",") if v.strip()]
        if target and isinstance(target[0], float) or not target:
            return tuple(float(v) for v in parts)
        return tuple(parts)
    if target is None:
        return None if value.strip().lower() in ("", "none") else _auto(value)
    return value.strip()


def _auto(value: str):
    try:
        return int(value)
    except ValueError:
        try:
            return float(value)
        except ValueError:
            return value.strip()


_SECTION_TYPES = {"noise": NoiseSpec, "sgd": SgdConfig, "search": SearchSpec}


def _apply(obj, key: str, value: str):
    names = {f.name for f in fields(obj)}
    key = key.replace("-", "_")
    aliases = {"format": "fmt", "path": "output", "csv": "csv_path"}
    key = aliases.get(key, key)
    if key not in names:
        raise ConfigError(f"unknown key {key!r} for {type(obj).__name__}")
    current = getattr(obj, key)
    if key in ("alpha_range", "rho_range"):
        vals = tuple(float(v) for v in value.split(","))
        return replace(obj, **{key: vals})
    if key in ("batch_size", "projection_radius", "n_test", "fixed_alpha", "csv_path", "output"):
        v = value.strip()
        if v.lower() in ("", "none"):
            return replace(obj, **{key: None})
        if key in ("csv_path", "output"):
            return replace(obj, **{key: v})
        return replace(obj, **{key: int(float(v)) if key in ("batch_size", "n_test") else float(v)})
    return replace(obj, **{key: _coerce(value, current)})


def apply_settings(cfg: ExperimentConfig, settings: Dict[str, Dict[str, str]]) -> ExperimentConfig:
    """``settings`` maps section -> key -> raw string; ``experiment``/``output``
    target the top-level config."""
    try:
        for section, items in settings.items():
            sec = section.lower()
            if sec in _SECTION_TYPES:
                sub = getattr(cfg, sec)
                for k, v in items.items():
                    sub = _apply(sub, k, v)
                cfg = replace(cfg, **{sec: sub})
            elif sec in ("experiment", "output", "data", "model"):
                for k, v in items.items():
                    cfg = _apply(cfg, k, v)
            else:
                raise ConfigError(f"unknown config section [{section}]")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read a ``key = value`` INI file, then apply ``section.key=value`` overrides."""
    settings: Dict[str, Dict[str, str]] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for sec in parser.sections():
            settings.setdefault(sec, {}).update(parser[sec])
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        sec, _, k = key.strip().rpartition(".")
        settings.setdefault(sec or "experiment", {})[k] = value
    try:
        return apply_settings(ExperimentConfig(), settings)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- runs


@dataclass
class ArmResult:
    metric: float
    alpha: Optional[float]
    rho: float
    epsilon: Optional[float]
    diverged: bool = False


def _replication_data(cfg: ExperimentConfig, rep: int):
    rng = np.random.default_rng([cfg.seed, rep])
    n_test = cfg.n_test if cfg.n_test is not None else cfg.n
    loss = cfg.loss
    if cfg.task == "csv":
        train, test = load_csv(cfg.csv_path, cfg.target, cfg.split_fraction, seed=cfg.seed + rep)
        return train, test, rng
    if cfg.task.startswith("dnn_"):
        kind = {"logistic": "logistic", "nbr": "nbr", "quantile": "quantile"}[loss.kind]
        full = gen_additive_dnn_data(cfg.n + n_test, cfg.p, cfg.noise, rng, kind=kind,
                                     eta=cfg.eta, tau=loss.tau)
        return full.subset(np.arange(cfg.n)), full.subset(np.arange(cfg.n, cfg.n + n_test)), rng
    theta = gen_true_theta(cfg.p, rng)
    X, Xc = gen_design(cfg.n, cfg.p, cfg.noise, rng)
    src = Xc if cfg.response_source == "clean" else X
    y = gen_response(src, theta, loss.kind, rng, eta=cfg.eta, tau=loss.tau)
    meta = {"seed": cfg.seed, "rep": rep, "noise": cfg.noise}
    return Dataset(X, y, theta_star=theta, X_clean=Xc, meta=meta), None, rng


def _init_params(cfg: ExperimentConfig, p: int, rng):
    if cfg.is_mlp:
        return MlpParams.init(cfg.widths(p), rng)
    return LinearParams(np.zeros(p))


def _evaluate(cfg: ExperimentConfig, params, train: Dataset, test: Optional[Dataset]) -> float:
    if cfg.metric == "l2":
        return l2_error(params.ravel(), train.theta_star)
    ds = test if test is not None else train
    yhat = point_prediction(cfg.loss, predict(params, ds.X))
    return accuracy(yhat, ds.y) if cfg.metric == "accuracy" else mae(yhat, ds.y)


def _fit_arm(cfg, loss, train, warm, truncated: bool, sgd: SgdConfig) -> Tuple[object, ArmResult]:
    search = replace(cfg.search, eps_grid=cfg.eps_grid, lam_kind=cfg.lam_kind,
                     truncated=truncated, seed=cfg.search.seed)
    if truncated and cfg.alpha_mode == "theory":
        # one theory alpha per epsilon; the search then only handles rho
        losses = per_sample_loss(TruncatedObjective(loss, None, 0.0, train.X, train.y), warm)
        best = None
        for eps in cfg.eps_grid:
            lam = HighOrderFn(cfg.lam_kind, epsilon=eps)
            a = default_alpha(AlphaInputs(n=train.n, p=warm.n_params, epsilon=eps, delta=cfg.delta,
                                          r=cfg.radius, sup_risk=plugin_sup_risk(lam, losses)))
            res = tune_hyperparams(train.X, train.y, loss, warm, sgd,
                                   replace(search, eps_grid=(eps,), fixed_alpha=a), warm_epochs=0)
            key = (res.holdout_loss, res.alpha, res.rho)
            if best is None or key < best[0]:
                best = (key, res)
        res = best[1]
    else:
        res = tune_hyperparams(train.X, train.y, loss, warm, sgd, search, warm_epochs=0)
    trunc = TruncationSpec(HighOrderFn(cfg.lam_kind, epsilon=res.epsilon), res.alpha) \
        if truncated else None
    obj = TruncatedObjective(loss, trunc, res.rho, train.X, train.y)
    fit = sgd_fit(obj, warm, sgd)
    return fit.params, ArmResult(metric=math.nan, alpha=res.alpha, rho=res.rho, epsilon=res.epsilon)


def run_replication(cfg: ExperimentConfig, rep: int) -> Dict[str, ArmResult]:
    train, test, rng = _replication_data(cfg, rep)
    loss = cfg.loss
    init = _init_params(cfg, train.p, rng)
    sgd = replace(cfg.sgd, seed=cfg.sgd.seed + rep)
    warm = init
    out: Dict[str, ArmResult] = {}
    if cfg.warm_epochs > 0:
        try:
            base = TruncatedObjective(loss, None, 0.0, train.X, train.y)
            warm = sgd_fit(base, init, replace(sgd, epochs=cfg.warm_epochs)).params
        except DivergenceError:
            warm = init
    for arm, truncated in (("truncated", True), ("untruncated", False)):
        try:
            params, res = _fit_arm(cfg, loss, train, warm, truncated, sgd)
            res.metric = _evaluate(cfg, params, train, test)
        except DivergenceError as exc:
            log.warning("rep %d arm %s diverged: %s", rep, arm, exc)
            res = ArmResult(metric=math.nan, alpha=None, rho=math.nan, epsilon=None, diverged=True)
        out[arm] = res
    return out


@dataclass
class MetricsReport:
    rows: List[dict]
    per_rep: List[Dict[str, ArmResult]] = field(default_factory=list)
    wall_time: float = 0.0
    valid: bool = True

    def row(self, arm: str) -> dict:
        for r in self.rows:
            if r["arm"] == arm:
                return r
        raise KeyError(arm)

    def values(self, arm: str) -> np.ndarray:
        return np.array([rep[arm].metric for rep in self.per_rep], dtype=float)


def _median_or_nan(vals):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    return float(np.median(vals)) if vals else math.nan


def aggregate(cfg: ExperimentConfig, per_rep: List[Dict[str, ArmResult]], wall: float) -> MetricsReport:
    rows, valid = [], True
    for arm in ("truncated", "untruncated"):
        res = [r[arm] for r in per_rep]
        vals = np.array([r.metric for r in res if not r.diverged], dtype=float)
        diverged = sum(r.diverged for r in res)
        flags = []
        if diverged > 0.2 * len(res):
            valid = False
            flags.append("diverged")
        if vals.size > 1:
            sd = float(np.std(vals, ddof=1))
            se = sd / math.sqrt(vals.size)
        else:
            sd = se = 0.0
            flags.append("single_rep")
        eps = _median_or_nan([r.epsilon for r in res]) if arm == "truncated" else math.nan
        rows.append({
            "task": cfg.task,
            "noise": cfg.noise.kind if cfg.task != "csv" else "csv",
            "beta_or_psi": cfg.noise.level if cfg.task != "csv" else math.nan,
            "n": cfg.n, "p": cfg.p,
            "one_plus_eps": 1.0 + eps if math.isfinite(eps) else math.nan,
            "arm": arm, "metric": cfg.metric,
            "mean": float(np.mean(vals)) if vals.size else math.nan,
            "se": se,
            "alpha": _median_or_nan([r.alpha for r in res]),
            "rho": _median_or_nan([r.rho for r in res]),
            "seed": cfg.seed, "reps": len(res), "sd": sd,
            "flag": ";".join(flags),
        })
    return MetricsReport(rows=rows, per_rep=per_rep, wall_time=wall, valid=valid)


def _rep_worker(args):
    cfg, rep = args
    return rep, run_replication(cfg, rep)


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Fit both arms on every replication and aggregate mean and standard error.

    Replications are keyed by index, so ``jobs > 1`` returns the same report
    as a sequential run.
    """
    t0 = time.perf_counter()
    if cfg.jobs > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            results = dict(ex.map(_rep_worker, [(cfg, r) for r in range(cfg.reps)]))
    else:
        results = {r: run_replication(cfg, r) for r in range(cfg.reps)}
    per_rep = [results[r] for r in range(cfg.reps)]
    return aggregate(cfg, per_rep, time.perf_counter() - t0)


# ---------------------------------------------------------------- reports


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def report_to_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in report.rows:
        w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def report_to_json(report: MetricsReport) -> str:
    rows = [{c: (None if isinstance(row[c], float) and math.isnan(row[c]) else row[c])
             for c in REPORT_COLUMNS} for row in report.rows]
    return json.dumps({"columns": list(REPORT_COLUMNS), "rows": rows,
                       "valid": report.valid, "wall_time": report.wall_time}, indent=2)


def emit_report(report: MetricsReport, path, fmt: str = "csv") -> Path:
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    text = report_to_csv(report) if fmt == "csv" else report_to_json(report)
    path = Path(path)
    path.write_text(text)
    return path


_INT_COLS = {"n", "p", "seed", "reps"}
_STR_COLS = {"task", "noise", "arm", "metric", "flag"}


def _parse_cell(col, cell):
    if col in _STR_COLS:
        return cell
    if col in _INT_COLS:
        return int(cell)
    return math.nan if cell == "" else float(cell)


def read_report(path) -> List[dict]:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        rows = json.loads(text)["rows"]
        return [{c: (math.nan if r[c] is None else r[c]) for c in REPORT_COLUMNS} for r in rows]
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ValueError("report header does not match the schema")
    return [{c: _parse_cell(c, r[c]) for c in REPORT_COLUMNS} for r in reader]
