"""Replicated benchmark experiments and result tables.

One replication regenerates (or reloads) the data, splits it into
machine-fitting / aggregation / test parts, fits every base learner on the
first part, tunes every aggregation scheme on the second and scores all of
them on the third. Seeds are derived from ``config.seed + replication`` so
the outcome does not depend on how replications are distributed over
worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregation import (
    CobraFull,
    CobraRelaxed,
    KernelPerCoord,
    KernelVector,
    PredictionMatrix,
    combine,
)
from .bandwidth import (
    CvObjective,
    GdConfig,
    GridConfig,
    HoldoutObjective,
    fit_alpha_grid,
    fit_bandwidth_gd,
    fit_bandwidth_grid,
)
from .datagen import REGIMES, SplitSpec, gen_model, load_csv, split, split_indices
from .errors import ConfigError, RunFailedError
from .kernels import KERNEL_NAMES, Bandwidth, KernelSpec
from .learners import LEARNERS, make_learner, predict_all

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "metric_mse",
    "metric_rmse",
    "run_experiment",
    "run_replication",
    "time_optimizers",
    "emit_results",
    "read_results_csv",
    "aggregation_size_trend",
]

MAX_FAILURE_SHARE = 0.10

DEFAULT_LEARNERS = (
    {"name": "ridge"},
    {"name": "lasso"},
    {"name": "knn", "k": 5},
    {"name": "tree"},
    {"name": "rf", "n_trees": 300},
)


def metric_mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} predictions, {truth.shape[0]} targets")
    if pred.size < 1:
        raise ValueError("need at least one prediction")
    return float(np.mean((truth - pred) ** 2))


def metric_rmse(pred, truth) -> float:
    return math.sqrt(metric_mse(pred, truth))


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SourceConfig:
    kind: str
    model: int = 1
    regime: str = "uncorrelated"
    n: Optional[int] = None
    path: Optional[str] = None
    target: Optional[str] = None
    features: Optional[tuple] = None
    delimiter: str = ","
    mappings: Optional[dict] = None

    @property
    def label(self) -> str:
        if self.kind == "synthetic":
            return f"model {self.model} ({self.regime})"
        return f"{self.path} [{self.target}]"


@dataclass(frozen=True)
class LearnerConfig:
    name: str
    params: dict = field(default_factory=dict)
    label: str = ""

    def build(self):
        return make_learner(self.name, **self.params)


@dataclass(frozen=True)
class SchemeConfig:
    """A weight-scheme family plus how its bandwidth is tuned."""

    name: str
    label: str
    kernel: Optional[KernelSpec] = None
    optimizer: str = "grid"
    parametrization: str = "divisive"

    def family(self):
        if self.name == "cobra":
            return CobraFull(1.0)
        if self.name == "cobra-relaxed":
            return CobraRelaxed(1.0, 1.0)
        cls = KernelVector if self.name == "kernel" else KernelPerCoord
        return cls(self.kernel, Bandwidth(1.0, self.parametrization))


@dataclass(frozen=True)
class OptimizerConfig:
    default: str = "gd"
    gd: GdConfig = GdConfig()
    grid: GridConfig = GridConfig()
    folds: int = 5
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig
    learners: tuple
    schemes: tuple
    optimizer: OptimizerConfig = OptimizerConfig()
    replications: int = 20
    seed: int = 0
    metric: str = "mse"
    split: tuple = (0.2, 0.5)
    fallback: str = "mean"
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        """Validate a JSON-style config; every problem raises :class:`ConfigError`."""
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        try:
            return _parse_config(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, **changes)


def _parse_source(raw):
    if raw is None:
        raw = {"type": "synthetic", "model": 1}
    kind = raw.get("type", "synthetic")
    if kind == "synthetic":
        model = int(raw.get("model", 1))
        if not 1 <= model <= 10:
            raise ConfigError(f"synthetic model must be 1..10, got {model}")
        regime = raw.get("regime", "uncorrelated")
        if regime not in REGIMES:
            raise ConfigError(f"unknown regime {regime!r}")
        n = raw.get("n")
        return SourceConfig("synthetic", model=model, regime=regime, n=None if n is None else int(n))
    if kind == "csv":
        if "path" not in raw or "target" not in raw:
            raise ConfigError("csv source needs 'path' and 'target'")
        feats = raw.get("features")
        return SourceConfig(
            "csv", path=str(raw["path"]), target=str(raw["target"]),
            features=None if feats is None else tuple(feats),
            delimiter=raw.get("delimiter", ","), mappings=raw.get("mappings"),
        )
    raise ConfigError(f"unknown source type {kind!r}")


def _parse_learners(raw):
    raw = list(DEFAULT_LEARNERS) if raw is None else raw
    if not raw:
        raise ConfigError("at least one learner is required")
    out, seen = [], set()
    for item in raw:
        item = {"name": item} if isinstance(item, str) else dict(item)
        name = item.pop("name", None)
        if name not in LEARNERS:
            raise ConfigError(f"unknown learner {name!r}; expected one of {sorted(LEARNERS)}")
        label = item.pop("label", name)
        if label in seen:
            raise ConfigError(f"duplicate column label {label!r}")
        seen.add(label)
        make_learner(name, **item)  # validate parameters early
        out.append(LearnerConfig(name, item, label))
    return tuple(out)


def _parse_schemes(raw, default_optimizer):
    raw = [{"name": "cobra-relaxed"}, {"name": "kernel", "kernel": "gaussian"}] if raw is None else raw
    if not raw:
        raise ConfigError("at least one aggregation scheme is required")
    out = []
    for item in raw:
        item = {"name": item} if isinstance(item, str) else dict(item)
        name = item.get("name")
        if name in ("cobra", "cobra-relaxed"):
            if item.get("optimizer", "grid") != "grid":
                raise ConfigError(f"{name} is tuned by grid search only")
            out.append(SchemeConfig(name, item.get("label", name)))
            continue
        if name not in ("kernel", "kernel-percoord"):
            raise ConfigError(f"unknown scheme {name!r}")
        kname = item.get("kernel", "gaussian")
        if kname not in KERNEL_NAMES:
            raise ConfigError(f"unknown kernel {kname!r}; expected one of {KERNEL_NAMES}")
        spec = KernelSpec(kname, sigma=float(item.get("sigma", 1.0)), rho1=float(item.get("rho1", 3.0)))
        optimizer = item.get("optimizer", default_optimizer if spec.smooth else "grid")
        if optimizer not in ("gd", "grid"):
            raise ConfigError(f"unknown optimizer {optimizer!r}")
        if optimizer == "gd" and not spec.smooth:
            raise ConfigError(f"gradient descent needs a smooth kernel; {kname} is tuned by grid search")
        param = item.get("parametrization", "multiplicative" if spec.smooth else "divisive")
        if param == "multiplicative" and not spec.smooth:
            raise ConfigError(f"multiplicative bandwidth is not defined for {kname}")
        if param not in ("divisive", "multiplicative"):
            raise ConfigError(f"unknown parametrization {param!r}")
        if optimizer == "gd" and param != "multiplicative":
            raise ConfigError("gradient descent works on the multiplicative bandwidth")
        default_label = kname if name == "kernel" else f"{kname}-percoord"
        out.append(SchemeConfig(name, item.get("label", default_label), spec, optimizer, param))
    return tuple(out)


def _parse_optimizer(raw):
    raw = dict(raw or {})
    default = raw.get("optimizer", "gd")
    if default not in ("gd", "grid"):
        raise ConfigError(f"unknown optimizer {default!r}")
    gd = GdConfig(
        h0=float(raw.get("h0", 1.0)),
        lr=float(raw.get("lr", 0.1)),
        delta=float(raw.get("delta", 1e-6)),
        max_iter=int(raw.get("max_iter", 300)),
        grad_mode=raw.get("grad_mode", "analytic"),
        growth=float(raw.get("growth", 2.0)),
    )
    g = dict(raw.get("grid") or {})
    grid = GridConfig(
        h_min=float(g.get("min", 1e-10)),
        h_max=float(g.get("max", 10.0)),
        n_points=int(g.get("points", 500)),
        spacing=g.get("spacing", "linear"),
    )
    folds = int(raw.get("folds", 5))
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    return OptimizerConfig(default, gd, grid, folds, int(raw.get("seed", 0)))


def _parse_config(raw):
    optimizer = _parse_optimizer(raw.get("optimizer"))
    reps = int(raw.get("replications", 20))
    if reps < 1:
        raise ConfigError("replications must be >= 1")
    seed = int(raw.get("seed", 0))
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    metric = str(raw.get("metric", "mse")).lower()
    if metric not in ("mse", "rmse"):
        raise ConfigError(f"unknown metric {metric!r}")
    sp = raw.get("split", {})
    split_fracs = (float(sp.get("test_fraction", 0.2)), float(sp.get("dk_fraction", 0.5)))
    SplitSpec(*split_fracs)
    fallback = raw.get("fallback", "mean")
    if fallback not in ("mean", "zero"):
        raise ConfigError(f"unknown fallback {fallback!r}")
    learners = _parse_learners(raw.get("learners"))
    schemes = _parse_schemes(raw.get("schemes"), optimizer.default)
    labels = [c.label for c in learners] + [s.label for s in schemes]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"column labels must be unique, got {labels}")
    return ExperimentConfig(
        source=_parse_source(raw.get("source")),
        learners=learners,
        schemes=schemes,
        optimizer=optimizer,
        replications=reps,
        seed=seed,
        metric=metric,
        split=split_fracs,
        fallback=fallback,
        workers=int(raw.get("workers", 1)),
    )


# --------------------------------------------------------------------------
# one replication


def derive_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed), *tags]).generate_state(1)[0])


_STREAM_SPLIT, _STREAM_LEARNER, _STREAM_FOLDS, _STREAM_HOLDOUT = 1, 2, 3, 4

_CSV_CACHE = {}


def _load_source(cfg: ExperimentConfig, rep_seed: int):
    src = cfg.source
    if src.kind == "synthetic":
        return gen_model(src.model, src.regime, seed=rep_seed, n=src.n)
    key = (src.path, src.target, src.features, src.delimiter, json.dumps(src.mappings, sort_keys=True))
    if key not in _CSV_CACHE:
        _CSV_CACHE[key] = load_csv(src.path, src.target, src.features, src.mappings, src.delimiter)[0]
    return _CSV_CACHE[key]


@dataclass
class Prepared:
    learners: list
    pm: PredictionMatrix
    test_preds: np.ndarray
    test_y: np.ndarray
    rep_seed: int
    fit_seconds: float


def prepare_replication(cfg: ExperimentConfig, rep: int) -> Prepared:
    """Data, split and fitted base learners for replication ``rep``."""
    t0 = time.perf_counter()
    rep_seed = cfg.seed + rep
    data = _load_source(cfg, rep_seed)
    spec = SplitSpec(cfg.split[0], cfg.split[1], seed=derive_seed(rep_seed, _STREAM_SPLIT))
    dk, dl, dt = split(data, spec)
    learners = []
    for m, lc in enumerate(cfg.learners):
        learners.append(lc.build().fit(dk.X, dk.y, seed=derive_seed(rep_seed, _STREAM_LEARNER, m)))
    pm = PredictionMatrix(predict_all(learners, dl.X), dl.y)
    return Prepared(learners, pm, predict_all(learners, dt.X), dt.y, rep_seed, time.perf_counter() - t0)


@dataclass
class TunedScheme:
    scheme: object
    pm: PredictionMatrix
    h: float
    alpha: Optional[float]
    seconds: float
    detail: dict


def tune_scheme(sc: SchemeConfig, pm: PredictionMatrix, cfg: ExperimentConfig, rep_seed: int) -> TunedScheme:
    """Pick the bandwidth (and agreement fraction) for one scheme on ``pm``."""
    opt = cfg.optimizer
    family = sc.family()
    if sc.name in ("cobra", "cobra-relaxed"):
        # hold-out tuning: combine on one half, validate on the other
        spec = SplitSpec(0.5, 0.5, seed=derive_seed(rep_seed, _STREAM_HOLDOUT))
        _, fit_idx, val_idx = split_indices(pm.l, spec)
        pm_fit, pm_val = pm.subset(np.sort(fit_idx)), pm.subset(np.sort(val_idx))
        obj = HoldoutObjective(pm_fit, pm_val, family, cfg.fallback)
        if sc.name == "cobra":
            res = fit_bandwidth_grid(obj, opt.grid)
            return TunedScheme(family.with_h(res.h_star), pm_fit, res.h_star, None, res.seconds,
                               {"value": res.value})
        res = fit_alpha_grid(obj, opt.grid, pm.M)
        scheme = CobraRelaxed(res.h_star, res.alpha_star)
        return TunedScheme(scheme, pm_fit, res.h_star, res.alpha_star, res.seconds, {"value": res.value})
    obj = CvObjective(pm, family, opt.folds, seed=derive_seed(rep_seed, _STREAM_FOLDS, opt.seed),
                      fallback=cfg.fallback)
    if sc.optimizer == "gd":
        res = fit_bandwidth_gd(obj, opt.gd)
        assert res.trace[-1].h == res.h_star
        return TunedScheme(family.with_h(res.h_star), pm, res.h_star, None, res.seconds,
                           {"value": res.value, "iterations": res.n_iter, "stop": res.stop_reason})
    res = fit_bandwidth_grid(obj, opt.grid)
    return TunedScheme(family.with_h(res.h_star), pm, res.h_star, None, res.seconds, {"value": res.value})


def run_replication(cfg: ExperimentConfig, rep: int) -> dict:
    """Scores of every column for one replication."""
    t0 = time.perf_counter()
    prep = prepare_replication(cfg, rep)
    metric = metric_mse if cfg.metric == "mse" else metric_rmse
    scores, hs, alphas, opt_seconds, no_consensus, details = {}, {}, {}, {}, {}, {}
    for m, lc in enumerate(cfg.learners):
        scores[lc.label] = metric(prep.test_preds[:, m], prep.test_y)
    for sc in cfg.schemes:
        tuned = tune_scheme(sc, prep.pm, cfg, prep.rep_seed)
        pred, flags = combine(tuned.scheme, tuned.pm, prep.test_preds, cfg.fallback)
        scores[sc.label] = metric(pred, prep.test_y)
        hs[sc.label] = tuned.h
        if tuned.alpha is not None:
            alphas[sc.label] = tuned.alpha
        opt_seconds[sc.label] = tuned.seconds
        no_consensus[sc.label] = int(flags.sum())
        details[sc.label] = tuned.detail
    return {
        "replicate": rep,
        "scores": scores,
        "h": hs,
        "alpha": alphas,
        "no_consensus": no_consensus,
        "optimizer_seconds": opt_seconds,
        "end_to_end_seconds": time.perf_counter() - t0,
        "details": details,
    }


def _safe_replication(cfg, rep):
    try:
        return run_replication(cfg, rep)
    except Exception as exc:  # noqa: BLE001 - any stage failure drops the replication
        logger.warning("replication %d failed: %s: %s", rep, type(exc).__name__, exc)
        return {"replicate": rep, "error": f"{type(exc).__name__}: {exc}"}


# --------------------------------------------------------------------------
# result tables


def _fmt6(x: float) -> str:
    return f"{x:.6g}"


@dataclass
class Column:
    name: str
    block: str
    values: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def sd(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(len(self.values))


@dataclass
class ResultTable:
    """Per-column replication scores with summary statistics.

    ``sd`` is the sample standard deviation across replications (the value
    reported in brackets in the usual benchmark tables); ``se`` is
    ``sd / sqrt(R)``.
    """

    metric: str
    columns: list
    replicates: list
    source: str = ""
    failures: list = field(default_factory=list)
    h: dict = field(default_factory=dict)
    alpha: dict = field(default_factory=dict)
    no_consensus: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def column(self, name) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def means(self) -> dict:
        return {c.name: c.mean for c in self.columns}

    @property
    def learner_columns(self):
        return [c for c in self.columns if c.block == "learner"]

    @property
    def scheme_columns(self):
        return [c for c in self.columns if c.block == "scheme"]

    def check(self):
        """Summaries must be recomputable from the stored replication values."""
        if not self.replicates:
            raise ValueError("result table has no successful replications")
        for c in self.columns:
            if len(c.values) != len(self.replicates):
                raise ValueError(f"column {c.name} has {len(c.values)} values for {len(self.replicates)} replicates")
            if not all(math.isfinite(v) for v in c.values):
                raise ValueError(f"column {c.name} holds non-finite values")
            assert c.mean == float(np.mean(np.asarray(c.values, dtype=float)))

    def to_json_dict(self, include_timings=False) -> dict:
        out = {
            "source": self.source,
            "metric": self.metric,
            "replicates": list(self.replicates),
            "failures": list(self.failures),
            "columns": [
                {
                    "name": c.name,
                    "block": c.block,
                    "mean": c.mean,
                    "sd": c.sd,
                    "se": c.se,
                    "values": list(c.values),
                }
                for c in self.columns
            ],
            "h": self.h,
            "alpha": self.alpha,
            "no_consensus": self.no_consensus,
        }
        if include_timings:
            out["timings"] = self.timings
        return out


def build_table(cfg: ExperimentConfig, results: list) -> ResultTable:
    ok = [r for r in results if "error" not in r]
    failed = [{"replicate": r["replicate"], "error": r["error"]} for r in results if "error" in r]
    columns = [Column(lc.label, "learner", [r["scores"][lc.label] for r in ok]) for lc in cfg.learners]
    columns += [Column(sc.label, "scheme", [r["scores"][sc.label] for r in ok]) for sc in cfg.schemes]
    return ResultTable(
        metric=cfg.metric,
        columns=columns,
        replicates=[r["replicate"] for r in ok],
        source=cfg.source.label,
        failures=failed,
        h={sc.label: [r["h"][sc.label] for r in ok] for sc in cfg.schemes},
        alpha={sc.label: [r["alpha"][sc.label] for r in ok] for sc in cfg.schemes if sc.name == "cobra-relaxed"},
        no_consensus={sc.label: [r["no_consensus"][sc.label] for r in ok] for sc in cfg.schemes},
        timings={
            "optimizer_seconds": {sc.label: [r["optimizer_seconds"][sc.label] for r in ok] for sc in cfg.schemes},
            "end_to_end_seconds": [r["end_to_end_seconds"] for r in ok],
        },
    )


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ResultTable:
    """Run all replications and collect a :class:`ResultTable`.

    A failing replication is logged and left out. More than 10% failures
    raise :class:`RunFailedError`.
    """
    workers = cfg.workers if workers is None else workers
    reps = range(cfg.replications)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_replication, [cfg] * cfg.replications, reps))
    else:
        results = [_safe_replication(cfg, r) for r in reps]
    n_failed = sum("error" in r for r in results)
    if n_failed > MAX_FAILURE_SHARE * cfg.replications:
        raise RunFailedError(f"{n_failed} of {cfg.replications} replications failed")
    table = build_table(cfg, results)
    table.check()
    return table


def emit_results(table: ResultTable, fmt: str = "json", path=None, include_timings=False) -> str:
    """Render ``table`` as csv, json or markdown; write it to ``path`` if given.

    Columns appear in config order, learners first. Summary numbers carry
    six significant digits; json and csv also keep the raw replication
    values.
    """
    table.check()
    if fmt == "json":
        text = json.dumps(table.to_json_dict(include_timings), indent=2) + "\n"
    elif fmt == "csv":
        text = _table_csv(table)
    elif fmt == "markdown":
        text = _table_markdown(table)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv, json or markdown")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _table_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([table.metric] + [c.name for c in table.columns])
    w.writerow(["block"] + [c.block for c in table.columns])
    for i, rep in enumerate(table.replicates):
        w.writerow([str(rep)] + [repr(float(c.values[i])) for c in table.columns])
    for stat in ("mean", "sd", "se"):
        w.writerow([stat] + [_fmt6(getattr(c, stat)) for c in table.columns])
    return buf.getvalue()


def read_results_csv(text: str) -> ResultTable:
    """Parse the csv written by :func:`emit_results` back into a table."""
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2 or rows[1][0] != "block":
        raise ValueError("not a result-table csv")
    names, blocks = rows[0][1:], rows[1][1:]
    body = [r for r in rows[2:] if r and r[0] not in ("mean", "sd", "se")]
    columns = [Column(n, b, [float(r[j + 1]) for r in body]) for j, (n, b) in enumerate(zip(names, blocks))]
    return ResultTable(rows[0][0], columns, [int(r[0]) for r in body])


def _table_markdown(table: ResultTable) -> str:
    learners, schemes = table.learner_columns, table.scheme_columns
    header = [table.metric.upper()] + [c.name for c in learners] + [" "] + [c.name for c in schemes]
    best_l = min(learners, key=lambda c: c.mean).name if learners else None
    best_s = min(schemes, key=lambda c: c.mean).name if schemes else None

    def cells(stat, bold):
        out = []
        for c in learners:
            v = _fmt6(getattr(c, stat))
            out.append(f"**{v}**" if bold and c.name == best_l else v)
        out.append(" ")
        for c in schemes:
            v = _fmt6(getattr(c, stat))
            out.append(f"**{v}**" if bold and c.name == best_s else v)
        return out

    lines = []
    if table.source:
        lines.append(f"{table.source}, {len(table.replicates)} replications")
        lines.append("")
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join(["---"] + ["---:"] * len(learners) + [":-:"] + ["---:"] * len(schemes)) + "|")
    lines.append("| mean | " + " | ".join(cells("mean", True)) + " |")
    sd = ["(" + x + ")" if x.strip() else x for x in cells("sd", False)]
    lines.append("| (sd) | " + " | ".join(sd) + " |")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# optimizer timing


def time_optimizers(cfg: ExperimentConfig, rep: int = 0, scheme_label: Optional[str] = None,
                    gd: Optional[GdConfig] = None, grid=None) -> dict:
    """Run gradient descent and grid search on the same CV objective.

    Uses the first smooth kernel scheme of ``cfg`` (or ``scheme_label``) with a
    multiplicative bandwidth. Times cover the optimisation phase only.
    ``gd`` and ``grid`` override the config's optimizer settings; ``grid``
    may also be an explicit array of bandwidths.
    """
    candidates = [s for s in cfg.schemes if s.kernel is not None and s.kernel.smooth
                  and s.parametrization == "multiplicative"]
    if scheme_label is not None:
        candidates = [s for s in candidates if s.label == scheme_label]
    if not candidates:
        raise ConfigError("timing needs a gaussian/exp4 kernel scheme with multiplicative bandwidth")
    sc = candidates[0]
    prep = prepare_replication(cfg, rep)
    obj = CvObjective(prep.pm, sc.family(), cfg.optimizer.folds,
                      seed=derive_seed(prep.rep_seed, _STREAM_FOLDS, cfg.optimizer.seed),
                      fallback=cfg.fallback)
    obj.value(1.0)  # warm caches so neither optimizer pays for them
    gd = fit_bandwidth_gd(obj, cfg.optimizer.gd if gd is None else gd)
    grid = fit_bandwidth_grid(obj, cfg.optimizer.grid if grid is None else grid)
    return {
        "replicate": rep,
        "scheme": sc.label,
        "gd_seconds": gd.seconds,
        "grid_seconds": grid.seconds,
        "gd_h": gd.h_star,
        "grid_h": grid.h_star,
        "gd_cv_error": gd.value,
        "grid_cv_error": grid.value,
        "gd_iterations": gd.n_iter,
        "gd_stop": gd.stop_reason,
        "fit_seconds": prep.fit_seconds,
    }


# --------------------------------------------------------------------------
# aggregation-sample size study


def aggregation_size_trend(model_id=1, ells=(100, 200, 400), replications=10, seed=0,
                           k=320, n_test=160, regime="uncorrelated", gd: GdConfig = GdConfig(),
                           folds=5, learner_configs=DEFAULT_LEARNERS):
    """Test error of the gaussian aggregate as the aggregation sample grows.

    Base learners are fitted once per replication on ``k`` rows and kept
    fixed; the aggregation samples are nested prefixes of one pool, and the
    test set is shared across sizes. Returns ``{"ells", "mse" (R, len(ells)),
    "median"}``.
    """
    ells = tuple(int(e) for e in ells)
    mse = np.empty((replications, len(ells)))
    scheme = KernelVector(KernelSpec("gaussian"), Bandwidth(1.0, "multiplicative"))
    for r in range(replications):
        rep_seed = seed + r
        data = gen_model(model_id, regime, seed=rep_seed, n=k + max(ells) + n_test)
        dk = data.subset(np.arange(k))
        pool = data.subset(np.arange(k, k + max(ells)))
        test = data.subset(np.arange(k + max(ells), data.n))
        learners = []
        for m, item in enumerate(learner_configs):
            params = dict(item)
            name = params.pop("name")
            learners.append(make_learner(name, **params).fit(dk.X, dk.y, seed=derive_seed(rep_seed, _STREAM_LEARNER, m)))
        pool_pm = PredictionMatrix(predict_all(learners, pool.X), pool.y)
        test_preds = predict_all(learners, test.X)
        for j, ell in enumerate(ells):
            pm = pool_pm.subset(np.arange(ell))
            obj = CvObjective(pm, scheme, folds, seed=derive_seed(rep_seed, _STREAM_FOLDS))
            res = fit_bandwidth_gd(obj, gd)
            pred, _ = combine(scheme.with_h(res.h_star), pm, test_preds)
            mse[r, j] = metric_mse(pred, test.y)
    return {"ells": ells, "mse": mse, "median": np.median(mse, axis=0)}
