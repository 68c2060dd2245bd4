"""Monte-Carlo experiment harness for group-sum interval methods.

Two applications share one rep loop: category-average prediction on
tabular data (fixed disjoint groups) and path-cost prediction on road
networks (per-rep sampled shortest-path groups, generally overlapping).
Each rep re-splits the held-out indices, predicts every group's unknown
test-side sum with every enabled method, and records coverage and width;
aggregation is mean/std over reps.

Training data is carved out once per experiment seed; predictions are
therefore fixed across reps and only the calibration/test split (and, for
graphs, the sampled paths) varies rep to rep.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import baselines
from .cia import (
    StrataSpec,
    _stratified_threshold_value,
    interval_from_threshold,
    overlap_delta_avg,
    overlap_delta_max,
    restrict_groups,
    symmetric_split,
)
from .core import IndexGroup, IntervalPrediction, score_threshold
from .graph import WeightedGraph, sample_path_groups
from .models import fit_arrays, predict_point, predict_quantiles

__all__ = [
    "METHOD_IDS",
    "ExperimentConfig",
    "MethodResult",
    "PathSampling",
    "OverlapStudyRow",
    "TabularDataset",
    "load_tabular_csv",
    "build_groups_by_category",
    "generate_synthetic",
    "run_experiment",
    "overlap_gap_study",
    "derive_seed",
]

logger = logging.getLogger(__name__)

METHOD_IDS = (
    "cia_split",
    "cia_cqr",
    "cia_split_strat",
    "cia_cqr_strat",
    "group_split",
    "group_cqr",
    "normal_homo",
    "normal_hetero",
    "bonf_split",
    "bonf_cqr",
)

_CQR_METHODS = {"cia_cqr", "cia_cqr_strat", "group_cqr", "bonf_cqr"}

# seed stream tags so the train draw, the per-rep splits, the per-rep path
# samples, and the per-target group sampling never collide
_STREAM_TRAIN = 0
_STREAM_SPLIT = 1
_STREAM_PATHS = 2
_STREAM_GSAMP = 3


def derive_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    alphas: tuple[float, ...]
    reps: int = 100
    seed: int = 0
    methods: tuple[str, ...] = METHOD_IDS
    train_frac: float = 0.7
    split_mode: str = "balanced"
    refit_train_each_rep: bool = False
    point_model: str = "linear_ls"
    knn_k: int | None = None
    strata_buckets: int = 4
    strata_min_count: int = 20

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ValueError("alphas must be a non-empty list within (0, 1)")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError("train_frac must be in (0, 1)")
        if not self.methods:
            raise ValueError("at least one method is required")
        unknown = set(self.methods) - set(METHOD_IDS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.split_mode not in ("balanced", "bernoulli"):
            raise ValueError(f"unknown split mode {self.split_mode!r}")


@dataclass(frozen=True)
class MethodResult:
    method: str
    alpha: float
    mean_coverage: float
    coverage_std: float
    mean_size: float
    size_std: float
    reps: int
    infinite_interval_count: int


@dataclass(frozen=True)
class PathSampling:
    """How to draw shortest-path groups in the path-cost application."""

    n_paths: int
    min_path_len: int = 1


@dataclass(frozen=True)
class OverlapStudyRow:
    min_len: int
    method: str
    alpha: float
    delta_avg: float
    delta_max: float
    coverage: float
    coverage_gap: float
    mean_size: float
    reps: int


@dataclass(frozen=True)
class TabularDataset:
    """Column store for the tabular application.

    ``group_values`` maps each grouping column to its per-row key values
    (ints or strings); ``features`` is the numeric design matrix with
    categorical grouping columns already code-encoded.
    """

    features: np.ndarray
    labels: np.ndarray
    group_values: dict[str, tuple] = field(default_factory=dict)
    feature_names: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return int(self.labels.size)


# ---------------------------------------------------------------------------
# Data ingestion
# ---------------------------------------------------------------------------


def _try_float(token: str) -> float | None:
    try:
        return float(token)
    except ValueError:
        return None


def load_tabular_csv(
    path, label_column: str, grouping_columns: Sequence[str], discretize_bins: int | None = None
) -> TabularDataset:
    """Load a CSV with a header row; the response column is standardized.

    Grouping columns must be categorical (integer-valued or strings); pass
    ``discretize_bins`` to bucket a continuous grouping column into
    equal-frequency bins instead. All remaining columns must be numeric
    and become model features (categorical grouping columns enter as
    category codes).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        table = [row for row in reader if row and any(c.strip() for c in row)]
    for col in [label_column, *grouping_columns]:
        if col not in header:
            raise ValueError(f"{path}: column {col!r} not found in header")
    col_idx = {c: i for i, c in enumerate(header)}
    for line_no, row in enumerate(table, start=2):
        if len(row) != len(header):
            raise ValueError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")

    n = len(table)
    if n == 0:
        raise ValueError(f"{path}: no data rows")

    labels = np.empty(n)
    for i, row in enumerate(table):
        v = _try_float(row[col_idx[label_column]])
        if v is None:
            raise ValueError(
                f"line {i + 2}: label column {label_column!r}: "
                f"{row[col_idx[label_column]]!r} is not numeric"
            )
        labels[i] = v
    sd = float(labels.std())
    if sd > 0:
        labels = (labels - labels.mean()) / sd
    else:
        logger.warning("constant label column %r standardized to zeros", label_column)
        labels = np.zeros(n)

    group_values: dict[str, tuple] = {}
    feature_cols: list[np.ndarray] = []
    feature_names: list[str] = []
    for col in header:
        if col == label_column:
            continue
        raw = [row[col_idx[col]].strip() for row in table]
        parsed = [_try_float(v) for v in raw]
        numeric = all(p is not None for p in parsed)
        if col in grouping_columns:
            if numeric:
                integral = all(float(p).is_integer() for p in parsed)
                if integral:
                    group_values[col] = tuple(int(p) for p in parsed)
                elif discretize_bins:
                    vals = np.asarray(parsed)
                    qs = np.quantile(vals, np.linspace(0, 1, discretize_bins + 1)[1:-1])
                    group_values[col] = tuple(int(b) for b in np.searchsorted(qs, vals))
                else:
                    raise ValueError(
                        f"grouping column {col!r} is continuous; pass discretize_bins "
                        f"to bucket it"
                    )
                feature_cols.append(np.asarray(parsed, dtype=float))
                feature_names.append(col)
            else:
                group_values[col] = tuple(raw)
                codes = {v: c for c, v in enumerate(sorted(set(raw)))}
                feature_cols.append(np.array([codes[v] for v in raw], dtype=float))
                feature_names.append(col)
        else:
            if not numeric:
                bad = next(i for i, p in enumerate(parsed) if p is None)
                raise ValueError(
                    f"line {bad + 2}: column {col!r}: {raw[bad]!r} is not numeric"
                )
            feature_cols.append(np.asarray(parsed, dtype=float))
            feature_names.append(col)
    if not feature_cols:
        feature_cols = [np.zeros(n)]
        feature_names = ["_const"]
    return TabularDataset(
        features=np.column_stack(feature_cols),
        labels=labels,
        group_values=group_values,
        feature_names=tuple(feature_names),
    )


def build_groups_by_category(
    dataset: TabularDataset,
    grouping_columns: Sequence[str],
    indices: Iterable[int] | None = None,
) -> list[IndexGroup]:
    """One group per distinct grouping-value combination; disjoint by design."""
    cols = []
    for c in grouping_columns:
        if c not in dataset.group_values:
            raise ValueError(f"grouping column {c!r} not present in dataset")
        cols.append(dataset.group_values[c])
    idx = list(indices) if indices is not None else list(range(dataset.n_rows))
    buckets: dict[tuple, list[int]] = {}
    for i in idx:
        buckets.setdefault(tuple(col[i] for col in cols), []).append(i)
    return [
        IndexGroup(group_id=gid, members=frozenset(buckets[key]))
        for gid, key in enumerate(sorted(buckets))
    ]


def generate_synthetic(
    n_samples: int,
    n_groups: int,
    noise_kind: str = "gaussian",
    rng_seed: int = 0,
    n_features: int = 3,
    noise_scale: float = 1.0,
) -> tuple[TabularDataset, list[IndexGroup]]:
    """Linear data with chosen noise, plus a uniform disjoint group partition.

    Samples are i.i.d. and the partition is an exchangeable random one, so
    the groups satisfy the exchangeability the coverage guarantee needs.
    """
    if n_groups > n_samples:
        raise ValueError("n_groups cannot exceed n_samples")
    if noise_kind not in ("gaussian", "student_t"):
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    rng = np.random.default_rng(rng_seed)
    X = rng.standard_normal((n_samples, n_features))
    beta = rng.uniform(0.5, 1.5, size=n_features)
    noise = (
        rng.standard_normal(n_samples)
        if noise_kind == "gaussian"
        else rng.standard_t(3, size=n_samples)
    )
    y = X @ beta + 0.5 + noise_scale * noise
    perm = rng.permutation(n_samples)
    groups = [
        IndexGroup(group_id=gid, members=frozenset(chunk.tolist()))
        for gid, chunk in enumerate(np.array_split(perm, n_groups))
    ]
    return TabularDataset(features=X, labels=y), groups


# ---------------------------------------------------------------------------
# The rep engine
# ---------------------------------------------------------------------------


@dataclass
class _Prep:
    universe: np.ndarray  # sorted row positions outside training
    y: np.ndarray
    y_hat: np.ndarray  # predictions on the universe (nan elsewhere)
    quant: dict[float, tuple[np.ndarray, np.ndarray]]
    sigma_iqr: np.ndarray | None
    members: list[np.ndarray] | None  # fixed groups (tabular), else None
    group_ids: np.ndarray | None
    cost: np.ndarray | None = None  # per-edge routing costs (graph mode)


@dataclass
class _RepOutcome:
    coverage: float
    mean_width: float
    n_infinite: int


def _needs_quantiles(methods: Sequence[str]) -> bool:
    return bool(_CQR_METHODS & set(methods)) or "normal_hetero" in methods


def _fit_and_predict(features, labels, train_pos, universe, alphas, config):
    y_hat = np.full(labels.size, np.nan)
    model = fit_arrays(features[train_pos], labels[train_pos], config.point_model,
                       k_neighbors=config.knn_k)
    y_hat[universe] = predict_point(model, features[universe])
    quant: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    sigma_iqr = None
    need_cqr = bool(_CQR_METHODS & set(config.methods))
    need_hetero = "normal_hetero" in config.methods
    if need_cqr or need_hetero:
        qmodel = fit_arrays(features[train_pos], labels[train_pos], "knn",
                            k_neighbors=config.knn_k)
        if need_cqr:
            for a in alphas:
                lo = np.full(labels.size, np.nan)
                hi = np.full(labels.size, np.nan)
                lo_u, hi_u = predict_quantiles(qmodel, features[universe], (a / 2, 1 - a / 2))
                lo[universe], hi[universe] = lo_u, hi_u
                quant[a] = (lo, hi)
        if need_hetero:
            q25, q75 = predict_quantiles(qmodel, features[universe], (0.25, 0.75))
            sigma_iqr = np.full(labels.size, np.nan)
            sigma_iqr[universe] = baselines.iqr_sigma(q25, q75)
    return y_hat, quant, sigma_iqr


def _train_universe(n, config, rep=None):
    entropy = [config.seed, _STREAM_TRAIN] + ([rep] if rep is not None else [])
    rng = np.random.default_rng(derive_seed(*entropy))
    n_train = int(n * config.train_frac)
    n_train = min(max(n_train, 1), n - 2)
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


class _Session:
    """Shared read-only state plus the per-rep evaluation logic."""

    def __init__(self, config: ExperimentConfig, prep_fn,
                 graph: WeightedGraph | None = None,
                 path_spec: PathSampling | None = None,
                 collect_deltas: bool = False):
        self.config = config
        self.prep_fn = prep_fn  # rep -> _Prep
        self.graph = graph
        self.path_spec = path_spec
        self.collect_deltas = collect_deltas

    def _groups_for_rep(self, prep: _Prep, rep: int) -> tuple[list[np.ndarray], np.ndarray]:
        if prep.members is not None:
            return prep.members, prep.group_ids
        paths = sample_path_groups(
            self.graph,
            self.path_spec.n_paths,
            derive_seed(self.config.seed, _STREAM_PATHS, rep),
            min_path_len=self.path_spec.min_path_len,
            cost_fn=prep.cost,
        )
        in_universe = np.zeros(prep.y.size, dtype=bool)
        in_universe[prep.universe] = True
        members = []
        for p in paths:
            rows = np.unique([self.graph.edge_row(e) for e in p.edge_ids])
            rows = rows[in_universe[rows]]
            if rows.size:
                members.append(rows.astype(np.int64))
        return members, np.arange(len(members))

    def run_rep(self, rep: int):
        config = self.config
        prep = self.prep_fn(rep)
        members, group_ids = self._groups_for_rep(prep, rep)
        if not members:
            raise ValueError(f"rep {rep}: no usable groups")

        assignment = symmetric_split(
            prep.universe.tolist(), derive_seed(config.seed, _STREAM_SPLIT, rep),
            config.split_mode,
        )
        is_cal = np.zeros(prep.y.size, dtype=bool)
        is_cal[np.fromiter(assignment.cal, dtype=np.int64, count=len(assignment.cal))] = True

        cal_list = [m[is_cal[m]] for m in members]
        test_list = [m[~is_cal[m]] for m in members]
        cal_sizes = np.array([c.size for c in cal_list])
        test_sizes = np.array([t.size for t in test_list])
        targets = np.flatnonzero(test_sizes > 0)
        if targets.size == 0:
            raise ValueError(f"rep {rep}: no group has a non-empty test side")

        y, y_hat = prep.y, prep.y_hat
        cal_universe = prep.universe[is_cal[prep.universe]]
        # split scores: |sum of residuals| per group, empty sums are 0
        scores_split = np.array(
            [abs(float(np.sum(y[c] - y_hat[c]))) if c.size else 0.0 for c in cal_list]
        )
        pred_sums = np.array(
            [float(np.sum(y_hat[t])) if t.size else 0.0 for t in test_list]
        )
        true_sums = np.array(
            [float(np.sum(y[t])) if t.size else 0.0 for t in test_list]
        )

        deltas = None
        if self.collect_deltas:
            groups = [
                IndexGroup(group_id=int(g), members=frozenset(m.tolist()))
                for g, m in zip(group_ids, members)
            ]
            deltas = (overlap_delta_avg(groups), overlap_delta_max(groups))

        outcomes: dict[tuple[str, float], _RepOutcome | None] = {}
        for alpha in config.alphas:
            ctx = {}
            if _needs_quantiles(config.methods) and alpha in prep.quant:
                qlo, qhi = prep.quant[alpha]
                ctx["scores_cqr"] = np.array(
                    [
                        float(max(np.sum(qlo[c] - y[c]), np.sum(y[c] - qhi[c])))
                        if c.size
                        else 0.0
                        for c in cal_list
                    ]
                )
                ctx["lo_sums"] = np.array(
                    [float(np.sum(qlo[t])) if t.size else 0.0 for t in test_list]
                )
                ctx["hi_sums"] = np.array(
                    [float(np.sum(qhi[t])) if t.size else 0.0 for t in test_list]
                )
                ctx["qlo"], ctx["qhi"] = qlo, qhi
            strata = None
            if any(m.endswith("_strat") for m in config.methods):
                strata = StrataSpec.from_cal_sizes(
                    cal_sizes, config.strata_buckets, config.strata_min_count
                )
            for method in config.methods:
                try:
                    intervals = self._method_intervals(
                        prep, method, alpha, rep, targets, group_ids,
                        scores_split, cal_sizes, test_sizes,
                        pred_sums, cal_universe, cal_list, test_list, strata, ctx,
                    )
                    covered = np.array(
                        [iv.covers(true_sums[t]) for iv, t in zip(intervals, targets)]
                    )
                    widths = np.array([iv.width for iv in intervals])
                    finite = np.isfinite(widths)
                    outcomes[(method, alpha)] = _RepOutcome(
                        coverage=float(covered.mean()),
                        mean_width=float(widths[finite].mean()) if finite.any() else math.nan,
                        n_infinite=int((~finite).sum()),
                    )
                except ValueError as exc:
                    logger.warning("rep %d: %s at alpha=%g failed: %s", rep, method, alpha, exc)
                    outcomes[(method, alpha)] = None
        return outcomes, deltas

    def _method_intervals(
        self, prep, method, alpha, rep, targets, group_ids,
        scores_split, cal_sizes, test_sizes, pred_sums,
        cal_universe, cal_list, test_list, strata, ctx,
    ) -> list[IntervalPrediction]:
        y, y_hat = prep.y, prep.y_hat
        out = []
        if method in ("cia_split", "cia_cqr", "cia_split_strat", "cia_cqr_strat"):
            kind = "cqr" if "cqr" in method else "split"
            scores = scores_split if kind == "split" else ctx["scores_cqr"]
            for t in targets:
                others = np.delete(scores, t)
                if method.endswith("_strat"):
                    q = _stratified_threshold_value(
                        others, np.delete(cal_sizes, t), int(test_sizes[t]),
                        strata, alpha,
                    )
                else:
                    q = score_threshold(others, alpha).value
                out.append(self._interval(kind, t, alpha, q, pred_sums, ctx, group_ids))
        elif method in ("group_split", "group_cqr"):
            kind = "cqr" if "cqr" in method else "split"
            if kind == "split":
                cols = (y[cal_universe], y_hat[cal_universe])
            else:
                cols = (y[cal_universe], ctx["qlo"][cal_universe], ctx["qhi"][cal_universe])
            mseed = METHOD_IDS.index(method)
            for pos, t in enumerate(targets):
                rng = np.random.default_rng(
                    derive_seed(self.config.seed, _STREAM_GSAMP, rep, mseed, pos)
                )
                q = baselines.group_sampling_threshold(
                    cols, int(test_sizes[t]), alpha, kind, None, rng
                )
                out.append(self._interval(kind, t, alpha, q, pred_sums, ctx, group_ids))
        elif method == "normal_homo":
            sigma = baselines.pooled_residual_sigma(y[cal_universe], y_hat[cal_universe])
            for t in targets:
                out.append(
                    baselines.normal_interval(
                        pred_sums[t], math.sqrt(test_sizes[t]) * sigma, alpha,
                        int(group_ids[t]),
                    )
                )
        elif method == "normal_hetero":
            sig = prep.sigma_iqr
            for t in targets:
                spread = math.sqrt(float(np.sum(sig[test_list[t]] ** 2)))
                out.append(
                    baselines.normal_interval(pred_sums[t], spread, alpha, int(group_ids[t]))
                )
        elif method in ("bonf_split", "bonf_cqr"):
            kind = "cqr" if "cqr" in method else "split"
            if kind == "split":
                ps = baselines.per_sample_split_scores(y[cal_universe], y_hat[cal_universe])
            else:
                ps = baselines.per_sample_cqr_scores(
                    y[cal_universe], ctx["qlo"][cal_universe], ctx["qhi"][cal_universe]
                )
            for t in targets:
                q = score_threshold(ps, alpha / test_sizes[t]).value
                if kind == "split":
                    cols = (y_hat[test_list[t]],)
                else:
                    cols = (ctx["qlo"][test_list[t]], ctx["qhi"][test_list[t]])
                out.append(
                    baselines.bonferroni_interval(q, cols, alpha, kind, int(group_ids[t]))
                )
        else:  # pragma: no cover - config validation rejects unknown ids
            raise ValueError(f"unknown method {method!r}")
        return out

    def _interval(self, kind, t, alpha, q_value, pred_sums, ctx, group_ids):
        if kind == "split":
            return interval_from_threshold(
                int(group_ids[t]), alpha, q_value, score_kind="split",
                pred_sum=pred_sums[t],
            )
        return interval_from_threshold(
            int(group_ids[t]), alpha, q_value, score_kind="cqr",
            lo_sum=ctx["lo_sums"][t], hi_sum=ctx["hi_sums"][t],
        )


def _worker_count(reps: int) -> int:
    env = os.environ.get("CIA_THREADS", "").strip()
    if env:
        try:
            workers = max(1, int(env))
        except ValueError:
            logger.warning("ignoring invalid CIA_THREADS=%r", env)
            workers = os.cpu_count() or 1
    else:
        workers = os.cpu_count() or 1
    return min(workers, reps)


def _aggregate(config, per_rep) -> list[MethodResult]:
    results = []
    for method in config.methods:
        for alpha in config.alphas:
            outcomes = [
                o[(method, alpha)] for o in per_rep if o.get((method, alpha)) is not None
            ]
            if not outcomes:
                logger.warning("%s at alpha=%g failed in every rep", method, alpha)
                continue
            cov = np.array([o.coverage for o in outcomes])
            widths = np.array([o.mean_width for o in outcomes])
            finite = np.isfinite(widths)
            if finite.any():
                mean_size = float(widths[finite].mean())
                size_std = float(widths[finite].std())
            else:
                mean_size, size_std = math.inf, 0.0
            results.append(
                MethodResult(
                    method=method,
                    alpha=alpha,
                    mean_coverage=float(cov.mean()),
                    coverage_std=float(cov.std()),
                    mean_size=mean_size,
                    size_std=size_std,
                    reps=len(outcomes),
                    infinite_interval_count=sum(o.n_infinite for o in outcomes),
                )
            )
    return sorted(results, key=lambda r: (r.method, r.alpha))


def _run_session(session: _Session):
    config = session.config
    per_rep: list[dict] = [None] * config.reps
    deltas: list[tuple[float, float] | None] = [None] * config.reps

    def one(rep: int):
        try:
            return session.run_rep(rep)
        except ValueError as exc:
            logger.warning("rep %d failed entirely: %s", rep, exc)
            return {}, None

    workers = _worker_count(config.reps)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for rep, (outcomes, d) in enumerate(pool.map(one, range(config.reps))):
                per_rep[rep], deltas[rep] = outcomes, d
    else:
        for rep in range(config.reps):
            per_rep[rep], deltas[rep] = one(rep)
    return _aggregate(config, per_rep), [d for d in deltas if d is not None]


def _prepare_tabular(dataset: TabularDataset, groups, config, rep=None) -> _Prep:
    train_pos, universe = _train_universe(dataset.n_rows, config, rep)
    y_hat, quant, sigma = _fit_and_predict(
        dataset.features, dataset.labels, train_pos, universe, config.alphas, config
    )
    kept = restrict_groups(groups, universe.tolist())
    members = [np.array(sorted(g.members), dtype=np.int64) for g in kept]
    gids = np.array([g.group_id for g in kept], dtype=np.int64)
    return _Prep(
        universe=universe, y=dataset.labels.astype(float), y_hat=y_hat,
        quant=quant, sigma_iqr=sigma, members=members, group_ids=gids,
    )


def _prepare_graph(graph: WeightedGraph, config, rep=None) -> _Prep:
    labels = graph.labels
    if np.isnan(labels).any():
        raise ValueError(
            "path-cost experiments need a label on every edge; "
            f"{int(np.isnan(labels).sum())} edges are unlabeled"
        )
    features = graph.features
    cfg = config
    if features is None:
        # no edge features: a constant column turns knn into global statistics
        features = np.zeros((graph.n_edges, 1))
        cfg = replace(config, point_model="knn")
    train_pos, universe = _train_universe(graph.n_edges, cfg, rep)
    y_hat, quant, sigma = _fit_and_predict(
        features, labels, train_pos, universe, cfg.alphas, cfg
    )
    cost = labels.copy()
    clipped = int(np.sum(y_hat[universe] < 0))
    if clipped:
        logger.debug("%d negative predicted edge costs clamped to 0", clipped)
    cost[universe] = np.maximum(y_hat[universe], 0.0)
    return _Prep(
        universe=universe, y=labels.astype(float), y_hat=y_hat,
        quant=quant, sigma_iqr=sigma, members=None, group_ids=None, cost=cost,
    )


def run_experiment(data, grouping, config: ExperimentConfig) -> list[MethodResult]:
    """Run the Monte-Carlo loop and aggregate per-method coverage and size.

    ``data`` is a :class:`TabularDataset` with a list of
    :class:`~ciarith.core.IndexGroup` in ``grouping``, or a
    :class:`~ciarith.graph.WeightedGraph` with a :class:`PathSampling`
    spec. Coverage is the within-rep mean indicator over target groups,
    then averaged over reps; infinite intervals count as covered but are
    excluded from sizes and tallied separately.
    """
    if isinstance(data, WeightedGraph):
        if not isinstance(grouping, PathSampling):
            raise ValueError("graph experiments need a PathSampling spec")
        prep_fn = _prep_factory(lambda rep: _prepare_graph(data, config, rep), config)
        session = _Session(config, prep_fn, graph=data, path_spec=grouping)
    else:
        groups = list(grouping)
        if not groups:
            raise ValueError("tabular experiments need a non-empty group list")
        prep_fn = _prep_factory(
            lambda rep: _prepare_tabular(data, groups, config, rep), config
        )
        session = _Session(config, prep_fn)
    results, _ = _run_session(session)
    return results


def _prep_factory(make, config: ExperimentConfig):
    """Fixed training draw by default; per-rep redraws when configured."""
    if config.refit_train_each_rep:
        return make
    fixed = make(None)
    return lambda rep: fixed


def overlap_gap_study(
    graph: WeightedGraph,
    config: ExperimentConfig,
    min_len_grid: Sequence[int],
    n_paths: int = 100,
) -> list[OverlapStudyRow]:
    """Path experiment per minimum path length, with overlap diagnostics.

    Each row records the mean (over reps) pairwise-Jaccard and worst-case
    overlap measures of the sampled groups together with the empirical
    coverage gap, coverage - (1 - alpha). Rows whose sampling fails are
    skipped with a warning.
    """
    rows: list[OverlapStudyRow] = []
    for min_len in min_len_grid:
        try:
            prep_fn = _prep_factory(lambda rep: _prepare_graph(graph, config, rep), config)
            session = _Session(
                config, prep_fn, graph=graph,
                path_spec=PathSampling(n_paths=n_paths, min_path_len=int(min_len)),
                collect_deltas=True,
            )
            results, deltas = _run_session(session)
        except ValueError as exc:
            logger.warning("overlap study: min_len=%d skipped: %s", min_len, exc)
            continue
        if not deltas:
            logger.warning("overlap study: min_len=%d produced no usable reps", min_len)
            continue
        d_avg = float(np.mean([d[0] for d in deltas]))
        d_max = float(np.mean([d[1] for d in deltas]))
        for r in results:
            rows.append(
                OverlapStudyRow(
                    min_len=int(min_len),
                    method=r.method,
                    alpha=r.alpha,
                    delta_avg=d_avg,
                    delta_max=d_max,
                    coverage=r.mean_coverage,
                    coverage_gap=r.mean_coverage - (1.0 - r.alpha),
                    mean_size=r.mean_size,
                    reps=r.reps,
                )
            )
    return rows
