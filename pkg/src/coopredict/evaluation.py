"""Structure-level cross-validation, scoring metrics, significance tests and inertia.

Two protocols are supported. Individual-level evaluation predicts each held-out
decision conditioned on the observed previous period. Aggregate-level evaluation
simulates held-out structures from their parameters alone and compares
per-period cooperation with what was observed.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import expit

from .behavior import (
    BehaviorModel,
    ImputationMode,
    ModelKind,
    fewa_attraction_gaps,
    fit_model,
    predict_cooperation,
)
from .core import Action, GameStructure, InteractionHistory
from .decisions import with_lags
from .errors import BadK, CoopredictError, MissingRng, NoPriorCooperation, UndefinedCorrelation, ZeroVariance
from .features import dynamic_matrix, static_matrix
from .glm import EVAL_CLAMP
from .simulator import SimulationConfig, derive_seed, simulate_structure


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict[str, int]
    seed: int | None = None

    def folds(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.k)]
        for sid, f in self.assignments.items():
            out[f].append(sid)
        return out


def make_folds(structure_ids: Sequence[str], k: int, seed: int = 0) -> FoldPlan:
    """Seeded assignment of structures to ``k`` folds whose sizes differ by at most one."""
    ids = list(structure_ids)
    n = len(ids)
    if len(set(ids)) != n:
        raise BadK("structure ids must be unique")
    if not 2 <= k <= n:
        raise BadK(f"k must lie in [2, {n}], got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = {ids[j]: int(pos % k) for pos, j in enumerate(perm)}
    return FoldPlan(k, {sid: assignments[sid] for sid in ids}, seed)


def loo_folds(structure_ids: Sequence[str]) -> FoldPlan:
    """Leave-one-structure-out: fold i holds the i-th structure."""
    ids = list(structure_ids)
    if len(ids) < 2:
        raise BadK("leave-one-out needs at least two structures")
    return FoldPlan(len(ids), {sid: i for i, sid in enumerate(ids)}, None)


# --- metrics -------------------------------------------------------------------


def rmse(predicted, observed) -> float:
    a, b = np.asarray(predicted, dtype=float), np.asarray(observed, dtype=float)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def correlation(predicted, observed) -> float:
    a, b = np.asarray(predicted, dtype=float), np.asarray(observed, dtype=float)
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedCorrelation("correlation needs two non-constant series")
    return float(np.corrcoef(a, b)[0, 1])


def paired_t_test(a, b) -> tuple[float, int, float]:
    """Paired-sample t-test on ``a - b``; returns (t, df, two-sided p)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("paired t-test needs two equal-length samples of size >= 2")
    d = a - b
    n = len(d)
    sd = float(np.std(d, ddof=1))
    if sd == 0:
        raise ZeroVariance("all paired differences are equal")
    t = float(np.mean(d) / (sd / math.sqrt(n)))
    p = float(2 * stats.t.sf(abs(t), n - 1))
    return t, n - 1, p


def log_score(prob, y) -> np.ndarray:
    p = np.clip(np.asarray(prob, dtype=float), EVAL_CLAMP, 1 - EVAL_CLAMP)
    y = np.asarray(y)
    return np.where(y == 1, np.log(p), np.log1p(-p))


def hits(prob, y) -> np.ndarray:
    """Correct calls: p > 0.5 for a cooperation, p < 0.5 for a defection. 0.5 never counts."""
    prob, y = np.asarray(prob), np.asarray(y)
    return ((prob > 0.5) & (y == 1)) | ((prob < 0.5) & (y == 0))


def score_predictions(frame: pd.DataFrame) -> pd.DataFrame:
    """Per-structure hit counts and log-likelihoods, split at period 1.

    ``frame`` needs structure_id, period, action and prob columns.
    """
    f = frame.assign(
        hit=hits(frame["prob"], frame["action"]).astype(np.int64),
        ll=log_score(frame["prob"], frame["action"]),
        first=frame["period"] == 1,
    )
    ids = list(dict.fromkeys(f["structure_id"]))
    out = pd.DataFrame({"structure_id": ids})
    for label, mask in (("t1", f["first"]), ("tgt1", ~f["first"])):
        g = f[mask].groupby("structure_id")
        out[f"n_{label}"] = out["structure_id"].map(g.size()).fillna(0).astype(np.int64)
        out[f"hits_{label}"] = out["structure_id"].map(g["hit"].sum()).fillna(0).astype(np.int64)
        out[f"ll_{label}"] = out["structure_id"].map(g["ll"].sum()).fillna(0.0)
    return out


# --- held-out prediction ----------------------------------------------------------


def predict_decisions(
    model: BehaviorModel,
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    rng: np.random.Generator | None = None,
    imputation: ImputationMode = ImputationMode.BERNOULLI_HALF,
) -> pd.DataFrame:
    """Probability of cooperation for every decision, conditioned on the observed previous period."""
    frame = with_lags(decisions)
    if frame.empty:
        return frame.assign(prob=np.array([], dtype=float))
    pos = {s.id: i for i, s in enumerate(structures)}
    sidx = frame["structure_id"].map(pos).to_numpy(dtype=np.intp)
    first = frame["period"].to_numpy() == 1
    kind = model.kind
    prob = np.empty(len(frame))

    if kind is ModelKind.BASELINE:
        prob[:] = model.baseline_rate
    elif kind is ModelKind.FEWA:
        gaps = fewa_attraction_gaps(structures, decisions, model.fewa_params.initial_attraction_mode)
        # fewa_attraction_gaps sorts exactly like with_lags
        prob = expit(model.fewa_params.lam * gaps["gap"].to_numpy())
    else:
        if model.static_glm is not None:
            static_p = model.static_glm.predict(static_matrix(structures))
        if kind is ModelKind.STATIC_ONLY:
            prob = static_p[sidx]
        else:
            my_prev = frame["my_prev"].to_numpy().astype(float)
            other_prev = frame["other_prev"].to_numpy().astype(float)
            if kind is ModelKind.DYNAMIC_ONLY and first.any():
                m = int(first.sum())
                if ImputationMode(imputation) is ImputationMode.MUTUAL_COOPERATION:
                    my_prev[first], other_prev[first] = 1.0, 1.0
                else:
                    if rng is None:
                        raise MissingRng("an rng is required to impute period-zero outcomes")
                    draws = (rng.random((m, 2)) < 0.5).astype(float)
                    my_prev[first], other_prev[first] = draws[:, 0], draws[:, 1]
            later = ~first if kind is ModelKind.FULL else np.ones(len(frame), dtype=bool)
            X = dynamic_matrix(
                structures, sidx[later], my_prev[later], other_prev[later], frame["period"].to_numpy()[later]
            )
            prob[later] = model.dynamic_glm.predict(X)
            if kind is ModelKind.FULL:
                prob[first] = static_p[sidx[first]]
    return frame.assign(prob=prob)


# --- reports -------------------------------------------------------------------

REPORT_COLUMNS = [
    "model_kind",
    "fold",
    "n_structures",
    "n_t1",
    "n_tgt1",
    "accuracy_t1",
    "accuracy_tgt1",
    "loglik_t1",
    "loglik_tgt1",
    "n_time",
    "rmse_time",
    "cor_time",
    "n_avg",
    "rmse_avg",
    "cor_avg",
]


@dataclass
class MetricsReport:
    """Cross-validated scores of one model kind.

    Log-likelihoods are totals over the scored decisions; accuracies are the
    pooled fraction of correct calls. ``per_structure`` keeps the raw counts so
    structure-averaged figures and paired tests can be derived from it.
    """

    model_kind: str
    k: int
    accuracy_t1: float | None = None
    accuracy_tgt1: float | None = None
    loglik_t1: float | None = None
    loglik_tgt1: float | None = None
    n_t1: int = 0
    n_tgt1: int = 0
    rmse_time: float | None = None
    rmse_avg: float | None = None
    cor_time: float | None = None
    cor_avg: float | None = None
    n_time: int = 0
    n_avg: int = 0
    per_structure: pd.DataFrame = field(default_factory=pd.DataFrame)
    per_period: pd.DataFrame | None = None
    fold_rows: list[dict] = field(default_factory=list)
    failed_folds: list[tuple[int, str]] = field(default_factory=list)

    @property
    def error_rate_t1(self) -> float | None:
        return None if self.accuracy_t1 is None else 1.0 - self.accuracy_t1

    @property
    def error_rate_tgt1(self) -> float | None:
        return None if self.accuracy_tgt1 is None else 1.0 - self.accuracy_tgt1

    def summary_row(self) -> dict:
        row = {c: getattr(self, c, None) for c in REPORT_COLUMNS}
        row["fold"] = "all"
        row["n_structures"] = len(self.per_structure)
        return row

    def rows(self) -> list[dict]:
        return [dict(r, model_kind=self.model_kind) for r in self.fold_rows] + [self.summary_row()]

    def to_csv(self) -> str:
        return reports_to_csv([self])

    def to_json(self) -> str:
        doc = {k: v for k, v in self.summary_row().items()}
        doc["k"] = self.k
        doc["folds"] = self.fold_rows
        doc["failed_folds"] = [list(f) for f in self.failed_folds]
        doc["per_structure"] = json.loads(self.per_structure.to_json(orient="records"))
        return json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(type(x).__name__)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else format(float(v), ".17g")
    return str(v)


def reports_to_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    buf.write(",".join(REPORT_COLUMNS) + "\n")
    for rep in reports:
        for row in rep.rows():
            buf.write(",".join(_cell(row.get(c)) for c in REPORT_COLUMNS) + "\n")
    return buf.getvalue()


def read_report_csv(text: str) -> pd.DataFrame:
    df = pd.read_csv(io.StringIO(text), dtype={"fold": str, "model_kind": str}, float_precision="round_trip")
    if list(df.columns) != REPORT_COLUMNS:
        raise ValueError("not a cross-validation report")
    return df


# --- protocols -----------------------------------------------------------------

Fitter = Callable[[Sequence[GameStructure], pd.DataFrame], BehaviorModel]


def _fitter(model_kind: ModelKind | str | Fitter) -> tuple[str, Fitter]:
    if callable(model_kind) and not isinstance(model_kind, (str, ModelKind)):
        return getattr(model_kind, "__name__", "custom"), model_kind
    kind = ModelKind(model_kind)
    # held-out folds can take every structure with a rare indicator out of training
    return kind.value, lambda train, dec: fit_model(kind, train, dec, aliased="drop")


def _split(plan: FoldPlan, structures: Sequence[GameStructure], decisions: pd.DataFrame):
    missing = set(plan.assignments) ^ {s.id for s in structures}
    if missing:
        raise BadK(f"fold plan and structures disagree on ids {sorted(missing)[:5]}")
    for f, held in enumerate(plan.folds()):
        held_set = set(held)
        train = [s for s in structures if s.id not in held_set]
        test = [s for s in structures if s.id in held_set]
        train_dec = decisions[~decisions["structure_id"].isin(held_set)]
        test_dec = decisions[decisions["structure_id"].isin(held_set)]
        yield f, train, test, train_dec, test_dec


def _individual_totals(scored: pd.DataFrame) -> dict:
    n1, n2 = int(scored["n_t1"].sum()), int(scored["n_tgt1"].sum())
    return {
        "n_t1": n1,
        "n_tgt1": n2,
        "accuracy_t1": scored["hits_t1"].sum() / n1 if n1 else None,
        "accuracy_tgt1": scored["hits_tgt1"].sum() / n2 if n2 else None,
        "loglik_t1": float(scored["ll_t1"].sum()) if n1 else None,
        "loglik_tgt1": float(scored["ll_tgt1"].sum()) if n2 else None,
    }


def evaluate_individual(
    model_kind: ModelKind | str | Fitter,
    fold_plan: FoldPlan,
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    *,
    imputation: ImputationMode = ImputationMode.BERNOULLI_HALF,
    seed: int = 0,
    skip_failed_folds: bool = False,
) -> MetricsReport:
    """Fit on training structures, predict every held-out decision, score.

    Fold ``f`` draws any period-zero imputations from ``derive_seed(seed, f)``.
    """
    label, fit = _fitter(model_kind)
    structures = list(structures)
    per_structure, fold_rows, failed = [], [], []
    for f, train, test, train_dec, test_dec in _split(fold_plan, structures, decisions):
        try:
            model = fit(train, train_dec)
        except CoopredictError as exc:
            if not skip_failed_folds:
                raise
            failed.append((f, f"{type(exc).__name__}: {exc}"))
            continue
        rng = np.random.default_rng(derive_seed(seed, f))
        pred = predict_decisions(model, structures, test_dec, rng, imputation)
        scored = score_predictions(pred).assign(fold=f)
        per_structure.append(scored)
        fold_rows.append({"fold": f, "n_structures": len(test), **_individual_totals(scored)})
    table = pd.concat(per_structure, ignore_index=True) if per_structure else pd.DataFrame()
    totals = _individual_totals(table) if len(table) else {}
    return MetricsReport(
        model_kind=label, k=fold_plan.k, per_structure=table, fold_rows=fold_rows, failed_folds=failed, **totals
    )


def _aggregate_metrics(points: pd.DataFrame, means: pd.DataFrame) -> dict:
    out = {"n_time": len(points), "n_avg": len(means)}
    out["rmse_time"] = rmse(points["predicted"], points["observed"]) if len(points) else None
    out["rmse_avg"] = rmse(means["predicted"], means["observed"]) if len(means) else None
    for key, tbl in (("cor_time", points), ("cor_avg", means)):
        try:
            out[key] = correlation(tbl["predicted"], tbl["observed"])
        except UndefinedCorrelation:
            out[key] = None
    return out


def _structure_means(points: pd.DataFrame) -> pd.DataFrame:
    w = points["n_obs"]
    g = points.assign(wo=points["observed"] * w, wp=points["predicted"] * w).groupby("structure_id", sort=False)
    sums = g[["wo", "wp", "n_obs"]].sum()
    return pd.DataFrame(
        {
            "structure_id": sums.index,
            "observed": (sums["wo"] / sums["n_obs"]).to_numpy(),
            "predicted": (sums["wp"] / sums["n_obs"]).to_numpy(),
        }
    )


def evaluate_aggregate(
    model_kind: ModelKind | str | Fitter,
    fold_plan: FoldPlan,
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    sim_config: SimulationConfig,
    *,
    threads: int = 1,
    skip_failed_folds: bool = False,
) -> MetricsReport:
    """Fit on training structures, forecast held-out ones from their parameters only.

    The held-out structure at list position ``i`` is simulated with seed
    ``derive_seed(sim_config.seed, i)`` whatever fold it falls in. Per-structure
    averages weight each period by its observed decision count.
    """
    label, fit = _fitter(model_kind)
    structures = list(structures)
    position = {s.id: i for i, s in enumerate(structures)}
    all_points, fold_rows, failed = [], [], []
    for f, train, test, train_dec, test_dec in _split(fold_plan, structures, decisions):
        try:
            model = fit(train, train_dec)
        except CoopredictError as exc:
            if not skip_failed_folds:
                raise
            failed.append((f, f"{type(exc).__name__}: {exc}"))
            continue
        fold_points = []
        for game in test:
            cfg = replace(sim_config, seed=derive_seed(sim_config.seed, position[game.id]))
            result = simulate_structure(model, game, cfg, threads=threads)
            obs = test_dec[(test_dec["structure_id"] == game.id) & (test_dec["period"] <= result.horizon)]
            g = obs.groupby("period")["action"]
            observed, counts = g.mean(), g.size()
            periods = observed.index.to_numpy()
            fold_points.append(
                pd.DataFrame(
                    {
                        "structure_id": game.id,
                        "fold": f,
                        "period": periods,
                        "observed": observed.to_numpy(),
                        "predicted": result.per_period_cooperation[periods - 1],
                        "n_obs": counts.to_numpy(),
                    }
                )
            )
        points = pd.concat(fold_points, ignore_index=True)
        all_points.append(points)
        fold_rows.append({"fold": f, "n_structures": len(test), **_aggregate_metrics(points, _structure_means(points))})

    points = pd.concat(all_points, ignore_index=True) if all_points else pd.DataFrame(
        columns=["structure_id", "fold", "period", "observed", "predicted", "n_obs"]
    )
    means = _structure_means(points)
    metrics = _aggregate_metrics(points, means)
    if metrics["n_time"] and metrics["cor_time"] is None:
        raise UndefinedCorrelation("pooled per-period forecasts or observations are constant")
    return MetricsReport(
        model_kind=label,
        k=fold_plan.k,
        per_structure=means,
        per_period=points,
        fold_rows=fold_rows,
        failed_folds=failed,
        **metrics,
    )


def merge_reports(individual: MetricsReport, aggregate: MetricsReport) -> MetricsReport:
    """One report holding both protocols' scores for the same model kind and plan."""
    if individual.model_kind != aggregate.model_kind or individual.k != aggregate.k:
        raise ValueError("reports describe different model kinds or fold plans")
    per_fold = {r["fold"]: dict(r) for r in individual.fold_rows}
    for r in aggregate.fold_rows:
        per_fold.setdefault(r["fold"], {}).update(r)
    ind = individual.per_structure.drop(columns=["fold"], errors="ignore")
    agg = aggregate.per_structure.rename(columns={"observed": "observed_mean", "predicted": "predicted_mean"})
    per_structure = ind.merge(agg, on="structure_id", how="outer") if len(ind) and len(agg) else (ind if len(ind) else agg)
    return replace(
        individual,
        rmse_time=aggregate.rmse_time,
        rmse_avg=aggregate.rmse_avg,
        cor_time=aggregate.cor_time,
        cor_avg=aggregate.cor_avg,
        n_time=aggregate.n_time,
        n_avg=aggregate.n_avg,
        per_structure=per_structure,
        per_period=aggregate.per_period,
        fold_rows=[per_fold[k] for k in sorted(per_fold)],
        failed_folds=individual.failed_folds + aggregate.failed_folds,
    )


def fold_sweep(
    model_kinds: Sequence[ModelKind | str],
    ks: Sequence[int],
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    sim_config: SimulationConfig,
    seed: int = 0,
) -> pd.DataFrame:
    """Aggregate-level scores for each fold count; plan for ``k`` is seeded by ``derive_seed(seed, k)``."""
    ids = [s.id for s in structures]
    rows = []
    for k in ks:
        plan = loo_folds(ids) if k == len(ids) else make_folds(ids, k, derive_seed(seed, k))
        for kind in model_kinds:
            rep = evaluate_aggregate(kind, plan, structures, decisions, sim_config)
            rows.append(
                {
                    "k": k,
                    "model_kind": rep.model_kind,
                    "rmse_time": rep.rmse_time,
                    "cor_time": rep.cor_time,
                    "rmse_avg": rep.rmse_avg,
                    "cor_avg": rep.cor_avg,
                }
            )
    return pd.DataFrame(rows)


def paired_comparison(a: MetricsReport, b: MetricsReport, column: str) -> tuple[float, int, float]:
    """Paired t-test of a per-structure column (e.g. ``ll_tgt1``) between two reports."""
    left = a.per_structure.set_index("structure_id")[column]
    right = b.per_structure.set_index("structure_id")[column].reindex(left.index)
    return paired_t_test(left.to_numpy(), right.to_numpy())


# --- inertia -------------------------------------------------------------------


def inertia_actual(decisions: pd.DataFrame, structure_id: str) -> float:
    """Share of cooperations among decisions that follow the player's own cooperation."""
    sub = with_lags(decisions[decisions["structure_id"] == structure_id])
    after_c = sub[(sub["period"] > 1) & (sub["my_prev"] == 1)]
    if after_c.empty:
        raise NoPriorCooperation(f"structure {structure_id} has no decision following a cooperation")
    return float(after_c["action"].mean())


def inertia_predicted(model: BehaviorModel, game: GameStructure, horizon: int) -> float:
    """Predicted cooperation after own cooperation, averaged over t = 2..horizon and the partner's last move."""
    if getattr(model, "dynamic_glm", None) is None:
        raise ValueError("inertia prediction needs a model with a dynamic component")
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    probs = [
        predict_cooperation(model, game, InteractionHistory(Action.COOPERATE, other), t)
        for t in range(2, horizon + 1)
        for other in (Action.COOPERATE, Action.DEFECT)
    ]
    return float(np.mean(probs))


def inertia_table(
    model: BehaviorModel,
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    horizon: Callable[[GameStructure], int] | int | None = None,
) -> pd.DataFrame:
    """Predicted and actual inertia per structure.

    ``horizon`` defaults to the structure's simulation horizon.
    """
    from .simulator import horizon_for

    rows = []
    for game in structures:
        h = horizon(game) if callable(horizon) else (horizon or horizon_for(game))
        rows.append(
            {
                "structure_id": game.id,
                "actual": inertia_actual(decisions, game.id),
                "predicted": inertia_predicted(model, game, max(h, 2)),
            }
        )
    return pd.DataFrame(rows)
