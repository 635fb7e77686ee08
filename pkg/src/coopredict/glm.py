"""Binary logistic regression fitted by maximum likelihood (Newton / IRLS)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    NotConverged,
    RankDeficient,
    SchemaMismatch,
    Separation,
    SingularInformation,
)
from .features import FeatureSchema, FeatureVector

SEPARATION_BOUND = 30.0
EVAL_CLAMP = 1e-12


@dataclass(frozen=True)
class Dataset2D:
    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise SchemaMismatch(
                f"design has shape {X.shape}, schema {self.schema.kind.value} expects {len(self.schema)} columns"
            )
        if y.shape != (X.shape[0],):
            raise ValueError(f"outcome length {y.shape} does not match {X.shape[0]} rows")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("outcomes must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True, eq=False)
class FittedGlm:
    schema: FeatureSchema
    weights: np.ndarray
    standard_errors: np.ndarray
    log_likelihood: float = float("nan")
    converged: bool = False
    iterations: int = 0
    loglik_trace: tuple[float, ...] = field(default=(), repr=False, compare=False)
    aliased: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        se = np.array(self.standard_errors, dtype=float)
        if w.shape != (len(self.schema),) or se.shape != w.shape:
            raise SchemaMismatch("weights/standard errors do not match the schema length")
        w.setflags(write=False)
        se.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "standard_errors", se)

    @classmethod
    def from_weights(cls, schema: FeatureSchema, weights) -> "FittedGlm":
        """A hand-specified model (e.g. a simulation truth model) without fit diagnostics."""
        w = np.asarray(weights, dtype=float)
        return cls(schema, w, np.full(w.shape, np.nan))

    def coef(self, name: str) -> float:
        return float(self.weights[self.schema.index(name)])

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        # column-by-column accumulation keeps each row's result independent of batch size
        X = np.asarray(X, dtype=float)
        eta = np.zeros(X.shape[0])
        for j, w in enumerate(self.weights):
            eta += X[:, j] * w
        return eta

    def predict(self, X: np.ndarray) -> np.ndarray:
        return expit(self.linear_predictor(X))


def sigmoid(z):
    return expit(z)


def log_likelihood(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Sum of y*ln(p) + (1-y)*ln(1-p), computed without forming p."""
    eta = X @ weights
    # ln p = -log(1 + e^-eta), ln(1-p) = -log(1 + e^eta)
    return float(-np.sum(np.where(y == 1, np.logaddexp(0.0, -eta), np.logaddexp(0.0, eta))))


def score(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return X.T @ (y - expit(X @ weights))


def information(weights: np.ndarray, X: np.ndarray) -> np.ndarray:
    p = expit(X @ weights)
    v = p * (1.0 - p)
    return X.T @ (X * v[:, None])


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _independent_columns(X: np.ndarray) -> list[int]:
    """Greedy left-to-right choice of linearly independent columns."""
    keep: list[int] = []
    for j in range(X.shape[1]):
        if np.linalg.matrix_rank(X[:, keep + [j]]) > len(keep):
            keep.append(j)
    return keep


def _polish(w, ll, X, y, trace):
    """One last Newton step, kept if it shrinks the score.

    The deviance test stops a step early, and near the optimum the likelihood is
    too flat to compare in floating point, so the score decides.
    """
    g = score(w, X, y)
    try:
        nxt = w + np.linalg.solve(information(w, X), g)
    except np.linalg.LinAlgError:
        return w, ll
    if np.max(np.abs(nxt)) > SEPARATION_BOUND or np.max(np.abs(score(nxt, X, y))) >= np.max(np.abs(g)):
        return w, ll
    ll = log_likelihood(nxt, X, y)
    trace.append(ll)
    return nxt, ll


def fit_logistic(
    data: Dataset2D, tolerance: float = 1e-8, max_iterations: int = 100, aliased: str = "raise"
) -> FittedGlm:
    """Maximum-likelihood logistic fit by Newton-Raphson with step halving.

    Converges when ``|dev - dev_prev| / (|dev| + 0.1) < tolerance``. Rows are put
    in a canonical order first, so the result does not depend on input order.

    A rank-deficient design raises unless ``aliased="drop"``: then columns that
    are linear combinations of earlier ones get weight 0 and a NaN standard
    error, and are listed in ``FittedGlm.aliased``.
    """
    if aliased not in ("raise", "drop"):
        raise ValueError("aliased must be 'raise' or 'drop'")
    X, y = data.X, data.y
    n, p = X.shape
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        raise Separation("both outcome classes must be present to fit a logistic model")
    if np.linalg.matrix_rank(X) < p:
        if aliased == "raise":
            raise RankDeficient(f"design matrix of {n}x{p} is not of full column rank")
        keep = _independent_columns(X)
        names = data.schema.names
        sub = FeatureSchema(data.schema.kind, tuple(names[j] for j in keep))
        inner = fit_logistic(Dataset2D(X[:, keep], y, sub), tolerance, max_iterations)
        w = np.zeros(p)
        se = np.full(p, np.nan)
        w[keep], se[keep] = inner.weights, inner.standard_errors
        return FittedGlm(
            schema=data.schema,
            weights=w,
            standard_errors=se,
            log_likelihood=inner.log_likelihood,
            converged=True,
            iterations=inner.iterations,
            loglik_trace=inner.loglik_trace,
            aliased=tuple(names[j] for j in range(p) if j not in keep),
        )

    order = _canonical_order(X, y)
    X, y = X[order], y[order]

    w = np.zeros(p)
    ll = log_likelihood(w, X, y)
    trace = [ll]
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        H = information(w, X)
        g = score(w, X, y)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise SingularInformation("information matrix became singular during fitting") from exc

        w_new, ll_new = w + step, log_likelihood(w + step, X, y)
        for _ in range(40):
            if ll_new >= ll:
                break
            step = step / 2.0
            w_new, ll_new = w + step, log_likelihood(w + step, X, y)
        else:
            # no ascent direction left at working precision
            converged = True
            w, ll = _polish(w, ll, X, y, trace)
            break

        if np.max(np.abs(w_new)) > SEPARATION_BOUND:
            raise Separation(
                f"coefficient magnitude exceeded {SEPARATION_BOUND} at iteration {iteration}; "
                "the data are (quasi-)separated"
            )
        dev, dev_new = -2.0 * ll, -2.0 * ll_new
        w, ll = w_new, ll_new
        trace.append(ll)
        if abs(dev - dev_new) / (abs(dev_new) + 0.1) < tolerance:
            converged = True
            w, ll = _polish(w, ll, X, y, trace)
            break

    if not converged:
        raise NotConverged(f"no convergence after {max_iterations} iterations")

    se = _standard_errors_at(w, X)
    return FittedGlm(
        schema=data.schema,
        weights=w,
        standard_errors=se,
        log_likelihood=ll,
        converged=True,
        iterations=iteration,
        loglik_trace=tuple(trace),
    )


def _standard_errors_at(weights: np.ndarray, X: np.ndarray) -> np.ndarray:
    H = information(weights, X)
    if np.linalg.matrix_rank(H) < H.shape[0]:
        raise SingularInformation("observed information matrix is singular")
    cov = np.linalg.inv(H)
    diag = np.diag(cov)
    if np.any(diag <= 0):
        raise SingularInformation("non-positive variance estimate")
    return np.sqrt(diag)


def standard_errors(model: FittedGlm, data: Dataset2D) -> np.ndarray:
    """Square roots of the diagonal of the inverse observed information."""
    if data.schema.names != model.schema.names:
        raise SchemaMismatch("data schema does not match the model")
    return _standard_errors_at(model.weights, data.X)


def predict_prob(model: FittedGlm, x: FeatureVector) -> float:
    if tuple(x.names) != model.schema.names:
        raise SchemaMismatch(
            f"feature vector ({len(x.names)} names) does not match the {model.schema.kind.value} schema"
        )
    return float(expit(float(x.values @ model.weights)))


def variable_importance(model: FittedGlm) -> list[tuple[str, float]]:
    """Predictors ranked by |coefficient / standard error|, intercept excluded."""
    pairs = []
    for name, w, se in zip(model.schema.names, model.weights, model.standard_errors):
        if name == "intercept" or name in model.aliased:
            continue
        pairs.append((name, 0.0 if w == 0 else float(abs(w) / se)))
    return sorted(pairs, key=lambda kv: -kv[1])
