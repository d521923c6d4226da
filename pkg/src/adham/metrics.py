"""Survival prediction and evaluation.

Survival curves come from the same Monte Carlo cumulative-hazard estimate
used in training: ``S(t|x) = exp(-(t/M) * sum_j lambda(u_j * t | x))`` with
``u_j ~ U(0,1)``. Each patient draws one uniform sample set that is rescaled
to every requested grid time, which keeps curves monotone and makes the
per-covariate decomposition multiply back to the marginal curve exactly.

Evaluation follows the usual right-censored protocol: a Kaplan-Meier
estimate of the censoring distribution supplies inverse-probability
weights for the concordance index (Uno) and the Brier score; the
time-dependent AUROC compares known events against known survivors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, FoldSplit, quantile_horizons
from .model import AdhamModel, HazardNet, NumericalError
from .serialize import model_hash

__all__ = [
    "SurvivalCurve",
    "CensoringEstimate",
    "EvaluationReport",
    "individual_survival",
    "population_survival",
    "individual_survival_decomposition",
    "km_censoring",
    "c_index",
    "brier",
    "auroc",
    "evaluate",
]


@dataclass
class SurvivalCurve:
    """A survival function sampled on a time grid.

    ``values[k]`` estimates the probability of surviving past ``times[k]``;
    values lie in (0, 1], start at 1 for t = 0, and are nonincreasing when
    the curve was computed with one shared Monte Carlo sample set.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be matching 1-D arrays")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("survival values must lie in [0, 1]")


def _check_grid(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise ValueError("time grid must be sorted and nonnegative")
    return times


def _check_finite(h: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite hazard in survival computation")
    return h


def _uniforms(n: int, n_samples: int, rng) -> np.ndarray:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    return rng.random((n, n_samples))


def _cum_hazard(model: AdhamModel, x: np.ndarray, times: np.ndarray,
                u: np.ndarray) -> np.ndarray:
    """MC cumulative hazard (n, T) with one shared sample row per patient."""
    out = np.empty((x.shape[0], times.size))
    for k, t in enumerate(times):
        lam = _check_finite(model.marginal_hazard_times(x, u * t))
        out[:, k] = t * lam.mean(axis=1)
    return out


def individual_survival(model: AdhamModel, x, times, n_samples: int = 64,
                        rng=None) -> SurvivalCurve:
    """Monte Carlo survival curve for one patient.

    A constant marginal hazard gives the exact exponential curve for any
    ``n_samples``, because the integrand has zero variance.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("individual_survival takes a single covariate vector")
    times = _check_grid(times)
    u = _uniforms(1, n_samples, rng)
    return SurvivalCurve(times, np.exp(-_cum_hazard(model, x[None], times, u)[0]))


def population_survival(hazard: HazardNet, x_d: float, times,
                        n_samples: int = 64, rng=None) -> SurvivalCurve:
    """Survival curve implied by one covariate's population hazard alone."""
    times = _check_grid(times)
    u = _uniforms(1, n_samples, rng)[0]
    values = np.empty(times.size)
    for k, t in enumerate(times):
        lam = _check_finite(hazard.rate(u * t, float(x_d)))
        values[k] = np.exp(-t * lam.mean())
    return SurvivalCurve(times, values)


def individual_survival_decomposition(model: AdhamModel, x, times,
                                      n_samples: int = 64,
                                      rng=None) -> list[SurvivalCurve]:
    """Per-covariate survival factors for one patient.

    Curve ``d`` is ``exp(-p(d|x) * H_d(t))`` with ``H_d`` the Monte Carlo
    cumulative hazard of covariate ``d``'s population network. Because all
    curves share one sample set, their pointwise product equals
    :func:`individual_survival` computed with the same samples.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("decomposition takes a single covariate vector")
    times = _check_grid(times)
    u = _uniforms(1, n_samples, rng)
    w = model.covariate_weight(x)
    cum = np.empty((times.size, model.n_features))
    for k, t in enumerate(times):
        rates = _check_finite(model._component_rates(x[None], u * t)[0])
        cum[k] = t * rates.mean(axis=0)
    return [SurvivalCurve(times, np.exp(-w[d] * cum[:, d]))
            for d in range(model.n_features)]


# ---- censoring distribution ----


@dataclass
class CensoringEstimate:
    """Kaplan-Meier estimate G of the censoring survival function.

    Right-continuous step function with G(0) = 1 (before the first jump);
    ``left`` gives the left limit G(t-) used for weights at event times.
    """

    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.jump_times = np.asarray(self.jump_times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)

    def _eval(self, t, side: str) -> np.ndarray:
        if self.jump_times.size == 0:
            return np.ones_like(np.asarray(t, dtype=np.float64))
        idx = np.searchsorted(self.jump_times, t, side=side) - 1
        return np.where(idx < 0, 1.0, self.values[np.maximum(idx, 0)])

    def __call__(self, t) -> np.ndarray:
        return self._eval(t, "right")

    def left(self, t) -> np.ndarray:
        """G(t-): the value just before ``t``."""
        return self._eval(t, "left")


def km_censoring(data: Dataset) -> CensoringEstimate:
    """Product-limit estimator of censoring survival (censorings as events).

    At each distinct censoring time the survival drops by the fraction of
    the at-risk set censored there; event records only shrink the risk set.
    """
    if len(data) < 1:
        raise ValueError("km_censoring needs at least one record")
    uniq, inverse = np.unique(data.time, return_inverse=True)
    n_cens = np.bincount(inverse, weights=(data.event == 0).astype(float))
    sorted_t = np.sort(data.time)
    at_risk = len(data) - np.searchsorted(sorted_t, uniq, side="left")
    factors = 1.0 - n_cens / at_risk
    survival = np.cumprod(factors)
    jumps = n_cens > 0
    return CensoringEstimate(uniq[jumps], survival[jumps])


# ---- horizon metrics ----


def _scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise concordance scores: 1 if a > b, 0.5 on ties, else 0."""
    return np.where(a[:, None] > b[None, :], 1.0,
                    np.where(a[:, None] == b[None, :], 0.5, 0.0))


def c_index(preds, data: Dataset, horizon: float,
            censoring: CensoringEstimate):
    """Uno's IPCW concordance index at a horizon.

    ``preds`` are risk scores (higher means expected to fail sooner). A pair
    (i, j) is comparable when i has an observed event strictly before both
    ``horizon`` and j's time; each pair is weighted ``1 / G(t_i-)^2``.
    Returns None when no pair is comparable.
    """
    risk = np.asarray(preds, dtype=np.float64)
    anchors = np.flatnonzero((data.event == 1) & (data.time < horizon))
    if anchors.size == 0:
        return None
    g = censoring.left(data.time[anchors])
    if np.any(g == 0):
        raise ValueError("censoring survival vanished at an event time")
    later = data.time[None, :] > data.time[anchors, None]
    weights = later / (g * g)[:, None]
    total = weights.sum()
    if total == 0:
        return None
    return float((weights * _scores(risk[anchors], risk)).sum() / total)


def brier(preds, data: Dataset, horizon: float,
          censoring: CensoringEstimate) -> float:
    """IPCW Brier score of survival predictions at a horizon.

    Events by the horizon contribute their squared survival prediction with
    weight ``1/G(t_i-)``; known survivors contribute the squared shortfall
    from 1 with weight ``1/G(horizon-)``; records censored by the horizon
    get weight 0. The mean is over all records.
    """
    surv = np.asarray(preds, dtype=np.float64)
    events = (data.event == 1) & (data.time <= horizon)
    alive = data.time > horizon
    g_event = censoring.left(data.time[events])
    g_hor = censoring.left(horizon)
    if np.any(g_event == 0) or (np.any(alive) and g_hor == 0):
        raise ValueError("censoring survival vanished inside the horizon")
    total = (surv[events] ** 2 / g_event).sum()
    if np.any(alive):
        total += ((1.0 - surv[alive]) ** 2).sum() / g_hor
    return float(total / len(data))


def auroc(preds, data: Dataset, horizon: float):
    """Time-dependent AUROC: cases are events by the horizon, controls are
    records still at risk past it; censored-by-horizon records are excluded.
    Returns None when either side is empty.
    """
    risk = np.asarray(preds, dtype=np.float64)
    cases = (data.event == 1) & (data.time <= horizon)
    controls = data.time > horizon
    if not np.any(cases) or not np.any(controls):
        return None
    return float(_scores(risk[cases], risk[controls]).mean())


# ---- fold evaluation ----


@dataclass
class EvaluationReport:
    """Per-horizon metric rows for one fold, plus reproducibility metadata.

    Rows carry keys fold, quantile, horizon_time, c_index, brier, auroc;
    undefined metrics are stored as None and serialized as "NA" (CSV) or
    null (JSON).
    """

    rows: list
    seed: int
    model_hash: str | None = None

    COLUMNS = ("fold", "quantile", "horizon_time", "c_index", "brier", "auroc")

    @staticmethod
    def _cell(v) -> str:
        if v is None:
            return "NA"
        return repr(float(v)) if isinstance(v, float) else str(v)

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for row in self.rows:
            lines.append(",".join(self._cell(row[c]) for c in self.COLUMNS))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        import json

        payload = {
            "seed": self.seed,
            "model_hash": self.model_hash,
            "rows": [{c: row[c] for c in self.COLUMNS} for row in self.rows],
        }
        return json.dumps(payload, indent=1, sort_keys=True)


def evaluate(model: AdhamModel, data: Dataset, fold: FoldSplit,
             quantiles=(0.25, 0.5, 0.75), n_samples: int = 64, seed: int = 0,
             fold_id: int = 0) -> EvaluationReport:
    """Score a fitted model on one fold's test set.

    Horizons are quantiles of the observed event times over the whole
    dataset; the censoring distribution is estimated on the fold's training
    and validation records and applied to the test set. Each test patient
    draws one uniform sample set from ``seed``, reused across horizons, so
    repeated calls are identical.
    """
    test = data.subset(fold.test_idx)
    if len(test) == 0:
        raise ValueError("fold has an empty test set")
    horizons = quantile_horizons(data, quantiles)
    fit_part = data.subset(np.concatenate([fold.train_idx, fold.val_idx]))
    censoring = km_censoring(fit_part)
    u = _uniforms(len(test), n_samples, np.random.default_rng(seed))
    survival = np.exp(-_cum_hazard(model, test.x, horizons, u))

    rows = []
    for qi, (q, horizon) in enumerate(zip(quantiles, horizons)):
        surv_q = survival[:, qi]
        risk = 1.0 - surv_q
        rows.append({
            "fold": fold_id,
            "quantile": float(q),
            "horizon_time": float(horizon),
            "c_index": c_index(risk, test, horizon, censoring),
            "brier": brier(surv_q, test, horizon, censoring),
            "auroc": auroc(risk, test, horizon),
        })
    return EvaluationReport(rows=rows, seed=seed, model_hash=model_hash(model))
