"""Additive-hazards mixture model over latent subgroups.

A fitted model has three parts:

* an assignment network mapping covariates to a distribution over latent
  subgroups,
* a row-stochastic importance matrix giving each subgroup's weights over
  individual covariates, and
* one small positive-output network per covariate describing the
  population-level hazard driven by that covariate alone.

The marginal hazard of a patient is the importance-weighted sum of the
per-covariate hazards, with weights ``p(d|x) = assignment_probs(x) @
importance_matrix()``. Likelihoods use an unbiased Monte Carlo estimate of
the cumulative-hazard integral with uniform time samples.

Training is decoupled: each mini-batch first takes one Adam step on every
per-covariate hazard network against its own likelihood (all gradients
computed before any parameter moves), then one Adam step on the assignment
network and importance logits against the mixture likelihood minus a
diversity/entropy regularizer, with the hazard networks frozen. Early
stopping watches a fixed-sample validation log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, FoldSplit, StandardizationStats
from .network import Adam, Mlp

__all__ = [
    "NumericalError",
    "TrainConfig",
    "HazardNet",
    "AdhamModel",
    "FitResult",
    "fit",
    "mc_loglik",
    "mc_loglik_d",
    "regularizer",
    "sample_dataset",
]

# point budgets keeping peak memory modest on small machines
TAPE_CHUNK = 16384   # traced forward retains ~16 intermediates per point
EVAL_CHUNK = 131072  # plain forward, temporaries freed as evaluation proceeds


class NumericalError(RuntimeError):
    """Raised when training or evaluation produces non-finite numbers."""


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`fit`. Every field has a working default.

    Attributes
    ----------
    subgroups : int
        Number of latent subgroups the assignment network can use.
    hidden, depth : int
        Width and number of hidden blocks of both network kinds.
    batch_size : int
        Mini-batch size (at least 2; the diversity regularizer needs pairs).
    integral_samples : int
        Uniform time samples per record for the cumulative-hazard estimate.
    lr : float
        Adam learning rate for both phases.
    epochs, patience : int
        Epoch cap and early-stopping patience on validation log-likelihood.
        Long-protocol runs raise ``epochs`` (e.g. to 4000) via config.
    dropout : float
        Dropout probability inside hidden blocks of the network being
        optimized in the active phase; frozen networks run in eval mode.
    w_orth, w_ent : float
        Weights of the assignment-diversity and importance-entropy
        regularizer terms.
    weight_decay : float
        L2 coefficient added to gradients (0 disables).
    layer_norm, add_const : bool
        Architecture switches: hidden-block normalization, and a learnable
        constant on the hazard-head pre-activation.
    joint : bool
        Debug mode: one Adam step per batch over all parameters at once
        instead of the two decoupled phases.
    seed : int
        Master seed; all randomness in :func:`fit` derives from it.
    """

    subgroups: int = 100
    hidden: int = 100
    depth: int = 3
    batch_size: int = 512
    integral_samples: int = 64
    lr: float = 1e-3
    epochs: int = 100
    patience: int = 10
    dropout: float = 0.0
    w_orth: float = 1.0
    w_ent: float = 1.0
    weight_decay: float = 0.0
    layer_norm: bool = True
    add_const: bool = False
    joint: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.subgroups < 1:
            raise ValueError("subgroups must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.integral_samples < 1:
            raise ValueError("integral_samples must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.w_orth < 0 or self.w_ent < 0 or self.weight_decay < 0:
            raise ValueError("regularizer weights must be non-negative")


def _as2d(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


class HazardNet:
    """Population-level hazard curve driven by a single covariate.

    A thin view over one slice of the model's stacked hazard bank; parameter
    updates to the bank are visible here immediately.
    """

    def __init__(self, bank: Mlp, index: int, time_scale: float):
        self.index = index
        self.time_scale = time_scale
        net = Mlp(2, 1, hidden=bank.hidden, depth=bank.depth, head=bank.head,
                  layer_norm=bank.layer_norm, add_const=bank.add_const,
                  rng=np.random.default_rng(0))
        # rebind the parameters to views of the bank slice
        net.weights = [w[index] for w in bank.weights]
        net.biases = [b[index, 0] for b in bank.biases]
        net.ln_scales = [s[index, 0] for s in bank.ln_scales]
        net.ln_shifts = [s[index, 0] for s in bank.ln_shifts]
        if bank.const is not None:
            net.const = bank.const[index, 0]
        self.net = net

    def rate(self, t, x_d) -> np.ndarray:
        """Hazard at time ``t`` for covariate value ``x_d`` (broadcast together)."""
        t, x_d = np.broadcast_arrays(
            np.asarray(t, dtype=np.float64), np.asarray(x_d, dtype=np.float64)
        )
        pts = np.stack([t.ravel() / self.time_scale, x_d.ravel()], axis=1)
        out = np.empty(pts.shape[0])
        for s in range(0, pts.shape[0], EVAL_CHUNK):
            out[s:s + EVAL_CHUNK] = self.net.apply(pts[s:s + EVAL_CHUNK])[:, 0]
        return (out / self.time_scale).reshape(t.shape)


class AdhamModel:
    """A (possibly merged) additive-hazards mixture model.

    Parameters
    ----------
    assignment : Mlp
        Softmax-head network over the base subgroups.
    importance_logits : ndarray of shape (C, D)
        Row-wise softmax gives each subgroup's covariate importance.
    hazard_bank : Mlp
        Stacked softplus-head networks, one slice per covariate; inputs are
        (scaled time, covariate value).
    time_scale : float
        Times are divided by this before entering the hazard networks and
        rates divided by it on the way out, so reported hazards stay in the
        data's original time unit.
    stats : StandardizationStats or None
        The covariate transform the model was trained under.
    feature_names : list of str
    groups : list of list of int, optional
        Partition of the base subgroups; set on models produced by merging.
        Assignment probabilities are summed within each group (the
        assignment network itself is never retrained).
    lineage : dict, optional
        Provenance of a merged model (source hash, threshold, plan).
    """

    def __init__(self, assignment, importance_logits, hazard_bank, time_scale,
                 stats=None, feature_names=None, groups=None, lineage=None):
        self.assignment = assignment
        self.importance_logits = np.asarray(importance_logits, dtype=np.float64)
        self.hazard_bank = hazard_bank
        self.time_scale = float(time_scale)
        self.stats = stats
        self.feature_names = list(feature_names) if feature_names else [
            f"x{j}" for j in range(hazard_bank.stack)
        ]
        self.groups = groups
        self.lineage = lineage
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")
        if groups is not None:
            members = sorted(c for g in groups for c in g)
            if members != list(range(assignment.out_dim)):
                raise ValueError("groups must partition the base subgroups")
            gmat = np.zeros((assignment.out_dim, len(groups)))
            for gi, g in enumerate(groups):
                gmat[list(g), gi] = 1.0
            self._group_matrix = gmat
        else:
            self._group_matrix = None
        if self.importance_logits.shape != (self.n_subgroups, self.n_features):
            raise ValueError(
                f"importance logits shape {self.importance_logits.shape} does not "
                f"match {self.n_subgroups} subgroups x {self.n_features} covariates"
            )

    # ---- sizes ----

    @property
    def n_features(self) -> int:
        return self.hazard_bank.stack

    @property
    def n_subgroups(self) -> int:
        return len(self.groups) if self.groups is not None else self.assignment.out_dim

    @property
    def hazards(self) -> list[HazardNet]:
        return [HazardNet(self.hazard_bank, d, self.time_scale)
                for d in range(self.n_features)]

    # ---- mixture structure ----

    def assignment_probs(self, x) -> np.ndarray:
        """p(subgroup | x); rows on the simplex. Shape (n, C), or (C,) for 1-D x."""
        z, was1d = _as2d(x)
        probs = _chunked_apply(self.assignment, z)
        if self._group_matrix is not None:
            probs = probs @ self._group_matrix
        return probs[0] if was1d else probs

    def importance_matrix(self) -> np.ndarray:
        """Row-stochastic (C, D) matrix of per-subgroup covariate importance."""
        return ad.softmax(self.importance_logits, axis=-1)

    def covariate_weight(self, x) -> np.ndarray:
        """p(covariate | x) = assignment_probs @ importance_matrix; shape (n, D)."""
        z, was1d = _as2d(x)
        w = self.assignment_probs(z) @ self.importance_matrix()
        return w[0] if was1d else w

    # ---- hazards ----

    def population_hazard(self, d: int, t, x_d) -> np.ndarray:
        """Hazard of covariate ``d``'s population network at time t, value x_d."""
        return HazardNet(self.hazard_bank, d, self.time_scale).rate(t, x_d)

    def _component_rates(self, x, times) -> np.ndarray:
        """Per-covariate hazards. x (n, D), times (n, m) -> (n, m, D)."""
        x = np.asarray(x, dtype=np.float64)
        times = np.asarray(times, dtype=np.float64)
        n, m = times.shape
        D = self.n_features
        out = np.empty((n, m, D))
        rows = max(1, EVAL_CHUNK // max(1, D * m))
        for s in range(0, n, rows):
            xb, tb = x[s:s + rows], times[s:s + rows]
            rates = self.hazard_bank.apply(_bank_inputs(xb, tb, self.time_scale))
            rates = rates[:, :, 0] / self.time_scale  # (D, nb*m)
            out[s:s + rows] = rates.reshape(D, xb.shape[0], m).transpose(1, 2, 0)
        return out

    def hazard_components(self, x, t) -> np.ndarray:
        """lambda_d(t_i | x_id) for per-record times; shape (n, D)."""
        z, was1d = _as2d(x)
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        rates = self._component_rates(z, t[:, None])[:, 0, :]
        return rates[0] if was1d else rates

    def marginal_hazard(self, x, t):
        """Mixture hazard at per-record times; shape (n,), scalar for 1-D x."""
        z, was1d = _as2d(x)
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        lam = (self.covariate_weight(z) * self.hazard_components(z, t)).sum(axis=1)
        return float(lam[0]) if was1d else lam

    def marginal_hazard_times(self, x, times) -> np.ndarray:
        """Mixture hazard at a matrix of times. x (n, D), times (n, m) -> (n, m)."""
        w = self.covariate_weight(x)
        rates = self._component_rates(x, times)
        return np.einsum("nmd,nd->nm", rates, w)

    def hazard_decomposition(self, x, times) -> np.ndarray:
        """Per-covariate contributions w_d(x) * lambda_d(t | x_d) for one record.

        Returns shape (D, T); summing over the first axis gives the marginal
        hazard on the time grid.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("hazard_decomposition takes a single covariate vector")
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        w = self.covariate_weight(x)
        rates = self._component_rates(x[None, :], times[None, :])[0]  # (T, D)
        return (rates * w).T

    # ---- bookkeeping ----

    def copy(self) -> "AdhamModel":
        assign = Mlp(**self.assignment.spec(), rng=np.random.default_rng(0))
        assign.set_params(self.assignment.param_list())
        bank = Mlp(**self.hazard_bank.spec(), rng=np.random.default_rng(0))
        bank.set_params(self.hazard_bank.param_list())
        return AdhamModel(
            assign, self.importance_logits.copy(), bank, self.time_scale,
            stats=self.stats, feature_names=self.feature_names,
            groups=[list(g) for g in self.groups] if self.groups else None,
            lineage=dict(self.lineage) if self.lineage else None,
        )


def _chunked_apply(net: Mlp, x: np.ndarray) -> np.ndarray:
    out = [net.apply(x[s:s + EVAL_CHUNK]) for s in range(0, len(x), EVAL_CHUNK)]
    return out[0] if len(out) == 1 else np.concatenate(out)


def _bank_inputs(x, times, time_scale):
    """Stack per-covariate net inputs. x (L, D), times (L, m) -> (D, L*m, 2)."""
    L, m = times.shape
    D = x.shape[1]
    inp = np.empty((D, L * m, 2))
    inp[:, :, 0] = (times / time_scale).reshape(1, L * m)
    inp[:, :, 1] = np.repeat(x.T, m, axis=1)
    return inp


# ---- likelihoods ----


def _event_mask(t, delta):
    # events at time 0 carry no hazard history; they contribute nothing
    return ((delta == 1) & (t > 0)).astype(np.float64)


def _prep_u(data, n_samples, rng, t_samples):
    if t_samples is not None:
        u = np.asarray(t_samples, dtype=np.float64)
        if u.shape[0] != len(data):
            raise ValueError("t_samples first dimension must match the record count")
        return u
    if rng is None:
        rng = np.random.default_rng()
    return rng.random((len(data), n_samples))


def mc_loglik(model, data: Dataset, n_total=None, n_samples=64, rng=None,
              t_samples=None) -> float:
    """Unbiased Monte Carlo estimate of the mixture log-likelihood.

    For L records out of a population of ``n_total`` (defaults to L), with M
    uniform time samples per record::

        (N/L) * sum_i [ delta_i * log lam(t_i|x_i)
                        - (t_i/M) * sum_j lam(u_ij * t_i | x_i) ]

    Pass ``t_samples`` (an (L, M) array of uniforms in [0, 1)) to pin the
    integration points, e.g. for common-random-number comparisons across
    training epochs; otherwise they are drawn from ``rng``.
    """
    u = _prep_u(data, n_samples, rng, t_samples)
    x, t, delta = data.x, data.time, data.event
    n_total = len(data) if n_total is None else n_total
    lam_evt = np.atleast_1d(model.marginal_hazard(x, t))
    mask = _event_mask(t, delta)
    logs = np.log(np.where(mask > 0, lam_evt, 1.0))
    integral = (t / u.shape[1]) * model.marginal_hazard_times(x, t[:, None] * u).sum(axis=1)
    return float((n_total / len(data)) * (mask * logs - integral).sum())


def mc_loglik_d(model, d: int, data: Dataset, n_total=None, n_samples=64,
                rng=None, t_samples=None) -> float:
    """Monte Carlo log-likelihood of covariate ``d``'s hazard network alone."""
    u = _prep_u(data, n_samples, rng, t_samples)
    x_d, t, delta = data.x[:, d], data.time, data.event
    n_total = len(data) if n_total is None else n_total
    h = HazardNet(model.hazard_bank, d, model.time_scale)
    lam_evt = h.rate(t, x_d)
    mask = _event_mask(t, delta)
    logs = np.log(np.where(mask > 0, lam_evt, 1.0))
    integral = (t / u.shape[1]) * h.rate(t[:, None] * u, x_d[:, None]).sum(axis=1)
    return float((n_total / len(data)) * (mask * logs - integral).sum())


def regularizer(model, x, w_orth=1.0, w_ent=1.0) -> float:
    """Assignment-diversity plus importance-entropy penalty on a batch.

    The first term averages inner products of assignment probabilities over
    distinct record pairs (identical one-hot assignments give 1, orthogonal
    ones 0); the second averages ``sum_d p(d|x) log p(d|x)`` over records
    (its minimum ``-log D`` is reached at uniform covariate weights).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("regularizer needs a 2-D batch with at least 2 records")
    L = x.shape[0]
    f = model.assignment_probs(x)
    s = f.sum(axis=0)
    orth = (s @ s - (f * f).sum()) / (L * (L - 1))
    w = f @ model.importance_matrix()
    ent = (w * np.log(w)).sum() / L
    return float(w_orth * orth + w_ent * ent)


# ---- traced objectives ----


def hazard_loglik_chunks(model, data: Dataset, u, n_total=None, wraps=None,
                         training=False, dropout=0.0, dropout_rng=None):
    """Yield (D,)-shaped pieces of the per-covariate log-likelihood vector.

    The pieces sum to the vector of per-covariate Monte Carlo
    log-likelihoods for the batch (same estimator as :func:`mc_loglik_d`,
    all covariates at once). With ``wraps`` (tensors from
    ``model.hazard_bank.wrap()``) each piece is traced; calling
    ``backward()`` chunk by chunk accumulates the full gradient in the wraps
    while keeping peak memory bounded. Without wraps the pieces are plain
    arrays.
    """
    bank = model.hazard_bank
    x, t, delta = data.x, data.time, data.event
    L = len(data)
    D, M = x.shape[1], u.shape[1]
    scale = (len(data) if n_total is None else n_total) / L
    ts = model.time_scale
    mask = _event_mask(t, delta)

    # event term: sum_i mask_i * log lam_d(t_i, x_id)
    lam = bank.forward(_bank_inputs(x, t[:, None], ts), params=wraps,
                       training=training, dropout=dropout, dropout_rng=dropout_rng)
    lam = lam * (1.0 / ts)
    # +1 at masked-out entries keeps the log finite there; the mask zeroes them
    safe = lam + (1.0 - mask).reshape(1, L, 1)
    yield (ad.log(safe) * mask.reshape(1, L, 1)).sum(axis=(1, 2)) * scale

    # integral term: sum_i (t_i/M) sum_j lam_d(u_ij t_i, x_id), chunked over j
    budget = TAPE_CHUNK if wraps is not None else EVAL_CHUNK
    cols = max(1, budget // max(1, D * L))
    for j0 in range(0, M, cols):
        uj = u[:, j0:j0 + cols]
        w_pts = np.repeat(t / M, uj.shape[1])
        lam = bank.forward(_bank_inputs(x, t[:, None] * uj, ts), params=wraps,
                           training=training, dropout=dropout, dropout_rng=dropout_rng)
        lam = lam * (1.0 / ts)
        yield (lam * w_pts.reshape(1, -1, 1)).sum(axis=(1, 2)) * (-scale)


def loglik_d_values(model, data: Dataset, u, n_total=None) -> np.ndarray:
    """Per-covariate log-likelihood vector, evaluation mode, no tape."""
    total = np.zeros(model.n_features)
    for piece in hazard_loglik_chunks(model, data, u, n_total):
        total += piece
    return total


def mixture_objective(model, data: Dataset, u, n_total=None, w_orth=1.0,
                      w_ent=1.0, assign_params=None, logits=None,
                      hazard_values=None, training=False, dropout=0.0,
                      dropout_rng=None):
    """Traced mixture objective (log-likelihood minus regularizer).

    Hazard values are treated as constants: ``hazard_values`` is a pair of
    event rates (L, D) and per-record integral sums (L, D) matching ``u``;
    when omitted they are computed from the current bank in evaluation mode.
    Gradients flow into ``assign_params``/``logits`` when given as tensors.

    Returns
    -------
    (Tensor, float)
        The traced objective and the plain log-likelihood part of its value.
    """
    x, t, delta = data.x, data.time, data.event
    L = len(data)
    if L < 2:
        raise ValueError("mixture objective needs at least 2 records")
    M = u.shape[1]
    scale = (len(data) if n_total is None else n_total) / L
    if hazard_values is None:
        lam_evt = model.hazard_components(x, t)
        s_int = model._component_rates(x, t[:, None] * u).sum(axis=1)
    else:
        lam_evt, s_int = hazard_values
    mask = _event_mask(t, delta)

    if assign_params is None:
        assign_params = model.assignment.wrap()
    f = model.assignment.forward(x, params=assign_params, training=training,
                                 dropout=dropout, dropout_rng=dropout_rng)
    b = ad.softmax(logits if logits is not None else Tensor(model.importance_logits),
                   axis=-1)
    w = f @ b  # (L, D) covariate weights, on the tape

    lam_marg = (w * lam_evt).sum(axis=1)
    safe = lam_marg + (1.0 - mask)
    event_term = (ad.log(safe) * mask).sum()
    integral_term = (w * ((t / M)[:, None] * s_int)).sum()
    ll = (event_term - integral_term) * scale

    s = f.sum(axis=0)
    orth = ((s * s).sum() - (f * f).sum()) * (1.0 / (L * (L - 1)))
    ent = (w * ad.log(w)).sum() * (1.0 / L)
    obj = ll - (orth * w_orth + ent * w_ent)
    return obj, float(ll.data)


def joint_objective_chunks(model, data: Dataset, u, n_total=None, w_orth=1.0,
                           w_ent=1.0, bank_wraps=None, assign_params=None,
                           logits=None):
    """Yield traced scalar pieces of the joint objective (ll - regularizer).

    Gradients flow into the hazard bank and the assignment side at once.
    Interior graph nodes are rebuilt per chunk (only leaf tensors may be
    shared across ``backward`` calls), so the assignment forward runs once
    per chunk. Evaluation mode only.
    """
    bank = model.hazard_bank
    x, t, delta = data.x, data.time, data.event
    L = len(data)
    if L < 2:
        raise ValueError("joint objective needs at least 2 records")
    D, M = x.shape[1], u.shape[1]
    scale = (len(data) if n_total is None else n_total) / L
    ts = model.time_scale
    mask = _event_mask(t, delta)

    def weights():
        f = model.assignment.forward(x, params=assign_params)
        b = ad.softmax(logits if logits is not None else Tensor(model.importance_logits),
                       axis=-1)
        return f, f @ b

    # events + regularizer piece
    f, w = weights()
    lam = bank.forward(_bank_inputs(x, t[:, None], ts), params=bank_wraps)
    lam_evt = (lam * (1.0 / ts)).reshape(D, L).transpose()  # (L, D)
    lam_marg = (w * lam_evt).sum(axis=1)
    safe = lam_marg + (1.0 - mask)
    event_term = (ad.log(safe) * mask).sum() * scale
    s = f.sum(axis=0)
    orth = ((s * s).sum() - (f * f).sum()) * (1.0 / (L * (L - 1)))
    ent = (w * ad.log(w)).sum() * (1.0 / L)
    yield event_term - (orth * w_orth + ent * w_ent)

    # integral pieces
    cols = max(1, TAPE_CHUNK // max(1, D * L))
    for j0 in range(0, M, cols):
        uj = u[:, j0:j0 + cols]
        mc = uj.shape[1]
        _, w = weights()
        lam = bank.forward(_bank_inputs(x, t[:, None] * uj, ts), params=bank_wraps)
        s_chunk = (lam * (1.0 / ts)).reshape(D, L, mc).sum(axis=2).transpose()  # (L, D)
        piece = (w * ((t / M)[:, None] * s_chunk)).sum()
        yield piece * (-scale)


# ---- training ----


@dataclass
class FitResult:
    """A fitted model plus its training trace."""

    model: AdhamModel
    history: list
    best_epoch: int
    stopped_epoch: int


def fit(data: Dataset, fold: FoldSplit, cfg: TrainConfig,
        stats: StandardizationStats | None = None, log=None) -> FitResult:
    """Train a model on a fold's training records, early-stopping on its
    validation records.

    ``data`` should already carry the covariate transform described by
    ``stats`` (see :func:`adham.data.standardize`); ``stats`` is stored on
    the model for later use on raw inputs. The validation log-likelihood
    reuses one fixed set of integration samples across epochs so epoch
    scores differ only through the parameters. The returned model carries
    the parameters of the best validation epoch.

    ``log``, if given, is called once per epoch with a dict of
    ``epoch``/``train_loglik``/``val_loglik``.

    Raises
    ------
    NumericalError
        If a training objective turns non-finite (with epoch/batch context).
    """
    train = data.subset(fold.train_idx)
    val = data.subset(fold.val_idx)
    if len(train) < 2:
        raise ValueError("need at least 2 training records")
    D = data.n_features
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(6)]
    r_assign, r_bank, r_batch, r_imp, r_drop, r_val = streams

    tmax = float(train.time.max())
    time_scale = tmax if tmax > 0 else 1.0
    assignment = Mlp(D, cfg.subgroups, hidden=cfg.hidden, depth=cfg.depth,
                     head="softmax", layer_norm=cfg.layer_norm, rng=r_assign)
    bank = Mlp(2, 1, hidden=cfg.hidden, depth=cfg.depth, head="softplus",
               layer_norm=cfg.layer_norm, add_const=cfg.add_const, stack=D,
               rng=r_bank)
    # zero logits start every subgroup at uniform covariate importance
    model = AdhamModel(assignment, np.zeros((cfg.subgroups, D)), bank,
                       time_scale, stats=stats, feature_names=data.feature_names)

    assign_side = assignment.param_list() + [model.importance_logits]
    if cfg.joint:
        opt_all = Adam(bank.param_list() + assign_side, lr=cfg.lr)
    else:
        opt_bank = Adam(bank.param_list(), lr=cfg.lr)
        opt_assign = Adam(assign_side, lr=cfg.lr)

    u_val = r_val.random((len(val), cfg.integral_samples)) if len(val) else None
    n_total = len(train)
    M = cfg.integral_samples

    def decayed(grads, params):
        if cfg.weight_decay == 0:
            return grads
        return [g + cfg.weight_decay * p for g, p in zip(grads, params)]

    best_score = -np.inf
    best_snap = None
    best_epoch = -1
    stale = 0
    history = []
    epoch = -1
    for epoch in range(cfg.epochs):
        perm = r_batch.permutation(len(train))
        batch_lls = []
        for bi, b0 in enumerate(range(0, len(train), cfg.batch_size)):
            idx = perm[b0:b0 + cfg.batch_size]
            if idx.size < 2:
                continue  # a lone leftover record cannot form regularizer pairs
            batch = train.subset(idx)

            if cfg.joint:
                u = r_imp.random((idx.size, M))
                bw = bank.wrap()
                aw = assignment.wrap()
                lt = Tensor(model.importance_logits)
                value = 0.0
                for piece in joint_objective_chunks(model, batch, u, n_total,
                                                    cfg.w_orth, cfg.w_ent, bw, aw, lt):
                    (piece * (-1.0)).backward()
                    value += float(piece.data)
                if not np.isfinite(value):
                    raise NumericalError(
                        f"non-finite joint objective at epoch {epoch}, batch {bi}")
                grads = decayed([w.grad for w in bw + aw + [lt]],
                                bank.param_list() + assign_side)
                opt_all.step(grads)
                batch_lls.append(value)
                continue

            # phase 1: every per-covariate hazard net, own likelihood
            u1 = r_imp.random((idx.size, M))
            bw = bank.wrap()
            per_d = np.zeros(D)
            for piece in hazard_loglik_chunks(model, batch, u1, n_total, bw,
                                              training=True, dropout=cfg.dropout,
                                              dropout_rng=r_drop):
                (piece.sum() * (-1.0)).backward()
                per_d += piece.data
            if not np.all(np.isfinite(per_d)):
                raise NumericalError(
                    f"non-finite hazard objective at epoch {epoch}, batch {bi}")
            opt_bank.step(decayed([w.grad for w in bw], bank.param_list()))

            # phase 2: assignment and importance against frozen hazards
            u2 = r_imp.random((idx.size, M))
            lam_evt = model.hazard_components(batch.x, batch.time)
            s_int = model._component_rates(batch.x, batch.time[:, None] * u2).sum(axis=1)
            aw = assignment.wrap()
            lt = Tensor(model.importance_logits)
            obj, ll_value = mixture_objective(
                model, batch, u2, n_total, cfg.w_orth, cfg.w_ent, aw, lt,
                hazard_values=(lam_evt, s_int), training=True,
                dropout=cfg.dropout, dropout_rng=r_drop)
            if not np.isfinite(obj.data):
                raise NumericalError(
                    f"non-finite mixture objective at epoch {epoch}, batch {bi}")
            (obj * (-1.0)).backward()
            opt_assign.step(decayed([w.grad for w in aw + [lt]], assign_side))
            batch_lls.append(ll_value)

        if not batch_lls:
            raise ValueError("batch size leaves no usable mini-batches")
        train_ll = float(np.mean(batch_lls))
        val_ll = mc_loglik(model, val, t_samples=u_val) if len(val) else train_ll
        if not np.isfinite(val_ll):
            raise NumericalError(f"non-finite validation log-likelihood at epoch {epoch}")
        entry = {"epoch": epoch, "train_loglik": train_ll, "val_loglik": val_ll}
        history.append(entry)
        if log is not None:
            log(entry)

        if val_ll > best_score:
            best_score = val_ll
            best_epoch = epoch
            best_snap = (assignment.copy_params(), bank.copy_params(),
                         model.importance_logits.copy())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if best_snap is not None:
        assignment.set_params(best_snap[0])
        bank.set_params(best_snap[1])
        model.importance_logits[...] = best_snap[2]
    return FitResult(model=model, history=history, best_epoch=best_epoch,
                     stopped_epoch=epoch)


# ---- synthetic data ----


def sample_dataset(model, x, horizon, rng, grid_size=2048) -> Dataset:
    """Draw right-censored records whose event times follow the model.

    Event times invert the cumulative hazard on a ``grid_size``-point grid
    over [0, horizon] against unit-exponential draws; censoring times are
    uniform on [0, horizon] and events past the horizon are censored there.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    grid = np.linspace(0.0, float(horizon), grid_size + 1)
    lam = model.marginal_hazard_times(x, np.broadcast_to(grid, (n, grid.size)))
    dt = np.diff(grid)
    cum = np.concatenate(
        [np.zeros((n, 1)), np.cumsum(0.5 * (lam[:, 1:] + lam[:, :-1]) * dt, axis=1)],
        axis=1,
    )
    draws = rng.exponential(size=n)
    t_event = np.empty(n)
    for i in range(n):
        if draws[i] >= cum[i, -1]:
            t_event[i] = np.inf  # event beyond the horizon
        else:
            t_event[i] = np.interp(draws[i], cum[i], grid)
    t_cens = rng.uniform(0.0, float(horizon), size=n)
    time = np.minimum(t_event, t_cens)
    event = (t_event <= t_cens).astype(np.int64)
    return Dataset(x, time, event, list(model.feature_names))
