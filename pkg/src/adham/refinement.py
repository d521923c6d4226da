"""Post-hoc merging of redundant subgroups.

A large mixture often converges with several subgroups whose covariate
importance rows are nearly identical. Refinement measures that redundancy
(cosine similarity between importance rows), groups subgroups whose
similarity clears a threshold (transitively, via connected components), and
collapses each group into one subgroup. Assignment probabilities of merged
subgroups are summed, so the assignment network is reused as-is and is never
retrained; when the merged rows are exactly equal the reduced model makes
identical predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .serialize import model_hash

__all__ = [
    "RefinementPlan",
    "correlation_matrix",
    "combine_clusters",
    "apply_merge",
]


def correlation_matrix(importance: np.ndarray) -> np.ndarray:
    """Cosine similarity between all pairs of importance rows.

    Parameters
    ----------
    importance : ndarray of shape (C, D)
        Nonnegative rows, e.g. ``model.importance_matrix()``.

    Returns
    -------
    ndarray of shape (C, C)
        Symmetric, unit diagonal, entries in [0, 1] for nonnegative rows.

    Raises
    ------
    ValueError
        If any row is entirely zero (its direction is undefined).
    """
    b = np.asarray(importance, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] < 1:
        raise ValueError("importance must be a (C, D) matrix with C >= 1")
    norms = np.sqrt((b * b).sum(axis=1))
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0).tolist()
        raise ValueError(f"zero importance row(s) {bad} have no direction")
    unit = b / norms[:, None]
    rho = unit @ unit.T
    np.fill_diagonal(rho, 1.0)
    return rho


@dataclass
class RefinementPlan:
    """A partition of subgroup indices into groups to be merged.

    Attributes
    ----------
    groups : list of list of int
        Disjoint, collectively exhaustive index sets over ``range(C)``;
        members sorted ascending, groups ordered by smallest member.
    threshold : float
        The similarity cutoff that produced the plan.
    """

    groups: list
    threshold: float

    def __post_init__(self):
        self.groups = [sorted(int(c) for c in g) for g in self.groups]
        self.groups.sort(key=lambda g: g[0] if g else -1)
        flat = sorted(c for g in self.groups for c in g)
        if not self.groups or any(not g for g in self.groups):
            raise ValueError("plan groups must be nonempty")
        if flat != list(range(len(flat))):
            raise ValueError("plan groups must partition range(C) without overlap")
        self.threshold = float(self.threshold)

    @property
    def n_subgroups(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def is_identity(self) -> bool:
        return all(len(g) == 1 for g in self.groups)


def combine_clusters(rho: np.ndarray, threshold: float = 0.8) -> RefinementPlan:
    """Group subgroups whose pairwise similarity reaches ``threshold``.

    Merging is transitive: the groups are exactly the connected components
    of the graph with an edge between i and j whenever ``rho[i, j] >=
    threshold``, found with a union-find structure. Subgroups similar to
    nothing stay as singletons.

    Parameters
    ----------
    rho : ndarray of shape (C, C)
        Symmetric similarity matrix, e.g. from :func:`correlation_matrix`.
    threshold : float
        Cutoff in (0, 1].

    Returns
    -------
    RefinementPlan
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
        raise ValueError("rho must be a square (C, C) matrix with C >= 1")
    if not np.allclose(rho, rho.T, atol=1e-12):
        raise ValueError("rho must be symmetric")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")

    n = rho.shape[0]
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]  # path halving
            a = parent[a]
        return a

    ii, jj = np.nonzero(np.triu(rho, k=1) >= threshold)
    for a, b in zip(ii.tolist(), jj.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    members: dict[int, list[int]] = {}
    for c in range(n):
        members.setdefault(find(c), []).append(c)
    groups = [members[r] for r in sorted(members)]
    return RefinementPlan(groups=groups, threshold=threshold)


def apply_merge(model, plan: RefinementPlan, sample_x=None):
    """Collapse each plan group into a single subgroup.

    The merged model sums the original assignment probabilities within each
    group (the assignment network is kept verbatim) and replaces the group's
    importance rows with one averaged row, weighted by each member's mean
    assignment mass over ``sample_x`` and renormalized to the simplex.

    Parameters
    ----------
    model : AdhamModel
        Source model; may itself be a merged model, in which case the plan
        indexes its current (already grouped) subgroups.
    plan : RefinementPlan
        Partition of ``range(model.n_subgroups)``.
    sample_x : ndarray of shape (n, D), optional
        Covariates used to weight the row averages, typically the training
        set. May be omitted only if every multi-member group has exactly
        identical rows (then no weighting is needed).

    Returns
    -------
    AdhamModel
        Independent merged model with ``len(plan.groups)`` subgroups, its
        ``groups`` expressed over the base subgroups, and a ``lineage``
        record naming the source model hash, the threshold, and the plan.
        An identity plan returns a plain copy, unchanged.

    Raises
    ------
    ValueError
        If the plan does not match the model's subgroup count, or a
        multi-member group has non-identical rows and no sample was given.
    """
    if plan.n_subgroups != model.n_subgroups:
        raise ValueError(
            f"plan covers {plan.n_subgroups} subgroups, model has {model.n_subgroups}"
        )
    if plan.is_identity:
        return model.copy()

    beta = model.importance_matrix()
    if sample_x is None or len(np.atleast_2d(sample_x)) == 0:
        mass = None
    else:
        mass = np.atleast_2d(model.assignment_probs(sample_x)).mean(axis=0)

    new_logits = np.empty((len(plan.groups), model.n_features))
    for gi, g in enumerate(plan.groups):
        if len(g) == 1:
            new_logits[gi] = model.importance_logits[g[0]]
            continue
        rows = beta[g]
        if mass is None:
            if not all(np.array_equal(rows[0], r) for r in rows[1:]):
                raise ValueError(
                    f"group {g} has non-identical importance rows; provide "
                    "sample covariates to weight the merged row"
                )
            merged = rows[0]
        else:
            w = mass[g]
            total = w.sum()
            w = w / total if total > 0 else np.full(len(g), 1.0 / len(g))
            merged = w @ rows
            merged = merged / merged.sum()
        new_logits[gi] = np.log(merged)

    base = model.groups if model.groups is not None else [[c] for c in
                                                          range(model.n_subgroups)]
    new_groups = [sorted(c for m in g for c in base[m]) for g in plan.groups]
    merged_model = model.copy()
    merged_model.lineage = {
        "source_hash": model_hash(model),
        "threshold": plan.threshold,
        "groups": [list(g) for g in plan.groups],
    }
    return type(model)(
        merged_model.assignment, new_logits, merged_model.hazard_bank,
        merged_model.time_scale, stats=merged_model.stats,
        feature_names=merged_model.feature_names, groups=new_groups,
        lineage=merged_model.lineage,
    )
