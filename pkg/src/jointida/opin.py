"""Total-effect estimators that use only the parent sets of the intervention
nodes: adjusted regression, the recursive-regression construction (RRC), the
modified-Cholesky construction (MCD), mechanism changes, and delta-method
asymptotic variances.

Every estimator consumes a covariance matrix; population and sample
covariances go through identical code paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NotPositiveDefiniteError, SingularMatrixError
from .sem import CovMatrix

PIVOT_RTOL = 1e-10  # pivot acceptance relative to the largest diagonal entry


@dataclass(frozen=True)
class ParentAssignment:
    """Ordered intervention nodes with one parent set per node."""

    targets: tuple[int, ...]
    parent_sets: tuple[frozenset[int], ...]

    def __init__(self, targets, parent_sets):
        targets = tuple(int(t) for t in targets)
        parent_sets = tuple(frozenset(int(v) for v in s) for s in parent_sets)
        if len(set(targets)) != len(targets):
            raise ValueError("targets must be distinct")
        if len(parent_sets) != len(targets):
            raise ValueError("need one parent set per target")
        for t, s in zip(targets, parent_sets):
            if t in s:
                raise ValueError(f"target {t} cannot be its own parent")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "parent_sets", parent_sets)

    @property
    def k(self) -> int:
        return len(self.targets)

    def parent_set_of(self, target: int) -> frozenset[int]:
        return self.parent_sets[self.targets.index(target)]

    def all_nodes(self) -> set[int]:
        out = set(self.targets)
        for s in self.parent_sets:
            out |= s
        return out


@dataclass(frozen=True)
class EffectVector:
    """Total joint effect of the ordered targets on one response."""

    targets: tuple[int, ...]
    response: int
    values: tuple[float, ...]

    def __init__(self, targets, response, values):
        targets = tuple(int(t) for t in targets)
        values = tuple(float(v) for v in values)
        if len(values) != len(targets):
            raise ValueError("one effect per target required")
        if not all(np.isfinite(values)):
            raise ValueError("effect values must be finite")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "response", int(response))
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class CholeskyFactors:
    """Factors ``(L, d)`` with ``L S L^T = diag(d)`` for the matrix ``S``
    arranged in ``ordering``; ``L`` is unit lower triangular.

    Row ``j`` of ``L`` holds the negated coefficients of the regression of the
    ``j``-th variable on its predecessors in the ordering.
    """

    ordering: tuple[int, ...]
    L: np.ndarray
    d: np.ndarray

    def __init__(self, ordering, L, d):
        L = np.array(L, dtype=float)
        d = np.array(d, dtype=float)
        if not np.allclose(np.diag(L), 1.0):
            raise ValueError("L must have unit diagonal")
        if not (d > 0).all():
            raise ValueError("d must be strictly positive")
        L.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "ordering", tuple(int(v) for v in ordering))
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "d", d)


# ---------------------------------------------------------------------------
# factorization core

def _failing_pivot(values: np.ndarray, tol: float) -> int:
    """Index of the first non-positive (within ``tol``) pivot of the outer
    LDL^T factorization; used only to name the variable in error messages."""
    q = values.shape[0]
    M = np.eye(q)
    d = np.zeros(q)
    for j in range(q):
        acc = values[j, j] - (M[j, :j] ** 2 * d[:j]).sum()
        if acc <= tol:
            return j
        d[j] = acc
        for i in range(j + 1, q):
            M[i, j] = (values[i, j] - (M[i, :j] * M[j, :j] * d[:j]).sum()) / acc
    return q - 1


def _ldl(values: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Unit-lower ``L`` and positive ``d`` with ``L @ values @ L.T = diag(d)``."""
    tol = PIVOT_RTOL * float(np.diag(values).max())
    try:
        C = np.linalg.cholesky(values)
    except np.linalg.LinAlgError:
        j = _failing_pivot(values, tol)
        raise NotPositiveDefiniteError(
            f"non-positive pivot at variable {labels[j]}", label=labels[j]
        ) from None
    s = np.diag(C)
    d = s**2
    if d.min() < tol:
        j = int(np.argmin(d))
        raise NotPositiveDefiniteError(
            f"pivot below tolerance at variable {labels[j]}", label=labels[j]
        )
    M = C / s  # unit lower triangular, values = M diag(d) M^T
    L = solve_triangular(M, np.eye(len(s)), lower=True, unit_diagonal=True)
    return L, d


def generalized_cholesky(cov: CovMatrix, ordering) -> CholeskyFactors:
    """Factor ``cov`` arranged in ``ordering``: unique ``(L, d)`` with
    ``L S L^T = diag(d)`` and unit-lower ``L``."""
    ordering = tuple(int(v) for v in ordering)
    if set(ordering) != set(cov.labels) or len(ordering) != len(cov.labels):
        raise ValueError("ordering must be a permutation of the covariance labels")
    L, d = _ldl(cov.reordered(ordering).values, ordering)
    return CholeskyFactors(ordering, L, d)


def _recompose(L: np.ndarray, d: np.ndarray) -> np.ndarray:
    M = solve_triangular(L, np.eye(len(d)), lower=True, unit_diagonal=True)
    return (M * d) @ M.T


# ---------------------------------------------------------------------------
# adjusted regression and RRC

def adjusted_effect(cov: CovMatrix, i: int, p: int, pa) -> float:
    """Single-intervention effect of ``i`` on ``p`` by covariate adjustment:
    0 when ``p`` is a parent of ``i``, otherwise the coefficient of ``i`` in
    the regression of ``p`` on ``{i} | pa``, solved from ``cov``."""
    i, p = int(i), int(p)
    pa = frozenset(int(v) for v in pa)
    if i == p:
        raise ValueError("intervention node and response must differ")
    if i in pa:
        raise ValueError(f"node {i} cannot be in its own adjustment set")
    if p in pa:
        return 0.0
    predictors = [i] + sorted(pa)
    idx = [cov.index(v) for v in predictors]
    block = cov.values[np.ix_(idx, idx)]
    rhs = cov.values[idx, cov.index(p)]
    try:
        beta = np.linalg.solve(block, rhs)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            f"singular covariance block over variables {predictors}"
        ) from None
    return float(beta[0])


def rrc_effect(cov: CovMatrix, pa: ParentAssignment, response: int) -> EffectVector:
    """Total joint effect via recursive regressions.

    Effects of order ``k`` reduce to order ``k - 1`` by eliminating the last
    target in the user-supplied order (the one before it when computing the
    last target's own component); the base case is :func:`adjusted_effect`.
    A component is forced to 0 whenever its endpoint lies in that target's
    parent set.  Lower-order effects are memoised.
    """
    response = int(response)
    if response in pa.targets:
        raise ValueError("response must not be an intervention node")
    pa_of = {t: s for t, s in zip(pa.targets, pa.parent_sets)}
    memo: dict[tuple, float] = {}

    def effect(T: tuple[int, ...], t: int, endpoint: int) -> float:
        key = (T, t, endpoint)
        if key in memo:
            return memo[key]
        if endpoint in pa_of[t]:
            val = 0.0
        elif len(T) == 1:
            val = adjusted_effect(cov, t, endpoint, pa_of[t])
        else:
            pos = T.index(t)
            pivot = T[-1] if pos != len(T) - 1 else T[-2]
            T_no_pivot = tuple(v for v in T if v != pivot)
            T_no_t = tuple(v for v in T if v != t)
            val = effect(T_no_pivot, t, endpoint) - effect(
                T_no_pivot, t, pivot
            ) * effect(T_no_t, pivot, endpoint)
        memo[key] = val
        return val

    values = [effect(pa.targets, t, response) for t in pa.targets]
    return EffectVector(pa.targets, response, values)


# ---------------------------------------------------------------------------
# MCD

def mcd_sigma_k(cov: CovMatrix, pa: ParentAssignment) -> CovMatrix:
    """Post-intervention covariance by iterated modified Cholesky steps.

    For each target in order: arrange the current matrix as (parents, target,
    rest), factor, replace the target's row of ``L`` by the unit vector, and
    recompose.  The result is returned in the input label order.  Within-block
    orderings are fixed to ascending node index so that sample results are
    reproducible (oracle results do not depend on them).
    """
    missing = pa.all_nodes() - set(cov.labels)
    if missing:
        raise ValueError(f"covariance lacks variables {sorted(missing)}")
    labels = list(cov.labels)
    values = np.array(cov.values)
    for t, parents in zip(pa.targets, pa.parent_sets):
        rest = sorted(set(labels) - parents - {t})
        ordering = sorted(parents) + [t] + rest
        perm = [labels.index(v) for v in ordering]
        values = values[np.ix_(perm, perm)]
        labels = ordering
        try:
            L, d = _ldl(values, labels)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(
                f"modified-Cholesky step for target {t} failed ({exc}); "
                "parent sets are inconsistent with this covariance",
                label=exc.label,
            ) from None
        row = len(parents)
        L[row, :row] = 0.0
        values = _recompose(L, d)
    perm = [labels.index(v) for v in cov.labels]
    return CovMatrix(cov.labels, values[np.ix_(perm, perm)])


def mcd_effect(cov: CovMatrix, pa: ParentAssignment, response: int) -> EffectVector:
    """Total joint effect read off the modified-Cholesky post-intervention
    covariance of the relevant variables (targets, their parents, response).

    The component for a target whose parent set contains the response is 0;
    for sample covariances the indicator matters, for population input the
    corresponding entry is already 0.
    """
    response = int(response)
    if response in pa.targets:
        raise ValueError("response must not be an intervention node")
    relevant = sorted(pa.all_nodes() | {response})
    missing = set(relevant) - set(cov.labels)
    if missing:
        raise ValueError(f"covariance lacks variables {sorted(missing)}")
    sigma_k = mcd_sigma_k(cov.reordered(relevant), pa)
    values = []
    for t, parents in zip(pa.targets, pa.parent_sets):
        if response in parents:
            values.append(0.0)
        else:
            values.append(sigma_k.entry(t, response) / sigma_k.entry(t, t))
    return EffectVector(pa.targets, response, values)


def mechanism_change_covariance(
    cov: CovMatrix, node: int, old_pa, new_weights: dict[int, float]
) -> CovMatrix:
    """Covariance after replacing ``node``'s structural equation weights.

    One modified-Cholesky step where the node's row of ``L`` is set to the
    negated new weights instead of zero; an all-zero map is exactly the point
    intervention, and restoring the original weights is the identity.
    """
    node = int(node)
    old_pa = frozenset(int(v) for v in old_pa)
    new_weights = {int(v): float(w) for v, w in new_weights.items()}
    if node in old_pa:
        raise ValueError("node cannot be its own parent")
    if not set(new_weights) <= old_pa:
        extra = sorted(set(new_weights) - old_pa)
        raise ValueError(f"new weights refer to non-parents {extra}")
    missing = (old_pa | {node}) - set(cov.labels)
    if missing:
        raise ValueError(f"covariance lacks variables {sorted(missing)}")
    parents_sorted = sorted(old_pa)
    rest = sorted(set(cov.labels) - old_pa - {node})
    ordering = parents_sorted + [node] + rest
    L, d = _ldl(cov.reordered(ordering).values, ordering)
    row = len(parents_sorted)
    for col, parent in enumerate(parents_sorted):
        L[row, col] = -new_weights.get(parent, 0.0)
    values = _recompose(L, d)
    perm = [ordering.index(v) for v in cov.labels]
    return CovMatrix(cov.labels, values[np.ix_(perm, perm)])


# ---------------------------------------------------------------------------
# asymptotics (k = 2)

def _vech_indices(q: int) -> tuple[np.ndarray, np.ndarray]:
    # lower triangle stacked columnwise
    r, c = np.triu_indices(q)
    return c, r


def _vech(values: np.ndarray) -> np.ndarray:
    r, c = _vech_indices(values.shape[0])
    return values[r, c]


def _unvech(vec: np.ndarray, q: int) -> np.ndarray:
    out = np.zeros((q, q))
    r, c = _vech_indices(q)
    out[r, c] = vec
    out[c, r] = vec
    return out


def _jacobian(func, vec: np.ndarray, out_dim: int) -> np.ndarray:
    """Central finite differences with per-coordinate step
    ``max(1e-5, 1e-5 |x_r|)``."""
    m = len(vec)
    J = np.empty((out_dim, m))
    for r in range(m):
        h = max(1e-5, 1e-5 * abs(vec[r]))
        up, dn = vec.copy(), vec.copy()
        up[r] += h
        dn[r] -= h
        J[:, r] = (func(up) - func(dn)) / (2.0 * h)
    return J


def asymptotic_variance(
    data: np.ndarray, method: str, pa: ParentAssignment, response: int
) -> np.ndarray:
    """Estimated limit covariance of ``sqrt(n) (theta_hat - theta)`` for a
    double intervention, via the delta method around the sample covariance.

    The CLT covariance of the half-vectorised sample covariance is estimated
    empirically; the Jacobian of the estimator map is computed by central
    finite differences at the estimated covariance.  Requires for RRC that
    neither target nor the response is a parent of either target, and for MCD
    that the response is not.
    """
    if method not in ("rrc", "mcd"):
        raise ValueError(f"method must be 'rrc' or 'mcd', got {method!r}")
    if pa.k != 2:
        raise ValueError("asymptotic variance is implemented for exactly 2 targets")
    response = int(response)
    parents_union = pa.parent_sets[0] | pa.parent_sets[1]
    if method == "rrc":
        overlap = ({*pa.targets, response}) & parents_union
        if overlap:
            raise ValueError(
                f"RRC limit law requires targets/response outside the parent "
                f"sets; offending nodes {sorted(overlap)}"
            )
    elif response in parents_union:
        raise ValueError(
            f"MCD limit law requires the response outside the parent sets; "
            f"offending node {response}"
        )
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    relevant = sorted(pa.all_nodes() | {response})
    if max(relevant) > p:
        raise ValueError(f"data has {p} columns but node {max(relevant)} is used")
    sub = data[:, [v - 1 for v in relevant]]
    centered = sub - sub.mean(axis=0)
    q = len(relevant)
    cov_hat = centered.T @ centered / (n - 1)
    r, c = _vech_indices(q)
    vech_rows = (centered[:, :, None] * centered[:, None, :])[:, r, c]
    gamma = np.cov(vech_rows.T, ddof=1)

    t1, t2 = pa.targets

    if method == "rrc":
        def theta4(vec: np.ndarray) -> np.ndarray:
            cm = CovMatrix(relevant, _unvech(vec, q))
            return np.array(
                [
                    adjusted_effect(cm, t1, response, pa.parent_sets[0]),
                    adjusted_effect(cm, t2, response, pa.parent_sets[1]),
                    adjusted_effect(cm, t1, t2, pa.parent_sets[0]),
                    adjusted_effect(cm, t2, t1, pa.parent_sets[1]),
                ]
            )

        center = _vech(cov_hat)
        lam = _jacobian(theta4, center, 4)
        th1p, th2p, th12, th21 = theta4(center)
        F = np.array([[1.0, -th12, -th2p, 0.0], [-th21, 1.0, 0.0, -th1p]])
        inner = lam @ gamma @ lam.T
        return F @ inner @ F.T

    def mcd_map(vec: np.ndarray) -> np.ndarray:
        cm = CovMatrix(relevant, _unvech(vec, q))
        return np.array(mcd_effect(cm, pa, response).values)

    J = _jacobian(mcd_map, _vech(cov_hat), 2)
    return J @ gamma @ J.T


def effect_document(
    ev: EffectVector,
    method: str,
    pa: ParentAssignment,
    limit_covariance: np.ndarray | None = None,
    n: int | None = None,
) -> dict:
    """JSON-ready description of an effect vector."""
    doc = {
        "targets": list(ev.targets),
        "response": ev.response,
        "method": method,
        "values": list(ev.values),
        "parent_sets": [sorted(s) for s in pa.parent_sets],
    }
    if limit_covariance is not None:
        doc["limit_covariance"] = np.asarray(limit_covariance).tolist()
        doc["n"] = n
    return doc
