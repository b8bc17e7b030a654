"""Estimating structure from data: sample covariance, sin-transformed rank
correlations, the Fisher-z conditional-independence test, and an
order-independent PC-style CPDAG learner.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import kendalltau, norm, rankdata

from .exceptions import SingularMatrixError
from .graph import Pdag, _has_directed_path, meek_closure
from .sem import CovMatrix

RANK_KINDS = ("spearman", "kendall")
TIE_FRACTION_LIMIT = 0.1  # continuous-data assumption guard
PD_CLIP_EIGENVALUE = 1e-8


@dataclass(frozen=True)
class CiTestConfig:
    """Settings for the conditional-independence tests inside the learner.

    ``max_condition_size`` of ``None`` means ``p - 2``.
    """

    alpha: float = 0.01
    max_condition_size: int | None = None
    test: str = "fisher_z"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be strictly between 0 and 1")
        if self.test != "fisher_z":
            raise ValueError(f"unsupported CI test {self.test!r}")
        if self.max_condition_size is not None and self.max_condition_size < 0:
            raise ValueError("max_condition_size must be nonnegative")


def sample_covariance(data: np.ndarray) -> CovMatrix:
    """Unbiased sample covariance with columns labelled ``1..p``."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need a 2-D data matrix with at least 2 rows")
    values = np.cov(data, rowvar=False, ddof=1)
    values = np.atleast_2d(values)
    constant = [j + 1 for j in range(values.shape[0]) if values[j, j] <= 0.0]
    if constant:
        raise SingularMatrixError(f"constant data columns {constant}")
    return CovMatrix(range(1, data.shape[1] + 1), values)


def rank_correlation_matrix(
    data: np.ndarray, kind: str = "spearman", max_tie_fraction: float = TIE_FRACTION_LIMIT
) -> CovMatrix:
    """Sin-transformed rank correlation matrix.

    Spearman entries become ``2 sin(pi/6 rho)`` and Kendall entries
    ``sin(pi/2 tau)``, which estimate the latent Pearson correlation under a
    Gaussian copula.  The matrix is symmetrised with unit diagonal and, when
    an eigenvalue falls below ``1e-8``, clipped to the nearest
    positive-definite matrix and re-normalised (flagged via ``clipped``).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 3:
        raise ValueError("need a 2-D data matrix with at least 3 rows")
    if kind not in RANK_KINDS:
        raise ValueError(f"kind must be one of {RANK_KINDS}, got {kind!r}")
    n, p = data.shape
    tie_frac = np.array([1.0 - np.unique(col).size / n for col in data.T])
    if (tie_frac > max_tie_fraction).any():
        cols = [j + 1 for j in np.nonzero(tie_frac > max_tie_fraction)[0]]
        raise ValueError(
            f"columns {cols} have tied-value fractions above {max_tie_fraction}; "
            "rank correlations assume continuous data"
        )
    if kind == "spearman":
        ranks = np.column_stack([rankdata(col) for col in data.T])
        rho = np.corrcoef(ranks, rowvar=False)
        values = 2.0 * np.sin(np.pi / 6.0 * np.atleast_2d(rho))
    else:
        values = np.eye(p)
        for a, b in combinations(range(p), 2):
            tau = kendalltau(data[:, a], data[:, b]).statistic
            values[a, b] = values[b, a] = np.sin(np.pi / 2.0 * tau)
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, 1.0)
    eigvals, eigvecs = np.linalg.eigh(values)
    clipped = False
    if eigvals[0] < PD_CLIP_EIGENVALUE:
        clipped = True
        values = (eigvecs * np.maximum(eigvals, PD_CLIP_EIGENVALUE)) @ eigvecs.T
        d = np.sqrt(np.diag(values))
        values = values / np.outer(d, d)
    return CovMatrix(range(1, p + 1), values, clipped=clipped)


def fisher_z_ci(
    corr: CovMatrix, n: int, i: int, j: int, S, alpha: float
) -> bool:
    """Fisher-z test of ``i _||_ j | S``; True when independence is accepted.

    The partial correlation comes from inverting the ``{i, j} | S`` block, so
    covariance and correlation input give identical results.
    """
    i, j = int(i), int(j)
    S = sorted(int(v) for v in S)
    if i == j or i in S or j in S:
        raise ValueError("i, j, and S must be disjoint")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be strictly between 0 and 1")
    if len(S) > n - 4:
        raise ValueError(
            f"conditioning set of size {len(S)} needs n >= {len(S) + 4}, got {n}"
        )
    idx = [corr.index(v) for v in [i, j] + S]
    block = corr.values[np.ix_(idx, idx)]
    try:
        prec = np.linalg.inv(block)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            f"singular correlation block over variables {[i, j] + S}"
        ) from None
    r = -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])
    r = min(1.0, max(-1.0, r))
    if abs(r) == 1.0:
        return False
    stat = np.sqrt(n - len(S) - 3) * abs(np.arctanh(r))
    return bool(stat <= norm.ppf(1.0 - alpha / 2.0))


def pc_cpdag(corr: CovMatrix, n: int, cfg: CiTestConfig | None = None) -> Pdag:
    """PC-style CPDAG estimate from a covariance/correlation matrix.

    Order-independent skeleton phase (conditioning sets drawn from a per-level
    adjacency snapshot), collider orientation from the recorded separating
    sets with per-edge majority voting (ties skipped, orientations that would
    close a directed cycle skipped), then Meek closure.  Deterministic given
    the inputs.
    """
    cfg = cfg or CiTestConfig()
    p = corr.size
    if corr.labels != tuple(range(1, p + 1)):
        raise ValueError("learner expects variables labelled 1..p")
    max_cond = cfg.max_condition_size if cfg.max_condition_size is not None else p - 2
    adj: dict[int, set[int]] = {v: set(range(1, p + 1)) - {v} for v in range(1, p + 1)}
    sepsets: dict[tuple[int, int], frozenset[int]] = {}

    level = 0
    while level <= max_cond:
        snapshot = {v: sorted(adj[v]) for v in adj}
        if all(len(snapshot[v]) - 1 < level for v in snapshot):
            break
        for x in range(1, p + 1):
            for y in snapshot[x]:
                if y not in adj[x]:
                    continue  # removed earlier at this level
                candidates = [v for v in snapshot[x] if v != y]
                if len(candidates) < level:
                    continue
                for S in combinations(candidates, level):
                    if fisher_z_ci(corr, n, x, y, S, cfg.alpha):
                        adj[x].discard(y)
                        adj[y].discard(x)
                        sepsets[(min(x, y), max(x, y))] = frozenset(S)
                        break
        level += 1

    undirected = {(min(x, y), max(x, y)) for x in adj for y in adj[x]}

    votes: dict[tuple[int, int], int] = {}
    for b in range(1, p + 1):
        for a, c in combinations(sorted(adj[b]), 2):
            if c in adj[a]:
                continue
            sep = sepsets.get((a, c))
            if sep is None or b in sep:
                continue
            votes[(a, b)] = votes.get((a, b), 0) + 1
            votes[(c, b)] = votes.get((c, b), 0) + 1

    directed: set[tuple[int, int]] = set()
    for a, b in sorted(votes):
        if votes[(a, b)] <= votes.get((b, a), 0):
            continue  # conflicting colliders with no majority stay undirected
        if (min(a, b), max(a, b)) not in undirected:
            continue
        if _has_directed_path(directed, b, a):
            continue  # orientation would close a directed cycle
        undirected.discard((min(a, b), max(a, b)))
        directed.add((a, b))

    directed, undirected = meek_closure(p, directed, undirected)
    return Pdag(p, directed, undirected)
