"""Linear structural equation models: construction, sampling, population
covariances, the path-method effect oracle, and nonparanormal transforms.

A linear SEM is ``X <- B^T X + eps`` with acyclic weight matrix ``B`` and
jointly independent mean-zero errors.  Everything here is the ground-truth
generator against which the estimators are checked.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import GraphFormatError, NotPositiveDefiniteError
from .graph import Dag, WeightedDag, topological_order, weighted_dag_from_text, weighted_dag_to_text

ERROR_FAMILIES = ("gaussian", "uniform", "t")


@dataclass(frozen=True)
class ErrorSpec:
    """Mean-zero error distribution for one node.

    ``std`` is the standard deviation; ``df`` applies to the t family only and
    must exceed 4 so that fourth moments exist.
    """

    family: str = "gaussian"
    std: float = 1.0
    df: float | None = None

    def __post_init__(self):
        if self.family not in ERROR_FAMILIES:
            raise ValueError(f"unknown error family {self.family!r}")
        if not self.std > 0:
            raise ValueError("error std must be positive")
        if self.family == "t":
            if self.df is None or not self.df > 4:
                raise ValueError("t errors require df > 4")
        elif self.df is not None:
            raise ValueError(f"df only applies to the t family, not {self.family!r}")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.family == "gaussian":
            return self.std * rng.standard_normal(n)
        if self.family == "uniform":
            half = self.std * math.sqrt(3.0)
            return rng.uniform(-half, half, n)
        scale = self.std * math.sqrt((self.df - 2.0) / self.df)
        return scale * rng.standard_t(self.df, n)


@dataclass(frozen=True)
class LinearSem:
    """A weighted DAG plus one error distribution per node."""

    graph: WeightedDag
    errors: tuple[ErrorSpec, ...]

    def __init__(self, graph: WeightedDag, errors=None):
        p = graph.num_nodes
        if errors is None:
            errors = tuple(ErrorSpec() for _ in range(p))
        else:
            errors = tuple(errors)
        if len(errors) != p:
            raise ValueError(f"need {p} error specs, got {len(errors)}")
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "errors", errors)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def error_variances(self) -> np.ndarray:
        return np.array([e.std**2 for e in self.errors])


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric positive-definite matrix with a variable labelling.

    ``clipped`` records that the matrix was projected to the nearest
    positive-definite matrix (only rank-correlation estimates ever set it).
    """

    labels: tuple[int, ...]
    values: np.ndarray
    clipped: bool = False

    def __init__(self, labels, values, clipped: bool = False):
        labels = tuple(int(v) for v in labels)
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("covariance matrix must be square")
        if len(labels) != values.shape[0]:
            raise ValueError("label count does not match matrix size")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct")
        scale = np.abs(values).max() if values.size else 0.0
        if scale and np.abs(values - values.T).max() > 1e-12 * scale:
            raise ValueError("matrix is not symmetric within 1e-12 relative")
        values = (values + values.T) / 2.0
        eigs = np.linalg.eigvalsh(values)
        if eigs[0] <= len(labels) * np.finfo(float).eps * max(eigs[-1], 0.0):
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite (smallest eigenvalue {eigs[0]:.3e})"
            )
        values.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "clipped", bool(clipped))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: int) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label} not in covariance matrix") from None

    def entry(self, a: int, b: int) -> float:
        return float(self.values[self.index(a), self.index(b)])

    def reordered(self, labels) -> "CovMatrix":
        """Same matrix with rows/columns arranged as ``labels`` (a subset is
        a principal submatrix)."""
        idx = [self.index(v) for v in labels]
        return CovMatrix(labels, self.values[np.ix_(idx, idx)], clipped=self.clipped)


# ---------------------------------------------------------------------------
# population quantities

def _weight_matrix(g: WeightedDag) -> np.ndarray:
    p = g.num_nodes
    B = np.zeros((p, p))
    for (i, j), w in g.weights.items():
        B[i - 1, j - 1] = w
    return B


def true_covariance(sem: LinearSem) -> CovMatrix:
    """Population covariance ``(I - B^T)^{-1} Cov(eps) (I - B^T)^{-T}``,
    computed by triangular solves in a causal ordering."""
    p = sem.num_nodes
    order = topological_order(sem.graph.dag)
    perm = np.array(order) - 1
    B = _weight_matrix(sem.graph)[np.ix_(perm, perm)]  # strictly upper triangular
    A = np.eye(p) - B.T
    M = solve_triangular(A, np.eye(p), lower=True, unit_diagonal=True)
    sigma_perm = (M * sem.error_variances()[perm]) @ M.T
    inv = np.empty(p, dtype=int)
    inv[perm] = np.arange(p)
    values = sigma_perm[np.ix_(inv, inv)]
    return CovMatrix(range(1, p + 1), values)


def sample(sem: LinearSem, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. rows, generating each variable after its parents.

    Deterministic for a fixed seed; errors are drawn column-by-column in node
    order, then the structural equations are evaluated in causal order.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    p = sem.num_nodes
    X = np.empty((n, p))
    for v in range(1, p + 1):
        X[:, v - 1] = sem.errors[v - 1].draw(n, rng)
    for v in topological_order(sem.graph.dag):
        for (i, j), w in sem.graph.weights.items():
            if j == v:
                X[:, v - 1] += w * X[:, i - 1]
    return X


def path_effect(g: WeightedDag, targets, response: int) -> np.ndarray:
    """Total joint effect of the ordered ``targets`` on ``response``.

    Component ``i`` sums, over all directed paths from ``targets[i]`` to
    ``response`` avoiding the other targets, the product of edge weights along
    the path; it is 0 when no such path exists.  Computed by dynamic
    programming over a causal ordering rather than explicit path listing.
    """
    targets = [int(t) for t in targets]
    response = int(response)
    if len(set(targets)) != len(targets):
        raise ValueError("targets must be distinct")
    if response in targets:
        raise ValueError("response must not be an intervention node")
    for v in targets + [response]:
        if not (1 <= v <= g.num_nodes):
            raise GraphFormatError(f"node {v} out of range 1..{g.num_nodes}")
    children: dict[int, list[tuple[int, float]]] = {v: [] for v in range(1, g.num_nodes + 1)}
    for (i, j), w in g.weights.items():
        children[i].append((j, w))
    order = topological_order(g.dag)
    out = np.empty(len(targets))
    for pos, t in enumerate(targets):
        blocked = set(targets) - {t}
        contrib = {response: 1.0}
        for v in reversed(order):
            if v == response:
                continue
            total = 0.0
            for w_node, weight in children[v]:
                if w_node in blocked:
                    continue
                total += weight * contrib.get(w_node, 0.0)
            contrib[v] = total
        out[pos] = contrib[t]
    return out


def intervened_covariance(sem: LinearSem, targets) -> CovMatrix:
    """Covariance after point interventions on ``targets``: all edges into the
    targets are removed and the covariance recomputed."""
    targets = {int(t) for t in targets}
    kept = {e: w for e, w in sem.graph.weights.items() if e[1] not in targets}
    cut = WeightedDag(Dag(sem.num_nodes, kept.keys()), kept)
    return true_covariance(LinearSem(cut, sem.errors))


# ---------------------------------------------------------------------------
# nonparanormal models

TRANSFORM_KINDS = ("identity", "cubic", "exp", "logistic", "piecewise_linear")


@dataclass(frozen=True)
class Transform:
    """Strictly increasing scalar map from a small parametric menu."""

    kind: str = "identity"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform {self.kind!r}")
        object.__setattr__(self, "params", tuple(self.params))
        if self.kind == "cubic":
            if self.params and self.params[0] < 0:
                raise ValueError("cubic linear coefficient must be nonnegative")
        if self.kind == "piecewise_linear":
            xs, ys = self.params
            xs, ys = tuple(map(float, xs)), tuple(map(float, ys))
            if len(xs) != len(ys) or len(xs) < 2:
                raise ValueError("piecewise_linear needs matching knot lists, length >= 2")
            if any(b <= a for a, b in zip(xs, xs[1:])) or any(
                b <= a for a, b in zip(ys, ys[1:])
            ):
                raise ValueError("piecewise_linear knots must be strictly increasing")
            object.__setattr__(self, "params", (xs, ys))

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "identity":
            return z.copy()
        if self.kind == "cubic":
            a = self.params[0] if self.params else 0.0
            return z**3 + a * z
        if self.kind == "exp":
            return np.exp(z)
        if self.kind == "logistic":
            return 1.0 / (1.0 + np.exp(-z))
        xs, ys = self.params
        out = np.interp(z, xs, ys)
        slope_lo = (ys[1] - ys[0]) / (xs[1] - xs[0])
        slope_hi = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        lo, hi = z < xs[0], z > xs[-1]
        out[lo] = ys[0] + slope_lo * (z[lo] - xs[0])
        out[hi] = ys[-1] + slope_hi * (z[hi] - xs[-1])
        return out


@dataclass(frozen=True)
class NpnModel:
    """Coordinatewise monotone transforms of a Gaussian linear SEM.

    The latent vector is the SEM output standardised to unit marginal
    variances, so its covariance is a correlation matrix; the observed vector
    applies one transform per coordinate.
    """

    base: LinearSem
    transforms: tuple[Transform, ...]

    def __init__(self, base: LinearSem, transforms):
        transforms = tuple(transforms)
        if any(e.family != "gaussian" for e in base.errors):
            raise ValueError("nonparanormal base model must have Gaussian errors")
        if len(transforms) != base.num_nodes:
            raise ValueError("need one transform per node")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "transforms", transforms)

    def latent_sds(self) -> np.ndarray:
        return np.sqrt(np.diag(true_covariance(self.base).values))

    def latent_correlation(self) -> CovMatrix:
        """Correlation matrix of the latent Gaussian vector (unit diagonal)."""
        cov = true_covariance(self.base)
        sd = np.sqrt(np.diag(cov.values))
        return CovMatrix(cov.labels, cov.values / np.outer(sd, sd))

    def latent_graph(self) -> WeightedDag:
        """Weighted DAG of the standardised latent SEM: the edge ``i -> j``
        keeps weight ``B_ij * sd_i / sd_j``."""
        sd = self.latent_sds()
        weights = {
            (i, j): w * sd[i - 1] / sd[j - 1]
            for (i, j), w in self.base.graph.weights.items()
        }
        return WeightedDag(self.base.graph.dag, weights)


def npn_sample(m: NpnModel, n: int, seed) -> np.ndarray:
    """Draw from the nonparanormal model: latent Gaussian draw, standardise,
    apply the transforms coordinatewise."""
    Z = sample(m.base, n, seed) / m.latent_sds()
    X = np.empty_like(Z)
    for j, tr in enumerate(m.transforms):
        X[:, j] = tr.apply(Z[:, j])
    return X


# ---------------------------------------------------------------------------
# random instances (simulation plumbing)

def random_dag(p: int, expected_degree: float, seed) -> Dag:
    """Erdos-Renyi DAG: edges drawn on the lower triangle of a random
    permutation with probability ``expected_degree / (p - 1)``."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(p) + 1
    prob = min(1.0, expected_degree / max(p - 1, 1))
    edges = []
    for a in range(p):
        for b in range(a + 1, p):
            if rng.random() < prob:
                edges.append((int(perm[a]), int(perm[b])))
    return Dag(p, edges)


def random_weighted_dag(
    p: int, expected_degree: float, seed, weight_range=(0.1, 1.0)
) -> WeightedDag:
    """Random DAG with weights uniform on ±[lo, hi]; the positive lower bound
    keeps weights away from zero (near-unfaithful cancellations)."""
    rng = np.random.default_rng(seed)
    dag = random_dag(p, expected_degree, rng)
    lo, hi = weight_range
    weights = {}
    for e in sorted(dag.edges):
        w = rng.uniform(lo, hi)
        if rng.random() < 0.5:
            w = -w
        weights[e] = w
    return WeightedDag(dag, weights)


def random_sem(
    p: int,
    expected_degree: float,
    seed,
    weight_range=(0.1, 1.0),
    families=("gaussian",),
) -> LinearSem:
    rng = np.random.default_rng(seed)
    g = random_weighted_dag(p, expected_degree, rng, weight_range)
    specs = []
    for _ in range(p):
        family = families[int(rng.integers(len(families)))]
        specs.append(ErrorSpec(family, 1.0, 6.0 if family == "t" else None))
    return LinearSem(g, tuple(specs))


# ---------------------------------------------------------------------------
# serialization

def sem_to_text(sem: LinearSem) -> str:
    lines = [weighted_dag_to_text(sem.graph).rstrip("\n"), "errors:"]
    for v, e in enumerate(sem.errors, start=1):
        if e.family == "t":
            lines.append(f"{v} t {e.df!r} {e.std!r}")
        else:
            lines.append(f"{v} {e.family} {e.std!r}")
    return "\n".join(lines) + "\n"


def sem_from_text(text: str) -> LinearSem:
    """Parse the graph text format followed by an optional ``errors:`` block,
    one ``<node> <family> [df] <std>`` line per node (default: unit Gaussian)."""
    if "errors:" in text:
        graph_part, err_part = text.split("errors:", 1)
    else:
        graph_part, err_part = text, ""
    g = weighted_dag_from_text(graph_part)
    specs: dict[int, ErrorSpec] = {}
    for lineno, raw in enumerate(err_part.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            v = int(tok[0])
            family = tok[1]
            if family == "t":
                spec = ErrorSpec("t", float(tok[3]), float(tok[2]))
            else:
                spec = ErrorSpec(family, float(tok[2]) if len(tok) > 2 else 1.0)
        except (IndexError, ValueError) as exc:
            raise GraphFormatError(f"errors line {lineno}: cannot parse {line!r}") from exc
        if v in specs:
            raise GraphFormatError(f"duplicate error spec for node {v}")
        specs[v] = spec
    if specs and set(specs) != set(range(1, g.num_nodes + 1)):
        raise GraphFormatError("errors block must cover every node exactly once")
    errors = tuple(specs[v] for v in range(1, g.num_nodes + 1)) if specs else None
    return LinearSem(g, errors)


def write_data_csv(fh, data: np.ndarray) -> None:
    """CSV with header ``X1..Xp``; 17 significant digits per value."""
    data = np.asarray(data)
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "w", newline="")
        close = True
    try:
        writer = csv.writer(fh)
        writer.writerow([f"X{j}" for j in range(1, data.shape[1] + 1)])
        for row in data:
            writer.writerow([f"{x:.17g}" for x in row])
    finally:
        if close:
            fh.close()


def read_data_csv(fh) -> np.ndarray:
    """Read a data CSV; a header row is required and missing values rejected."""
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "r", newline="")
        close = True
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or any(not h.strip() for h in header):
            raise ValueError("data CSV must start with a header row")
        try:
            [float(h) for h in header]
        except ValueError:
            pass
        else:
            raise ValueError("data CSV must start with a header row, got numbers")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header) or any(cell.strip() == "" for cell in row):
                raise ValueError(f"line {lineno}: missing values are not supported")
            rows.append([float(cell) for cell in row])
        if not rows:
            raise ValueError("data CSV contains no rows")
        return np.array(rows)
    finally:
        if close:
            fh.close()


def data_csv_text(data: np.ndarray) -> str:
    buf = io.StringIO()
    write_data_csv(buf, data)
    return buf.getvalue()
