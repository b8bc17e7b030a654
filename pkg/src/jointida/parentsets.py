"""Extraction of jointly valid parent-set tuples for intervention nodes from a
CPDAG, plus multiset-equivalence utilities.

A tuple of parent sets is *jointly valid* when some DAG in the equivalence
class realises all of them simultaneously.  The semi-local algorithm
enumerates each undirected component containing a target independently and
cross-combines, which preserves multiplicity information up to a constant
ratio against full-class enumeration.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import product

from .exceptions import EnumerationSizeError, NoConsistentExtensionError
from .graph import (
    Pdag,
    UndirectedComponent,
    _locally_valid_sibling_subsets,
    enumerate_equivalence_class,
    is_chordal,
    parents,
    undirected_components,
)
from .opin import ParentAssignment

AssignmentKey = tuple[frozenset[int], ...]

DEFAULT_MAX_ENUM = 12  # component node-count cap for exact enumeration
GLOBAL_ENUM_NODE_CAP = 16  # refuse brute-force class listing above this


def _assignment_sort_key(key: AssignmentKey):
    return tuple(tuple(sorted(s)) for s in key)


@dataclass(frozen=True, eq=False)
class ParentMultiset:
    """Multiset of parent-set tuples for an ordered list of targets.

    ``superset`` marks results produced through the local-combination
    fallback, which may strictly contain the jointly valid tuples.
    """

    targets: tuple[int, ...]
    entries: dict[AssignmentKey, int] = field(hash=False)
    superset: bool = False

    def __init__(self, targets, entries, superset: bool = False):
        targets = tuple(int(t) for t in targets)
        clean: dict[AssignmentKey, int] = {}
        for key, count in dict(entries).items():
            key = tuple(frozenset(s) for s in key)
            if len(key) != len(targets):
                raise ValueError("every tuple must have one parent set per target")
            if count < 1:
                raise ValueError("multiplicities must be >= 1")
            clean[key] = clean.get(key, 0) + int(count)
        ordered = dict(sorted(clean.items(), key=lambda kv: _assignment_sort_key(kv[0])))
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(self, "superset", bool(superset))

    @property
    def total(self) -> int:
        return sum(self.entries.values())

    def distinct(self) -> set[AssignmentKey]:
        return set(self.entries)

    def assignments(self):
        """Yield ``(ParentAssignment, multiplicity)`` in deterministic order."""
        for key, count in self.entries.items():
            yield ParentAssignment(self.targets, key), count

    def to_json_obj(self) -> dict:
        return {
            "targets": list(self.targets),
            "entries": [
                {"parent_sets": [sorted(s) for s in key], "multiplicity": count}
                for key, count in self.entries.items()
            ],
            "superset": self.superset,
        }


def _component_pdag(comp: UndirectedComponent) -> tuple[Pdag, dict[int, int]]:
    """Relabel a component to 1..m for standalone enumeration."""
    to_local = {v: i + 1 for i, v in enumerate(comp.nodes)}
    edges = [(to_local[a], to_local[b]) for a, b in comp.edges]
    return Pdag(len(comp.nodes), (), edges), to_local


def _component_tuples(
    comp: UndirectedComponent, comp_targets: list[int]
) -> Counter[AssignmentKey]:
    """Multiset of per-component parent tuples from full component enumeration."""
    local_pdag, to_local = _component_pdag(comp)
    from_local = {i: v for v, i in to_local.items()}
    counts: Counter[AssignmentKey] = Counter()
    for dag in enumerate_equivalence_class(local_pdag):
        key = tuple(
            frozenset(from_local[u] for u in parents(dag, to_local[t]))
            for t in comp_targets
        )
        counts[key] += 1
    return counts


def _component_tuples_local(
    c: Pdag, comp_targets: list[int]
) -> Counter[AssignmentKey]:
    """Fallback: cross-combine locally valid orientations of each target's own
    incident edges (may be a strict superset of the jointly valid tuples)."""
    per_target = [_locally_valid_sibling_subsets(c, t) for t in comp_targets]
    counts: Counter[AssignmentKey] = Counter()
    for combo in product(*per_target):
        counts[tuple(combo)] += 1
    return counts


def jointly_valid_parent_sets(
    c: Pdag, targets, max_enum: int = DEFAULT_MAX_ENUM
) -> ParentMultiset:
    """All jointly valid parent-set tuples of ``targets``, semi-locally.

    Per undirected component containing a target, enumerate the component's
    DAGs and collect that component's parent tuples; cross-combine components;
    union each target's already-directed parents.  A component that is larger
    than ``max_enum`` nodes or not chordal (possible for estimated graphs) is
    handled by combining locally valid parent sets instead, and the result is
    flagged as a possible superset.
    """
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise ValueError("targets must be distinct")
    for t in targets:
        if not (1 <= t <= c.num_nodes):
            raise ValueError(f"target {t} out of range 1..{c.num_nodes}")
    superset = False
    comp_results: list[tuple[list[int], Counter[AssignmentKey]]] = []
    for comp in undirected_components(c):
        comp_targets = [t for t in targets if t in comp.nodes]
        if not comp_targets:
            continue
        if len(comp.nodes) > max_enum or not is_chordal(comp):
            counts = _component_tuples_local(c, comp_targets)
            superset = True
        else:
            try:
                counts = _component_tuples(comp, comp_targets)
            except NoConsistentExtensionError:
                counts = _component_tuples_local(c, comp_targets)
                superset = True
        comp_results.append((comp_targets, counts))

    dir_parents = {t: frozenset(parents(c, t)) for t in targets}
    combined: Counter[AssignmentKey] = Counter()
    keys = [list(counts.items()) for _, counts in comp_results]
    for chosen in product(*keys):
        undirected_part: dict[int, frozenset[int]] = {}
        mult = 1
        for (comp_targets, _), (key, count) in zip(comp_results, chosen):
            mult *= count
            for t, s in zip(comp_targets, key):
                undirected_part[t] = s
        full = tuple(
            undirected_part.get(t, frozenset()) | dir_parents[t] for t in targets
        )
        combined[full] += mult
    return ParentMultiset(targets, combined, superset=superset)


def global_parent_sets(c: Pdag, targets) -> ParentMultiset:
    """Brute force over the whole equivalence class; the oracle the semi-local
    algorithm is checked against."""
    targets = [int(t) for t in targets]
    if c.num_nodes > GLOBAL_ENUM_NODE_CAP:
        raise EnumerationSizeError(
            f"brute-force enumeration refused for {c.num_nodes} nodes "
            f"(cap {GLOBAL_ENUM_NODE_CAP})"
        )
    counts: Counter[AssignmentKey] = Counter()
    for dag in enumerate_equivalence_class(c):
        counts[tuple(frozenset(parents(dag, t)) for t in targets)] += 1
    return ParentMultiset(targets, counts)


def local_combination_parent_sets(c: Pdag, targets) -> ParentMultiset:
    """Cartesian product of each target's locally valid parent sets.

    Contains every jointly valid tuple but possibly more; kept as the
    documented superset baseline.
    """
    targets = [int(t) for t in targets]
    from .graph import locally_valid_parent_sets as lvps

    per_target = [sorted(lvps(c, t), key=lambda s: tuple(sorted(s))) for t in targets]
    counts: Counter[AssignmentKey] = Counter()
    for combo in product(*per_target):
        counts[tuple(combo)] += 1
    return ParentMultiset(targets, counts, superset=True)


def multisets_equivalent(a, b) -> bool:
    """Equality of distinct elements plus constant multiplicity ratio.

    Accepts :class:`ParentMultiset`, the effect multisets from the pipeline
    module, or plain ``{element: count}`` mappings.  Ratios are compared by
    integer cross-multiplication.
    """
    ca = _as_counts(a)
    cb = _as_counts(b)
    if set(ca) != set(cb):
        return False
    if not ca:
        return True
    pivot = next(iter(sorted(ca, key=repr)))
    na, nb = ca[pivot], cb[pivot]
    return all(ca[e] * nb == cb[e] * na for e in ca)


def _as_counts(m) -> dict:
    if hasattr(m, "entries"):
        entries = m.entries
        if isinstance(entries, dict):
            return dict(entries)
    if isinstance(m, dict):
        return dict(m)
    raise TypeError(f"cannot interpret {type(m).__name__} as a multiset")
