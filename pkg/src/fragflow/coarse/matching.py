"""Junction-slot matching problems, maximum-weight matching and its oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from fragflow.coarse.graph import CoarseGraph, Matching, SlotRef


@dataclass(frozen=True, eq=False)
class MatchProblem:
    """Match nodes are junction slots; candidates join slots of adjacent nodes.

    ``candidates[k] = (i, j)`` indexes into ``slots`` with ``i < j``.
    """

    slots: tuple[SlotRef, ...]
    candidates: tuple[tuple[int, int], ...]
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != len(self.candidates):
            raise ValueError("one weight per candidate required")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", w)

    def with_weights(self, weights) -> "MatchProblem":
        return MatchProblem(self.slots, self.candidates, weights)

    def offset(self) -> float:
        """Cardinality-dominance shift: any extra edge outweighs all logits."""
        return 1.0 + float(np.abs(self.weights).sum())

    def to_matching(self, chosen) -> Matching:
        return Matching.of((self.slots[self.candidates[k][0]], self.slots[self.candidates[k][1]]) for k in chosen)

    def candidate_index(self) -> dict[tuple[SlotRef, SlotRef], int]:
        return {(self.slots[i], self.slots[j]): k for k, (i, j) in enumerate(self.candidates)}

    def score(self, matching: Matching) -> float:
        """Objective value Σ(w + C) of ``matching``."""
        index = self.candidate_index()
        c = self.offset()
        return float(sum(self.weights[index[p]] + c for p in sorted(matching.pairs)))


def match_problem(coarse: CoarseGraph, weights=None) -> MatchProblem:
    slots = tuple((node, s) for node in range(len(coarse)) for s in range(coarse.arities[node]))
    candidates = []
    for i, a in enumerate(slots):
        for j in range(i + 1, len(slots)):
            b = slots[j]
            if a[0] != b[0] and coarse.adjacency[a[0], b[0]]:
                candidates.append((i, j))
    if weights is None:
        weights = np.zeros(len(candidates))
    return MatchProblem(slots, tuple(candidates), weights)


def blossom_match(problem: MatchProblem) -> Matching:
    """Maximum of Σ(w + C) over matchings, C = 1 + Σ|w|.

    The shift makes every maximum-weight matching maximum-cardinality, so raw
    logits may be negative. Solved with networkx's blossom implementation.
    """
    if not problem.candidates:
        return Matching(frozenset())
    c = problem.offset()
    g = nx.Graph()
    g.add_nodes_from(range(len(problem.slots)))
    for k, (i, j) in enumerate(problem.candidates):
        g.add_edge(i, j, weight=float(problem.weights[k]) + c, k=k)
    chosen = [g.edges[u, v]["k"] for u, v in nx.max_weight_matching(g, maxcardinality=False)]
    return problem.to_matching(sorted(chosen))


def brute_force_match(problem: MatchProblem) -> Matching:
    """Exhaustive oracle for small problems; ties keep the first found."""
    c = problem.offset()
    incident: dict[int, list[int]] = {}
    for k, (i, j) in enumerate(problem.candidates):
        incident.setdefault(i, []).append(k)
    best_value = 0.0
    best: list[int] = []
    n = len(problem.slots)

    def search(v: int, used: set, chosen: list, value: float) -> None:
        nonlocal best_value, best
        if v == n:
            if value > best_value + 1e-12:
                best_value, best = value, list(chosen)
            return
        search(v + 1, used, chosen, value)
        if v in used:
            return
        for k in incident.get(v, ()):
            j = problem.candidates[k][1]
            if j in used:
                continue
            used.add(v)
            used.add(j)
            chosen.append(k)
            search(v + 1, used, chosen, value + problem.weights[k] + c)
            chosen.pop()
            used.discard(v)
            used.discard(j)

    search(0, set(), [], 0.0)
    return problem.to_matching(best)


def resolve_matching(problem: MatchProblem, matching: Matching) -> Matching:
    """Keep the highest-weight pair on each coarse edge.

    Maximum-cardinality matching may realize one coarse edge through two
    slot pairs; only one inter-fragment bond per edge is kept and the freed
    slots are later capped with hydrogen.
    """
    index = problem.candidate_index()
    best: dict[tuple[int, int], tuple[float, tuple[SlotRef, SlotRef]]] = {}
    for pair in sorted(matching.pairs):
        edge = tuple(sorted((pair[0][0], pair[1][0])))
        w = float(problem.weights[index[pair]])
        if edge not in best or w > best[edge][0]:
            best[edge] = (w, pair)
    return Matching(frozenset(p for _, p in best.values()))
