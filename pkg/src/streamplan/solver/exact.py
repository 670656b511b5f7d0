"""Exact branch-and-bound solve for desk-scale instances.

This is the oracle-grade path: it proves optimality by exhausting the
search space, so it is gated on the total number of streamable chunks.
Larger instances belong to solve_lcopg.
"""

from __future__ import annotations

from ._search import search
from .model import (
    Diagnostics,
    OpgInstance,
    OverlapPlan,
    SolveOutcome,
    SolverError,
    SolveStatus,
    assemble_plan,
    objective,
)

DEFAULT_ORACLE_BOUND = 24


class OracleBoundError(SolverError):
    pass


class InfeasibleError(SolverError):
    pass


class SearchLimitError(SolverError):
    pass


def solve_exact(instance: OpgInstance, oracle_bound: int = DEFAULT_ORACLE_BOUND,
                node_budget: int = 0) -> SolveOutcome:
    """Globally minimal plan over all feasible preload/stream assignments.

    Ties resolve to the lexicographically smallest (preload set by weight
    id, z vector, assignment vector). Raises OracleBoundError when the
    instance exceeds the streamable-chunk bound, InfeasibleError when no
    plan satisfies the constraints, and SearchLimitError if a node budget
    stops the search before optimality is proven.
    """
    graph = instance.graph
    searched = sorted(set(graph.weights) - instance.mandatory)
    total_chunks = sum(graph.weights[w].chunk_count for w in searched)
    if total_chunks > oracle_bound:
        raise OracleBoundError(
            f"{total_chunks} streamable chunks exceed the oracle bound "
            f"{oracle_bound}; use solve_lcopg")

    if graph.total_weight_bytes == 0:
        return SolveOutcome(
            plan=OverlapPlan(frozenset(), {}, ()),
            status=SolveStatus.OPTIMAL,
            objective=0.0,
        )

    result = search(
        caps=instance.effective_caps(),
        t=[graph.weights[w].chunk_count for w in searched],
        iw=[graph.weights[w].first_consumer for w in searched],
        wbytes=[graph.weights[w].bytes for w in searched],
        allow_preload=True,
        lam=instance.lam,
        total_bytes=graph.total_weight_bytes,
        n_layers=graph.n_layers,
        base_preload_bytes=sum(graph.weights[w].bytes
                               for w in instance.mandatory),
        node_budget=node_budget,
    )
    if not result.exhausted:
        raise SearchLimitError(
            f"node budget {node_budget} hit after {result.nodes} nodes "
            f"before optimality was proven")
    if not result.found:
        raise InfeasibleError("no feasible plan exists for this instance")

    preload = set(instance.mandatory)
    placements: dict[str, dict[int, int]] = {}
    for i, wid in enumerate(searched):
        if result.preload[i]:
            preload.add(wid)
        else:
            placements[wid] = dict(result.placements[i])
    plan = assemble_plan(graph, preload, placements)
    return SolveOutcome(
        plan=plan,
        status=SolveStatus.OPTIMAL,
        objective=objective(instance, plan),
        diagnostics=Diagnostics(
            effective_caps=tuple(instance.capacities.caps),
            nodes_explored=result.nodes,
        ),
    )
