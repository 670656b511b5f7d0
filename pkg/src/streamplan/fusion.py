"""Fusion cost scoring, split feasibility, and the unfuse-and-resolve loop.

A fused kernel exposes one synchronization stage, so its load capacity
collapses to the minimum over members. When that starves the planner into
forced preloads or soft-scaled capacities, splitting the worst fused kernel
restores schedulable capacity; splits are accepted only when the parts gain
enough capacity over the whole and never touch blocks with a hierarchical
member.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .capacity import (
    DEFAULT_THRESHOLDS,
    LatencyModel,
    ThresholdConfig,
    _member_capacity,
    capacity_profile,
)
from .graph import (
    GraphError,
    MemberOp,
    ModelGraph,
    OperatorClass,
    OperatorNode,
    derive_weight_metadata,
    make_fused_node,
)
from .solver import (
    LcopgConfig,
    OpgInstance,
    OverlapPlan,
    SolveOutcome,
    build_instance,
    solve_lcopg,
)


@dataclass(frozen=True)
class FusionPenalty:
    """How much a fused kernel's shrunken capacity costs the plan."""

    preload_bytes: int      # bytes newly forced into the preload set
    distance_increase: int  # summed growth in loading distance
    lambda_pen: float
    mu: float

    @property
    def score(self) -> float:
        return self.lambda_pen * self.preload_bytes + self.mu * self.distance_increase


@dataclass(frozen=True)
class SplitDecision:
    split: bool
    index: int = 0          # members[:index] | members[index:]
    left_capacity: int = 0
    right_capacity: int = 0
    reason: str = ""


def fused_capacity(member_capacities: list[int]) -> int:
    """Capacity of a fused kernel: the minimum over its members."""
    if not member_capacities:
        raise GraphError("fused kernel needs at least one member")
    return min(member_capacities)


def member_capacities(node: OperatorNode, model: LatencyModel,
                      thresholds: ThresholdConfig, chunk_size: int) -> list[int]:
    members = node.members or (node,)
    return [_member_capacity(model, thresholds, m, chunk_size) for m in members]


def fusion_penalty(fused: OperatorNode, baseline_plan: OverlapPlan,
                   fused_plan: OverlapPlan, baseline_graph: ModelGraph,
                   fused_graph: ModelGraph, lambda_pen: float,
                   mu: float) -> FusionPenalty:
    """Score a fused kernel by comparing plans with and without it fused.

    New preloads are weights in the fused plan's preload set only; the
    distance term sums loading-distance growth for weights streamed in both
    plans (each graph supplies its own consumer indices, since splitting
    renumbers layers).
    """
    for wid in fused_plan.preload | set(fused_plan.earliest_load):
        if wid not in fused_graph.weights:
            raise GraphError(f"plan/graph mismatch: unknown weight {wid!r}")
    new_preloads = fused_plan.preload - baseline_plan.preload
    preload_bytes = sum(fused_graph.weights[w].bytes for w in new_preloads)
    grown = 0
    for wid, z in fused_plan.earliest_load.items():
        if wid not in baseline_plan.earliest_load:
            continue
        dist_fused = fused_graph.weights[wid].first_consumer - z
        dist_base = (baseline_graph.weights[wid].first_consumer
                     - baseline_plan.earliest_load[wid])
        if dist_fused > dist_base:
            grown += dist_fused - dist_base
    return FusionPenalty(
        preload_bytes=preload_bytes,
        distance_increase=grown,
        lambda_pen=lambda_pen,
        mu=mu,
    )


def split_check(fused: OperatorNode, caps: list[int],
                alpha: float) -> SplitDecision:
    """Decide whether splitting the fused kernel gains enough capacity.

    Evaluates every binary split point (members stay consecutive, so DAG
    dependencies are preserved by construction); accepts the one maximizing
    the combined capacity, provided it reaches (1 + alpha) times the fused
    capacity. Blocks containing a hierarchical member are always retained.
    """
    if alpha <= 0:
        raise GraphError(f"alpha must be positive, got {alpha}")
    members = fused.members
    if len(members) < 2:
        return SplitDecision(split=False, reason="single member")
    if any(m.op_class is OperatorClass.HIERARCHICAL for m in members):
        return SplitDecision(split=False, reason="hierarchical member")
    c_fused = fused_capacity(caps)
    best: SplitDecision | None = None
    for k in range(1, len(members)):
        left = min(caps[:k])
        right = min(caps[k:])
        if left + right < (1 + alpha) * c_fused:
            continue
        if best is None or left + right > best.left_capacity + best.right_capacity:
            best = SplitDecision(split=True, index=k,
                                 left_capacity=left, right_capacity=right)
    if best is None:
        return SplitDecision(split=False, reason="capacity gain below threshold")
    return best


def apply_split(graph: ModelGraph, node_id: int, index: int) -> ModelGraph:
    """Replace fused node node_id with its two halves and renumber layers.

    The left half keeps the old node's predecessors; the right half follows
    the left; consumers of the old node now depend on the right half.
    """
    old = graph.node(node_id)
    if not old.members or not 1 <= index < len(old.members):
        raise GraphError(f"node {node_id}: invalid split point {index}")

    def part(members: tuple[MemberOp, ...], new_id: int,
             preds: tuple[int, ...]) -> OperatorNode:
        if len(members) == 1:
            m = members[0]
            return OperatorNode(
                id=new_id, kind=m.kind, input_bytes=m.input_bytes,
                base_latency_us=m.base_latency_us, weight_ids=m.weight_ids,
                predecessors=preds)
        return make_fused_node(new_id, list(members), preds)

    def shift(layer: int) -> int:
        return layer + 1 if layer > node_id else layer

    nodes = []
    for node in graph.nodes:
        if node.id == node_id:
            nodes.append(part(old.members[:index], node_id, old.predecessors))
            nodes.append(part(old.members[index:], node_id + 1, (node_id,)))
            continue
        preds = tuple(
            node_id + 1 if p == node_id else shift(p)
            for p in node.predecessors)
        nodes.append(replace(node, id=shift(node.id), predecessors=preds))
    split_graph = ModelGraph(
        name=graph.name,
        chunk_size=graph.chunk_size,
        nodes=tuple(nodes),
        weights={wid: replace(w) for wid, w in graph.weights.items()},
    )
    return derive_weight_metadata(split_graph)


def _needs_adjustment(outcome: SolveOutcome) -> bool:
    tiers = outcome.diagnostics.tiers_fired
    return any(t >= 2 for t in tiers) or 1 in tiers


def adaptive_fusion(graph: ModelGraph, model: LatencyModel, m_peak: int,
                    lam: float, thresholds: ThresholdConfig = DEFAULT_THRESHOLDS,
                    solver_config: LcopgConfig | None = None,
                    alpha: float = 0.2, lambda_pen: float = 0.5, mu: float = 0.5,
                    max_rounds: int = 8) -> tuple[ModelGraph, SolveOutcome]:
    """Unfuse-and-resolve loop.

    Solve; while the solve needed forced preloads or soft-scaled capacities,
    rank the splittable fused kernels by fusion penalty (each candidate is
    scored against a trial solve of the graph with that kernel split), split
    the worst offender, and re-solve on the adjusted graph. Stops on a clean
    solve, when no candidate passes the split check, or after max_rounds.
    """
    if max_rounds < 1:
        raise GraphError(f"max_rounds must be >= 1, got {max_rounds}")

    def solve(g: ModelGraph) -> tuple[OpgInstance, SolveOutcome]:
        profile = capacity_profile(g, model, thresholds)
        instance = build_instance(g, profile, m_peak, lam)
        return instance, solve_lcopg(instance, solver_config)

    _, outcome = solve(graph)
    for _ in range(max_rounds):
        if not _needs_adjustment(outcome):
            break
        candidates = []
        for node in graph.nodes:
            if not node.is_fused:
                continue
            caps = member_capacities(node, model, thresholds, graph.chunk_size)
            decision = split_check(node, caps, alpha)
            if decision.split:
                candidates.append((node, decision))
        if not candidates:
            break
        ranked = []
        for node, decision in candidates:
            trial_graph = apply_split(graph, node.id, decision.index)
            _, trial = solve(trial_graph)
            penalty = fusion_penalty(
                node, baseline_plan=trial.plan, fused_plan=outcome.plan,
                baseline_graph=trial_graph, fused_graph=graph,
                lambda_pen=lambda_pen, mu=mu)
            ranked.append((-penalty.score, node.id, trial_graph, trial))
        ranked.sort(key=lambda item: (item[0], item[1]))
        _, _, graph, outcome = ranked[0]
    return graph, outcome
