"""Load-capacity-aware overlap planning with tiered fallbacks.

Tier 0 slides a fixed-size window over the execution order and exactly
optimizes the streaming assignments of weights first consumed inside it,
treating earlier windows' placements as fixed capacity usage. When a window
cannot be streamed, the fallback ladder fires in order: soft-scale the
window's capacities once (tier 1), force the largest still-streamed weight
of the window into the preload set and re-run (tier 2, repeated as needed),
and on time expiry finish the remaining suffix with the greedy packer
(tier 3). Full preload is always feasible, so the procedure terminates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from ._search import search
from .model import (
    Diagnostics,
    OpgInstance,
    OverlapPlan,
    SolveOutcome,
    SolveStatus,
    assemble_plan,
    objective,
)


@dataclass(frozen=True)
class LcopgConfig:
    time_limit_s: float = 150.0
    window: int = 64
    soft_factor: float = 1.25
    node_budget: int = 50_000  # per window attempt; 0 = unlimited


def greedy_plan(instance: OpgInstance) -> OverlapPlan:
    """Backup packer: latest-layer-first fills in decreasing consumer order.

    Processes weights by decreasing first consumer and fills their chunks
    into the closest preceding layers with residual capacity; a weight whose
    chunks do not all fit is preloaded whole (its partial fills are undone).
    """
    graph = instance.graph
    res = instance.effective_caps()
    preload = set(instance.mandatory)
    placements: dict[str, dict[int, int]] = {}
    order = sorted(
        (wid for wid in graph.weights if wid not in instance.mandatory),
        key=lambda wid: (-graph.weights[wid].first_consumer, wid))
    for wid in order:
        weight = graph.weights[wid]
        rem = weight.chunk_count
        taken: dict[int, int] = {}
        for layer in range(weight.first_consumer - 1, 0, -1):
            if rem == 0:
                break
            take = min(rem, res[layer - 1])
            if take:
                taken[layer] = take
                res[layer - 1] -= take
                rem -= take
        if rem:
            for layer, take in taken.items():
                res[layer - 1] += take
            preload.add(wid)
        else:
            placements[wid] = taken
    return assemble_plan(graph, preload, placements)


def solve_lcopg(instance: OpgInstance,
                config: LcopgConfig | None = None) -> SolveOutcome:
    config = config or LcopgConfig()
    graph = instance.graph
    n = graph.n_layers
    deadline = time.monotonic() + config.time_limit_s

    budget = instance.layer_chunk_budget
    cap_c3 = list(instance.capacities.caps)  # soft-scalable C3 capacities
    used = [0] * n
    forced = set(instance.mandatory)
    placements: dict[str, dict[int, int]] = {}
    tiers: set[int] = {0} if set(graph.weights) - forced else set()
    soft_layers: set[int] = set()
    notes: list[str] = []
    total_nodes = 0

    def residuals() -> list[int]:
        return [min(cap_c3[i], budget) - used[i] for i in range(n)]

    def run_greedy_suffix(pending: list[str]):
        """Tier 3: pack every still-unplaced weight greedily."""
        res = residuals()
        for wid in sorted(pending,
                          key=lambda w: (-graph.weights[w].first_consumer, w)):
            weight = graph.weights[wid]
            rem = weight.chunk_count
            taken: dict[int, int] = {}
            for layer in range(weight.first_consumer - 1, 0, -1):
                if rem == 0:
                    break
                take = min(rem, res[layer - 1])
                if take:
                    taken[layer] = take
                    res[layer - 1] -= take
                    rem -= take
            if rem:
                for layer, take in taken.items():
                    res[layer - 1] += take
                forced.add(wid)
            else:
                placements[wid] = taken
                for layer, take in taken.items():
                    used[layer - 1] += take

    expired = False
    for lo in range(1, n + 1, config.window):
        hi = min(lo + config.window - 1, n)
        window_weights = sorted(
            wid for wid, w in graph.weights.items()
            if lo <= w.first_consumer <= hi and wid not in forced)
        soft_applied = False
        while True:
            searched = [w for w in window_weights if w not in forced]
            if not searched:
                break
            if time.monotonic() > deadline:
                expired = True
                break

            res = residuals()
            feasible_quick = all(
                graph.weights[w].chunk_count
                <= sum(res[:graph.weights[w].first_consumer - 1])
                for w in searched)
            found = False
            if feasible_quick:
                result = search(
                    caps=res,
                    t=[graph.weights[w].chunk_count for w in searched],
                    iw=[graph.weights[w].first_consumer for w in searched],
                    wbytes=[graph.weights[w].bytes for w in searched],
                    allow_preload=False,
                    lam=instance.lam,
                    total_bytes=max(1, graph.total_weight_bytes),
                    n_layers=n,
                    base_preload_bytes=sum(graph.weights[w].bytes
                                           for w in forced),
                    node_budget=config.node_budget,
                    deadline=deadline,
                )
                total_nodes += result.nodes
                found = result.found
                if found and not result.exhausted:
                    notes.append(
                        f"window {lo}-{hi}: accepted incumbent after budget")
            if found:
                for i, wid in enumerate(searched):
                    placements[wid] = dict(result.placements[i])
                    for layer, chunks in result.placements[i]:
                        used[layer - 1] += chunks
                break

            if time.monotonic() > deadline:
                expired = True
                break
            if not soft_applied:
                tiers.add(1)
                soft_applied = True
                for layer in range(lo, hi + 1):
                    scaled = int(cap_c3[layer - 1] * config.soft_factor)
                    if scaled != cap_c3[layer - 1]:
                        cap_c3[layer - 1] = scaled
                        soft_layers.add(layer)
            else:
                tiers.add(2)
                victim = max(searched,
                             key=lambda w: (graph.weights[w].bytes, w))
                forced.add(victim)
        if expired:
            pending = [wid for wid in graph.weights
                       if wid not in forced and wid not in placements]
            if pending:
                tiers.add(3)
                notes.append(f"time limit hit; greedy packing "
                             f"{len(pending)} remaining weights")
                run_greedy_suffix(pending)
            break

    plan = assemble_plan(graph, forced, placements)
    status = SolveStatus.HEURISTIC if 3 in tiers else SolveStatus.FEASIBLE
    return SolveOutcome(
        plan=plan,
        status=status,
        objective=objective(instance, plan),
        diagnostics=Diagnostics(
            tiers_fired=tuple(sorted(tiers)),
            forced_preloads=tuple(sorted(forced - instance.mandatory)),
            effective_caps=tuple(cap_c3),
            soft_layers=tuple(sorted(soft_layers)),
            nodes_explored=total_nodes,
            notes=tuple(notes),
        ),
    )
