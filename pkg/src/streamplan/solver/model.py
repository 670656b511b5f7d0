"""Optimization instance, overlap plans, scoring, and constraint checking.

A plan partitions weights into a preload set (fully resident before
execution) and streamed weights, each with an earliest-load layer z and
per-layer chunk assignments covering all its chunks at layers strictly
before its first consumer. The score blends the preloaded byte fraction
with the mean loading distance, both normalized to [0, 1] so the blend
weight keeps its meaning across model sizes.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from ..capacity import CapacityProfile
from ..graph import ModelGraph


class SolverError(ValueError):
    pass


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    HEURISTIC = "heuristic"


@dataclass(frozen=True)
class OpgInstance:
    graph: ModelGraph
    capacities: CapacityProfile
    m_peak: int
    lam: float
    chunk_size: int
    mandatory: frozenset[str]

    @property
    def layer_chunk_budget(self) -> int:
        """Per-layer chunk bound implied by the transformation memory limit."""
        return self.m_peak // self.chunk_size

    def effective_caps(self) -> list[int]:
        budget = self.layer_chunk_budget
        return [min(c, budget) for c in self.capacities.caps]


def build_instance(graph: ModelGraph, capacities: CapacityProfile,
                   m_peak: int, lam: float,
                   preload: frozenset[str] | set[str] = frozenset(),
                   ) -> OpgInstance:
    """Assemble a solver instance; weights consumed by layer 1 are forced
    into the preload set (no preceding layer can transform them), as is
    anything in the caller-supplied preload set."""
    if len(capacities) != graph.n_layers:
        raise SolverError(
            f"capacity profile covers {len(capacities)} layers, graph has "
            f"{graph.n_layers}")
    if not 0.0 <= lam <= 1.0:
        raise SolverError(f"lambda must be in [0, 1], got {lam}")
    if m_peak < 0:
        raise SolverError(f"m_peak must be non-negative, got {m_peak}")
    unknown = set(preload) - set(graph.weights)
    if unknown:
        raise SolverError(f"preload names unknown weights: {sorted(unknown)}")
    mandatory = {wid for wid, w in graph.weights.items() if w.first_consumer == 1}
    mandatory.update(preload)
    return OpgInstance(
        graph=graph,
        capacities=capacities,
        m_peak=m_peak,
        lam=lam,
        chunk_size=graph.chunk_size,
        mandatory=frozenset(mandatory),
    )


@dataclass(frozen=True)
class Assignment:
    weight: str
    layer: int
    chunks: int
    byte_start: int
    byte_end: int


@dataclass(frozen=True)
class OverlapPlan:
    preload: frozenset[str]
    earliest_load: dict[str, int]
    assignments: tuple[Assignment, ...]

    def assignments_for(self, weight: str) -> list[Assignment]:
        return [a for a in self.assignments if a.weight == weight]

    def assignments_at(self, layer: int) -> list[Assignment]:
        return [a for a in self.assignments if a.layer == layer]


def assemble_plan(graph: ModelGraph, preload: set[str] | frozenset[str],
                  placements: dict[str, dict[int, int]]) -> OverlapPlan:
    """Build a plan from per-weight {layer: chunks} maps.

    Byte offsets partition [0, bytes) in increasing layer order; every chunk
    spans chunk_size bytes except a weight's final chunk, which is clipped.
    """
    assignments = []
    earliest = {}
    size = graph.chunk_size
    for wid in sorted(placements):
        weight = graph.weights[wid]
        done = 0
        layers = sorted(placements[wid])
        earliest[wid] = layers[0]
        for layer in layers:
            chunks = placements[wid][layer]
            if chunks <= 0:
                continue
            assignments.append(Assignment(
                weight=wid,
                layer=layer,
                chunks=chunks,
                byte_start=done * size,
                byte_end=min((done + chunks) * size, weight.bytes),
            ))
            done += chunks
    return OverlapPlan(
        preload=frozenset(preload),
        earliest_load=earliest,
        assignments=tuple(assignments),
    )


def objective(instance: OpgInstance, plan: OverlapPlan) -> float:
    """lam * preloaded-byte fraction + (1 - lam) * mean-distance fraction.

    The distance term averages (first_consumer - z) over streamed weights
    and divides by the layer count, so both terms live in [0, 1]; with no
    streamed weights the term is zero.
    """
    graph = instance.graph
    total = graph.total_weight_bytes
    if total == 0:
        return 0.0
    preload_bytes = sum(graph.weights[w].bytes for w in plan.preload)
    streamed = plan.earliest_load
    dist_sum = sum(graph.weights[w].first_consumer - z
                   for w, z in streamed.items())
    dist_term = (dist_sum / (graph.n_layers * len(streamed))) if streamed else 0.0
    return instance.lam * (preload_bytes / total) + (1.0 - instance.lam) * dist_term


def check_constraints(instance: OpgInstance, plan: OverlapPlan,
                      capacities: CapacityProfile | None = None) -> list[str]:
    """Return all constraint violations (empty list = feasible plan).

    Checks completeness (C0), loading-distance implication and offset
    structure (C1), the per-layer transformation memory limit (C2), the
    layer load capacity (C3, against `capacities` or the instance's own),
    and that forced preloads are honored.
    """
    graph = instance.graph
    caps = (capacities or instance.capacities).caps
    size = instance.chunk_size
    violations = []

    for wid in plan.preload:
        if wid not in graph.weights:
            violations.append(f"preload references unknown weight {wid!r}")
    streamed = set(plan.earliest_load)
    for wid in streamed & plan.preload:
        violations.append(f"weight {wid!r} both preloaded and streamed")
    for wid in instance.mandatory - plan.preload:
        violations.append(
            f"weight {wid!r} must be preloaded (consumed at layer "
            f"{graph.weights[wid].first_consumer} with no room to stream)")
    for wid in set(graph.weights) - streamed - plan.preload:
        violations.append(f"weight {wid!r} neither preloaded nor streamed")

    by_weight: dict[str, list[Assignment]] = {}
    per_layer_chunks: dict[int, int] = {}
    for a in plan.assignments:
        if a.weight not in graph.weights:
            violations.append(f"assignment references unknown weight {a.weight!r}")
            continue
        if a.weight in plan.preload:
            violations.append(f"preloaded weight {a.weight!r} has assignments")
            continue
        by_weight.setdefault(a.weight, []).append(a)
        per_layer_chunks[a.layer] = per_layer_chunks.get(a.layer, 0) + a.chunks
        if not 1 <= a.layer <= graph.n_layers:
            violations.append(f"assignment layer {a.layer} out of range")

    for wid in streamed:
        weight = graph.weights[wid]
        parts = sorted(by_weight.get(wid, []), key=lambda a: a.layer)
        total_chunks = sum(a.chunks for a in parts)
        if total_chunks != weight.chunk_count:
            violations.append(
                f"C0: weight {wid!r} assigns {total_chunks} chunks, "
                f"needs {weight.chunk_count}")
        z = plan.earliest_load[wid]
        if not parts or parts[0].layer != z:
            violations.append(
                f"C1: weight {wid!r} earliest_load {z} does not match its "
                f"first assignment")
        offset = 0
        for a in parts:
            if a.layer >= weight.first_consumer:
                violations.append(
                    f"C1: weight {wid!r} assigned at layer {a.layer}, not "
                    f"before first consumer {weight.first_consumer}")
            if a.layer < z:
                violations.append(
                    f"C1: weight {wid!r} assigned at layer {a.layer} before "
                    f"earliest load {z}")
            if a.byte_start != offset:
                violations.append(
                    f"offsets: weight {wid!r} layer {a.layer} starts at "
                    f"{a.byte_start}, expected {offset}")
            expected_end = min(a.byte_start + a.chunks * size, weight.bytes)
            if a.byte_end != expected_end:
                violations.append(
                    f"offsets: weight {wid!r} layer {a.layer} ends at "
                    f"{a.byte_end}, expected {expected_end}")
            offset = a.byte_end
        if parts and total_chunks == weight.chunk_count and offset != weight.bytes:
            violations.append(
                f"offsets: weight {wid!r} covers [0, {offset}), "
                f"needs [0, {weight.bytes})")

    for layer, chunks in sorted(per_layer_chunks.items()):
        if chunks * size > instance.m_peak:
            violations.append(
                f"C2: layer {layer} transforms {chunks * size} bytes, "
                f"limit {instance.m_peak}")
        if chunks > caps[layer - 1]:
            violations.append(
                f"C3: layer {layer} transforms {chunks} chunks, "
                f"capacity {caps[layer - 1]}")
    return violations


@dataclass(frozen=True)
class Diagnostics:
    tiers_fired: tuple[int, ...] = ()
    forced_preloads: tuple[str, ...] = ()
    effective_caps: tuple[int, ...] = ()
    soft_layers: tuple[int, ...] = ()
    nodes_explored: int = 0
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class SolveOutcome:
    plan: OverlapPlan
    status: SolveStatus
    objective: float
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def outcome_to_json(outcome: SolveOutcome) -> str:
    """Serialize a plan with its meta block; byte-stable across runs."""
    plan = outcome.plan
    streams = []
    for wid in sorted(plan.earliest_load):
        streams.append({
            "weight": wid,
            "z": plan.earliest_load[wid],
            "assignments": [
                {
                    "layer": a.layer,
                    "chunks": a.chunks,
                    "byte_start": a.byte_start,
                    "byte_end": a.byte_end,
                }
                for a in sorted(plan.assignments_for(wid), key=lambda a: a.layer)
            ],
        })
    doc = {
        "preload": sorted(plan.preload),
        "streams": streams,
        "meta": {
            "status": outcome.status.value,
            "objective": outcome.objective,
            "tiers_fired": list(outcome.diagnostics.tiers_fired),
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def outcome_from_json(text: str) -> SolveOutcome:
    doc = json.loads(text)
    assignments = []
    earliest = {}
    for stream in doc["streams"]:
        wid = stream["weight"]
        earliest[wid] = stream["z"]
        for a in stream["assignments"]:
            assignments.append(Assignment(
                weight=wid,
                layer=a["layer"],
                chunks=a["chunks"],
                byte_start=a["byte_start"],
                byte_end=a["byte_end"],
            ))
    meta = doc.get("meta", {})
    return SolveOutcome(
        plan=OverlapPlan(
            preload=frozenset(doc["preload"]),
            earliest_load=earliest,
            assignments=tuple(assignments),
        ),
        status=SolveStatus(meta.get("status", "feasible")),
        objective=meta.get("objective", 0.0),
        diagnostics=Diagnostics(tiers_fired=tuple(meta.get("tiers_fired", ()))),
    )
