"""Deterministic discrete-event replay of plans and baseline strategies.

Cost model: a single FIFO disk channel delivers weight bytes at a fixed
rate into unified memory (UM); transforming UM bytes into texture memory
(TM) is free during execution because the rewritten kernels hide it inside
compute, which instead shows up as extra predicted kernel latency. Only
disk arrival can stall a layer. During the init phase the preload set moves
through a two-stage pipeline: loads serialize on the disk channel while a
dedicated transform stage drains them concurrently.

Residency rules: a streamed weight occupies UM from the start of its disk
load until the end of the layer that transforms its last chunk, and TM from
each chunk's transform until the end of its last consuming layer. Preloaded
weights occupy TM for the whole model run. All memory accounting is
piecewise constant over these events.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

from .capacity import LatencyModel, predict_latency
from .graph import ModelGraph
from .solver import OverlapPlan


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class HardwareConfig:
    disk_bandwidth: float              # bytes per microsecond
    init_transform_throughput: float   # bytes per microsecond
    label: str = ""

    def __post_init__(self):
        if self.disk_bandwidth <= 0 or self.init_transform_throughput <= 0:
            raise SimulationError("hardware rates must be positive")


def hardware_to_json(hw: HardwareConfig) -> str:
    return json.dumps({
        "disk_bandwidth_bytes_per_us": hw.disk_bandwidth,
        "init_transform_throughput_bytes_per_us": hw.init_transform_throughput,
        "label": hw.label,
    }, indent=2) + "\n"


def hardware_from_json(text: str) -> HardwareConfig:
    doc = json.loads(text)
    return HardwareConfig(
        disk_bandwidth=doc["disk_bandwidth_bytes_per_us"],
        init_transform_throughput=doc["init_transform_throughput_bytes_per_us"],
        label=doc.get("label", ""),
    )


# --- strategies --------------------------------------------------------

@dataclass(frozen=True)
class PlanStrategy:
    plan: OverlapPlan
    label = "plan"


@dataclass(frozen=True)
class FullPreload:
    label = "full-preload"


@dataclass(frozen=True)
class AlwaysNext:
    label = "always-next"


@dataclass(frozen=True)
class SameOpType:
    label = "same-op-type"


Strategy = PlanStrategy | FullPreload | AlwaysNext | SameOpType


class EventKind(enum.Enum):
    # Declaration order is the tie order for simultaneous events.
    TRANSFORM = "transform"
    LAYER_END = "layer_end"
    FREE = "free"
    LAYER_START = "layer_start"
    LOAD_START = "load_start"
    LOAD_END = "load_end"


_KIND_ORDER = {kind: i for i, kind in enumerate(EventKind)}


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    layer: int          # 0 for init/model-scope events
    weight: str         # "" for layer start/end
    um_delta: int = 0
    tm_delta: int = 0
    streamed: bool = False  # delta belongs to a non-persistent weight

    def sort_key(self):
        return (self.time, _KIND_ORDER[self.kind], self.layer, self.weight)


@dataclass(frozen=True)
class ModelRunReport:
    name: str
    strategy: str
    iterations: int
    init_latency: float
    exec_latency: float
    exec_per_iteration: tuple[float, ...]
    stalls: tuple[float, ...]          # per layer, summed over iterations
    preload_bytes: int
    loaded_bytes: int
    transformed_bytes: int
    start_time: float
    end_time: float

    @property
    def total_latency(self) -> float:
        return self.init_latency + self.exec_latency


@dataclass(frozen=True)
class SimReport:
    run: ModelRunReport
    peak_memory: int
    avg_memory: float
    in_flight_peak: int
    timeline: tuple[Event, ...]
    memory_series: tuple[tuple[float, int, int], ...]

    @property
    def init_latency(self) -> float:
        return self.run.init_latency

    @property
    def exec_latency(self) -> float:
        return self.run.exec_latency

    @property
    def total_latency(self) -> float:
        return self.run.total_latency

    @property
    def stalls(self) -> tuple[float, ...]:
        return self.run.stalls


@dataclass(frozen=True)
class WorkloadReport:
    models: tuple[ModelRunReport, ...]
    peak_memory: int
    avg_memory: float
    in_flight_peak: int
    timeline: tuple[Event, ...]
    memory_series: tuple[tuple[float, int, int], ...]
    total_latency: float


class _Recorder:
    def __init__(self):
        self.events: list[Event] = []

    def emit(self, *args, **kwargs):
        self.events.append(Event(*args, **kwargs))

    def finish(self) -> tuple[tuple[Event, ...],
                              tuple[tuple[float, int, int], ...],
                              int, float, int]:
        events = tuple(sorted(self.events, key=Event.sort_key))
        if not events:
            series = ((0.0, 0, 0),)
            return events, series, 0, 0.0, 0
        samples: list[tuple[float, int, int]] = []
        um = tm = 0
        flight = flight_peak = 0
        if events[0].time > 0.0:
            samples.append((0.0, 0, 0))
        i = 0
        while i < len(events):
            t = events[i].time
            while i < len(events) and events[i].time == t:
                ev = events[i]
                um += ev.um_delta
                tm += ev.tm_delta
                if ev.streamed:
                    flight += ev.um_delta + ev.tm_delta
                i += 1
            samples.append((t, um, tm))
            flight_peak = max(flight_peak, flight)
        duration = samples[-1][0]
        peak = max(u + t_ for _, u, t_ in samples)
        area = 0.0
        for (t0, u, t_), (t1, _, _) in zip(samples, samples[1:]):
            area += (u + t_) * (t1 - t0)
        avg = area / duration if duration > 0 else 0.0
        return events, tuple(samples), peak, avg, flight_peak


class _DiskChannel:
    """Single FIFO channel; loads serialize in release order."""

    def __init__(self, bandwidth: float):
        self.bandwidth = bandwidth
        self.free_at = 0.0

    def load(self, release_time: float, nbytes: int) -> tuple[float, float]:
        start = max(self.free_at, release_time)
        end = start + nbytes / self.bandwidth
        self.free_at = end
        return start, end


def _validate_plan(graph: ModelGraph, plan: OverlapPlan):
    known = set(graph.weights)
    problems = []
    for wid in plan.preload | set(plan.earliest_load):
        if wid not in known:
            problems.append(f"plan references unknown weight {wid!r}")
    for a in plan.assignments:
        if a.weight not in known:
            problems.append(f"assignment references unknown weight {a.weight!r}")
        elif not 1 <= a.layer <= graph.n_layers:
            problems.append(f"assignment layer {a.layer} out of range")
        elif a.layer >= graph.weights[a.weight].first_consumer:
            problems.append(
                f"weight {a.weight!r} assigned at layer {a.layer}, at or "
                f"after its first consumer")
    uncovered = known - plan.preload - set(plan.earliest_load)
    if uncovered:
        problems.append(f"weights not covered by plan: {sorted(uncovered)}")
    for wid in plan.earliest_load:
        total = sum(a.chunks for a in plan.assignments if a.weight == wid)
        if total != graph.weights[wid].chunk_count:
            problems.append(
                f"weight {wid!r} assigns {total} chunks, needs "
                f"{graph.weights[wid].chunk_count}")
    if problems:
        raise SimulationError("; ".join(problems))


def _prefetch_map(graph: ModelGraph, strategy: Strategy,
                  preloaded: set[str]) -> tuple[dict[int, list[str]], dict[str, int]]:
    """For baselines: prefetching layer per weight; unmatched weights load
    on demand at their first consumer."""
    by_layer: dict[int, list[str]] = {}
    on_demand: dict[str, int] = {}
    for wid in sorted(graph.weights):
        if wid in preloaded:
            continue
        first = graph.weights[wid].first_consumer
        if isinstance(strategy, AlwaysNext):
            by_layer.setdefault(first - 1, []).append(wid)
            continue
        kind = graph.node(first).kind
        source = None
        for layer in range(first - 1, 0, -1):
            if graph.node(layer).kind == kind:
                source = layer
                break
        if source is None:
            on_demand[wid] = first
        else:
            by_layer.setdefault(source, []).append(wid)
    return by_layer, on_demand


def _run_model(rec: _Recorder, disk: _DiskChannel, graph: ModelGraph,
               strategy: Strategy, hw: HardwareConfig, model: LatencyModel,
               iterations: int, t0: float) -> ModelRunReport:
    weights = graph.weights
    n = graph.n_layers

    if isinstance(strategy, PlanStrategy):
        _validate_plan(graph, strategy.plan)
        preloaded = set(strategy.plan.preload)
    elif isinstance(strategy, FullPreload):
        preloaded = set(weights)
    else:
        preloaded = {wid for wid, w in weights.items() if w.first_consumer == 1}

    loaded_bytes = 0
    transformed_bytes = 0

    # Init: two-stage pipeline over the preload set in weight-id order.
    xform_free = t0
    for wid in sorted(preloaded):
        nbytes = weights[wid].bytes
        start, end = disk.load(t0, nbytes)
        rec.emit(start, EventKind.LOAD_START, 0, wid, um_delta=nbytes)
        rec.emit(end, EventKind.LOAD_END, 0, wid)
        xform_start = max(end, xform_free)
        xform_free = xform_start + nbytes / hw.init_transform_throughput
        rec.emit(xform_free, EventKind.TRANSFORM, 0, wid,
                 um_delta=-nbytes, tm_delta=nbytes)
        loaded_bytes += nbytes
        transformed_bytes += nbytes
    init_end = xform_free
    init_latency = init_end - t0

    # Per-strategy exec schedule inputs.
    plan_releases: dict[int, list[str]] = {}
    assignments_at: dict[int, list] = {}
    prefetch_at: dict[int, list[str]] = {}
    on_demand: dict[str, int] = {}
    if isinstance(strategy, PlanStrategy):
        plan = strategy.plan
        for wid in sorted(plan.earliest_load):
            plan_releases.setdefault(plan.earliest_load[wid], []).append(wid)
        for a in plan.assignments:
            assignments_at.setdefault(a.layer, []).append(a)
    elif not isinstance(strategy, FullPreload):
        prefetch_at, on_demand = _prefetch_map(graph, strategy, preloaded)
    demand_at: dict[int, list[str]] = {}
    for wid, layer in on_demand.items():
        demand_at.setdefault(layer, []).append(wid)

    stalls = [0.0] * n
    exec_per_iter = []
    t = init_end
    for _ in range(iterations):
        iter_start = t
        tm_ready = dict.fromkeys(preloaded, init_end)
        load_span: dict[str, tuple[float, float]] = {}
        chunks_done = dict.fromkeys(weights, 0)
        for layer_id in range(1, n + 1):
            node = graph.node(layer_id)
            t_ready = t

            released = plan_releases.get(layer_id, [])
            released = released + sorted(
                prefetch_at.get(layer_id, []) + demand_at.get(layer_id, []))
            for wid in released:
                nbytes = weights[wid].bytes
                start, end = disk.load(t_ready, nbytes)
                load_span[wid] = (start, end)
                rec.emit(start, EventKind.LOAD_START, layer_id, wid,
                         um_delta=nbytes, streamed=True)
                rec.emit(end, EventKind.LOAD_END, layer_id, wid)
                loaded_bytes += nbytes

            # Stall until transform input is disk-resident and consumed
            # weights are fully in texture memory.
            t_start = t_ready
            extra_bytes = 0
            for a in assignments_at.get(layer_id, ()):
                start, _ = load_span[a.weight]
                t_start = max(t_start, start + a.byte_end / hw.disk_bandwidth)
                extra_bytes += a.byte_end - a.byte_start
            for wid in prefetch_at.get(layer_id, ()):
                extra_bytes += weights[wid].bytes
            for wid in demand_at.get(layer_id, ()):
                t_start = max(t_start, load_span[wid][1])
                extra_bytes += weights[wid].bytes
            for wid in node.weight_ids:
                if on_demand.get(wid) == layer_id:
                    continue  # transforms here; disk wait handled above
                t_start = max(t_start, tm_ready[wid])
            stalls[layer_id - 1] += t_start - t_ready

            rec.emit(t_start, EventKind.LAYER_START, layer_id, "")
            t_end = t_start + predict_latency(model, node, extra_bytes)
            rec.emit(t_end, EventKind.LAYER_END, layer_id, "")

            for a in assignments_at.get(layer_id, ()):
                nbytes = a.byte_end - a.byte_start
                chunks_done[a.weight] += a.chunks
                last = chunks_done[a.weight] == weights[a.weight].chunk_count
                rec.emit(t_end, EventKind.TRANSFORM, layer_id, a.weight,
                         um_delta=-weights[a.weight].bytes if last else 0,
                         tm_delta=nbytes, streamed=True)
                transformed_bytes += nbytes
                if last:
                    tm_ready[a.weight] = t_end
            for wid in prefetch_at.get(layer_id, ()) + demand_at.get(layer_id, []):
                nbytes = weights[wid].bytes
                done = max(t_end, load_span[wid][1])
                rec.emit(done, EventKind.TRANSFORM, layer_id, wid,
                         um_delta=-nbytes, tm_delta=nbytes, streamed=True)
                transformed_bytes += nbytes
                tm_ready[wid] = done

            for wid in sorted(weights):
                if wid in preloaded or weights[wid].last_use != layer_id:
                    continue
                free_at = max(t_end, tm_ready.get(wid, t_end))
                rec.emit(free_at, EventKind.FREE, layer_id, wid,
                         tm_delta=-weights[wid].bytes, streamed=True)
            t = t_end
        exec_per_iter.append(t - iter_start)

    run_end = t
    for wid in sorted(preloaded):
        rec.emit(run_end, EventKind.FREE, 0, wid,
                 tm_delta=-weights[wid].bytes)

    return ModelRunReport(
        name=graph.name,
        strategy=strategy.label,
        iterations=iterations,
        init_latency=init_latency,
        exec_latency=run_end - init_end,
        exec_per_iteration=tuple(exec_per_iter),
        stalls=tuple(stalls),
        preload_bytes=sum(weights[w].bytes for w in preloaded),
        loaded_bytes=loaded_bytes,
        transformed_bytes=transformed_bytes,
        start_time=t0,
        end_time=run_end,
    )


def simulate(graph: ModelGraph, strategy: Strategy, hw: HardwareConfig,
             model: LatencyModel | None = None) -> SimReport:
    model = model or LatencyModel()
    rec = _Recorder()
    disk = _DiskChannel(hw.disk_bandwidth)
    run = _run_model(rec, disk, graph, strategy, hw, model,
                     iterations=1, t0=0.0)
    events, series, peak, avg, flight = rec.finish()
    return SimReport(
        run=run,
        peak_memory=peak,
        avg_memory=avg,
        in_flight_peak=flight,
        timeline=events,
        memory_series=series,
    )


def simulate_baseline(graph: ModelGraph, which: str, hw: HardwareConfig,
                      model: LatencyModel | None = None) -> SimReport:
    strategies = {"always-next": AlwaysNext(), "same-op-type": SameOpType()}
    if which not in strategies:
        raise SimulationError(
            f"unknown baseline {which!r}; expected one of {sorted(strategies)}")
    return simulate(graph, strategies[which], hw, model)


def simulate_workload(models: list[tuple[ModelGraph, Strategy, int]],
                      hw: HardwareConfig,
                      model: LatencyModel | None = None) -> WorkloadReport:
    """FIFO multi-model run: each model inits, runs its iterations, and
    frees its persistent weights before the next model starts. Streamed
    weights re-stream every iteration."""
    if not models:
        raise SimulationError("workload needs at least one model")
    latency_model = model or LatencyModel()
    rec = _Recorder()
    disk = _DiskChannel(hw.disk_bandwidth)
    runs = []
    t = 0.0
    for graph, strategy, iterations in models:
        if iterations <= 0:
            continue
        run = _run_model(rec, disk, graph, strategy, hw, latency_model,
                         iterations=iterations, t0=t)
        runs.append(run)
        t = run.end_time
    events, series, peak, avg, flight = rec.finish()
    return WorkloadReport(
        models=tuple(runs),
        peak_memory=peak,
        avg_memory=avg,
        in_flight_peak=flight,
        timeline=events,
        memory_series=series,
        total_latency=t,
    )


def memory_timeline(report: SimReport | WorkloadReport,
                    ) -> tuple[tuple[float, int, int], ...]:
    """Piecewise-constant (time, um_bytes, tm_bytes) samples; the series
    maximum equals peak_memory and its time integral over the duration
    equals avg_memory."""
    return report.memory_series


def report_to_json(report: SimReport) -> str:
    run = report.run
    doc = {
        "model": run.name,
        "strategy": run.strategy,
        "iterations": run.iterations,
        "init_latency_us": run.init_latency,
        "exec_latency_us": run.exec_latency,
        "total_latency_us": run.total_latency,
        "exec_per_iteration_us": list(run.exec_per_iteration),
        "peak_memory_bytes": report.peak_memory,
        "avg_memory_bytes": report.avg_memory,
        "in_flight_peak_bytes": report.in_flight_peak,
        "preload_bytes": run.preload_bytes,
        "loaded_bytes": run.loaded_bytes,
        "transformed_bytes": run.transformed_bytes,
        "stalls_us": list(run.stalls),
    }
    return json.dumps(doc, indent=2) + "\n"


def timeline_csv(report: SimReport | WorkloadReport) -> str:
    lines = ["time_us,um_bytes,tm_bytes,event"]
    um = tm = 0
    for ev in report.timeline:
        um += ev.um_delta
        tm += ev.tm_delta
        tag = ev.kind.value
        if ev.weight:
            tag += f":{ev.weight}"
        if ev.layer:
            tag += f"@L{ev.layer}"
        lines.append(f"{ev.time!r},{um},{tm},{tag}")
    return "\n".join(lines) + "\n"
