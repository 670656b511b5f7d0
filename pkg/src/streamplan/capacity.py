"""Operator classification, load-latency prediction, and per-layer capacity.

The latency model is a two-parameter piecewise-linear curve per operator
class: extra load below free_ratio (relative to kernel input bytes) is
absorbed for free, beyond it latency grows linearly with slope. Capacity
C for a layer is the largest chunk count whose predicted slowdown stays
within the class threshold; fused kernels take the minimum over members.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .graph import MemberOp, ModelGraph, OperatorClass, OperatorNode, classify_kind

# Chunk cap applied when the latency curve is flat (slope 0) but the class
# threshold is positive, i.e. capacity would be unbounded.
UNCAPPED_CHUNK_LIMIT = 1024


class CapacityError(ValueError):
    pass


def classify(kind: str) -> OperatorClass:
    """Map an operator kind to its class; unknown kinds are Hierarchical."""
    return classify_kind(kind)


@dataclass(frozen=True)
class ClassParams:
    free_ratio: float
    slope: float

    def __post_init__(self):
        if self.free_ratio < 0 or self.slope < 0:
            raise CapacityError(
                f"latency parameters must be non-negative, got "
                f"free_ratio={self.free_ratio}, slope={self.slope}")


DEFAULT_CLASS_PARAMS = {
    OperatorClass.ELEMENTAL: ClassParams(free_ratio=0.5, slope=1.0),
    OperatorClass.REUSABLE: ClassParams(free_ratio=1.0, slope=0.2),
    OperatorClass.HIERARCHICAL: ClassParams(free_ratio=0.0, slope=5.0),
}


@dataclass(frozen=True)
class LatencyModel:
    classes: dict[OperatorClass, ClassParams] = field(
        default_factory=lambda: dict(DEFAULT_CLASS_PARAMS))
    overrides: dict[str, ClassParams] = field(default_factory=dict)

    def params_for(self, kind: str, op_class: OperatorClass) -> ClassParams:
        key = kind.strip().lower()
        if key in self.overrides:
            return self.overrides[key]
        return self.classes[op_class]


@dataclass(frozen=True)
class ThresholdConfig:
    """Maximum tolerated relative latency increase per class."""

    hierarchical: float = 0.0
    reusable: float = 0.20
    elemental: float = 3.00

    def __post_init__(self):
        if min(self.hierarchical, self.reusable, self.elemental) < 0:
            raise CapacityError("thresholds must be non-negative")

    def for_class(self, op_class: OperatorClass) -> float:
        return {
            OperatorClass.HIERARCHICAL: self.hierarchical,
            OperatorClass.REUSABLE: self.reusable,
            OperatorClass.ELEMENTAL: self.elemental,
        }[op_class]


DEFAULT_THRESHOLDS = ThresholdConfig()


@dataclass(frozen=True)
class CapacityProfile:
    """Per-layer maximum chunks transformable concurrently with compute."""

    caps: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.caps)

    def for_layer(self, layer_id: int) -> int:
        return self.caps[layer_id - 1]


def _inflation(params: ClassParams, ratio: float) -> float:
    return 1.0 + params.slope * max(0.0, ratio - params.free_ratio)


def predict_latency(model: LatencyModel, node: OperatorNode | MemberOp,
                    extra_bytes: int) -> float:
    """Kernel latency (us) when extra_bytes are transformed alongside it.

    base_latency * (1 + slope * max(0, r - free_ratio)) with
    r = extra_bytes / input_bytes; the class (or per-kind override) of the
    node supplies the parameters. For fused kernels the most restrictive
    member class governs the whole kernel.
    """
    params = model.params_for(node.kind, node.op_class)
    ratio = extra_bytes / node.input_bytes
    return node.base_latency_us * _inflation(params, ratio)


def _member_capacity(model: LatencyModel, thresholds: ThresholdConfig,
                     op: OperatorNode | MemberOp, chunk_size: int) -> int:
    params = model.params_for(op.kind, op.op_class)
    limit = thresholds.for_class(op.op_class)
    if params.slope == 0.0:
        # Flat curve: capacity is unbounded when any increase is tolerated,
        # otherwise the free ratio alone bounds it.
        if limit > 0.0:
            return UNCAPPED_CHUNK_LIMIT
        return int(op.input_bytes * params.free_ratio / chunk_size)
    cap = int(op.input_bytes * (params.free_ratio + limit / params.slope)
              / chunk_size)
    # The closed form can land one off under float rounding; capacity is
    # defined as the largest chunk count within the latency limit, so verify.
    allowed = 1.0 + limit
    while cap > 0 and _inflation(params, cap * chunk_size / op.input_bytes) > allowed:
        cap -= 1
    while _inflation(params, (cap + 1) * chunk_size / op.input_bytes) <= allowed:
        cap += 1
    return cap


def load_capacity(model: LatencyModel, thresholds: ThresholdConfig,
                  node: OperatorNode, chunk_size: int) -> int:
    """C for one layer: chunks it can transform within its latency threshold.

    Fused kernels expose a single synchronization stage, so their capacity
    collapses to the minimum over members.
    """
    if chunk_size <= 0:
        raise CapacityError(f"chunk_size must be positive, got {chunk_size}")
    if node.members:
        return min(_member_capacity(model, thresholds, m, chunk_size)
                   for m in node.members)
    return _member_capacity(model, thresholds, node, chunk_size)


def capacity_profile(graph: ModelGraph, model: LatencyModel | None = None,
                     thresholds: ThresholdConfig = DEFAULT_THRESHOLDS,
                     ) -> CapacityProfile:
    model = model or LatencyModel()
    return CapacityProfile(tuple(
        load_capacity(model, thresholds, node, graph.chunk_size)
        for node in graph.nodes))


# --- fitting -----------------------------------------------------------

FREE_RATIO_GRID = tuple(k / 10 for k in range(21))  # 0.0, 0.1, ..., 2.0


@dataclass(frozen=True)
class FitReport:
    model: LatencyModel
    sse: dict[OperatorClass, float]
    counts: dict[OperatorClass, int]


def _fit_class(points: list[tuple[float, float]]) -> tuple[ClassParams, float]:
    """Least-squares knee fit over (ratio, relative latency increase) points.

    For each candidate free_ratio on the grid, the slope comes from a
    closed-form regression through the origin on points beyond the knee;
    ties break toward the smallest free_ratio, then the smallest slope.
    """
    best: tuple[float, float, float, ClassParams] | None = None
    for free in FREE_RATIO_GRID:
        num = sum(y * (r - free) for r, y in points if r > free)
        den = sum((r - free) ** 2 for r, y in points if r > free)
        slope = max(0.0, num / den) if den > 0 else 0.0
        sse = 0.0
        for r, y in points:
            pred = slope * (r - free) if r > free else 0.0
            sse += (y - pred) ** 2
        key = (sse, free, slope)
        if best is None or key < best[:3]:
            best = (*key, ClassParams(free_ratio=free, slope=slope))
    assert best is not None
    return best[3], best[0]


def fit_model(records: list[tuple[str, int, int, float]]) -> FitReport:
    """Fit per-class latency parameters from profiling records.

    Each record is (kind, input_bytes, extra_bytes, measured_latency_us).
    Records group by (kind, input_bytes); the measurement at the smallest
    extra load in a group serves as that group's baseline latency. Classes
    with no records keep the shipped defaults; a class present with fewer
    than 3 distinct load ratios is an error.
    """
    groups: dict[tuple[str, int], list[tuple[int, float]]] = {}
    for kind, input_bytes, extra_bytes, latency in records:
        groups.setdefault((kind, input_bytes), []).append((extra_bytes, latency))

    by_class: dict[OperatorClass, list[tuple[float, float]]] = {}
    for (kind, input_bytes), measurements in groups.items():
        base = min(measurements)[1]
        if base <= 0:
            raise CapacityError(
                f"profiling group ({kind}, {input_bytes}) has non-positive "
                f"baseline latency")
        cls = classify(kind)
        for extra_bytes, latency in measurements:
            by_class.setdefault(cls, []).append(
                (extra_bytes / input_bytes, latency / base - 1.0))

    classes = dict(DEFAULT_CLASS_PARAMS)
    sse: dict[OperatorClass, float] = {}
    counts: dict[OperatorClass, int] = {}
    for cls, points in sorted(by_class.items(), key=lambda kv: kv[0].value):
        distinct = {r for r, _ in points}
        if len(distinct) < 3:
            raise CapacityError(
                f"class {cls.value!r}: need >= 3 distinct extra-load ratios, "
                f"got {len(distinct)}")
        classes[cls], sse[cls] = _fit_class(sorted(points))
        counts[cls] = len(points)
    return FitReport(model=LatencyModel(classes=classes), sse=sse, counts=counts)


def read_profiling_csv(text: str) -> list[tuple[str, int, int, float]]:
    """Parse `kind,input_bytes,extra_bytes,latency_us` profiling records."""
    reader = csv.DictReader(io.StringIO(text))
    required = {"kind", "input_bytes", "extra_bytes", "latency_us"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise CapacityError(
            f"profiling CSV must have columns {sorted(required)}")
    return [
        (row["kind"], int(row["input_bytes"]), int(row["extra_bytes"]),
         float(row["latency_us"]))
        for row in reader
    ]


def model_to_json(model: LatencyModel) -> str:
    doc = {
        "classes": {
            cls.value: {"free_ratio": p.free_ratio, "slope": p.slope}
            for cls, p in sorted(model.classes.items(), key=lambda kv: kv[0].value)
        },
        "overrides": {
            kind: {"free_ratio": p.free_ratio, "slope": p.slope}
            for kind, p in sorted(model.overrides.items())
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def model_from_json(text: str) -> LatencyModel:
    doc = json.loads(text)
    classes = dict(DEFAULT_CLASS_PARAMS)
    for name, params in doc.get("classes", {}).items():
        classes[OperatorClass(name)] = ClassParams(
            free_ratio=params["free_ratio"], slope=params["slope"])
    overrides = {
        kind.strip().lower(): ClassParams(
            free_ratio=params["free_ratio"], slope=params["slope"])
        for kind, params in doc.get("overrides", {}).items()
    }
    return LatencyModel(classes=classes, overrides=overrides)
