"""Model graph ingestion: linear execution order, weights, and chunk metadata.

The graph arrives as JSON (see GRAPH_SCHEMA_DOC) or as a flat layer CSV for
synthetic fixtures. Nodes are kept in the execution order given by the input;
this module validates that order but never reorders. Weight records carry the
derived fields every downstream consumer needs: chunk_count (ceil of bytes
over the chunk size), first_consumer (the earliest layer listing the weight)
and last_use (the latest).
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field, replace

DEFAULT_CHUNK_SIZE = 1 << 20  # 1 MiB

GRAPH_SCHEMA_DOC = """\
{
  "name": str,
  "chunk_size_bytes": int,
  "nodes": [
    {
      "id": int,                       # 1..N, position in execution order
      "kind": str,                     # e.g. "MatMul"; optional for fused nodes
      "input_bytes": int,              # optional for fused nodes (sum of members)
      "base_latency_us": float,        # optional for fused nodes (sum of members)
      "weights": [ {"id": str, "bytes": int} | {"id": str} | str ],
      "predecessors": [int],
      "members": [                     # present only on fused kernels
        {"kind": str, "input_bytes": int, "base_latency_us": float,
         "weights": [...]}             # member weights optional
      ]
    }
  ]
}
A weight is defined (with "bytes") exactly once; later mentions reference it
by id alone. Weights listed on a fused node but not claimed by any member are
attributed to the first member.
"""


class GraphError(ValueError):
    """Raised when a graph document or structure violates the schema."""


class OperatorClass(enum.Enum):
    ELEMENTAL = "elemental"
    REUSABLE = "reusable"
    HIERARCHICAL = "hierarchical"


# Kind -> class table. Kinds not listed map to HIERARCHICAL, the conservative
# choice (no concurrent transformation allowed). Matching is case-insensitive.
_KIND_CLASSES = {
    OperatorClass.ELEMENTAL: (
        "add", "sub", "mul", "div", "relu", "gelu", "silu", "sigmoid",
        "tanh", "activation", "elementwise", "biasadd", "scale", "residual",
    ),
    OperatorClass.REUSABLE: (
        "matmul", "gemm", "linear", "conv", "conv2d", "conv1d",
        "depthwiseconv", "batchmatmul",
    ),
    OperatorClass.HIERARCHICAL: (
        "softmax", "layernorm", "rmsnorm", "groupnorm", "instancenorm",
        "batchnorm", "reduce", "argmax", "topk",
    ),
}

_CLASS_BY_KIND = {
    kind: cls for cls, kinds in _KIND_CLASSES.items() for kind in kinds
}

# Severity order used to pick the class of a fused kernel: the most
# restrictive member dominates the fused kernel's overlap behaviour.
_CLASS_SEVERITY = {
    OperatorClass.ELEMENTAL: 0,
    OperatorClass.REUSABLE: 1,
    OperatorClass.HIERARCHICAL: 2,
}


def classify_kind(kind: str) -> OperatorClass:
    return _CLASS_BY_KIND.get(kind.strip().lower(), OperatorClass.HIERARCHICAL)


@dataclass(frozen=True)
class MemberOp:
    """A pre-fusion constituent of a fused kernel."""

    kind: str
    input_bytes: int
    base_latency_us: float
    weight_ids: tuple[str, ...] = ()

    @property
    def op_class(self) -> OperatorClass:
        return classify_kind(self.kind)


@dataclass(frozen=True)
class OperatorNode:
    id: int
    kind: str
    input_bytes: int
    base_latency_us: float
    weight_ids: tuple[str, ...] = ()
    predecessors: tuple[int, ...] = ()
    members: tuple[MemberOp, ...] = ()  # nonempty => fused kernel

    @property
    def is_fused(self) -> bool:
        return bool(self.members)

    @property
    def op_class(self) -> OperatorClass:
        if self.members:
            return max((m.op_class for m in self.members),
                       key=_CLASS_SEVERITY.__getitem__)
        return classify_kind(self.kind)


@dataclass(frozen=True)
class WeightTensor:
    id: str
    bytes: int
    chunk_count: int = 0
    first_consumer: int = 0
    last_use: int = 0


@dataclass(frozen=True)
class ModelGraph:
    name: str
    chunk_size: int
    nodes: tuple[OperatorNode, ...]
    weights: dict[str, WeightTensor] = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return len(self.nodes)

    @property
    def total_weight_bytes(self) -> int:
        return sum(w.bytes for w in self.weights.values())

    def node(self, layer_id: int) -> OperatorNode:
        return self.nodes[layer_id - 1]


def make_fused_node(node_id: int, members: list[MemberOp],
                    predecessors: tuple[int, ...] = ()) -> OperatorNode:
    """Build a fused kernel node; latency and input size are conserved sums."""
    if not members:
        raise GraphError(f"node {node_id}: fused node needs at least one member")
    weight_ids = tuple(wid for m in members for wid in m.weight_ids)
    return OperatorNode(
        id=node_id,
        kind="+".join(m.kind for m in members),
        input_bytes=sum(m.input_bytes for m in members),
        base_latency_us=sum(m.base_latency_us for m in members),
        weight_ids=weight_ids,
        predecessors=predecessors,
        members=tuple(members),
    )


def derive_weight_metadata(graph: ModelGraph) -> ModelGraph:
    """Fill chunk_count / first_consumer / last_use on every weight.

    Idempotent; raises GraphError for a weight no node references.
    """
    consumers: dict[str, list[int]] = {wid: [] for wid in graph.weights}
    for node in graph.nodes:
        for wid in node.weight_ids:
            if wid not in consumers:
                raise GraphError(f"node {node.id}: unknown weight id {wid!r}")
            consumers[wid].append(node.id)
    weights = {}
    for wid, weight in graph.weights.items():
        layers = consumers[wid]
        if not layers:
            raise GraphError(f"weight {wid!r} is never referenced by any node")
        weights[wid] = replace(
            weight,
            chunk_count=max(1, math.ceil(weight.bytes / graph.chunk_size)),
            first_consumer=min(layers),
            last_use=max(layers),
        )
    return replace(graph, weights=weights)


def validate(graph: ModelGraph) -> list[str]:
    """Return the list of violated invariants; an empty list means valid."""
    problems = []
    if graph.chunk_size <= 0:
        problems.append(f"chunk_size must be positive, got {graph.chunk_size}")
    seen_ids = set()
    for pos, node in enumerate(graph.nodes, start=1):
        if node.id in seen_ids:
            problems.append(f"node {node.id}: duplicate id")
        seen_ids.add(node.id)
        if node.id != pos:
            problems.append(
                f"node {node.id}: id must equal execution position {pos}")
        for pred in node.predecessors:
            if pred >= node.id:
                problems.append(
                    f"node {node.id}: order violation, predecessor {pred} "
                    f"does not precede it")
            elif pred < 1:
                problems.append(f"node {node.id}: predecessor {pred} out of range")
        if node.base_latency_us <= 0:
            problems.append(f"node {node.id}: base_latency_us must be > 0")
        if node.input_bytes <= 0:
            problems.append(f"node {node.id}: input_bytes must be > 0")
        for wid in node.weight_ids:
            if wid not in graph.weights:
                problems.append(f"node {node.id}: unknown weight id {wid!r}")
    referenced = {wid for n in graph.nodes for wid in n.weight_ids}
    for wid, weight in graph.weights.items():
        if weight.bytes <= 0:
            problems.append(f"weight {wid!r}: bytes must be > 0")
        if wid not in referenced:
            problems.append(f"weight {wid!r}: never referenced by any node")
        if weight.chunk_count:
            if weight.first_consumer > weight.last_use:
                problems.append(
                    f"weight {wid!r}: first_consumer > last_use")
            expected = max(1, math.ceil(weight.bytes / graph.chunk_size))
            if weight.chunk_count != expected:
                problems.append(
                    f"weight {wid!r}: chunk_count {weight.chunk_count} != "
                    f"ceil(bytes/chunk_size) = {expected}")
    return problems


def _parse_weight_entry(entry, node_id: int, definitions: dict[str, int]):
    """Normalize one weight mention to its id, recording a definition."""
    if isinstance(entry, str):
        return entry
    if not isinstance(entry, dict) or "id" not in entry:
        raise GraphError(
            f"node {node_id}: weight entries must be an id string or an "
            f"object with an 'id' field, got {entry!r}")
    wid = entry["id"]
    if "bytes" in entry:
        size = entry["bytes"]
        if not isinstance(size, int) or size <= 0:
            raise GraphError(
                f"node {node_id}: weight {wid!r} bytes must be a positive "
                f"integer, got {size!r}")
        if wid in definitions:
            raise GraphError(f"weight {wid!r} defined more than once")
        definitions[wid] = size
    return wid


def parse_model(document: str) -> ModelGraph:
    """Parse and fully validate a JSON graph document.

    Raises GraphError naming the offending node or weight; returns a graph
    with all derived weight metadata populated.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GraphError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise GraphError("document must be an object with a 'nodes' list")

    chunk_size = doc.get("chunk_size_bytes", DEFAULT_CHUNK_SIZE)
    if not isinstance(chunk_size, int) or chunk_size <= 0:
        raise GraphError(f"chunk_size_bytes must be a positive integer, "
                         f"got {chunk_size!r}")

    definitions: dict[str, int] = {}
    nodes = []
    for raw in doc["nodes"]:
        if not isinstance(raw, dict) or "id" not in raw:
            raise GraphError(f"node entry without an id: {raw!r}")
        node_id = raw["id"]
        if raw.get("members"):
            members = []
            claimed = set()
            for m in raw["members"]:
                m_wids = tuple(
                    _parse_weight_entry(e, node_id, definitions)
                    for e in m.get("weights", ()))
                claimed.update(m_wids)
                members.append(MemberOp(
                    kind=m["kind"],
                    input_bytes=m["input_bytes"],
                    base_latency_us=m["base_latency_us"],
                    weight_ids=m_wids,
                ))
            # Node-level weights not claimed by a member go to the first one.
            loose = [
                _parse_weight_entry(e, node_id, definitions)
                for e in raw.get("weights", ())
            ]
            loose = tuple(w for w in loose if w not in claimed)
            if loose:
                members[0] = replace(
                    members[0], weight_ids=members[0].weight_ids + loose)
            node = make_fused_node(node_id, members,
                                   tuple(raw.get("predecessors", ())))
        else:
            for key in ("kind", "input_bytes", "base_latency_us"):
                if key not in raw:
                    raise GraphError(f"node {node_id}: missing field {key!r}")
            node = OperatorNode(
                id=node_id,
                kind=raw["kind"],
                input_bytes=raw["input_bytes"],
                base_latency_us=raw["base_latency_us"],
                weight_ids=tuple(
                    _parse_weight_entry(e, node_id, definitions)
                    for e in raw.get("weights", ())),
                predecessors=tuple(raw.get("predecessors", ())),
            )
        nodes.append(node)

    weights = {wid: WeightTensor(id=wid, bytes=size)
               for wid, size in definitions.items()}
    for node in nodes:
        for wid in node.weight_ids:
            if wid not in weights:
                raise GraphError(
                    f"node {node.id}: weight {wid!r} referenced but never "
                    f"defined with a byte size")

    graph = ModelGraph(
        name=doc.get("name", ""),
        chunk_size=chunk_size,
        nodes=tuple(nodes),
        weights=weights,
    )
    graph = derive_weight_metadata(graph)
    problems = validate(graph)
    if problems:
        raise GraphError("; ".join(problems))
    return graph


def serialize(graph: ModelGraph) -> str:
    """Canonical JSON form; parse_model(serialize(g)) == g."""
    defined = set()

    def weight_entry(wid: str):
        if wid in defined:
            return wid
        defined.add(wid)
        return {"id": wid, "bytes": graph.weights[wid].bytes}

    nodes = []
    for node in graph.nodes:
        entry: dict = {"id": node.id}
        if node.members:
            entry["members"] = [
                {
                    "kind": m.kind,
                    "input_bytes": m.input_bytes,
                    "base_latency_us": m.base_latency_us,
                    **({"weights": [weight_entry(w) for w in m.weight_ids]}
                       if m.weight_ids else {}),
                }
                for m in node.members
            ]
        else:
            entry["kind"] = node.kind
            entry["input_bytes"] = node.input_bytes
            entry["base_latency_us"] = node.base_latency_us
            if node.weight_ids:
                entry["weights"] = [weight_entry(w) for w in node.weight_ids]
        if node.predecessors:
            entry["predecessors"] = list(node.predecessors)
        nodes.append(entry)

    doc = {
        "name": graph.name,
        "chunk_size_bytes": graph.chunk_size,
        "nodes": nodes,
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def from_layer_csv(text: str, name: str = "csv-model",
                   chunk_size: int = DEFAULT_CHUNK_SIZE) -> ModelGraph:
    """Convert a flat layer table to a chain graph.

    Columns: id, kind, input_bytes, base_latency_us, weight_bytes. A row with
    weight_bytes > 0 owns one weight named w<id>; layers form a simple chain.
    """
    reader = csv.DictReader(io.StringIO(text))
    nodes = []
    weights = {}
    for row in reader:
        node_id = int(row["id"])
        wbytes = int(row["weight_bytes"] or 0)
        wids: tuple[str, ...] = ()
        if wbytes > 0:
            wid = f"w{node_id:04d}"
            weights[wid] = WeightTensor(id=wid, bytes=wbytes)
            wids = (wid,)
        nodes.append(OperatorNode(
            id=node_id,
            kind=row["kind"],
            input_bytes=int(row["input_bytes"]),
            base_latency_us=float(row["base_latency_us"]),
            weight_ids=wids,
            predecessors=(node_id - 1,) if node_id > 1 else (),
        ))
    graph = derive_weight_metadata(ModelGraph(
        name=name, chunk_size=chunk_size, nodes=tuple(nodes), weights=weights))
    problems = validate(graph)
    if problems:
        raise GraphError("; ".join(problems))
    return graph
