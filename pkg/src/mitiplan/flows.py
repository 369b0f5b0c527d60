"""Attack-flow bundles -> weighted technique sequences.

Two document shapes are accepted:

* STIX-style bundles (``{"type": "bundle", "objects": [...]}``) where links are
  the ``start_refs``, ``effect_refs``, ``asset_refs`` and ``object_ref(s)`` fields;
* plain graphs (``{"id", "nodes": [...], "edges": [{"source", "target", "type"}]}``)
  with edge types ``start``, ``effect``, ``asset``, ``object``.

Each root-to-leaf traversal becomes one sequence of action tokens. Its raw
score is the product of action ``certainty`` values (1.0 when absent) and
scores are normalized to sum to one within the bundle.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import CorpusError, CycleError, ParseError
from .tokens import TechniqueToken

log = logging.getLogger(__name__)

FOLLOWED = ("effect", "asset", "object")
ACTION_TYPE = "attack-action"
_REF_FIELDS = {
    "start_refs": "start",
    "effect_refs": "effect",
    "asset_refs": "asset",
    "object_ref": "object",
    "object_refs": "object",
}


@dataclass(frozen=True)
class WeightedSequence:
    tokens: Tuple[str, ...]
    weight: float
    bundle_id: str
    raw_score: float = 1.0

    def to_record(self) -> dict:
        return {"bundle_id": self.bundle_id, "weight": self.weight, "tokens": list(self.tokens)}

    @classmethod
    def from_record(cls, rec: Mapping) -> "WeightedSequence":
        return cls(tuple(rec["tokens"]), float(rec["weight"]), str(rec["bundle_id"]))


class FlowGraph:
    """Directed multigraph of flow nodes with typed edges (insertion ordered)."""

    def __init__(self, bundle_id: str):
        self.bundle_id = bundle_id
        self.nodes: Dict[str, dict] = {}
        self.edges: Dict[str, List[Tuple[str, str]]] = {}
        self.starts: List[str] = []

    def add_edge(self, source: str, target: str, kind: str) -> None:
        if kind == "start":
            self.starts.append(target)
        else:
            self.edges.setdefault(source, []).append((kind, target))

    def successors(self, node_id: str) -> List[str]:
        return [t for kind, t in self.edges.get(node_id, ()) if kind in FOLLOWED]


def _as_list(value) -> list:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


def to_graph(document: Mapping) -> FlowGraph:
    if "objects" in document:
        graph = FlowGraph(str(document.get("id", "bundle")))
        for obj in document["objects"]:
            if "id" not in obj:
                raise ParseError(f"{graph.bundle_id}: object without id")
            graph.nodes[obj["id"]] = obj
        for obj in document["objects"]:
            for field, kind in _REF_FIELDS.items():
                for target in _as_list(obj.get(field)):
                    graph.add_edge(obj["id"], target, kind)
    elif "nodes" in document and "edges" in document:
        graph = FlowGraph(str(document.get("id", "bundle")))
        for node in document["nodes"]:
            graph.nodes[node["id"]] = node
        for edge in document["edges"]:
            try:
                graph.add_edge(edge.get("source"), edge["target"], edge["type"])
            except KeyError as exc:
                raise ParseError(f"{graph.bundle_id}: edge missing {exc}") from exc
    else:
        raise ParseError("flow document has neither 'objects' nor 'nodes'/'edges'")
    for source, out in graph.edges.items():
        for _, target in out:
            if target not in graph.nodes:
                raise ParseError(f"{graph.bundle_id}: edge {source} -> {target} points at unknown node")
    for target in graph.starts:
        if target not in graph.nodes:
            raise ParseError(f"{graph.bundle_id}: start edge points at unknown node {target}")
    return graph


def _action_token(node: Mapping, bundle_id: str) -> Tuple[str, float]:
    try:
        token = TechniqueToken.make(node.get("tactic_id"), node.get("technique_id"))
    except ParseError as exc:
        raise ParseError(f"{bundle_id}: node {node.get('id')}: {exc}") from exc
    certainty = node.get("certainty", 1.0)
    if isinstance(certainty, bool) or not isinstance(certainty, (int, float)) or not 0 <= certainty <= 1:
        raise ParseError(f"{bundle_id}: node {node.get('id')}: certainty {certainty!r} not in [0, 1]")
    return str(token), float(certainty)


def _check_acyclic(graph: FlowGraph) -> None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in graph.nodes}
    for root in graph.starts:
        if color[root] != WHITE:
            continue
        color[root] = GREY
        stack = [(root, iter(graph.successors(root)))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
            elif color[nxt] == GREY:
                raise CycleError(node, nxt)
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                stack.append((nxt, iter(graph.successors(nxt))))


def enumerate_traversals(graph: FlowGraph) -> List[List[str]]:
    """All root-to-leaf node-id paths, following effect/asset/object edges."""
    _check_acyclic(graph)
    paths: List[List[str]] = []
    for root in graph.starts:
        stack = [(root, [root])]
        while stack:
            node, path = stack.pop()
            succ = graph.successors(node)
            if not succ:
                paths.append(path)
                continue
            # reversed so paths come out in edge order
            for nxt in reversed(succ):
                stack.append((nxt, path + [nxt]))
    return paths


def parse_bundle(document: Mapping) -> List[WeightedSequence]:
    graph = to_graph(document)
    if not graph.starts:
        log.warning("bundle %s has no start edge; no sequences extracted", graph.bundle_id)
        return []
    actions = {
        nid: _action_token(node, graph.bundle_id)
        for nid, node in graph.nodes.items()
        if node.get("type") == ACTION_TYPE
    }
    scored = []
    for path in enumerate_traversals(graph):
        while path and path[-1] not in actions:
            path = path[:-1]  # drop non-action leaves
        steps = [actions[n] for n in path if n in actions]
        if not steps:
            continue
        raw = 1.0
        for _, certainty in steps:
            raw *= certainty
        scored.append((tuple(t for t, _ in steps), raw))
    total = sum(raw for _, raw in scored)
    if scored and total <= 0:
        log.warning("bundle %s: every path has zero certainty; bundle excluded", graph.bundle_id)
        return []
    dropped = sum(1 for _, raw in scored if raw <= 0)
    if dropped:
        log.warning("bundle %s: %d zero-certainty path(s) excluded", graph.bundle_id, dropped)
    return [
        WeightedSequence(tokens, raw / total, graph.bundle_id, raw)
        for tokens, raw in scored
        if raw > 0
    ]


def load_document(path: Union[str, Path]) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def build_corpus(bundles: Sequence[Mapping], strict: bool = False) -> List[WeightedSequence]:
    if not bundles:
        raise CorpusError("no bundles supplied")
    corpus: List[WeightedSequence] = []
    for doc in bundles:
        try:
            corpus.extend(parse_bundle(doc))
        except ParseError as exc:
            if strict:
                raise
            log.warning("skipping bundle %s: %s", doc.get("id", "?"), exc)
    if not corpus:
        raise CorpusError("every bundle was empty or skipped")
    return corpus


def load_corpus_dir(directory: Union[str, Path], strict: bool = False) -> List[WeightedSequence]:
    files = sorted(Path(directory).glob("*.json"))
    return build_corpus([load_document(f) for f in files], strict=strict)


def write_corpus(corpus: Iterable[WeightedSequence], path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        for seq in corpus:
            fh.write(json.dumps(seq.to_record()) + "\n")


def read_corpus(path: Union[str, Path]) -> List[WeightedSequence]:
    with open(path) as fh:
        return [WeightedSequence.from_record(json.loads(line)) for line in fh if line.strip()]
