"""The coordinator: single owner of the whiteboard.

Components never see the board. Each pump round drains whatever their
managers have deposited, integrates the records into the bound output
layers (packing as it goes, deriving sequencing arcs for grid-shaped
input), and then forwards the newly integrated, threshold-filtered slice
of every binding's input layers into its in box as plain wire records.

Every mailbox operation in the pump is non-blocking: a busy manager makes
a binding wait until the next round, never the whole pipeline.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .board import Arc, Layer, TimeSpan, Whiteboard, WhiteNode
from .errors import (
    BoxRemoved,
    LayerMismatch,
    ParseError,
    UnknownFormatCode,
    WhiteboardError,
    WouldCreateCycle,
)
from .grid import GridNode, Thresholds, grid_connected
from .manager import Connection, ConnectionParams, request_connection

log = logging.getLogger(__name__)

# bound on batches drained from one out box per round, against livelock
MAX_COLLECTS_PER_ROUND = 100


@dataclass
class ComponentBinding:
    name: str
    request_root: Path
    input_layers: list[str]
    output_layer: str
    params: ConnectionParams = field(default_factory=ConnectionParams)
    filter_threshold: float | None = None
    constraint_source: str | None = None


@dataclass
class PumpReport:
    collected: int = 0
    deposited: int = 0
    errors: int = 0

    @property
    def progress(self) -> int:
        return self.collected + self.deposited


class _Bound:
    """Per-binding runtime state."""

    def __init__(self, binding: ComponentBinding, conn: Connection):
        self.binding = binding
        self.conn = conn
        self.errors: list[str] = []
        self.collected = 0
        self.deposited = 0
        self.triggered = False
        self.forwarded_nodes: set[int] = set()
        self.forwarded_arcs: set[int] = set()
        self.pending_constraints: list[wire.ConstraintRecord] = []
        # maps from the connection's record id space onto board node ids
        self.node_of_record: dict[int, int] = {}
        self.seen_arc_records: set[int] = set()
        self.seen_edge_records: set[wire.EdgeRecord] = set()

    def note(self, message: str):
        log.warning("binding %s: %s", self.binding.name, message)
        self.errors.append(message)


def filter_slice(nodes: list[WhiteNode], arcs: list[Arc],
                 threshold: float | None) -> tuple[list[WhiteNode], list[Arc]]:
    """Restrict a slice to nodes at or above the threshold and the arcs
    among the survivors. A missing threshold is the identity."""
    if threshold is None:
        return nodes, arcs
    keep_nodes = [n for n in nodes if n.score >= threshold]
    keep = {n.id for n in keep_nodes}
    return keep_nodes, [a for a in arcs if a.origin in keep and a.extremity in keep]


class Coordinator:
    def __init__(self, board: Whiteboard, thresholds: Thresholds | None = None):
        self.board = board
        self.thresholds = thresholds or Thresholds()
        self.bound: dict[str, _Bound] = {}
        self.rounds = 0
        self.run_state = "paused"

    # -- registration -----------------------------------------------------------

    def register(self, binding: ComponentBinding) -> None:
        """Open the binding's connection and activate it. The output layer
        must declare every input layer among its dependencies."""
        if binding.output_layer not in self.board.layers:
            raise LayerMismatch(f"unknown output layer {binding.output_layer!r}")
        out_deps = self.board.layers[binding.output_layer].depends_on
        for name in binding.input_layers:
            if name not in self.board.layers:
                raise LayerMismatch(f"unknown input layer {name!r}")
            if name not in out_deps:
                raise LayerMismatch(
                    f"output layer {binding.output_layer!r} does not depend "
                    f"on input layer {name!r}")
        if binding.input_layers and binding.params.import_format not in (
                "edge-v1", "node-v1"):
            raise UnknownFormatCode(
                f"cannot encode layer slices as {binding.params.import_format}")
        conn = request_connection(binding.request_root, binding.params)
        self.bound[binding.name] = _Bound(binding, conn)

    def connections(self) -> dict[str, Connection]:
        return {name: b.conn for name, b in self.bound.items()}

    # -- one scheduling round ------------------------------------------------------

    def pump(self) -> PumpReport:
        report = PumpReport()
        for bound in self.bound.values():
            try:
                self._collect_from(bound, report)
            except (BoxRemoved, WhiteboardError) as exc:
                bound.note(f"collect failed: {exc}")
                report.errors += 1
        for bound in self.bound.values():
            try:
                self._deposit_to(bound, report)
            except (BoxRemoved, WhiteboardError) as exc:
                bound.note(f"deposit failed: {exc}")
                report.errors += 1
        self.rounds += 1
        return report

    def _collect_from(self, bound: _Bound, report: PumpReport):
        layer = self.board.layers[bound.binding.output_layer]
        for _ in range(MAX_COLLECTS_PER_ROUND):
            text = bound.conn.out_box.try_collect()
            if text is None:
                return
            try:
                records = wire.parse(text, bound.conn.params.export_format)
            except ParseError as exc:
                bound.note(f"unparseable batch: {exc}")
                report.errors += 1
                continue
            for record in records:
                if isinstance(record, wire.ErrorRecord):
                    bound.note(f"component error: {record.message}")
                    report.errors += 1
                    continue
                try:
                    self._integrate(bound, record, layer)
                    bound.collected += 1
                    report.collected += 1
                except WhiteboardError as exc:
                    bound.note(f"record rejected: {exc}")
                    report.errors += 1

    def _integrate(self, bound: _Bound, record, layer: Layer):
        if isinstance(record, wire.EdgeRecord):
            if record in bound.seen_edge_records:
                return
            bound.seen_edge_records.add(record)
            self._integrate_grid_node(
                layer, GridNode(TimeSpan(record.begin, record.end),
                                record.phoneme, record.score))
        elif isinstance(record, wire.InactiveEdgeRecord):
            if record.edge_id in bound.node_of_record:
                return
            children = []
            for child_id in record.children:
                node_id = bound.node_of_record.get(child_id)
                if node_id is None:
                    raise WhiteboardError(
                        f"edge {record.edge_id} references unknown child {child_id}")
                children.append(node_id)
            payload = {"children": [
                [self.board.node(c).span.begin, self.board.node(c).span.end,
                 self.board.node(c).label] for c in children]} if children else None
            node_id, _ = layer.add_white_node(
                TimeSpan(record.begin, record.end), record.category,
                record.score, payload)
            bound.node_of_record[record.edge_id] = node_id
            if children:
                rule_tag = (f"{record.category}<-"
                            + ".".join(self.board.node(c).label for c in children))
                layer.add_grey_node(rule_tag, tuple(children), (node_id,))
                for left, right in zip(children, children[1:]):
                    self._add_arc_once(layer, left, right, 0.0)
        elif isinstance(record, wire.NodeRecord):
            if record.node_id in bound.node_of_record:
                return
            node_id, _ = layer.add_white_node(
                TimeSpan(record.begin, record.end), record.label,
                record.score, None)
            bound.node_of_record[record.node_id] = node_id
        elif isinstance(record, wire.ArcRecord):
            if record.arc_id in bound.seen_arc_records:
                return
            bound.seen_arc_records.add(record.arc_id)
            origin = bound.node_of_record.get(record.origin)
            extremity = bound.node_of_record.get(record.extremity)
            if origin is None or extremity is None:
                raise WhiteboardError(
                    f"arc {record.arc_id} references unknown node")
            self._add_arc_once(layer, origin, extremity, record.weight)
        else:
            raise WhiteboardError(
                f"unexpected record on out box: {type(record).__name__}")

    def _integrate_grid_node(self, layer: Layer, node: GridNode):
        """Incremental grid-to-lattice: pack the node, then derive arcs
        against everything already on the layer."""
        node_id, packed = layer.add_white_node(node.span, node.label, node.score)
        if packed:
            return
        for other in list(layer.white_nodes.values()):
            if other.id == node_id:
                continue
            peer = GridNode(other.span, other.label, other.score)
            if grid_connected(node, peer, self.thresholds):
                self._add_arc_once(layer, node_id, other.id, 0.0)
            if grid_connected(peer, node, self.thresholds):
                self._add_arc_once(layer, other.id, node_id, 0.0)

    @staticmethod
    def _add_arc_once(layer: Layer, origin: int, extremity: int, weight: float):
        if origin == extremity:
            return
        if any(a.origin == origin and a.extremity == extremity
               for a in layer.arcs.values()):
            return
        try:
            layer.add_arc(origin, extremity, weight)
        except WouldCreateCycle:
            log.warning("dropped arc %s->%s on %s: would create a cycle",
                        origin, extremity, layer.name)

    def _deposit_to(self, bound: _Bound, report: PumpReport):
        binding = bound.binding
        if not binding.input_layers:
            # a source component gets a single empty trigger batch
            if not bound.triggered and bound.conn.try_deposit([]):
                bound.triggered = True
            return
        nodes, arcs = self._new_slice(bound)
        nodes, arcs = filter_slice(nodes, arcs, binding.filter_threshold)
        records = self._encode_slice(nodes, arcs, binding.params.import_format)
        records.extend(bound.pending_constraints)
        if not records:
            return
        if bound.conn.try_deposit(records):
            bound.forwarded_nodes.update(n.id for n in nodes)
            bound.forwarded_arcs.update(a.id for a in arcs)
            bound.deposited += len(records)
            report.deposited += len(records)
            bound.pending_constraints = []

    def _new_slice(self, bound: _Bound) -> tuple[list[WhiteNode], list[Arc]]:
        """Nodes not yet forwarded to this binding, plus arcs whose both
        endpoints have then been forwarded."""
        nodes: list[WhiteNode] = []
        arcs: list[Arc] = []
        visible = set(bound.forwarded_nodes)
        for name in bound.binding.input_layers:
            layer = self.board.layers[name]
            for node in sorted(layer.white_nodes.values(), key=lambda n: n.id):
                if node.id not in bound.forwarded_nodes:
                    nodes.append(node)
                    visible.add(node.id)
            for arc in sorted(layer.arcs.values(), key=lambda a: a.id):
                if (arc.id not in bound.forwarded_arcs
                        and arc.origin in visible and arc.extremity in visible):
                    arcs.append(arc)
        return nodes, arcs

    @staticmethod
    def _encode_slice(nodes: list[WhiteNode], arcs: list[Arc],
                      import_format: str) -> list[wire.WireRecord]:
        if import_format == "edge-v1":
            return [wire.EdgeRecord(n.span.begin, n.span.end, n.label, n.score)
                    for n in nodes]
        touching: dict[int, tuple[list[int], list[int]]] = {
            n.id: ([], []) for n in nodes}
        for arc in arcs:
            if arc.extremity in touching:
                touching[arc.extremity][0].append(arc.id)
            if arc.origin in touching:
                touching[arc.origin][1].append(arc.id)
        records: list[wire.WireRecord] = [
            wire.NodeRecord(n.id, n.span.begin, n.span.end, n.label, n.score,
                            tuple(touching[n.id][0]), tuple(touching[n.id][1]))
            for n in nodes]
        records.extend(wire.ArcRecord(a.id, a.origin, a.extremity, a.weight)
                       for a in arcs)
        return records

    # -- filtering, constraints, control ------------------------------------------

    def apply_filter(self, layer_name: str, threshold: float | None):
        """Threshold view over a whole layer, as forwarded slices see it."""
        layer = self.board.layers[layer_name]
        return filter_slice(sorted(layer.white_nodes.values(), key=lambda n: n.id),
                            sorted(layer.arcs.values(), key=lambda a: a.id),
                            threshold)

    def forward_constraints(self, binding_name: str, records) -> None:
        """Queue prediction records for a binding; they ride along with the
        next input deposit, each wrapped in a constraint record. A binding
        with no constraint source configured ignores the call."""
        bound = self.bound[binding_name]
        if bound.binding.constraint_source is None:
            return
        bound.pending_constraints.extend(
            r if isinstance(r, wire.ConstraintRecord) else wire.ConstraintRecord(r)
            for r in records)

    def control(self, command: str) -> dict:
        if command == "pause":
            self.run_state = "paused"
        elif command == "resume":
            self.run_state = "running"
        elif command == "step":
            previous = self.run_state
            self.run_state = "stepping"
            self.pump()
            self.run_state = previous if previous != "running" else "paused"
        elif command != "status":
            raise ValueError(f"unknown control command: {command}")
        return self.status()

    def status(self) -> dict:
        per_layer = {}
        for name, layer in self.board.layers.items():
            high_water = max((n.span.end for n in layer.white_nodes.values()),
                             default=0)
            per_layer[name] = {"nodes": len(layer.white_nodes),
                               "arcs": len(layer.arcs),
                               "high_water_frame": high_water}
        per_binding = {}
        for name, bound in self.bound.items():
            per_binding[name] = {"deposited": bound.deposited,
                                 "collected": bound.collected,
                                 "errors": list(bound.errors)}
        return {"state": self.run_state, "rounds": self.rounds,
                "per_layer": per_layer, "per_binding": per_binding}

    def status_json(self) -> str:
        return json.dumps(self.status(), indent=2)

    # -- quiescence ------------------------------------------------------------------

    def boxes_idle(self) -> bool:
        """True when every connection's boxes are observably empty."""
        for bound in self.bound.values():
            try:
                if bound.conn.in_box.is_full() or bound.conn.out_box.is_full():
                    return False
            except BoxRemoved:
                continue
        return True

    def mark_quiescent(self):
        self.run_state = "quiescent"
