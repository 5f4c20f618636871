"""Record-level components for the demo pipeline.

Each class is a callable suitable for `run_manager`: wire records in, wire
records out. They are deliberately self-contained — a component never
touches the whiteboard and only ever sees its own connection's records.
"""

from __future__ import annotations

from pathlib import Path

from . import wire
from .chart import Edge, Grammar, chart_from_cells, island_parse
from .grid import Thresholds, parse_matrix_file, topk_matrices
from .translate import Dictionary


class MatrixSource:
    """Stands in for a speech recognizer: on the first trigger batch it
    loads one utterance's phoneme matrices, ranks them, and emits every
    ranked cell as an edge record in end-time order."""

    def __init__(self, matrix_file: Path | str, k: int = 3):
        self.matrix_file = Path(matrix_file)
        self.k = k
        self.fired = False

    def __call__(self, records) -> list[wire.WireRecord]:
        if self.fired:
            return []
        self.fired = True
        matrices = parse_matrix_file(self.matrix_file.read_text(encoding="utf-8"))
        out: list[wire.WireRecord] = []
        for ranked in topk_matrices(matrices, self.k):
            for (begin, end), (phoneme, score) in ranked.cells.items():
                out.append(wire.EdgeRecord(begin, end, phoneme, score))
        out.sort(key=lambda r: (r.end, r.begin, r.phoneme))
        return out


class IslandParser:
    """Accumulates phoneme edges across batches, re-parses the full cell
    set each time, and emits only the structures not yet delivered.

    Record ids are assigned per derivation signature, so an edge keeps its
    id across re-parses and children always precede their parents on the
    wire. Terminal phonemes used by a delivered structure are delivered
    too, as childless inactive-edge records.
    """

    def __init__(self, grammar: Grammar, thresholds: Thresholds,
                 beam: int | None = 16):
        self.grammar = grammar
        self.thresholds = thresholds
        self.beam = beam
        self.cells: set[tuple[int, int, str, float]] = set()
        self.id_of_sig: dict = {}
        self.emitted: set = set()

    def _id_for(self, edge: Edge) -> int:
        sig = edge.signature()
        if sig not in self.id_of_sig:
            self.id_of_sig[sig] = len(self.id_of_sig) + 1
        return self.id_of_sig[sig]

    def __call__(self, records) -> list[wire.WireRecord]:
        for record in records:
            if isinstance(record, wire.EdgeRecord):
                self.cells.add((record.begin, record.end,
                                record.phoneme, record.score))
        if not self.cells:
            return []
        chart = chart_from_cells(sorted(self.cells), self.thresholds)
        derived = island_parse(chart, self.grammar, self.thresholds, self.beam)
        out: list[wire.WireRecord] = []

        def emit(edge: Edge) -> int:
            wire_id = self._id_for(edge)
            sig = edge.signature()
            if sig in self.emitted:
                return wire_id
            self.emitted.add(sig)
            child_ids = tuple(emit(c) for c in edge.children)
            out.append(wire.InactiveEdgeRecord(
                wire_id, edge.span.begin, edge.span.end, edge.category,
                edge.score, child_ids))
            return wire_id

        for edge in derived:
            emit(edge)
        return out


class WordForWordTranslator:
    """Maps each lexical node record to one node per dictionary meaning and
    mirrors arcs between translated nodes pairwise.

    Keeps the input-to-output correspondence across batches, since an arc
    may arrive after the nodes it joins.
    """

    def __init__(self, dictionary: Dictionary, lexical_labels: set[str]):
        self.dictionary = dictionary
        self.lexical_labels = set(lexical_labels)
        self.translations: dict[int, list[tuple[int, str]]] = {}
        self.seen_nodes: set[int] = set()
        self.seen_arcs: set[int] = set()
        self.next_id = 1

    def _fresh(self) -> int:
        out = self.next_id
        self.next_id += 1
        return out

    def __call__(self, records) -> list[wire.WireRecord]:
        out_nodes: list[wire.NodeRecord] = []
        out_arcs: list[wire.ArcRecord] = []
        for record in records:
            if isinstance(record, wire.NodeRecord):
                if record.node_id in self.seen_nodes:
                    continue
                self.seen_nodes.add(record.node_id)
                if record.label not in self.lexical_labels:
                    continue
                entry = self.dictionary.get(record.label)
                meanings = (entry.targets if entry is not None
                            else ((record.label, "untranslated"),))
                targets = []
                for word, _sense in meanings:
                    node_id = self._fresh()
                    targets.append((node_id, word))
                    out_nodes.append(wire.NodeRecord(
                        node_id, record.begin, record.end, word, record.score))
                self.translations[record.node_id] = targets
            elif isinstance(record, wire.ArcRecord):
                if record.arc_id in self.seen_arcs:
                    continue
                self.seen_arcs.add(record.arc_id)
                for a, _ in self.translations.get(record.origin, ()):
                    for b, _ in self.translations.get(record.extremity, ()):
                        out_arcs.append(wire.ArcRecord(
                            self._fresh(), a, b, record.weight))
        return [*out_nodes, *out_arcs]


def identity_component(records) -> list[wire.WireRecord]:
    """Echo server; handy for protocol tests."""
    return list(records)
