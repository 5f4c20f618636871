"""Phoneme score matrices, top-k ranking, and grid connectivity.

A grid is a set of (span, label, score) nodes with no arcs: two nodes are
implicitly in sequence when the second begins no earlier, ends strictly
later, and its begin falls inside the gap/overlap window around the first
node's end. Converting a grid to a lattice layer makes that implicit
connectivity explicit as arcs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .board import Layer, TimeSpan
from .errors import InconsistentFrameCount, ParseError
from .wire import EdgeRecord, parse_line

Cell = tuple[int, int]  # (begin, end)


@dataclass(frozen=True)
class Thresholds:
    """Gapping and overlapping limits, in frames."""

    max_gap: int = 2
    max_overlap: int = 2

    def __post_init__(self):
        if self.max_gap < 0 or self.max_overlap < 0:
            raise ValueError("thresholds must be non-negative")


@dataclass
class PhonemeMatrix:
    """Score table for one phoneme: (begin, end) frame pair -> score."""

    phoneme: str
    scores: dict[Cell, float]
    frame_count: int

    def __post_init__(self):
        for begin, end in self.scores:
            if not (0 <= begin <= end <= self.frame_count):
                raise ValueError(
                    f"cell ({begin},{end}) outside 0..{self.frame_count}")


@dataclass
class RankedMatrix:
    """Rank-r cells: the r-th best (phoneme, score) per span."""

    rank: int
    cells: dict[Cell, tuple[str, float]]
    frame_count: int = 0


@dataclass(frozen=True)
class GridNode:
    span: TimeSpan
    label: str
    score: float


def grid_connected(n: GridNode, m: GridNode, th: Thresholds) -> bool:
    """True iff m may directly follow n under the gap/overlap window."""
    return (n.span.begin <= m.span.begin
            and n.span.end < m.span.end
            and n.span.end - th.max_gap <= m.span.begin <= n.span.end + th.max_overlap)


def topk_matrices(matrices: list[PhonemeMatrix], k: int) -> list[RankedMatrix]:
    """Per-span k best (phoneme, score) pairs across all matrices.

    Ties break by phoneme label, then by matrix order, so results are
    identical across platforms.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not matrices:
        return []
    frame_count = matrices[0].frame_count
    for m in matrices[1:]:
        if m.frame_count != frame_count:
            raise InconsistentFrameCount(
                f"matrix {m.phoneme!r} has frame count {m.frame_count}, "
                f"expected {frame_count}")
    per_span: dict[Cell, list[tuple[float, str, int]]] = {}
    for idx, m in enumerate(matrices):
        for cell, score in m.scores.items():
            per_span.setdefault(cell, []).append((score, m.phoneme, idx))
    ranked: list[RankedMatrix] = [RankedMatrix(r + 1, {}, frame_count)
                                  for r in range(k)]
    for cell, candidates in per_span.items():
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        for r, (score, phoneme, _) in enumerate(candidates[:k]):
            ranked[r].cells[cell] = (phoneme, score)
    return [rm for rm in ranked if rm.cells]


def grid_to_lattice(nodes: list[GridNode], th: Thresholds, layer: Layer) -> None:
    """Populate an empty layer: one (packed) white node per grid node, one
    arc per connected ordered pair. The caller seals afterwards."""
    white: list[int] = []
    for gn in nodes:
        node_id, _ = layer.add_white_node(gn.span, gn.label, gn.score)
        white.append(node_id)
    added: set[tuple[int, int]] = set()
    for i, n in enumerate(nodes):
        for j, m in enumerate(nodes):
            if i == j or not grid_connected(n, m, th):
                continue
            pair = (white[i], white[j])
            if pair[0] != pair[1] and pair not in added:
                layer.add_arc(pair[0], pair[1])
                added.add(pair)


def parse_matrix_file(text: str) -> list[PhonemeMatrix]:
    """Parse an utterance fixture: one `(begin end phoneme score)` cell per
    line, blank lines and `;` comments ignored."""
    cells: list[EdgeRecord] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        rec = parse_line(line, lineno, "edge-v1")
        if not isinstance(rec, EdgeRecord):
            raise ParseError("matrix files hold edge records only", lineno)
        if rec.begin < 0 or rec.end < rec.begin:
            raise ParseError(f"bad span ({rec.begin},{rec.end})", lineno)
        cells.append(rec)
    frame_count = max((c.end for c in cells), default=0)
    by_phoneme: dict[str, dict[Cell, float]] = {}
    for c in cells:
        by_phoneme.setdefault(c.phoneme, {})[(c.begin, c.end)] = c.score
    return [PhonemeMatrix(ph, scores, frame_count)
            for ph, scores in sorted(by_phoneme.items())]
