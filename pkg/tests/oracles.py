"""Brute-force reference implementations that the suite checks against.

Each oracle is written from the definitions alone, independently of the
package's data structures and algorithms, so agreement is meaningful.
"""

from __future__ import annotations

import random


def connected_oracle(n_begin: int, n_end: int, m_begin: int, m_end: int,
                     max_gap: int, max_overlap: int) -> bool:
    """Literal transcription of the sequencing definition: begins no later,
    ends strictly earlier, follower's begin inside the end window."""
    begins_earlier = n_begin <= m_begin
    ends_strictly_earlier = n_end < m_end
    lower = (n_end - max_gap) <= m_begin
    upper = m_begin <= (n_end + max_overlap)
    return begins_earlier and ends_strictly_earlier and lower and upper


def dfs_paths(layer) -> list[tuple[tuple[str, ...], float]]:
    """Every source-to-sink path over a layer's real arcs, by naive DFS.

    Sources/sinks are nodes without incoming/outgoing real arcs; an
    isolated node is a one-node path. Scores are node scores plus arc
    weights along the way.
    """
    nodes = {n.id: n for n in layer.white_nodes.values()}
    succ: dict[int, list[int]] = {i: [] for i in nodes}
    indeg: dict[int, int] = {i: 0 for i in nodes}
    weight = {}
    for arc in layer.arcs.values():
        succ[arc.origin].append(arc.extremity)
        indeg[arc.extremity] += 1
        weight[(arc.origin, arc.extremity)] = arc.weight
    out: list[tuple[tuple[str, ...], float]] = []

    def walk(node_id: int, labels: list[str], score: float):
        if not succ[node_id]:
            out.append((tuple(labels), score))
            return
        for nxt in succ[node_id]:
            walk(nxt, labels + [nodes[nxt].label],
                 score + weight[(node_id, nxt)] + nodes[nxt].score)

    for node_id, node in nodes.items():
        if indeg[node_id] == 0:
            walk(node_id, [node.label], node.score)
    return out


def per_cell_topk(matrices, k: int):
    """Expected ranked cells: exhaustive sort per (begin, end) span.

    Returns {rank: {span: (phoneme, score)}} with ranks starting at 1.
    """
    candidates: dict[tuple[int, int], list] = {}
    for idx, matrix in enumerate(matrices):
        for span, score in matrix.scores.items():
            candidates.setdefault(span, []).append((score, matrix.phoneme, idx))
    expected: dict[int, dict] = {}
    for span, options in candidates.items():
        options.sort(key=lambda o: (-o[0], o[1], o[2]))
        for rank, (score, phoneme, _) in enumerate(options[:k], start=1):
            expected.setdefault(rank, {})[span] = (phoneme, score)
    return expected


Item = tuple[str, int, int]  # (category, begin, end)


def closure_oracle(terminals: set[Item], rules: list[tuple[str, tuple[str, ...]]],
                   max_gap: int, max_overlap: int) -> set[Item]:
    """Exhaustive bottom-up closure: every (category, begin, end) derivable
    by tiling rule right-hand sides with junction-compatible items.
    Returns derived items only (seeds excluded)."""
    items: set[Item] = set(terminals)
    while True:
        snapshot = sorted(items)
        by_cat: dict[str, list[Item]] = {}
        for item in snapshot:
            by_cat.setdefault(item[0], []).append(item)
        added = False
        for lhs, rhs in rules:
            for seq in _tilings(by_cat, rhs, max_gap, max_overlap):
                derived = (lhs, seq[0][1], seq[-1][2])
                if derived not in items:
                    items.add(derived)
                    added = True
        if not added:
            return items - set(terminals)


def _tilings(by_cat: dict[str, list[Item]], rhs: tuple[str, ...],
             max_gap: int, max_overlap: int):
    def extend(prefix: list[Item], pos: int):
        if pos == len(rhs):
            yield list(prefix)
            return
        for item in by_cat.get(rhs[pos], ()):
            if prefix and not connected_oracle(
                    prefix[-1][1], prefix[-1][2], item[1], item[2],
                    max_gap, max_overlap):
                continue
            prefix.append(item)
            yield from extend(prefix, pos + 1)
            prefix.pop()

    yield from extend([], 0)


def random_grammar(rng: random.Random, terminals: list[str],
                   max_rules: int = 6) -> list[tuple[str, tuple[str, ...]]]:
    """Random small grammar; single-symbol right-hand sides are kept
    terminal-only so unary nonterminal cycles cannot arise."""
    nonterminals = [f"N{i}" for i in range(rng.randint(1, 3))]
    rules = []
    for _ in range(rng.randint(1, max_rules)):
        lhs = rng.choice(nonterminals)
        length = rng.randint(1, 3)
        if length == 1:
            rhs = (rng.choice(terminals),)
        else:
            rhs = tuple(rng.choice(terminals + nonterminals)
                        for _ in range(length))
        rules.append((lhs, rhs))
    return rules
