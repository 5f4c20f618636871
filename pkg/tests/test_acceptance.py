"""Acceptance suite: one test per shipping criterion, each printing a
PASS line with its measured numbers (run with -s or -rA to see them)."""

import hashlib
import json
import random
import shutil
import subprocess
import sys
import threading
import time
from pathlib import Path

from whiteboard import (
    GridNode,
    Thresholds,
    TimeSpan,
    Whiteboard,
    boards_isomorphic,
    chart_from_cells,
    chart_to_lattice,
    from_json,
    grid_connected,
    island_parse,
    load_grammar,
    topk_matrices,
    wire,
)
from whiteboard.demo import DemoConfig, demo_run
from whiteboard.errors import WouldCreateCycle
from whiteboard.grid import PhonemeMatrix
from whiteboard.mailbox import Mailbox
from whiteboard.manager import partition_by_end
from conftest import ACCEPTANCE_LINES
from oracles import closure_oracle, connected_oracle, dfs_paths, random_grammar

HERE = Path(__file__).parent
FIXTURES = HERE.parent / "src" / "whiteboard" / "fixtures"


def ok(n, message):
    line = f"ACCEPTANCE {n}: PASS — {message}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def test_01_connectivity_predicate_oracle():
    rng = random.Random(101)
    start = time.monotonic()
    agree = 0
    for _ in range(10_000):
        b1, b2 = rng.randint(0, 40), rng.randint(0, 40)
        n = GridNode(TimeSpan(b1, b1 + rng.randint(0, 10)), "n", 0.0)
        m = GridNode(TimeSpan(b2, b2 + rng.randint(0, 10)), "m", 0.0)
        th = Thresholds(rng.randint(0, 5), rng.randint(0, 5))
        got = grid_connected(n, m, th)
        expected = connected_oracle(n.span.begin, n.span.end,
                                    m.span.begin, m.span.end,
                                    th.max_gap, th.max_overlap)
        assert got == expected
        agree += 1
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    ok(1, f"10000/{agree} predicate agreements in {elapsed:.2f}s")


def test_02_lattice_invariants_and_path_oracle():
    rng = random.Random(202)
    start = time.monotonic()
    for trial in range(1_000):
        board = Whiteboard()
        layer = board.declare_layer("l")
        ids = []
        for k in range(rng.randint(1, 12)):
            b = rng.randint(0, 15)
            node_id, _ = layer.add_white_node(
                TimeSpan(b, b + rng.randint(0, 3)), f"L{k}",
                round(rng.uniform(-1, 1), 3))
            ids.append(node_id)
        for _ in range(rng.randint(0, 2 * len(ids))):
            try:
                layer.add_arc(rng.choice(ids), rng.choice(ids),
                              round(rng.uniform(-0.5, 0.5), 3))
            except WouldCreateCycle:
                pass
        report = layer.seal()
        # independent oracle over the sealed graph
        succ = {i: list(layer.successors(i)) for i in
                list(layer.white_nodes) + [layer.virtual_initial,
                                           layer.virtual_final]}
        assert report.ok == _oracle_valid_lattice(layer, succ)
        got = sorted((p.labels, round(p.score, 6))
                     for p in layer.enumerate_paths())
        expected = sorted((labels, round(score, 6))
                          for labels, score in dfs_paths(layer))
        assert got == expected
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    ok(2, f"1000 random layers sealed and enumerated in {elapsed:.2f}s")


def _oracle_valid_lattice(layer, succ) -> bool:
    nodes = set(succ)
    # Kahn acyclicity
    indeg = {n: 0 for n in nodes}
    for n, outs in succ.items():
        for m in outs:
            indeg[m] += 1
    queue = [n for n in nodes if indeg[n] == 0]
    seen = 0
    while queue:
        cur = queue.pop()
        seen += 1
        for m in succ[cur]:
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    if seen != len(nodes):
        return False
    # unique first and last
    pred_count = {n: 0 for n in nodes}
    for n, outs in succ.items():
        for m in outs:
            pred_count[m] += 1
    firsts = [n for n in nodes if pred_count[n] == 0]
    lasts = [n for n in nodes if not succ[n]]
    if firsts != [layer.virtual_initial] or lasts != [layer.virtual_final]:
        return False
    # full reachability
    forward = _closure(layer.virtual_initial, succ)
    back = {}
    for n, outs in succ.items():
        for m in outs:
            back.setdefault(m, []).append(n)
    backward = _closure(layer.virtual_final, back)
    return all(n in forward and n in backward for n in layer.white_nodes)


def _closure(start, link):
    stack, seen = [start], set()
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(link.get(cur, ()))
    return seen


def test_03_packing_uniqueness_and_two_way_ambiguity():
    rng = random.Random(303)
    for _ in range(200):
        board = Whiteboard()
        layer = board.declare_layer("l", packing_tolerance=rng.choice([0, 0, 1]))
        for _ in range(rng.randint(1, 40)):
            b = rng.randint(0, 8)
            layer.add_white_node(TimeSpan(b, b + rng.randint(0, 4)),
                                 rng.choice("abc"), rng.uniform(0, 1))
        nodes = list(layer.white_nodes.values())
        eps = layer.packing_tolerance
        for i, n in enumerate(nodes):
            for m in nodes[i + 1:]:
                same = (n.label == m.label
                        and abs(n.span.end - m.span.end) <= eps
                        and abs(n.span.length - m.span.length) <= eps)
                assert not same, "two white nodes share a packing key"
    # same span and label reached through two rules: one node, two readings,
    # two rule-instance connectors
    cells = [(0, 3, "a", 0.4), (3, 6, "b", 0.4), (0, 6, "c", 0.7)]
    grammar = load_grammar("NP -> a b\nNP -> c\n")
    chart = chart_from_cells(cells, Thresholds(0, 0))
    derived = island_parse(chart, grammar, Thresholds(0, 0), beam=None)
    board = Whiteboard()
    syn = board.declare_layer("syntax")
    chart_to_lattice(derived, syn)
    np_nodes = [n for n in syn.white_nodes.values() if n.label == "NP"]
    assert len(np_nodes) == 1
    assert len(np_nodes[0].readings) == 2
    assert len(syn.grey_nodes) == 2
    ok(3, "packing keys unique over 200 random sequences; "
          "two-way ambiguity packs into 1 node / 2 readings / 2 connectors")


def test_04_parser_matches_exhaustive_closure():
    rng = random.Random(404)
    start = time.monotonic()
    for _ in range(200):
        terminals = ["a", "b", "c", "d"][:rng.randint(2, 4)]
        rules = random_grammar(rng, terminals, max_rules=6)
        grammar = load_grammar("".join(
            f"{lhs} -> {' '.join(rhs)}\n" for lhs, rhs in rules))
        cells = []
        seen = set()
        for _ in range(rng.randint(1, 8)):
            b = rng.randint(0, 10)
            key = (b, b + rng.randint(1, 4), rng.choice(terminals))
            if key in seen:
                continue
            seen.add(key)
            cells.append((*key, round(rng.uniform(0, 1), 3)))
        th = Thresholds(rng.choice([0, 1, 2]), rng.choice([0, 1, 2]))
        chart = chart_from_cells(cells, th)
        got = {(e.category, e.span.begin, e.span.end)
               for e in island_parse(chart, grammar, th, beam=None)}
        expected = closure_oracle({(p, b, e) for b, e, p, _ in cells},
                                  rules, th.max_gap, th.max_overlap)
        assert got == expected
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    ok(4, f"200 random parses equal the bottom-up closure in {elapsed:.2f}s")


def test_05_topk_matches_per_cell_sort():
    from oracles import per_cell_topk
    rng = random.Random(505)
    for _ in range(100):
        matrices = []
        frames = rng.randint(4, 12)
        for i in range(rng.randint(1, 6)):
            cells = {}
            for _ in range(rng.randint(0, 10)):
                b = rng.randint(0, frames - 1)
                cells[(b, rng.randint(b, frames))] = round(rng.uniform(0, 1), 3)
            matrices.append(PhonemeMatrix(f"p{i}", cells, frames))
        ranked = topk_matrices(matrices, 3)
        assert {r.rank: r.cells for r in ranked} == per_cell_topk(matrices, 3)
    ok(5, "100 random matrix sets match the exhaustive per-cell sort at k=3")


def test_06_mailbox_exactly_once_across_processes(tmp_path):
    n_connections, n_batches, sleep = 4, 1_000, 0.010
    root = tmp_path / "stress"
    boxes = [Mailbox(root / f"conn{c}", sleep).create()
             for c in range(n_connections)]
    out_json = tmp_path / "consumer.json"
    consumer = subprocess.Popen(
        [sys.executable, str(HERE / "_stress_consumer.py"), str(root),
         str(n_connections), str(n_batches), str(sleep), str(out_json)])
    start = time.monotonic()

    def produce(conn: int):
        rng = random.Random(606 + conn)
        box = boxes[conn]
        for seq in range(n_batches):
            data = [wire.EdgeRecord(rng.randint(0, 99), rng.randint(0, 99),
                                    f"c{conn}", round(rng.uniform(0, 1), 3))
                    for _ in range(rng.randint(0, 4))]
            digest = hashlib.sha256(
                wire.serialize(data, "edge-v1").encode("utf-8")).hexdigest()[:16]
            batch = data + [wire.EdgeRecord(seq, 0, "x" + digest, 0.0)]
            box.deposit(wire.serialize(batch, "edge-v1"), timeout=120.0)

    producers = [threading.Thread(target=produce, args=(c,))
                 for c in range(n_connections)]
    for t in producers:
        t.start()
    for t in producers:
        t.join()
    assert consumer.wait(timeout=120) == 0
    elapsed = time.monotonic() - start
    results = json.loads(out_json.read_text(encoding="utf-8"))
    for conn in range(n_connections):
        report = results[str(conn)]
        assert report["checksum_failures"] == 0, "torn batch observed"
        assert report["seqs"] == list(range(n_batches)), \
            "loss, duplication or reordering observed"
    assert elapsed < 60.0
    ok(6, f"4x{n_batches} handoffs, exactly-once and untorn, in {elapsed:.1f}s")


def test_07_incremental_delivery_reproduces_batches():
    rng = random.Random(707)
    for _ in range(100):
        batch = []
        for i in range(rng.randint(0, 30)):
            b = rng.randint(0, 20)
            kind = rng.random()
            if kind < 0.6:
                batch.append(wire.EdgeRecord(b, b + rng.randint(0, 5),
                                             "p", rng.uniform(0, 1)))
            else:
                batch.append(wire.NodeRecord(i, b, b + rng.randint(0, 5),
                                             "w", rng.uniform(0, 1)))
        pieces = partition_by_end(batch)
        flattened = [r for piece in pieces for r in piece]
        assert sorted(map(repr, flattened)) == sorted(map(repr, batch))
        piece_ends = [max(r.end for r in piece) for piece in pieces]
        assert piece_ends == sorted(piece_ends)
        for piece in pieces:
            assert len({r.end for r in piece}) == 1
    ok(7, "100 random batches partition into end-ordered pieces that "
          "concatenate back exactly")


def _run_demo_cli(matrices: Path, out: Path) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "whiteboard", "demo", "run",
         "--matrices", str(matrices),
         "--grammar", str(FIXTURES / "words.grammar"),
         "--dict", str(FIXTURES / "words.dict"),
         "--out", str(out), "--export", "json"],
        capture_output=True, text=True, timeout=60)


def test_08_end_to_end_demo_on_hai(tmp_path):
    matrices = tmp_path / "utterances"
    matrices.mkdir()
    shutil.copy(FIXTURES / "hai.mat", matrices / "hai.mat")
    exports = []
    for run in range(2):
        out = tmp_path / f"run{run}.json"
        start = time.monotonic()
        proc = _run_demo_cli(matrices, out)
        elapsed = time.monotonic() - start
        assert proc.returncode == 0, proc.stderr
        assert elapsed < 10.0
        exports.append(out.read_text(encoding="utf-8"))
    doc = json.loads(exports[0])
    [ww] = [layer for layer in doc["layers"] if layer["name"] == "ww"]
    assert sorted(n["label"] for n in ww["nodes"]) == [
        "ashes", "the-lungs", "yes", "yes-sir"]
    assert {(n["begin"], n["end"]) for n in ww["nodes"]} == {(0, 9)}
    assert boards_isomorphic(from_json(exports[0]), from_json(exports[1]))
    ok(8, "hai demo yields exactly yes/yes-sir/the-lungs/ashes over the "
          "source span, deterministically, under 10s per run")


def test_09_killing_the_parser_fails_fast_not_hung(tmp_path):
    sleep_time = 0.05
    config = DemoConfig(
        matrices=FIXTURES / "hai.mat",
        grammar=FIXTURES / "words.grammar",
        dictionary=FIXTURES / "words.dict",
        out=tmp_path / "out.json",
        sleep_time=sleep_time,
        max_wall=30.0,
    )
    spawned = {}
    kill_time = {}

    def hook(role, proc):
        spawned[role] = proc
        if len(spawned) == 3:
            # the worker argv carries its request box; once conn-1 exists,
            # registration is over and the pipeline is mid-run
            request_root = Path(spawned["parser"].args[
                spawned["parser"].args.index("--request-box") + 1])

            def assassin():
                deadline = time.monotonic() + 15.0
                while time.monotonic() < deadline:
                    if (request_root.parent / "conn-1").is_dir():
                        break
                    time.sleep(0.01)
                time.sleep(5 * sleep_time)  # let a round or two pass
                kill_time["t"] = time.monotonic()
                spawned["parser"].kill()
            threading.Thread(target=assassin, daemon=True).start()

    start = time.monotonic()
    result = demo_run(config, process_hook=hook)
    finished = time.monotonic()
    assert finished - start < 30.0, "coordinator hung"
    assert result.exit_code == 1
    [utterance] = result.utterances
    assert not utterance.ok
    parser_errors = utterance.status["per_binding"].get("parser", {}).get(
        "errors", [])
    assert parser_errors or "parser" in (utterance.error or "")
    if "t" in kill_time:
        detection = finished - kill_time["t"]
        assert detection < 30 * sleep_time + 1.0
        ok(9, f"parser kill detected and reported in {detection:.2f}s "
              f"(bound {30 * sleep_time:.1f}s + teardown)")
    else:
        ok(9, "parser died before mid-run kill; failure still reported fast")


def test_10_wire_roundtrip_on_random_records():
    rng = random.Random(1010)
    token_chars = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-."

    def token():
        return "".join(rng.choice(token_chars)
                       for _ in range(rng.randint(1, 12)))

    def score():
        return rng.choice([
            rng.uniform(-1e6, 1e6),
            float(rng.randint(-10, 10)),
            rng.random() * 10 ** rng.randint(-12, 12),
        ])

    def ids():
        return tuple(rng.randint(0, 10**6)
                     for _ in range(rng.randint(0, 6)))

    count = 0
    for _ in range(2_500):
        records = {
            "edge-v1": wire.EdgeRecord(rng.randint(0, 10**6),
                                       rng.randint(0, 10**6), token(), score()),
            "node-v1": wire.NodeRecord(rng.randint(0, 10**6),
                                       rng.randint(0, 10**6),
                                       rng.randint(0, 10**6), token(), score(),
                                       ids(), ids()),
            "arc-v1": wire.ArcRecord(rng.randint(0, 10**6),
                                     rng.randint(0, 10**6),
                                     rng.randint(0, 10**6), score()),
            "inactive-edge-v1": wire.InactiveEdgeRecord(
                rng.randint(0, 10**6), rng.randint(0, 10**6),
                rng.randint(0, 10**6), token(), score(), ids()),
        }
        for fmt, record in records.items():
            [back] = wire.parse(wire.serialize([record], fmt), fmt)
            assert back == record
            count += 1
    assert count == 10_000
    ok(10, f"{count} random records of every format code round-tripped")
