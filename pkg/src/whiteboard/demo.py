"""End-to-end demo: simulated incremental speech translation.

For each utterance fixture the driver declares a three-layer board
(phonemes, syntax, target words), spawns one manager process per component
(matrix source, island parser, word-for-word translator), registers the
bindings and pumps until the pipeline goes quiet. Layers are then sealed,
validated and exported.

The coordinator loop is fully non-blocking, and manager processes are
watched for unexpected death, so a killed component turns into a
per-binding error report rather than a hang.
"""

from __future__ import annotations

import logging
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .board import Whiteboard, to_dot, to_json
from .chart import load_grammar
from .coordinator import ComponentBinding, Coordinator
from .errors import ManagerUnavailable, WhiteboardError
from .grid import Thresholds, parse_matrix_file
from .manager import ConnectionParams
from .translate import load_dictionary

log = logging.getLogger(__name__)

MATRIX_SUFFIX = ".mat"


@dataclass
class DemoConfig:
    matrices: Path
    grammar: Path
    dictionary: Path
    out: Path
    thresholds: Thresholds = field(default_factory=Thresholds)
    topk: int = 3
    threshold_syntax: float | None = None
    threshold_ww: float | None = None
    sleep_time: float = 0.05
    export_format: str = "json"
    step: bool = False
    beam: int = 16
    max_wall: float = 60.0


@dataclass
class UtteranceResult:
    name: str
    board: Whiteboard | None
    status: dict
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class DemoResult:
    utterances: list[UtteranceResult] = field(default_factory=list)
    config_error: str | None = None

    @property
    def exit_code(self) -> int:
        if self.config_error is not None:
            return 2
        if not self.utterances or not all(u.ok for u in self.utterances):
            return 1
        return 0


def _utterance_files(matrices: Path) -> list[Path]:
    if matrices.is_file():
        return [matrices]
    files = sorted(matrices.glob(f"*{MATRIX_SUFFIX}"))
    if not files:
        raise WhiteboardError(f"no *{MATRIX_SUFFIX} files under {matrices}")
    return files


def _spawn_worker(role: str, request_root: Path, config: DemoConfig,
                  matrix_file: Path | None = None) -> subprocess.Popen:
    cmd = [sys.executable, "-m", "whiteboard.workers", role,
           "--request-box", str(request_root),
           "--sleep", str(config.sleep_time),
           "--max-gap", str(config.thresholds.max_gap),
           "--max-overlap", str(config.thresholds.max_overlap)]
    if role == "source":
        cmd += ["--matrices", str(matrix_file), "--topk", str(config.topk)]
    elif role == "parser":
        cmd += ["--grammar", str(config.grammar), "--beam", str(config.beam)]
    else:
        cmd += ["--dict", str(config.dictionary), "--grammar", str(config.grammar)]
    return subprocess.Popen(cmd)


def _declare_layers(board: Whiteboard, alphabet: set[str], grammar,
                    dictionary) -> None:
    syntax_labels = alphabet | grammar.nonterminals
    ww_labels = grammar.lexical_labels | {
        word for entry in dictionary.entries.values()
        for word, _ in entry.targets}
    board.declare_layer("phonemes", legal_labels=alphabet)
    board.declare_layer("syntax", legal_labels=syntax_labels,
                        depends_on={"phonemes"})
    board.declare_layer("ww", legal_labels=ww_labels, depends_on={"syntax"})


def _run_utterance(matrix_file: Path, config: DemoConfig, grammar, dictionary,
                   control_lines=None, process_hook=None) -> UtteranceResult:
    name = matrix_file.stem
    matrices = parse_matrix_file(matrix_file.read_text(encoding="utf-8"))
    alphabet = {m.phoneme for m in matrices}
    # re-check the grammar against this utterance's phoneme alphabet
    load_grammar(config.grammar.read_text(encoding="utf-8"), alphabet)

    board = Whiteboard()
    _declare_layers(board, alphabet, grammar, dictionary)
    coordinator = Coordinator(board, config.thresholds)

    mailbox_root = Path(tempfile.mkdtemp(prefix=f"whiteboard-{name}-"))
    processes: dict[str, subprocess.Popen] = {}
    error: str | None = None
    try:
        for role in ("source", "parser", "translator"):
            proc = _spawn_worker(role, mailbox_root / role / "request", config,
                                 matrix_file)
            processes[role] = proc
            if process_hook is not None:
                process_hook(role, proc)

        def params(imp: str, exp: str) -> ConnectionParams:
            return ConnectionParams(config.sleep_time, imp, exp)

        coordinator.register(ComponentBinding(
            "source", mailbox_root / "source" / "request",
            [], "phonemes", params("edge-v1", "edge-v1")))
        coordinator.register(ComponentBinding(
            "parser", mailbox_root / "parser" / "request",
            ["phonemes"], "syntax", params("edge-v1", "inactive-edge-v1"),
            filter_threshold=config.threshold_syntax))
        coordinator.register(ComponentBinding(
            "translator", mailbox_root / "translator" / "request",
            ["syntax"], "ww", params("node-v1", "node-v1"),
            filter_threshold=config.threshold_ww))

        if config.step:
            error = _step_loop(coordinator, processes, control_lines)
        else:
            error = _pump_loop(coordinator, processes, config)

        if error is None:
            _close_connections(coordinator)
    except (ManagerUnavailable, WhiteboardError) as exc:
        error = f"pipeline failed: {exc}"
    finally:
        for proc in processes.values():
            if proc.poll() is None:
                proc.terminate()
        for proc in processes.values():
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
        shutil.rmtree(mailbox_root, ignore_errors=True)

    if error is None:
        error = _seal_layers(board)
    status = coordinator.status()
    if error is not None:
        log.error("utterance %s: %s", name, error)
        return UtteranceResult(name, board, status, error)
    return UtteranceResult(name, board, status)


def _dead_managers(processes: dict[str, subprocess.Popen]) -> list[str]:
    return [role for role, proc in processes.items() if proc.poll() is not None]


def _pump_loop(coordinator: Coordinator, processes, config: DemoConfig) -> str | None:
    """Pump until the pipeline stays quiet for a full stale-lock window."""
    coordinator.run_state = "running"
    quiet_window = 30 * config.sleep_time
    round_sleep = config.sleep_time / 2
    deadline = time.monotonic() + config.max_wall
    quiet_since: float | None = None
    while True:
        dead = _dead_managers(processes)
        if dead:
            for role in dead:
                coordinator.bound[role].note("manager process died")
            return f"manager process died: {', '.join(dead)}"
        report = coordinator.pump()
        now = time.monotonic()
        if now >= deadline:
            return f"pipeline did not settle within {config.max_wall}s"
        if report.progress > 0 or not coordinator.boxes_idle():
            quiet_since = None
        elif quiet_since is None:
            quiet_since = now
        elif now - quiet_since >= quiet_window:
            coordinator.mark_quiescent()
            return None
        time.sleep(round_sleep)


def _step_loop(coordinator: Coordinator, processes, control_lines) -> str | None:
    """Consume step/status/quit commands, one pump per step."""
    lines = control_lines if control_lines is not None else sys.stdin
    for raw in lines:
        command = raw.strip().lower()
        if command in ("", "step", "s"):
            dead = _dead_managers(processes)
            if dead:
                return f"manager process died: {', '.join(dead)}"
            coordinator.control("step")
            print(f"round {coordinator.rounds} done", flush=True)
        elif command == "status":
            print(coordinator.status_json(), flush=True)
        elif command in ("quit", "q"):
            break
        else:
            print(f"unknown command: {command}", flush=True)
    coordinator.mark_quiescent()
    return None


def _close_connections(coordinator: Coordinator) -> None:
    for name, conn in coordinator.connections().items():
        try:
            conn.close(timeout=5.0)
        except WhiteboardError as exc:
            log.warning("closing %s: %s", name, exc)


def _seal_layers(board: Whiteboard) -> str | None:
    for name in board.dependency_order():
        try:
            board.layers[name].seal()
        except WhiteboardError as exc:
            return f"layer {name} failed validation: {exc}"
    if not board.layers["ww"].white_nodes:
        return "final ww layer is empty"
    return None


def _export(result: UtteranceResult, config: DemoConfig, multi: bool) -> None:
    if result.board is None:
        return
    text = (to_json(result.board) if config.export_format == "json"
            else to_dot(result.board))
    if multi or config.out.is_dir():
        config.out.mkdir(parents=True, exist_ok=True)
        path = config.out / f"{result.name}.{config.export_format}"
    else:
        config.out.parent.mkdir(parents=True, exist_ok=True)
        path = config.out
    path.write_text(text, encoding="utf-8")


def demo_run(config: DemoConfig, control_lines=None,
             process_hook=None) -> DemoResult:
    """Run the pipeline over every utterance under `config.matrices`."""
    result = DemoResult()
    try:
        files = _utterance_files(config.matrices)
        grammar = load_grammar(config.grammar.read_text(encoding="utf-8"))
        dictionary = load_dictionary(config.dictionary.read_text(encoding="utf-8"))
    except (OSError, WhiteboardError) as exc:
        result.config_error = str(exc)
        return result
    multi = len(files) > 1
    for matrix_file in files:
        try:
            utterance = _run_utterance(matrix_file, config, grammar, dictionary,
                                       control_lines, process_hook)
        except (OSError, WhiteboardError) as exc:
            result.config_error = f"{matrix_file.name}: {exc}"
            return result
        result.utterances.append(utterance)
        _export(utterance, config, multi)
        if not utterance.ok:
            break
        if config.step:
            break  # step mode drives a single utterance
    return result
