"""Layered hypothesis-lattice pipeline framework.

A coordinator owns a whiteboard: a stack of time-aligned, packed hypothesis
lattices organized in a dependency graph. Heterogeneous components run in
their own processes behind managers and exchange line-oriented wire records
through lock-protected file mailboxes; the coordinator is the only party
that ever touches the board. Batch components can be made to look
incremental by delivering their results piecewise in time order.
"""

from . import wire
from .board import (
    Arc,
    GreyNode,
    LatticePath,
    Layer,
    LayerView,
    PackingKey,
    Reading,
    SealReport,
    TimeSpan,
    WhiteNode,
    Whiteboard,
    boards_isomorphic,
    canonical_form,
    from_json,
    to_dot,
    to_json,
)
from .chart import (
    Chart,
    Edge,
    Grammar,
    Rule,
    chart_from_cells,
    chart_to_lattice,
    init_chart,
    island_parse,
    load_grammar,
    select_anchor,
)
from .coordinator import ComponentBinding, Coordinator, PumpReport, filter_slice
from .grid import (
    GridNode,
    PhonemeMatrix,
    RankedMatrix,
    Thresholds,
    grid_connected,
    grid_to_lattice,
    parse_matrix_file,
    topk_matrices,
)
from .mailbox import Mailbox
from .manager import (
    Connection,
    ConnectionParams,
    close_connection,
    incremental_deliver,
    partition_by_end,
    request_connection,
    run_manager,
)
from .translate import Dictionary, DictionaryEntry, load_dictionary, translate_layer

__all__ = [
    "Arc", "Chart", "ComponentBinding", "Connection", "ConnectionParams",
    "Coordinator", "Dictionary", "DictionaryEntry", "Edge", "Grammar",
    "GreyNode", "GridNode", "LatticePath", "Layer", "LayerView", "Mailbox",
    "PackingKey", "PhonemeMatrix", "PumpReport", "RankedMatrix", "Reading",
    "Rule", "SealReport", "Thresholds", "TimeSpan", "WhiteNode", "Whiteboard",
    "boards_isomorphic", "canonical_form", "chart_from_cells",
    "chart_to_lattice", "close_connection", "filter_slice", "from_json",
    "grid_connected", "grid_to_lattice", "incremental_deliver", "init_chart",
    "island_parse", "load_dictionary", "load_grammar", "parse_matrix_file",
    "partition_by_end", "request_connection", "run_manager", "select_anchor",
    "to_dot", "to_json", "topk_matrices", "translate_layer", "wire",
]
