"""
Serializers for the freshness_mdp package.

JSON for summaries and CSV for everything meant to be plotted: experiment
rows, policy tables, search traces and simulation traces. CSV files start
with a ``#`` preamble recording the package version and the resolved
experiment, so a file identifies the run that produced it.
"""
import csv
import json
from enum import Enum
from typing import IO, Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union, cast

import numpy as np
from pydantic import BaseModel

from .mdp import FiniteMdp
from .models import ExperimentSpec, MixedPolicy

Row = Sequence[Any]


class EnhancedJSONEncoder(json.JSONEncoder):
    """
    JSON encoder that also handles pydantic models, Enums and numpy values.
    """

    def default(self, obj: Any) -> Any:
        """Convert Python objects to JSON-compatible types."""
        if isinstance(obj, BaseModel):
            return obj.model_dump(mode="json")
        elif isinstance(obj, Enum):
            return obj.value
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        elif isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        return super().default(obj)


def to_json(
    obj: Union[BaseModel, List[BaseModel], Dict[str, Any]],
    pretty: bool = False,
    sort_keys: bool = False,
    encode_json: bool = True,
    **kwargs: Any
) -> Union[str, Dict[str, Any]]:
    """
    Convert a model, list of models, or dict to a JSON string or dict.

    Args:
        obj: The pydantic model, list of models, or dict to serialize
        pretty: If True, format the JSON with indentation for readability
        sort_keys: If True, sort the keys alphabetically in the JSON output
        encode_json: If True, return a JSON string; if False, return a dict
        **kwargs: Additional arguments to pass to json.dumps()

    Examples:
        >>> to_json(SimConfig(n_runs=10), sort_keys=True)
        >>> to_json({"J": np.float64(3.2)}, pretty=True)
    """
    indent = 2 if pretty else None

    if isinstance(obj, BaseModel):
        data = obj.model_dump(mode="json")
    elif isinstance(obj, list) and all(isinstance(item, BaseModel) for item in obj):
        data = [item.model_dump(mode="json") for item in obj]
    else:
        data = obj

    if encode_json:
        return json.dumps(
            data,
            cls=EnhancedJSONEncoder,
            indent=indent,
            sort_keys=sort_keys,
            **kwargs
        )

    return cast(Dict[str, Any], json.loads(json.dumps(data, cls=EnhancedJSONEncoder)))


def format_value(value: Any) -> str:
    """CSV cell text: '' for None, 12 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    if isinstance(value, (tuple, list)):
        return " ".join(format_value(v) for v in value)
    return str(value)


def resolved_spec(spec: ExperimentSpec) -> Dict[str, Any]:
    """Spec fields with every default that depends on the family filled in."""
    data = spec.model_dump(mode="json")
    data["delta_max"] = spec.resolved_delta_max
    data["b_max"] = spec.resolved_b_max
    data["methods"] = spec.resolved_methods
    return data


def provenance_lines(spec: ExperimentSpec, version: str) -> List[str]:
    """Preamble lines (without the leading '# ') recording what produced a file."""
    return [
        f"freshness-mdp {version}",
        f"family: {spec.family}",
        f"seed: {spec.seed}",
        "spec: " + json.dumps(resolved_spec(spec), sort_keys=True, cls=EnhancedJSONEncoder),
    ]


class CsvTableWriter:
    """
    Streaming CSV writer with a fixed column order.

    The preamble and header are written on construction; every row is
    flushed as soon as it is written so completed rows survive a failure
    later in the run.
    """

    def __init__(self, handle: IO[str], columns: Sequence[str],
                 preamble: Optional[Iterable[str]] = None):
        self.handle = handle
        self.columns = list(columns)
        for line in preamble or ():
            handle.write(f"# {line}\n")
        self._writer = csv.writer(handle, lineterminator="\n")
        self._writer.writerow(self.columns)
        self.n_rows = 0
        handle.flush()

    def write_row(self, row: Row) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(self.columns)}")
        self._writer.writerow([format_value(v) for v in row])
        self.n_rows += 1
        self.handle.flush()

    def write_rows(self, rows: Iterable[Row]) -> None:
        for row in rows:
            self.write_row(row)


def policy_table(mdp: FiniteMdp, policy: np.ndarray) -> Tuple[List[str], List[Row]]:
    """One row per state: the state's components followed by its action."""
    policy = mdp.check_policy(policy)
    names, values = _state_columns(mdp)
    rows = [(*values[s], int(policy[s])) for s in range(mdp.n_states)]
    return [*names, "action"], rows


def mixed_policy_table(mdp: FiniteMdp, mixed: MixedPolicy) -> Tuple[List[str], List[Row]]:
    """One row per state with the action of each component policy."""
    names, values = _state_columns(mdp)
    policies = [mdp.check_policy(p) for p in mixed.policies]
    columns = [*names, "action_pp", "action_pm", "action_mp", "action_mm"]
    rows = [(*values[s], *(int(p[s]) for p in policies)) for s in range(mdp.n_states)]
    return columns, rows


def _state_columns(mdp: FiniteMdp) -> Tuple[List[str], List[Tuple[int, ...]]]:
    if mdp.layout is None:
        return ["state"], [(s,) for s in range(mdp.n_states)]
    return list(mdp.layout.names), [tuple(int(v) for v in row) for row in mdp.layout.values]


SEARCH_TRACE_COLUMNS = [
    "iter",
    "lambda0_A", "lambda1_A", "lambda0_B", "lambda1_B", "lambda0_C", "lambda1_C",
    "lambda0_E", "lambda1_E",
    "c0_A", "c1_A", "c0_B", "c1_B", "c0_C", "c1_C",
    "contains_origin",
]


def search_trace_rows(trace: Iterable[Any]) -> List[Row]:
    """Flatten triangle-search trace rows into SEARCH_TRACE_COLUMNS order."""
    return [
        (
            row.iteration,
            *row.lambda_a, *row.lambda_b, *row.lambda_c, *row.lambda_e,
            *row.c_a, *row.c_b, *row.c_c,
            row.contains_origin,
        )
        for row in trace
    ]
