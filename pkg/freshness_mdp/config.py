"""
Experiment configuration files.

A configuration file holds one ``key = value`` pair per line. ``#`` starts
a comment, blank lines are ignored and lists are comma separated. The
swept variable of a sweep family is given as a list, e.g. ``alpha = 0.1,
0.2, 0.3``; it becomes the experiment grid.
"""
import os
from typing import Any, Dict, List, Mapping, Optional, Union

from pydantic import ValidationError as PydanticValidationError

from .exceptions import ConfigurationError, ParseError, ValidationError
from .models import SWEPT_FIELD, ExperimentSpec
from .utils import get_logger

logger = get_logger("config")

# file key -> ExperimentSpec field
KEY_MAP: Dict[str, str] = {
    "family": "family",
    "model": "model",
    "method": "methods",
    "methods": "methods",
    "N": "N",
    "pR": "p_R",
    "ps": "p_s",
    "alpha": "alpha",
    "q": "q",
    "alpha_min": "alpha_min",
    "alpha_max": "alpha_max",
    "delta_max": "delta_max",
    "bmax": "b_max",
    "epsV": "eps_v",
    "epsLambda": "eps_lambda",
    "gamma": "gamma",
    "max_iterations": "max_iterations",
    "max_outer": "max_outer",
    "T": "horizon_T",
    "runs": "n_runs",
    "seed": "seed",
    "burn_in": "burn_in",
    "out": "out",
    "trace_out": "trace_out",
    "workers": "workers",
}
FIELD_NAMES = set(KEY_MAP.values())
LIST_FIELDS = {"methods", "b_max"}

RawValue = Union[str, List[str]]


def _split(value: str) -> RawValue:
    if "," not in value:
        return value
    return [item.strip() for item in value.split(",") if item.strip()]


def canonical_key(key: str) -> str:
    """ExperimentSpec field name for a file key or a field name."""
    if key in KEY_MAP:
        return KEY_MAP[key]
    if key in FIELD_NAMES:
        return key
    raise ConfigurationError(f"unknown configuration key {key!r}", parameter=key)


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, RawValue]:
    """
    Parse configuration text into raw values keyed by field name.

    Raises:
        ParseError: On a line without '=', an empty key or value, or a repeated key
        ConfigurationError: On an unknown key
    """
    values: Dict[str, RawValue] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value' at line {number}",
                             source=source, line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ParseError(f"empty key or value at line {number}",
                             source=source, line=number)
        try:
            field = canonical_key(key)
        except ConfigurationError as e:
            e.details["line"] = number
            raise
        if field in values:
            raise ParseError(f"key {key!r} repeated at line {number}",
                             source=source, line=number)
        values[field] = _split(value)
    return values


def _as_list(value: Any) -> List[Any]:
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, str):
        split = _split(value)
        return split if isinstance(split, list) else [split]
    return [value]


def build_spec(values: Mapping[str, Any]) -> ExperimentSpec:
    """
    Validate merged raw values into an ExperimentSpec.

    Raises:
        ValidationError: Naming the field and the violated invariant
    """
    data = dict(values)
    for field in LIST_FIELDS:
        if field in data:
            data[field] = _as_list(data[field])

    swept = SWEPT_FIELD.get(str(data.get("family", "")))
    if swept is not None and swept in data and "grid" not in data:
        data["grid"] = _as_list(data.pop(swept))

    try:
        return ExperimentSpec(**data)
    except PydanticValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or None
        message = first.get("msg", str(e)).removeprefix("Value error, ")
        if field == "grid" and swept is not None:
            field = swept
        raise ValidationError(
            f"{field}: {message}" if field else message,
            field=field,
            value=first.get("input") if field else None,
            cause=e,
        ) from e


def load_spec(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentSpec:
    """
    Read a configuration file and apply command-line overrides.

    Args:
        path: Configuration file, or None to build from overrides alone
        overrides: Values keyed by file key or field name; None values are skipped

    Returns:
        The resolved ExperimentSpec
    """
    values: Dict[str, Any] = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigurationError(f"configuration file {path} not found",
                                     parameter="config", value=path)
        with open(path, encoding="utf-8") as handle:
            values.update(parse_config_text(handle.read(), source=path))
        logger.debug(f"read {len(values)} keys from {path}")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        values[canonical_key(key)] = value
    return build_spec(values)
