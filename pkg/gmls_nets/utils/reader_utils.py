import json
import types
from typing import Any, Dict, List, Literal, Sequence, Union, get_args, get_origin, get_type_hints, is_typeddict

from gmls_nets.models.models import ACCEPTANCE_SCHEMAS, DATASET_SCHEMAS, ExperimentConfig
from gmls_nets.utils.constants import CONFIG_SCHEMA_VERSION
from gmls_nets.utils.errors_utils import ConfigError


class ReadFilesUtils:
    """
    Readers for the JSON documents consumed by the CLI. Every reader validates
    before returning, so no compute starts on a malformed file.
    """

    @staticmethod
    def read_config(path: str) -> Dict[str, Any]:
        """
        Reads and validates an experiment configuration.

        Parameters
        ----------
        path : str
            Path to the JSON config file.

        Returns
        -------
        Dict[str, Any]
            The validated configuration.

        Raises
        ------
        ConfigError
            On unreadable files, JSON syntax errors, unknown keys, missing required
            keys or wrongly typed values. The error carries the 1-based line number.
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e.strerror}", source=path) from e
        return ReadFilesUtils.parse_config(text, source=path)

    @staticmethod
    def parse_config(text: str, source: str | None = None) -> Dict[str, Any]:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno, source=source) from e
        try:
            ReadFilesUtils.validate_config(data)
        except ConfigError as e:
            path = getattr(e, "path", ())
            raise ConfigError(e.message, line=_locate_line(text, path), source=source) from e
        return data

    @staticmethod
    def validate_config(data: Any) -> None:
        """
        Validates a parsed configuration against `ExperimentConfig` and the
        experiment-specific dataset and acceptance schemas.
        """
        _check(data, ExperimentConfig, ())
        if data["version"] != CONFIG_SCHEMA_VERSION:
            raise _error(f"unsupported config version {data['version']}", ("version",))
        tag = data["experiment"]
        if "dataset" in data:
            _check(data["dataset"], DATASET_SCHEMAS[tag], ("dataset",))
        if "acceptance" in data:
            _check(data["acceptance"], ACCEPTANCE_SCHEMAS[tag], ("acceptance",))


def _error(message: str, path: Sequence[Any]) -> ConfigError:
    error = ConfigError(f"{'.'.join(str(p) for p in path) or '<root>'}: {message}")
    error.path = tuple(path)
    return error


def _check(value: Any, annotation: Any, path: tuple) -> None:
    if is_typeddict(annotation):
        if not isinstance(value, dict):
            raise _error("expected an object", path)
        hints = get_type_hints(annotation)
        for key in value:
            if key not in hints:
                raise _error(f"unknown key '{key}'", path + (key,))
        for key in annotation.__required_keys__:
            if key not in value:
                raise _error(f"missing required key '{key}'", path)
        for key, item in value.items():
            _check(item, hints[key], path + (key,))
        return
    origin = get_origin(annotation)
    if origin is Literal:
        if value not in get_args(annotation):
            allowed = ", ".join(repr(a) for a in get_args(annotation))
            raise _error(f"value {value!r} not in {{{allowed}}}", path)
        return
    if origin in (list, List):
        if not isinstance(value, list):
            raise _error("expected a list", path)
        (item_type,) = get_args(annotation)
        for i, item in enumerate(value):
            _check(item, item_type, path + (i,))
        return
    if origin in (Union, types.UnionType):
        for option in get_args(annotation):
            try:
                _check(value, option, path)
                return
            except ConfigError:
                continue
        raise _error(f"value {value!r} does not match {annotation}", path)
    if annotation is type(None):
        if value is not None:
            raise _error("expected null", path)
        return
    if annotation is bool:
        if not isinstance(value, bool):
            raise _error("expected a boolean", path)
        return
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise _error("expected an integer", path)
        return
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _error("expected a number", path)
        return
    if annotation is str:
        if not isinstance(value, str):
            raise _error("expected a string", path)
        return
    if annotation is dict:
        if not isinstance(value, dict):
            raise _error("expected an object", path)
        return
    raise _error(f"unsupported schema type {annotation}", path)


def _locate_line(text: str, path: Sequence[Any]) -> int | None:
    """
    Finds the line of the last key of `path` by scanning forward key by key.
    List indices are skipped; the search position only ever moves forward.
    """
    position = 0
    found = False
    for key in path:
        if not isinstance(key, str):
            continue
        index = text.find(f'"{key}"', position)
        if index < 0:
            break
        position = index
        found = True
    if not found:
        return 1
    return text.count("\n", 0, position) + 1
