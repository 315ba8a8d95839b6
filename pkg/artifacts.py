#!/usr/bin/env python3
"""
Artifacts - Provenance-stamped CSV tables and JSON-lines records
Every file the analyzer writes starts with tool, version, command, config and seed
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Union

import orjson
import pandas as pd

from config import TOOL_NAME, TOOL_VERSION, AnalyzerConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def provenance(subcommand: str, cfg: AnalyzerConfig, seed: Optional[int] = None,
               **extra: Any) -> Dict[str, Any]:
    """Header fields for an output artifact (no timestamps, so reruns are byte-identical)"""
    header = {
        'tool': TOOL_NAME,
        'version': TOOL_VERSION,
        'subcommand': subcommand,
        'seed': cfg.SEED if seed is None else seed,
        'config': cfg.resolved(),
    }
    header.update({k: v for k, v in extra.items() if v is not None})
    return header


def _comment_value(value: Any) -> str:
    if isinstance(value, (dict, list, tuple)):
        return orjson.dumps(value, option=orjson.OPT_SORT_KEYS).decode()
    return str(value)


def table_bytes(frame: pd.DataFrame, header: Optional[Mapping[str, Any]] = None) -> bytes:
    lines = [f"# {key}: {_comment_value(value)}" for key, value in (header or {}).items()]
    body = frame.to_csv(index=False, lineterminator='\n', float_format='%.10g')
    return ('\n'.join(lines) + ('\n' if lines else '') + body).encode('utf-8')


def write_table(frame: pd.DataFrame, path: PathLike, header: Optional[Mapping[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(table_bytes(frame, header))
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment='#')


def read_header(path: PathLike) -> Dict[str, str]:
    """The `# key: value` lines at the top of a table"""
    header = {}
    with open(path, encoding='utf-8') as handle:
        for line in handle:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].strip().partition(': ')
            header[key] = value
    return header


def records_bytes(records: Iterable[Mapping[str, Any]], header: Optional[Mapping[str, Any]] = None) -> bytes:
    out: List[bytes] = []
    if header:
        out.append(orjson.dumps({'provenance': dict(header)}, option=orjson.OPT_SORT_KEYS))
    for record in records:
        out.append(orjson.dumps(dict(record), option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY))
    return b'\n'.join(out) + b'\n'


def write_records(records: Iterable[Mapping[str, Any]], path: PathLike,
                  header: Optional[Mapping[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(records_bytes(records, header))
    return path
