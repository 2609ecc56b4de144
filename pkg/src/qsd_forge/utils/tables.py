#!/usr/bin/env python3
# 🌀 Eidosian Table Writers
"""
CSV and JSON writers for numeric artifacts.

Every file starts with a provenance comment carrying the config hash and
the master seed. Floats are written with 17 significant digits so that a
file read back reproduces the in-memory values bit for bit.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import numpy as np

from ..version import get_version_string

logger = logging.getLogger("qsd_forge.tables")

FLOAT_FORMAT = "%.17g"


def provenance_line(config_hash: str, seed: Optional[int]) -> str:
    """The comment line heading every numeric artifact."""
    seed_text = "none" if seed is None else str(seed)
    return f"# qsd_forge {get_version_string()} config_hash={config_hash} seed={seed_text}"


def write_csv(
    path: Union[str, Path],
    columns: Mapping[str, Sequence[Any]],
    config_hash: str,
    seed: Optional[int] = None,
) -> Path:
    """
    Write equally long columns as CSV.

    Args:
        path: Destination file
        columns: Ordered mapping of column name to values
        config_hash: Hash recorded in the provenance line
        seed: Master seed recorded in the provenance line

    Returns:
        The written path
    """
    names = list(columns)
    arrays = [np.asarray(columns[name]) for name in names]
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"columns of unequal length: {dict(zip(names, map(len, arrays)))}")

    fmt = ["%d" if np.issubdtype(a.dtype, np.integer) else FLOAT_FORMAT for a in arrays]
    table = np.empty((lengths.pop() if lengths else 0, len(names)), dtype=object)
    for j, a in enumerate(arrays):
        table[:, j] = a

    header = provenance_line(config_hash, seed) + "\n" + ",".join(names)
    target = Path(path)
    np.savetxt(target, table, fmt=fmt, delimiter=",", header=header, comments="")
    logger.debug(f"📝 Wrote {target.name} ({table.shape[0]} rows)")
    return target


def _jsonable(value: Any) -> Any:
    """Map numpy scalars and non-finite floats onto plain JSON values."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return value


def write_json(
    path: Union[str, Path],
    payload: Dict[str, Any],
    config_hash: str,
    seed: Optional[int] = None,
) -> Path:
    """
    Write a JSON report with a leading ``provenance`` entry.

    Keys are sorted so that equal payloads give byte-identical files.
    """
    document = {"provenance": provenance_line(config_hash, seed)[2:]}
    document.update(_jsonable(payload))
    target = Path(path)
    with open(target, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug(f"📝 Wrote {target.name}")
    return target
