#!/usr/bin/env python3
# 🌀 Eidosian Path Management
"""
Path helpers for run artifacts.

Output directories given on the command line are resolved against the
current working directory and created on demand.
"""

import logging
from pathlib import Path
from typing import Optional, Union

logger = logging.getLogger("qsd_forge.paths")


def resolve_path(path: Union[str, Path], relative_to: Optional[Path] = None) -> Path:
    """
    Resolve a path to an absolute one.

    Args:
        path: Path to resolve
        relative_to: Base for relative paths (default: current directory)

    Returns:
        Resolved absolute path
    """
    path_obj = Path(path).expanduser()
    if path_obj.is_absolute():
        return path_obj
    base = relative_to if relative_to is not None else Path.cwd()
    return (base / path_obj).resolve()


def ensure_dir(path: Union[str, Path]) -> Path:
    """
    Ensure a directory exists.

    Args:
        path: Path to directory

    Returns:
        Absolute path to the directory
    """
    path_obj = resolve_path(path)
    if not path_obj.exists():
        logger.debug(f"📂 Creating output directory {path_obj}")
    path_obj.mkdir(parents=True, exist_ok=True)
    return path_obj


def output_file(out_dir: Union[str, Path], name: str) -> Path:
    """Path of artifact ``name`` inside ``out_dir``, creating the directory."""
    return ensure_dir(out_dir) / name
