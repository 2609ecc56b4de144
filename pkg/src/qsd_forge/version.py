#!/usr/bin/env python3
# 🌀 Eidosian Version System - Single Source of Truth
"""
Version information for QSD Forge.

Every manifest and every CSV header written by the CLI carries this
version, so a result file can always be traced back to the code that
produced it.
"""

import os
import re
from typing import Dict, Tuple, Union

VERSION_MAJOR = 0
VERSION_MINOR = 3
VERSION_PATCH = 0
VERSION_LABEL = "beta"  # "alpha", "beta", "rc" or ""
VERSION_LABEL_NUM = 0

_VERSION_PATTERN = re.compile(r"(\d+)\.(\d+)\.(\d+)(?:-([a-zA-Z]+)\.?(\d+)?)?$")
_PEP440_TAGS = {"alpha": "a", "beta": "b", "rc": "rc"}


def _assemble(major: int, minor: int, patch: int, label: str, label_num: int) -> Tuple[str, str]:
    """Build the display and PEP 440 forms of a version."""
    version = f"{major}.{minor}.{patch}"
    pep440 = version
    if label:
        version += f"-{label}"
        if label_num > 0:
            version += f".{label_num}"
        tag = _PEP440_TAGS.get(label)
        pep440 += f"{tag}{label_num}" if tag else f".{label}{label_num}"
    return version, pep440


def _from_env() -> Tuple[int, int, int, str, int]:
    """Components from ``QSD_FORGE_VERSION`` when it parses, else the constants."""
    match = _VERSION_PATTERN.match(os.environ.get("QSD_FORGE_VERSION", ""))
    if not match:
        return VERSION_MAJOR, VERSION_MINOR, VERSION_PATCH, VERSION_LABEL, VERSION_LABEL_NUM
    major, minor, patch, label, label_num = match.groups()
    return int(major), int(minor), int(patch), label or "", int(label_num or 0)


_COMPONENTS = _from_env()
VERSION, PEP440_VERSION = _assemble(*_COMPONENTS)
__version__ = VERSION


def get_version_string() -> str:
    """
    Get the full version string.

    Returns:
        Complete version string, e.g. ``0.3.0-beta``
    """
    return VERSION


def get_version_tuple() -> Tuple[int, int, int, str, int]:
    """
    Get the version components as a tuple.

    Returns:
        Tuple of (major, minor, patch, label, label_number)
    """
    return _COMPONENTS


def get_version_info() -> Dict[str, Union[int, str]]:
    """
    Get complete version information as a dictionary.

    Returns:
        Dictionary with version components
    """
    major, minor, patch, label, label_num = _COMPONENTS
    return {
        "major": major,
        "minor": minor,
        "patch": patch,
        "label": label,
        "label_num": label_num,
        "version": VERSION,
        "pep440_version": PEP440_VERSION,
    }


if __name__ == "__main__":
    print(f"QSD Forge v{VERSION} (PEP440: {PEP440_VERSION})")
