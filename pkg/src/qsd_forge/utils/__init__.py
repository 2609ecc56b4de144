"""
QSD Forge Utilities - path handling and artifact writers.
"""

from .paths import ensure_dir, output_file, resolve_path
from .tables import provenance_line, write_csv, write_json

__all__ = ["resolve_path", "ensure_dir", "output_file", "provenance_line", "write_csv", "write_json"]
