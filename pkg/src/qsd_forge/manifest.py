#!/usr/bin/env python3
# 🌀 Eidosian Run Manifest
"""
Reproducibility record for one command-line run.

The config hash covers the model file text and the effective numerical
settings; together with the master seed it determines every numeric
artifact of the run.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from .utils.tables import write_json
from .version import get_version_string

logger = logging.getLogger("qsd_forge.manifest")


def config_hash(model_text: str, settings: Mapping[str, Any]) -> str:
    """64-bit blake2b digest of the model text and the sorted settings."""
    digest = hashlib.blake2b(digest_size=8)
    digest.update(model_text.encode("utf-8"))
    digest.update(json.dumps(dict(settings), sort_keys=True, default=str).encode("utf-8"))
    return digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config_hash: str
    subcommand: str
    master_seed: Optional[int] = None
    tool_version: str = field(default_factory=get_version_string)
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    settings: Dict[str, Any] = field(default_factory=dict)
    exit_code: Optional[int] = None

    def record(self, path: Union[str, Path]) -> Path:
        """Note an artifact written by the run."""
        target = Path(path)
        self.outputs.append(target.name)
        return target

    def finish(self, out_dir: Union[str, Path], exit_code: int = 0) -> Path:
        """Stamp the end time and write ``manifest.json`` next to the artifacts."""
        self.finished = _now()
        self.exit_code = exit_code
        target = Path(out_dir) / "manifest.json"
        payload = asdict(self)
        payload["outputs"] = sorted(set(self.outputs))
        write_json(target, payload, self.config_hash, self.master_seed)
        logger.debug(f"🧾 Manifest written to {target}")
        return target
