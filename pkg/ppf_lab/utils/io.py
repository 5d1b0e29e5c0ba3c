"""
Filesystem helpers: atomic writes, CSV tables and content fingerprints.

Every artifact is written to a temporary sibling first and moved into place
with ``os.replace`` so an interrupted run never leaves a half-written file.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import uuid
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd
import yaml

logger = logging.getLogger(__name__)


def _safe_unlink(path: Path) -> None:
    """Delete *path* while silencing most OS errors."""
    try:
        path.unlink(missing_ok=True)
    except Exception as exc:  # noqa: BLE001
        logger.warning("Could not delete %s: %s", path, exc)


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write *text* to *path* atomically (LF newlines, UTF-8)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.parent / f".tmp-{uuid.uuid4().hex}"
    try:
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as dst:
            dst.write(text)
        os.replace(tmp_path, path)
        logger.debug("Wrote %s", path)
        return path
    except Exception:  # noqa: BLE001
        _safe_unlink(tmp_path)
        raise


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.parent / f".tmp-{uuid.uuid4().hex}"
    try:
        with open(tmp_path, "wb") as dst:
            dst.write(payload)
        os.replace(tmp_path, path)
        return path
    except Exception:  # noqa: BLE001
        _safe_unlink(tmp_path)
        raise


def _canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def fingerprint(*parts: Any) -> str:
    """SHA-256 over the canonical JSON of *parts* (strings hashed as-is)."""
    digest = hashlib.sha256()
    for part in parts:
        text = part if isinstance(part, str) else _canonical_json(part)
        digest.update(text.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()


def file_sha256(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.yaml")


def write_yaml(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    return atomic_write_text(path, yaml.safe_dump(payload, sort_keys=True, default_flow_style=False))


def read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        loaded = yaml.safe_load(fh)
    return loaded if isinstance(loaded, dict) else {}


CSV_FLOAT_FORMAT = "%.17g"


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """
    CSV without the index, floats in ``%.17g`` so a re-read parses back to the
    same doubles, LF line ends.
    """
    text = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, text)


__all__ = [
    "atomic_write_text",
    "atomic_write_bytes",
    "fingerprint",
    "file_sha256",
    "sidecar_path",
    "write_yaml",
    "read_yaml",
    "CSV_FLOAT_FORMAT",
    "write_frame",
]
