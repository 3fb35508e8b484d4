"""CSV reports: one comment line naming the tool version and config hash, then the table."""

import hashlib
import logging
import os
from pathlib import Path
from typing import Sequence

import pandas as pd

from config.settings import TOOL_NAME, TOOL_VERSION

logger = logging.getLogger(__name__)


def report_header(config_hash: str) -> str:
    return f"# {TOOL_NAME} {TOOL_VERSION} manifest={config_hash}"


def write_csv(frame: pd.DataFrame, path: Path, config_hash: str, columns: Sequence[str] = ()) -> Path:
    """Write ``frame`` atomically; an empty frame still gets its header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns:
        frame = frame.reindex(columns=list(columns))
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="") as handle:
        handle.write(report_header(config_hash) + "\n")
        frame.to_csv(handle, index=False, lineterminator="\n")
    os.replace(tmp, path)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
