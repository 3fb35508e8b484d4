"""Run manifest written at the end of every subcommand."""

import logging
import os
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from config.run_config import RunConfig
from config.settings import TOOL_VERSION
from utils.reports import file_sha256

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunManifest(BaseModel):
    subcommand: str
    config: Dict[str, Any]
    config_hash: str
    seed: int
    tool_version: str = TOOL_VERSION
    inputs: Dict[str, str] = Field(default_factory=dict, description="input path -> sha256")
    outputs: List[str] = Field(default_factory=list)
    output_hashes: Dict[str, str] = Field(default_factory=dict)
    wall_clock: float = 0.0


class RunRecorder:
    """Collects inputs and outputs of one subcommand and writes the manifest when done."""

    def __init__(self, subcommand: str, config: RunConfig, out_dir: Path):
        self.subcommand = subcommand
        self.config = config
        self.out_dir = Path(out_dir)
        self.inputs: Dict[str, str] = {}
        self.outputs: List[Path] = []
        self._start = time.perf_counter()

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def add_input(self, path: Optional[Path]) -> None:
        if path is not None and Path(path).exists():
            self.inputs[str(path)] = file_sha256(Path(path))

    def add_output(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return Path(path)

    def manifest(self) -> RunManifest:
        outputs = [p for p in self.outputs if p.exists()]
        return RunManifest(
            subcommand=self.subcommand,
            config=self.config.to_json_dict(),
            config_hash=self.config_hash,
            seed=self.config.seed,
            inputs=self.inputs,
            outputs=[p.name for p in outputs],
            output_hashes={p.name: file_sha256(p) for p in outputs},
            wall_clock=time.perf_counter() - self._start,
        )

    def write(self) -> Path:
        return write_manifest(self.manifest(), self.out_dir / MANIFEST_NAME)


def write_manifest(manifest: RunManifest, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    os.replace(tmp, path)
    logger.info(f"Wrote run manifest {path} ({len(manifest.outputs)} outputs)")
    return path


def read_manifest(path: Path) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
