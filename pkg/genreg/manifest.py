# genreg/manifest.py
# -*- coding: utf-8 -*-
"""Run manifests: what produced an artifact, fingerprinted for reproducibility."""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)

MANIFEST_FILENAME = "run_manifest.json"


def file_sha256(path: str, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: Dict = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def create(cls, command: str, config: Dict, seeds: List[int], input_paths: List[str]) -> "RunManifest":
        inputs = {path: file_sha256(path) for path in input_paths if path and os.path.isfile(path)}
        return cls(command=command, config=config, seeds=list(seeds), inputs=inputs)

    @property
    def manifest_id(self) -> str:
        """Stable over command, config, seeds and input contents (not outputs)."""
        payload = json.dumps(
            {"command": self.command, "config": self.config, "seeds": self.seeds,
             "inputs": sorted(self.inputs.values())},
            sort_keys=True, default=str,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def add_output(self, path: str) -> None:
        self.outputs[path] = file_sha256(path)

    def to_dict(self) -> Dict:
        return {
            "manifest_id": self.manifest_id,
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }

    def write(self, directory: str) -> Optional[str]:
        path = os.path.join(directory, MANIFEST_FILENAME)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        logger.debug(f"Wrote manifest {self.manifest_id} to {path}")
        return path
