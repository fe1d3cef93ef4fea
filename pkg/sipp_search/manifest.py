"""JSON run manifests written next to every CLI artifact."""

import hashlib
import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import shortuuid

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search import __version__
from sipp_search.errors import DataFormatError

logger = get_logger(__name__)

MANIFEST_SUFFIX = ".manifest.json"
_DIGEST_CHUNK = 1 << 20


def file_digest(path: str | Path) -> str:
    path = Path(path)
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(_DIGEST_CHUNK), b""):
                digest.update(chunk)
    except OSError as e:
        raise DataFormatError(f"cannot digest {path}: {e}")
    return digest.hexdigest()


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def canonical_json(value: Any) -> str:
    return json.dumps(_plain(value), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class RunManifest:
    command: str
    argv: list[str]
    params: dict[str, Any]
    seeds: dict[str, int] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__

    @property
    def run_id(self) -> str:
        # argv is left out so equivalent flag spellings share an id
        return shortuuid.uuid(
            canonical_json(
                {
                    "command": self.command,
                    "params": self.params,
                    "seeds": self.seeds,
                    "inputs": self.inputs,
                    "version": self.version,
                }
            )
        )

    def to_dict(self) -> dict[str, Any]:
        return _plain(
            {
                "run_id": self.run_id,
                "command": self.command,
                "argv": self.argv,
                "params": self.params,
                "seeds": self.seeds,
                "inputs": self.inputs,
                "version": self.version,
            }
        )


def make_manifest(
    command: str,
    argv: Iterable[str],
    params: Mapping[str, Any],
    seeds: Mapping[str, int] | None = None,
    inputs: Iterable[str | Path] = (),
) -> RunManifest:
    return RunManifest(
        command=command,
        argv=list(argv),
        params=_plain(dict(params)),
        seeds=dict(seeds or {}),
        inputs={str(path): file_digest(path) for path in inputs},
    )


def manifest_path(artifact: str | Path) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + MANIFEST_SUFFIX)


def write_manifest(artifact: str | Path, manifest: RunManifest) -> Path:
    """Write `<artifact>.manifest.json`; the artifact digest is recorded when it exists."""
    data = manifest.to_dict()
    artifact = Path(artifact)
    data["artifact"] = str(artifact)
    if artifact.is_file():
        data["artifact_sha256"] = file_digest(artifact)
    path = manifest_path(artifact)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    logger.debug(f"wrote manifest {path} (run {manifest.run_id})")
    return path


def read_manifest(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormatError(f"cannot read manifest {path}: {e}")
