"""Deterministic run artifacts: hashed configs, checksummed CSV and JSON.

Every artifact a run emits opens with a `# config=<hash>` line (CSV and
snapshots) or carries a top-level "config_hash" key (JSON), where the hash
digests the command, parameters, and seed but not the output directory, so
the same run lands on identical bytes wherever it is written.  Reals are
printed with 17 significant digits, which round-trips doubles exactly;
artifact files are therefore diff-able and golden-testable, and the
manifest records a sha256 per file for replay comparison.
"""

import hashlib
import json
import os
import platform
from dataclasses import dataclass

from .errors import IoError

__all__ = [
    "OutputLock",
    "canonical_json",
    "config_hash",
    "file_sha256",
    "format_cell",
    "write_csv",
    "write_json",
    "write_manifest",
    "write_snapshot",
]

MANIFEST_NAME = "manifest.json"
_LOCK_NAME = ".lock"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(command: str, params: dict, seed: int) -> str:
    """12-hex-digit digest of what determines a run's numbers."""
    blob = canonical_json({"command": command, "params": params,
                           "seed": seed})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "%d" % value
    if isinstance(value, int):
        return "%d" % value
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_csv(path, header: str, rows, chash: str) -> None:
    lines = [f"# config={chash}", header]
    for row in rows:
        lines.append(",".join(format_cell(cell) for cell in row))
    _write_text(path, "\n".join(lines) + "\n")


def write_json(path, payload: dict, chash: str) -> None:
    body = dict(payload)
    body["config_hash"] = chash
    _write_text(path, json.dumps(body, sort_keys=True, indent=2) + "\n")


def write_snapshot(path, cluster, chash: str) -> None:
    _write_text(path, f"# config={chash}\n" + cluster.to_text())


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(65536), b""):
                digest.update(block)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return digest.hexdigest()


def write_manifest(output_dir, config: dict, chash: str,
                   artifact_names, meta: dict, wall_time: float) -> str:
    """Record the config echo, library versions, and per-file checksums."""
    import numpy
    import scipy

    from . import __version__

    artifacts = {}
    for name in sorted(artifact_names):
        artifacts[name] = file_sha256(os.path.join(output_dir, name))
    payload = {
        "config": config,
        "config_hash": chash,
        "versions": {
            "floorwalk": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "meta": meta,
        "wall_time_s": wall_time,
        "artifacts": artifacts,
    }
    path = os.path.join(output_dir, MANIFEST_NAME)
    _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


@dataclass
class OutputLock:
    """Exclusive claim on an output directory for the length of a run.

    Creation is O_EXCL, so two concurrent runs cannot share a directory;
    a crash leaves the lock behind and the error message says which file
    to remove.
    """

    output_dir: str

    def __enter__(self):
        self._path = os.path.join(self.output_dir, _LOCK_NAME)
        try:
            fd = os.open(self._path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise IoError(
                f"{self.output_dir} is locked by another run; remove "
                f"{self._path} if that run is dead") from None
        except OSError as exc:
            raise IoError(f"cannot lock {self.output_dir}: {exc}") from exc
        os.close(fd)
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            os.unlink(self._path)
        except OSError:
            pass
        return False
