"""Versioned checkpoint container.

A checkpoint is a zip of named float64 tensors (numpy ``.npz``) plus a JSON
header carrying the format version, architecture hyper-parameters and the
feature-set ordering the discrete skill logits index.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    header = {"format_version": FORMAT_VERSION, **meta}
    arrays = {f"tensor/{k}": np.asarray(v, dtype=np.float64) for k, v in tensors.items()}
    arrays["__header__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode(), dtype=np.uint8
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with np.load(path) as data:
            if "__header__" not in data:
                raise CheckpointError(f"{path}: missing header")
            header = json.loads(bytes(data["__header__"]).decode())
            tensors = {
                k[len("tensor/"):]: data[k] for k in data.files if k.startswith("tensor/")
            }
    except (OSError, ValueError, zipfile_error()) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
        )
    return tensors, header


def zipfile_error():
    import zipfile

    return zipfile.BadZipFile
