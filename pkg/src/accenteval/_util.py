"""Small shared helpers: stable seeding and deterministic file output."""

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def stable_seed(base_seed: int, *parts) -> np.random.SeedSequence:
    """Derive a seed sequence from a base seed plus arbitrary hashable parts.

    The derivation goes through blake2b so it does not depend on
    PYTHONHASHSEED or on enumeration order anywhere in the caller.
    """
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return np.random.SeedSequence([int(base_seed), int.from_bytes(digest, "little")])


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(payload: dict, path: str | Path) -> None:
    """Write JSON with sorted keys and a trailing newline.

    Output bytes are a pure function of the payload, so reruns with the
    same inputs produce identical files.
    """
    text = json.dumps(_to_jsonable(payload), sort_keys=True, indent=2) + "\n"
    atomic_write_bytes(text.encode("utf-8"), path)


def atomic_write_bytes(data: bytes, path: str | Path) -> None:
    """Write a file via a temp sibling and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
