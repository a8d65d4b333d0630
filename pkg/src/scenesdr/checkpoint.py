"""Versioned run checkpoints.

A checkpoint is an ``.npz`` archive holding named float arrays plus a JSON
metadata blob and a SHA-256 over both. Floats survive bit-exactly: arrays
are stored raw and JSON floats are written with ``repr`` precision.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np

FORMAT = "scenesdr-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _digest(meta_bytes: bytes, arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256(meta_bytes)
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        h.update(name.encode())
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def save(path, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    """Atomically write a checkpoint (temp file + rename)."""
    path = Path(path)
    payload = {"format": FORMAT, "version": VERSION, **meta}
    meta_bytes = json.dumps(payload, sort_keys=True).encode()
    digest = _digest(meta_bytes, arrays)
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(meta_bytes, dtype=np.uint8),
             __sha256__=np.frombuffer(digest.encode(), dtype=np.uint8), **arrays)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and verify a checkpoint; raises ``CheckpointError`` on any defect."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
    except FileNotFoundError:
        raise CheckpointError(f"{path}: no such checkpoint") from None
    except (OSError, ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    try:
        meta_bytes = data.pop("__meta__").tobytes()
        digest = data.pop("__sha256__").tobytes().decode()
    except KeyError:
        raise CheckpointError(f"{path}: not a scenesdr checkpoint") from None
    if _digest(meta_bytes, data) != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted")
    meta = json.loads(meta_bytes)
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a scenesdr checkpoint")
    if meta.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {meta.get('version')} unsupported (expected {VERSION})")
    return meta, data


def save_run(path, run, extra: dict | None = None) -> Path:
    meta, arrays = run.state_dict()
    if extra:
        meta = {**meta, **extra}
    return save(path, meta, arrays)


def restore_run(path, run) -> dict:
    """Load ``path`` into an already-constructed run object; returns the metadata."""
    meta, arrays = load(path)
    try:
        run.load_state(meta, arrays)
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: incompatible with this run ({exc})") from None
    return meta


def save_policy(path, policy, adam=None, baseline=None, rng: np.random.Generator | None = None) -> Path:
    """Standalone policy checkpoint: weights, optional Adam moments, baseline and rng."""
    meta = {"kind": "policy", "n_inputs": policy.n_inputs, "head_sizes": list(policy.head_sizes),
            "hidden": list(policy.hidden)}
    arrays = {f"p{i}": p for i, p in enumerate(policy.params)}
    if adam is not None:
        meta["adam"] = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step}
        arrays.update({f"m{i}": m for i, m in enumerate(adam.m)})
        arrays.update({f"v{i}": v for i, v in enumerate(adam.v)})
    if baseline is not None:
        meta["baseline"] = {"value": baseline.value, "decay": baseline.decay}
    if rng is not None:
        meta["rng"] = rng.bit_generator.state
    return save(path, meta, arrays)


def load_policy(path):
    """Inverse of ``save_policy``: returns ``(policy, adam, baseline, rng)`` (absent parts are ``None``)."""
    from .policy import AdamState, EmaBaseline, MlpPolicy

    meta, arrays = load(path)
    if meta.get("kind") != "policy":
        raise CheckpointError(f"{path}: not a policy checkpoint")
    policy = MlpPolicy(meta["n_inputs"], meta["head_sizes"], meta["hidden"], np.random.default_rng(0))
    policy.params = [arrays[f"p{i}"] for i in range(len(policy.params))]
    adam = baseline = rng = None
    if "adam" in meta:
        a = meta["adam"]
        adam = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["step"],
                         [arrays[f"m{i}"] for i in range(len(policy.params))],
                         [arrays[f"v{i}"] for i in range(len(policy.params))])
    if "baseline" in meta:
        baseline = EmaBaseline(meta["baseline"]["value"], meta["baseline"]["decay"])
    if "rng" in meta:
        rng = np.random.default_rng(0)
        rng.bit_generator.state = meta["rng"]
    return policy, adam, baseline, rng
