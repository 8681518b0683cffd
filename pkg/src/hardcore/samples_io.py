"""Run-length encoded storage of spin samples with a JSON sidecar."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def rle_encode(bits: np.ndarray) -> np.ndarray:
    """Run lengths of a 0/1 vector, starting with a (possibly empty) 0-run."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size == 0:
        return np.zeros(0, dtype=np.uint32)
    change = np.flatnonzero(np.diff(bits)) + 1
    edges = np.concatenate([[0], change, [bits.size]])
    runs = np.diff(edges).astype(np.uint32)
    if bits[0] == 1:
        runs = np.concatenate([[0], runs]).astype(np.uint32)
    return runs


def rle_decode(runs: np.ndarray, length: int) -> np.ndarray:
    vals = np.arange(len(runs)) % 2
    out = np.repeat(vals, runs).astype(np.uint8)
    if out.size != length:
        raise ValueError(f"decoded {out.size} spins, expected {length}")
    return out


def save_samples(path, samples: np.ndarray, meta: dict) -> None:
    """Write samples (rows of spins) to ``path`` (.npz) and ``path``.json."""
    samples = np.asarray(samples, dtype=np.uint8)
    runs = [rle_encode(row) for row in samples]
    offsets = np.cumsum([0] + [len(r) for r in runs])
    flat = np.concatenate(runs) if runs else np.zeros(0, dtype=np.uint32)
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, runs=flat, offsets=offsets,
                            shape=np.array(samples.shape))
    side = dict(meta)
    side["num_samples"] = int(samples.shape[0])
    side["num_vertices"] = int(samples.shape[1]) if samples.ndim == 2 else 0
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def load_samples(path):
    path = Path(path)
    with np.load(path) as z:
        flat, offsets, shape = z["runs"], z["offsets"], tuple(z["shape"])
    rows = [rle_decode(flat[offsets[i]:offsets[i + 1]], shape[1]) for i in range(shape[0])]
    meta = json.loads(Path(str(path) + ".json").read_text())
    return (np.vstack(rows) if rows else np.zeros(shape, dtype=np.uint8)), meta
