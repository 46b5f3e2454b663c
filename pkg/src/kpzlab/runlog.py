"""Binary run log: fixed little-endian per-replica records.

Layout (all little-endian):

    header (40 bytes):
        magic        4 bytes   b"KPZR"
        version      uint16    currently 1
        reserved     uint16    0
        n_records    uint64
        n_x          uint32
        reserved2    uint32    0
        beta         float64
        seed         uint64
    x_grid: n_x * float64
    records, n_records times:
        replica_id   uint64
        batch_id     uint64
        h            n_x * float64
        z_argmax     n_x * float64
        censored     n_x * uint8

The same layout is summarized in the README for external readers.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import OutputError
from .estimators import EnsembleStore

MAGIC = b"KPZR"
VERSION = 1
_HEADER = struct.Struct("<4sHHQIId Q".replace(" ", ""))


def _record_dtype(n_x: int) -> np.dtype:
    return np.dtype([
        ("replica_id", "<u8"),
        ("batch_id", "<u8"),
        ("h", "<f8", (n_x,)),
        ("z_argmax", "<f8", (n_x,)),
        ("censored", "u1", (n_x,)),
    ])


def write_runlog(store: EnsembleStore, path, seed: int = 0) -> None:
    n_x = len(store.x_grid)
    rec = np.zeros(store.n_records, dtype=_record_dtype(n_x))
    order = np.lexsort((np.arange(store.n_records), store.replica_ids))
    rec["replica_id"] = store.replica_ids[order]
    rec["batch_id"] = store.batch_ids[order]
    rec["h"] = store.h[order]
    rec["z_argmax"] = store.z_argmax[order]
    rec["censored"] = store.censored[order].astype(np.uint8)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, 0, store.n_records, n_x, 0,
                                  store.beta, seed & (2**64 - 1)))
            fh.write(np.asarray(store.x_grid, dtype="<f8").tobytes())
            fh.write(rec.tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write run log {path}: {exc}") from exc


def read_runlog(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
            if len(raw) < _HEADER.size:
                raise OutputError(f"run log {path} is truncated")
            magic, version, _, n_records, n_x, _, beta, seed = _HEADER.unpack(raw)
            if magic != MAGIC:
                raise OutputError(f"{path} is not a run log (bad magic {magic!r})")
            if version != VERSION:
                raise OutputError(f"unsupported run log version {version}")
            x_grid = np.frombuffer(fh.read(8 * n_x), dtype="<f8")
            rec = np.frombuffer(fh.read(), dtype=_record_dtype(n_x), count=n_records)
    except OSError as exc:
        raise OutputError(f"cannot read run log {path}: {exc}") from exc
    return {
        "version": version,
        "beta": beta,
        "seed": seed,
        "x_grid": x_grid,
        "replica_ids": rec["replica_id"],
        "batch_ids": rec["batch_id"],
        "h": rec["h"],
        "z_argmax": rec["z_argmax"],
        "censored": rec["censored"].astype(bool),
    }
