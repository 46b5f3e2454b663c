"""Run manifests: content hashes of config and every produced file."""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone

from . import __version__
from .errors import OutputError

MANIFEST_NAME = "manifest.json"


def hash_file(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise OutputError(f"cannot hash {path}: {exc}") from exc
    return h.hexdigest()


def build_manifest(out_dir, config_fingerprint: str, extra: dict = None) -> dict:
    """Hash-list every file under out_dir (except the manifest itself)."""
    files = {}
    for root, _, names in sorted(os.walk(out_dir)):
        for name in sorted(names):
            if name == MANIFEST_NAME:
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out_dir)
            files[rel] = hash_file(path)
    manifest = {
        "version": __version__,
        "config_sha256": config_fingerprint,
        "files": files,
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(out_dir, manifest: dict, timestamp: bool = False) -> str:
    """Write manifest.json; timestamps are off by default so identical runs
    produce identical manifests."""
    if timestamp:
        manifest = dict(manifest)
        manifest["written_at"] = datetime.now(timezone.utc).isoformat()
    path = os.path.join(out_dir, MANIFEST_NAME)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write manifest: {exc}") from exc
    return path
