"""Content-addressed, versioned model registry.

Blobs live under ``store/blobs/<first2>/<digest>/`` as fixed-size chunk
files; manifests under ``store/manifests/<name>/<version>.json`` in
canonical key-sorted form. Versions for a name are dense integers 1..N
and history is append-only: rollback copies the target forward instead
of rewriting it.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .canon import ZERO_HASH, canonical_bytes, canonical_json, doc_digest, sha256_hex, token_set
from .errors import (
    IntegrityError,
    InvalidCapability,
    InvalidName,
    NotFound,
    RollbackToSelf,
    StorageFull,
    ValidationError,
)

NAME_RE = re.compile(r"[a-z0-9][a-z0-9._-]{0,63}")
CHUNK_SIZE = 4 * 1024 * 1024
LATEST = "latest"

EMPTY_BLOB_HASH = sha256_hex(b"")


def now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class EnvironmentSpec:
    """Declarative dependency lockfile: (package, exact version) pairs."""

    dependencies: tuple[tuple[str, str], ...] = ()
    lock_digest: str = ""

    def __post_init__(self):
        names = [name for name, _ in self.dependencies]
        if names != sorted(names):
            raise ValidationError("environment dependencies must be sorted by package name")
        if len(set(names)) != len(names):
            raise ValidationError("duplicate package in environment dependencies")
        expected = doc_digest([list(pair) for pair in self.dependencies])
        if not self.lock_digest:
            object.__setattr__(self, "lock_digest", expected)
        elif self.lock_digest != expected:
            raise ValidationError("lock_digest does not match dependencies")

    @classmethod
    def from_pairs(cls, pairs) -> "EnvironmentSpec":
        ordered = tuple(sorted((str(n), str(v)) for n, v in pairs))
        return cls(dependencies=ordered)

    def to_doc(self) -> dict:
        return {
            "dependencies": [list(pair) for pair in self.dependencies],
            "lock_digest": self.lock_digest,
        }

    @classmethod
    def from_doc(cls, doc) -> "EnvironmentSpec":
        deps = tuple((str(n), str(v)) for n, v in doc.get("dependencies", []))
        return cls(dependencies=deps, lock_digest=doc.get("lock_digest", ""))


@dataclass(frozen=True)
class ModelManifest:
    name: str
    version: int
    blob_hash: str
    size_bytes: int
    capabilities: dict[str, float]
    cost_per_call: int
    latency_ms: int
    designer_account: str
    env: EnvironmentSpec = field(default_factory=EnvironmentSpec)
    created_at: int = 0
    changelog: str = ""

    def to_doc(self) -> dict:
        return {
            "blob_hash": self.blob_hash,
            "capabilities": {t: s for t, s in sorted(self.capabilities.items())},
            "changelog": self.changelog,
            "cost_per_call": self.cost_per_call,
            "created_at": self.created_at,
            "designer_account": self.designer_account,
            "env": self.env.to_doc(),
            "latency_ms": self.latency_ms,
            "name": self.name,
            "size_bytes": self.size_bytes,
            "version": self.version,
        }

    @classmethod
    def from_doc(cls, doc) -> "ModelManifest":
        return cls(
            name=doc["name"],
            version=int(doc["version"]),
            blob_hash=doc["blob_hash"],
            size_bytes=int(doc["size_bytes"]),
            capabilities={t: float(s) for t, s in doc["capabilities"].items()},
            cost_per_call=int(doc["cost_per_call"]),
            latency_ms=int(doc["latency_ms"]),
            designer_account=doc["designer_account"],
            env=EnvironmentSpec.from_doc(doc["env"]),
            created_at=int(doc["created_at"]),
            changelog=doc.get("changelog", ""),
        )


def validate_capabilities(capabilities) -> dict[str, float]:
    """Bounds-check scores, then pin them to 4 decimal places."""
    clean = {}
    for tag, score in capabilities.items():
        score = float(score)
        if score < 0.0 or score > 1.0:
            raise InvalidCapability(tag, score)
        clean[str(tag)] = round(score, 4)
    return clean


class BlobStore:
    """Chunked content-addressed byte store with physical deduplication."""

    def __init__(self, root: str | Path, max_bytes: int | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.max_bytes = max_bytes
        self._lock = threading.Lock()

    def _blob_dir(self, digest: str) -> Path:
        return self.root / digest[:2] / digest

    def exists(self, digest: str) -> bool:
        return self._blob_dir(digest).is_dir()

    def put(self, data: bytes) -> str:
        digest = sha256_hex(data)
        with self._lock:
            if self.exists(digest):
                return digest
            if self.max_bytes is not None and self.total_bytes() + len(data) > self.max_bytes:
                raise StorageFull(f"blob store over {self.max_bytes} bytes")
            blob_dir = self._blob_dir(digest)
            tmp_dir = blob_dir.with_name(blob_dir.name + ".tmp")
            tmp_dir.mkdir(parents=True, exist_ok=True)
            # Zero-byte blobs still get one (empty) chunk so the blob dir exists.
            chunks = range(max(1, (len(data) + CHUNK_SIZE - 1) // CHUNK_SIZE))
            for i in chunks:
                part = data[i * CHUNK_SIZE:(i + 1) * CHUNK_SIZE]
                (tmp_dir / f"{i:08d}.chunk").write_bytes(part)
            tmp_dir.rename(blob_dir)
        return digest

    def get(self, digest: str) -> bytes:
        blob_dir = self._blob_dir(digest)
        if not blob_dir.is_dir():
            raise NotFound(f"blob {digest}")
        parts = sorted(blob_dir.glob("*.chunk"))
        data = b"".join(p.read_bytes() for p in parts)
        if sha256_hex(data) != digest:
            raise IntegrityError(f"blob {digest} failed digest verification")
        return data

    def size(self, digest: str) -> int:
        blob_dir = self._blob_dir(digest)
        if not blob_dir.is_dir():
            raise NotFound(f"blob {digest}")
        return sum(p.stat().st_size for p in blob_dir.glob("*.chunk"))

    def physical_count(self) -> int:
        return sum(1 for _ in self.root.glob("??/" + "?" * 64))

    def total_bytes(self) -> int:
        return sum(p.stat().st_size for p in self.root.glob("??/*/*.chunk"))


class Registry:
    """Versioned manifest store over a BlobStore.

    Reads never block reads; writes to one model name are serialized by a
    per-name lock, so concurrent pushes can never duplicate or gap the
    version sequence.
    """

    def __init__(self, root: str | Path, max_blob_bytes: int | None = None):
        self.root = Path(root)
        self.blobs = BlobStore(self.root / "blobs", max_bytes=max_blob_bytes)
        self.manifest_root = self.root / "manifests"
        self.manifest_root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _name_lock(self, name: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(name, threading.Lock())

    def _manifest_dir(self, name: str) -> Path:
        return self.manifest_root / name

    def _manifest_path(self, name: str, version: int) -> Path:
        return self._manifest_dir(name) / f"{version}.json"

    # -- write path ----------------------------------------------------

    def put_model(self, name: str, blob: bytes, meta: dict, now: int | None = None) -> ModelManifest:
        if not NAME_RE.fullmatch(name):
            raise InvalidName(name)
        if not blob and not meta.get("metadata_only", False):
            raise ValidationError("empty blob requires metadata_only flag")
        capabilities = validate_capabilities(meta.get("capabilities", {}))
        blob_hash = self.blobs.put(blob)
        return self._append_manifest(
            name,
            blob_hash=blob_hash,
            size_bytes=len(blob),
            capabilities=capabilities,
            cost_per_call=int(meta.get("cost_per_call", 0)),
            latency_ms=int(meta.get("latency_ms", 1)),
            designer_account=str(meta.get("designer_account", "")),
            env=meta.get("env") or EnvironmentSpec(),
            changelog=str(meta.get("changelog", "")),
            now=now,
        )

    def put_model_from_blob(self, name: str, blob_hash: str, meta: dict,
                            now: int | None = None) -> ModelManifest:
        """Manifest for a blob already uploaded by digest (wire flow)."""
        if not NAME_RE.fullmatch(name):
            raise InvalidName(name)
        size = self.blobs.size(blob_hash)
        if size == 0 and not meta.get("metadata_only", False):
            raise ValidationError("empty blob requires metadata_only flag")
        capabilities = validate_capabilities(meta.get("capabilities", {}))
        return self._append_manifest(
            name,
            blob_hash=blob_hash,
            size_bytes=size,
            capabilities=capabilities,
            cost_per_call=int(meta.get("cost_per_call", 0)),
            latency_ms=int(meta.get("latency_ms", 1)),
            designer_account=str(meta.get("designer_account", "")),
            env=meta.get("env") or EnvironmentSpec(),
            changelog=str(meta.get("changelog", "")),
            now=now,
        )

    def _append_manifest(self, name, *, blob_hash, size_bytes, capabilities,
                         cost_per_call, latency_ms, designer_account, env,
                         changelog, now) -> ModelManifest:
        if isinstance(env, dict):
            env = EnvironmentSpec.from_doc(env)
        with self._name_lock(name):
            version = self.latest_version(name, default=0) + 1
            manifest = ModelManifest(
                name=name,
                version=version,
                blob_hash=blob_hash,
                size_bytes=size_bytes,
                capabilities=capabilities,
                cost_per_call=cost_per_call,
                latency_ms=latency_ms,
                designer_account=designer_account,
                env=env,
                created_at=now_ms() if now is None else now,
                changelog=changelog,
            )
            directory = self._manifest_dir(name)
            directory.mkdir(parents=True, exist_ok=True)
            path = self._manifest_path(name, version)
            tmp = path.with_suffix(".json.tmp")
            tmp.write_bytes(canonical_bytes(manifest.to_doc()))
            tmp.rename(path)
        return manifest

    # -- read path -----------------------------------------------------

    def latest_version(self, name: str, default: int | None = None) -> int:
        directory = self._manifest_dir(name)
        versions = [int(p.stem) for p in directory.glob("*.json")] if directory.is_dir() else []
        if not versions:
            if default is not None:
                return default
            raise NotFound(f"model {name}")
        return max(versions)

    def get_manifest(self, name: str, version: int | str = LATEST) -> ModelManifest:
        if version == LATEST:
            version = self.latest_version(name)
        path = self._manifest_path(name, int(version))
        if not path.is_file():
            if not self._manifest_dir(name).is_dir():
                raise NotFound(f"model {name}")
            raise NotFound(f"model {name} version {version}")
        return ModelManifest.from_doc(json.loads(path.read_text("utf-8")))

    def get_model(self, name: str, version: int | str = LATEST) -> tuple[ModelManifest, bytes]:
        manifest = self.get_manifest(name, version)
        data = self.blobs.get(manifest.blob_hash)
        if sha256_hex(data) != manifest.blob_hash:
            raise IntegrityError(f"model {name}@{manifest.version} bytes do not match manifest")
        return manifest, data

    def list_versions(self, name: str) -> list[tuple[int, int, str]]:
        directory = self._manifest_dir(name)
        if not directory.is_dir():
            raise NotFound(f"model {name}")
        out = []
        for version in sorted(int(p.stem) for p in directory.glob("*.json")):
            m = self.get_manifest(name, version)
            out.append((m.version, m.created_at, m.changelog))
        return out

    def list_names(self) -> list[str]:
        return sorted(p.name for p in self.manifest_root.iterdir() if p.is_dir())

    def pool_snapshot(self) -> dict[str, ModelManifest]:
        """Latest manifest of every model, for planning."""
        return {name: self.get_manifest(name) for name in self.list_names()}

    # -- history operations ---------------------------------------------

    def rollback(self, name: str, target_version: int, now: int | None = None) -> ModelManifest:
        with self._name_lock(name):
            latest = self.latest_version(name)
            if target_version == latest:
                raise RollbackToSelf(f"{name}@{target_version} is already latest")
        target = self.get_manifest(name, target_version)
        return self._append_manifest(
            name,
            blob_hash=target.blob_hash,
            size_bytes=target.size_bytes,
            capabilities=dict(target.capabilities),
            cost_per_call=target.cost_per_call,
            latency_ms=target.latency_ms,
            designer_account=target.designer_account,
            env=target.env,
            changelog=f"rollback to {target_version}",
            now=now,
        )

    def new_version_from(self, manifest: ModelManifest, *, capabilities=None,
                         changelog: str = "", now: int | None = None) -> ModelManifest:
        """Copy-forward publish used by co-training."""
        caps = validate_capabilities(capabilities if capabilities is not None
                                     else manifest.capabilities)
        return self._append_manifest(
            manifest.name,
            blob_hash=manifest.blob_hash,
            size_bytes=manifest.size_bytes,
            capabilities=caps,
            cost_per_call=manifest.cost_per_call,
            latency_ms=manifest.latency_ms,
            designer_account=manifest.designer_account,
            env=manifest.env,
            changelog=changelog,
            now=now,
        )

    # -- search ----------------------------------------------------------

    def search_models(self, query: str, limit: int) -> list[ModelManifest]:
        query_tokens = token_set(query)
        if not query_tokens or limit <= 0:
            return []
        scored = []
        for name in self.list_names():
            for version, _, changelog in self.list_versions(name):
                manifest = self.get_manifest(name, version)
                doc_tokens = set(token_set(name))
                for tag in manifest.capabilities:
                    doc_tokens |= token_set(tag)
                doc_tokens |= token_set(changelog)
                score = len(query_tokens & doc_tokens)
                if score > 0:
                    scored.append((-score, name, -version, manifest))
        scored.sort(key=lambda item: item[:3])
        return [manifest for *_, manifest in scored[:limit]]


def manifest_json(manifest: ModelManifest) -> str:
    return canonical_json(manifest.to_doc())
