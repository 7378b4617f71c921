"""Binary snapshots for stores and ensembles.

Layout: 4-byte magic, u32-length-prefixed JSON header naming the format
version and checksum algorithm, a sequence of u64-length-prefixed payload
sections, and a trailing 64-bit blake2b digest over everything before it.
Cell data travels as little-endian (u32 row, u32 col, f64 value) triples
sorted by position; every section is written in a canonical order so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .embedding import FieldPosition, LocalProvider, RemoteProvider
from .errors import ConfigError, CorruptSnapshot, IoFailure, UnsupportedVersion
from .field_engine import FieldParams
from .memory_store import MemoryRecord, MemoryStore
from .multi_agent import AgentEnsemble, CouplingMatrix
from .retrieval import RetrievalWeights
from .sparse_field import SparseField, SparseMask

MAGIC = b"FMEM"
FORMAT_VERSION = 1
CHECKSUM_ALGO = "blake2b-64"

_CELL_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("value", "<f8")])


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def _cells_to_bytes(cells: dict) -> bytes:
    arr = np.empty(len(cells), dtype=_CELL_DTYPE)
    for i, (r, c) in enumerate(sorted(cells)):
        arr[i] = (r, c, cells[(r, c)])
    return struct.pack("<Q", len(cells)) + arr.tobytes()


def _cells_from_bytes(data: bytes) -> dict:
    if len(data) < 8:
        raise CorruptSnapshot("cell section shorter than its count field")
    (count,) = struct.unpack_from("<Q", data)
    body = data[8:]
    if len(body) != count * _CELL_DTYPE.itemsize:
        raise CorruptSnapshot(
            f"cell section carries {len(body)} bytes for {count} cells")
    arr = np.frombuffer(body, dtype=_CELL_DTYPE)
    return {(int(r), int(c)): float(v) for r, c, v in arr}


def _provider_meta(provider) -> dict:
    meta = {"kind": provider.kind, "dimension": provider.dimension}
    if isinstance(provider, RemoteProvider):
        meta["endpoint"] = provider.endpoint
        meta["model"] = provider.model
    return meta


def _provider_from_meta(meta: dict):
    kind = meta.get("kind")
    if kind == "deterministic-local":
        return LocalProvider(dimension=int(meta["dimension"]))
    if kind == "remote":
        endpoint = meta.get("endpoint")
        model = meta.get("model")
        if not endpoint or not model:
            raise ConfigError(
                "snapshot used a remote embedding provider but recorded no "
                "endpoint/model; pass a provider to load()")
        return RemoteProvider(endpoint=endpoint, model=model,
                              dimension=int(meta["dimension"]))
    raise CorruptSnapshot(f"unknown provider kind {kind!r} in snapshot")


def _record_to_json(record: MemoryRecord) -> dict:
    return {
        "id": record.id,
        "text": record.text,
        "importance": record.importance,
        "created_at": record.created_at,
        "last_access": record.last_access,
        "access_count": record.access_count,
        "session_id": record.session_id,
        "x": record.position.x,
        "y": record.position.y,
        "cell": list(record.position.cell),
    }


def _record_from_json(item: dict, embedding: np.ndarray) -> MemoryRecord:
    pos = FieldPosition(float(item["x"]), float(item["y"]),
                        (int(item["cell"][0]), int(item["cell"][1])))
    return MemoryRecord(
        id=int(item["id"]), text=item["text"], embedding=embedding,
        position=pos, importance=float(item["importance"]),
        created_at=float(item["created_at"]),
        last_access=float(item["last_access"]),
        access_count=int(item["access_count"]),
        session_id=item["session_id"])


def _sections(store: MemoryStore, weights: RetrievalWeights | None) -> list[bytes]:
    meta = {
        "params": dataclasses.asdict(store.params),
        "seed": store.seed,
        "clock": store.clock,
        "field_time": store.field.time,
        "steps_done": store.steps_done,
        "mask_floor": store.mask.floor,
        "evolution_interval": store.evolution_interval,
        "prune_every": store.prune_every,
        "provider": _provider_meta(store.provider),
        "weights": list(weights.as_tuple()) if weights is not None else None,
    }
    records = [_record_to_json(r) for r in store.records]
    if store.records:
        emb = np.stack([r.embedding for r in store.records]).astype("<f8")
    else:
        emb = np.zeros((0, store.provider.dimension), dtype="<f8")
    emb_bytes = struct.pack("<II", emb.shape[0], emb.shape[1]) + emb.tobytes()
    return [
        json.dumps(meta, sort_keys=True).encode(),
        json.dumps(records, sort_keys=True).encode(),
        emb_bytes,
        _cells_to_bytes(store.field.cells),
        _cells_to_bytes(store.mask.cells),
    ]


def _encode(store: MemoryStore, weights: RetrievalWeights | None) -> bytes:
    header = json.dumps({"version": FORMAT_VERSION, "checksum": CHECKSUM_ALGO},
                        sort_keys=True).encode()
    out = bytearray(MAGIC)
    out += struct.pack("<I", len(header)) + header
    for section in _sections(store, weights):
        out += struct.pack("<Q", len(section)) + section
    out += _checksum(bytes(out))
    return bytes(out)


def save(store: MemoryStore, path: str | os.PathLike,
         weights: RetrievalWeights | None = None) -> int:
    """Atomically write a snapshot of `store`; returns the byte count.

    `weights` defaults to the store's own default_weights; pass explicit
    weights to pin different retrieval settings into the snapshot.
    """
    if weights is None:
        weights = store.default_weights
    blob = _encode(store, weights)
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot to {path}: {exc}") from exc
    return len(blob)


class _Reader:
    """Cursor over snapshot bytes that treats any overrun as corruption."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptSnapshot("snapshot is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def section(self) -> bytes:
        (length,) = struct.unpack("<Q", self.take(8))
        return self.take(length)


def _decode(data: bytes, provider=None) -> MemoryStore:
    if len(data) < 8 + len(MAGIC) or data[:4] != MAGIC:
        raise CorruptSnapshot("bad magic; not a field-memory snapshot")
    body, digest = data[:-8], data[-8:]
    reader = _Reader(body)
    reader.take(4)
    (header_len,) = struct.unpack("<I", reader.take(4))
    try:
        header = json.loads(reader.take(header_len))
    except ValueError as exc:
        raise CorruptSnapshot(f"unreadable snapshot header: {exc}") from exc
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(
            f"snapshot format version {version}; this build reads {FORMAT_VERSION}")
    if header.get("checksum") != CHECKSUM_ALGO:
        raise UnsupportedVersion(
            f"snapshot uses checksum {header.get('checksum')!r}; "
            f"this build reads {CHECKSUM_ALGO}")
    if _checksum(body) != digest:
        raise CorruptSnapshot("checksum mismatch; snapshot bytes are damaged")

    try:
        meta = json.loads(reader.section())
        records_json = json.loads(reader.section())
    except ValueError as exc:
        raise CorruptSnapshot(f"unreadable snapshot section: {exc}") from exc
    emb_section = reader.section()
    field_cells = _cells_from_bytes(reader.section())
    mask_cells = _cells_from_bytes(reader.section())
    if reader.pos != len(body):
        raise CorruptSnapshot(f"{len(body) - reader.pos} trailing bytes after last section")

    if len(emb_section) < 8:
        raise CorruptSnapshot("embedding section shorter than its shape fields")
    n_emb, dim = struct.unpack_from("<II", emb_section)
    emb_body = emb_section[8:]
    if len(emb_body) != n_emb * dim * 8:
        raise CorruptSnapshot(
            f"embedding section carries {len(emb_body)} bytes for shape ({n_emb}, {dim})")
    embeddings = np.frombuffer(emb_body, dtype="<f8").reshape(n_emb, dim).copy()
    if n_emb != len(records_json):
        raise CorruptSnapshot(
            f"{len(records_json)} records but {n_emb} embeddings")

    # The snapshot's params already drove a live store; don't re-gate dt here.
    params = FieldParams(**meta["params"], check_stability=False)
    if provider is None:
        provider = _provider_from_meta(meta["provider"])
    if provider.dimension != dim and n_emb > 0:
        raise ConfigError(
            f"provider dimension {provider.dimension} does not match "
            f"snapshot embeddings of dimension {dim}")
    raw_weights = meta.get("weights")
    weights = RetrievalWeights(*raw_weights) if raw_weights is not None else None

    store = MemoryStore(
        params=params, provider=provider, seed=int(meta["seed"]),
        mask_floor=float(meta["mask_floor"]),
        evolution_interval=meta["evolution_interval"],
        prune_every=int(meta["prune_every"]),
        default_weights=weights)
    store.records = [_record_from_json(item, embeddings[i])
                     for i, item in enumerate(records_json)]
    store.field = SparseField(cells=field_cells, grid_size=params.grid_size,
                              time=float(meta["field_time"]))
    store.mask = SparseMask(cells=mask_cells, floor=float(meta["mask_floor"]))
    store.clock = float(meta["clock"])
    store.steps_done = int(meta["steps_done"])
    return store


def load(path: str | os.PathLike, provider=None) -> MemoryStore:
    """Rebuild a store from a snapshot file.

    The embedding provider is reconstructed from the snapshot unless one is
    passed (remote providers never persist credentials, so callers talking
    to an authenticated endpoint must supply their own).
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read snapshot {os.fspath(path)}: {exc}") from exc
    return _decode(data, provider)


_MANIFEST = "ensemble.json"


def save_ensemble(ensemble: AgentEnsemble, directory: str | os.PathLike) -> int:
    """Write one snapshot per agent plus a coupling manifest; returns total bytes."""
    directory = os.fspath(directory)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {directory}: {exc}") from exc
    total = 0
    names = []
    for i, agent in enumerate(ensemble.agents):
        name = f"agent_{i:03d}.fmem"
        total += save(agent, os.path.join(directory, name))
        names.append(name)
    manifest = {
        "topology": ensemble.coupling.topology,
        "k": ensemble.coupling.k.tolist(),
        "agents": names,
    }
    blob = json.dumps(manifest, sort_keys=True, indent=2).encode()
    tmp = os.path.join(directory, _MANIFEST + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, os.path.join(directory, _MANIFEST))
    except OSError as exc:
        raise IoFailure(f"cannot write ensemble manifest: {exc}") from exc
    return total + len(blob)


def load_ensemble(directory: str | os.PathLike, provider=None) -> AgentEnsemble:
    directory = os.fspath(directory)
    try:
        with open(os.path.join(directory, _MANIFEST), "rb") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read ensemble manifest in {directory}: {exc}") from exc
    except ValueError as exc:
        raise CorruptSnapshot(f"unreadable ensemble manifest: {exc}") from exc
    agents = [load(os.path.join(directory, name), provider)
              for name in manifest["agents"]]
    coupling = CouplingMatrix(np.asarray(manifest["k"], dtype=float),
                              topology=manifest["topology"])
    return AgentEnsemble(agents, coupling)
