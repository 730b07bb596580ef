"""Binary checkpoint container for models and embedding tables.

Layout: 8-byte magic, 4-byte little-endian version, 8-byte little-endian
JSON header length, the JSON header (model kind, config, tensor index,
provenance), then raw little-endian float32 payloads in index order.
"""

import json
import struct

import numpy as np

from .errors import CheckpointError
from .vocab import EmbeddingTable, Vocab

MAGIC = b"VELVETCK"
VERSION = 1


def save_checkpoint(path, model_kind: str, config: dict,
                    arrays: dict[str, np.ndarray], provenance: dict) -> None:
    names = sorted(arrays)
    index = {}
    offset = 0
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype=np.float32)
        raw = arr.tobytes()
        if not raw and arr.size:
            raise CheckpointError(f"tensor {name} produced no payload")
        index[name] = {"shape": list(arr.shape), "offset": offset, "length": len(raw)}
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"model_kind": model_kind, "config": config, "tensors": index,
         "provenance": provenance},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in payloads:
            fh.write(raw)


class Checkpoint:
    def __init__(self, model_kind: str, config: dict,
                 arrays: dict[str, np.ndarray], provenance: dict):
        self.model_kind = model_kind
        self.config = config
        self.arrays = arrays
        self.provenance = provenance


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    (version,) = struct.unpack("<I", blob[8:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    (hlen,) = struct.unpack("<Q", blob[12:20])
    try:
        header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    payload = blob[20 + hlen:]
    arrays = {}
    for name, entry in header["tensors"].items():
        start, length = entry["offset"], entry["length"]
        if start + length > len(payload):
            raise CheckpointError(f"{path}: tensor {name} extends past end of file")
        arr = np.frombuffer(payload[start:start + length], dtype="<f4")
        arrays[name] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(header["model_kind"], header["config"], arrays,
                      header["provenance"])


def save_embedding(table: EmbeddingTable, path) -> None:
    config = {"hyper": table.hyper, "tokens": table.vocab.tokens,
              "vocab_min_count": table.vocab.min_count}
    save_checkpoint(path, "embedding", config, {"vectors": table.vectors},
                    {"corpus_fp": table.corpus_fp})


def load_embedding(path) -> EmbeddingTable:
    ck = load_checkpoint(path)
    if ck.model_kind != "embedding":
        raise CheckpointError(f"{path}: expected an embedding checkpoint, "
                              f"got {ck.model_kind!r}")
    vocab = Vocab(ck.config["tokens"], ck.config["vocab_min_count"])
    return EmbeddingTable(ck.arrays["vectors"], vocab, ck.config["hyper"],
                          ck.provenance["corpus_fp"])
