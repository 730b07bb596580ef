"""Score-level ensembling of independently trained node-scoring models.

Members score the same graph; the ensemble is the weighted average of raw
score vectors (uniform by default), predicted through the usual softmax +
lowest-index argmax.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import models as M
from .checkpoint import load_checkpoint
from .codegraph import SCHEMA_VERSION
from .errors import EmptyEnsemble, LengthMismatch, MemberMismatch


def ensemble_scores(score_vectors, weights=None) -> np.ndarray:
    """Weighted average of member score vectors; uniform when weights=None."""
    vectors = [np.asarray(v, dtype=np.float64).reshape(-1) for v in score_vectors]
    if not vectors:
        raise EmptyEnsemble("no member score vectors")
    n = vectors[0].size
    if any(v.size != n for v in vectors):
        raise LengthMismatch(
            f"member score lengths differ: {[v.size for v in vectors]}")
    if weights is None:
        weights = [1.0 / len(vectors)] * len(vectors)
    if len(weights) != len(vectors):
        raise LengthMismatch("one weight per member required")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative")
    total = float(sum(weights))
    if not np.isclose(total, 1.0, atol=1e-9):
        raise ValueError(f"weights must sum to 1, got {total}")
    out = np.zeros(n, dtype=np.float64)
    for w, v in zip(weights, vectors):
        out += w * v
    return out


@dataclass
class EnsembleSpec:
    members: list[str]  # checkpoint paths
    weights: list[float]

    def __post_init__(self):
        if not self.members:
            raise EmptyEnsemble("an ensemble needs at least one member")
        if len(self.weights) != len(self.members):
            raise LengthMismatch("one weight per member required")

    @classmethod
    def uniform(cls, members) -> "EnsembleSpec":
        members = list(members)
        if not members:
            raise EmptyEnsemble("an ensemble needs at least one member")
        return cls(members, [1.0 / len(members)] * len(members))

    def to_json(self) -> str:
        return json.dumps({"members": self.members, "weights": self.weights},
                          separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EnsembleSpec":
        data = json.loads(text)
        return cls(list(data["members"]), [float(w) for w in data["weights"]])


def build_k_ensemble(kinds, seeds, train_member) -> EnsembleSpec:
    """Train (or load) one member per (kind, seed) pair; uniform weights.

    train_member(kind, seed) must return a checkpoint path; identical
    configs across members are the caller's responsibility. Duplicate
    (kind, seed) pairs simply produce identical members.
    """
    kinds = list(kinds)
    seeds = list(seeds)
    if len(kinds) != len(seeds):
        raise LengthMismatch("one seed per model kind required")
    if not kinds:
        raise EmptyEnsemble("no members requested")
    paths = [str(train_member(kind, seed)) for kind, seed in zip(kinds, seeds)]
    return EnsembleSpec.uniform(paths)


class System:
    """A named scoring system: one model or a weighted ensemble of models."""

    def __init__(self, name: str, member_models: list, weights: list[float],
                 member_meta: list[dict], t_max: int = 8):
        self.name = name
        self.models = member_models
        self.weights = weights
        self.meta = member_meta
        self.t_max = t_max

    def scores(self, prep: M.PreparedGraph) -> np.ndarray:
        return ensemble_scores([m.score_numpy(prep) for m in self.models],
                               self.weights)

    @property
    def needs_adjacency(self) -> bool:
        return any(m.kind == "ggnn" for m in self.models)


def load_system(name: str, checkpoint_paths, weights=None,
                embed_fp: str | None = None) -> System:
    """Load member checkpoints and verify they are mutually compatible.

    Members must agree on the interchange schema version and on the
    embedding-table fingerprint; when embed_fp is given, they must also
    match the table actually used for scoring.
    """
    paths = list(checkpoint_paths)
    if not paths:
        raise EmptyEnsemble(f"system {name!r} lists no checkpoints")
    if weights is None:
        weights = [1.0 / len(paths)] * len(paths)
    member_models = []
    metas = []
    fps = set()
    t_maxes = set()
    for path in paths:
        ck = load_checkpoint(path)
        if ck.model_kind not in ("ggnn", "transformer"):
            raise MemberMismatch(f"{path}: {ck.model_kind!r} cannot score nodes")
        prov = ck.provenance
        if prov.get("schema_version") != SCHEMA_VERSION:
            raise MemberMismatch(
                f"{path}: trained against schema {prov.get('schema_version')}, "
                f"this build expects {SCHEMA_VERSION}")
        fps.add(prov.get("embed_fp"))
        t_maxes.add(prov.get("t_max", 8))
        config = M.config_from_dict(ck.model_kind, ck.config)
        model = M.build_model(ck.model_kind, config, seed=0)
        model.params.load_arrays(ck.arrays)
        member_models.append(model)
        metas.append({"path": str(path), "kind": ck.model_kind, "provenance": prov})
    if len(fps) > 1:
        raise MemberMismatch(
            f"system {name!r}: members trained on different embedding tables")
    if embed_fp is not None and fps != {embed_fp}:
        raise MemberMismatch(
            f"system {name!r}: members do not match the supplied embedding table")
    if len(t_maxes) > 1:
        raise MemberMismatch(
            f"system {name!r}: members disagree on tokens-per-node ({t_maxes})")
    return System(name, member_models, list(weights), metas, t_max=t_maxes.pop())
