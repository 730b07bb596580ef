"""Node-scoring models: a gated graph network for local context and a
Transformer encoder for global context, sharing a linear localization head.

Both consume the same per-node vectors. The graph model passes typed-edge
messages for K steps through a GRU update; the sequence model runs the node
list (dummy first, then AST pre-order) through a self-attention stack with
sinusoidal position encodings. Scores turn into a prediction by softmax and
lowest-index argmax.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .codegraph import EDGE_TYPES, Sample
from .errors import EmptyScoreVector, SequenceTooLong, ShapeMismatch
from .nn import ParamStore, PrngState, Tensor
from .vocab import DEFAULT_T_MAX, EmbeddingTable, vectorize_graph


@dataclass
class GgnnConfig:
    hidden_dim: int = 256
    time_steps: int = 8
    edge_types: int = 6
    input_dim: int = 256

    @property
    def kind(self) -> str:
        return "ggnn"


@dataclass
class TransformerConfig:
    layers: int = 6
    heads: int = 8
    attn_dim: int = 512
    ffn_dim: int = 2048
    max_seq: int = 512
    dropout: float = 0.1
    input_dim: int = 256

    @property
    def kind(self) -> str:
        return "transformer"

    def __post_init__(self):
        if self.attn_dim % self.heads:
            raise ShapeMismatch(
                f"attn_dim {self.attn_dim} not divisible by heads {self.heads}")


def desk_ggnn_config(input_dim: int = 256) -> GgnnConfig:
    return GgnnConfig(hidden_dim=128, time_steps=8, input_dim=input_dim)


def desk_transformer_config(input_dim: int = 256) -> TransformerConfig:
    return TransformerConfig(layers=2, heads=4, attn_dim=128, ffn_dim=256,
                             max_seq=512, dropout=0.1, input_dim=input_dim)


def config_from_dict(kind: str, d: dict):
    if kind == "ggnn":
        return GgnnConfig(**d)
    if kind == "transformer":
        return TransformerConfig(**d)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class PreparedGraph:
    """A sample lowered to model inputs: vectors, dense typed adjacency."""
    n: int
    vectors: np.ndarray              # (n, input_dim)
    adjacency: list[np.ndarray] | None  # per EDGE_TYPES, (n, n), A[dst, src]=1
    label: int
    lines: list[int | None]
    source_path: str = ""


def prepare(sample: Sample, table: EmbeddingTable, t_max: int = DEFAULT_T_MAX,
            need_adjacency: bool = True, dtype=np.float32) -> PreparedGraph:
    g = sample.graph
    n = len(g.nodes)
    vectors = vectorize_graph(g, table, t_max).astype(dtype)
    adjacency = None
    if need_adjacency:
        adjacency = [np.zeros((n, n), dtype=dtype) for _ in EDGE_TYPES]
        type_index = {t: i for i, t in enumerate(EDGE_TYPES)}
        for e in g.edges:
            adjacency[type_index[e.type]][e.dst, e.src] = 1.0
    return PreparedGraph(n, vectors, adjacency, sample.label_node,
                         [node.line for node in g.nodes], sample.source_path)


def _glorot(rng: np.random.Generator, shape, dtype) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return ((rng.random(shape) * 2.0 - 1.0) * limit).astype(dtype)


class _ModelBase:
    def __init__(self, config, seed: int, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.params = ParamStore()
        self._prng = PrngState(seed)
        self._build()

    def _init(self, name: str, shape, zero=False) -> Tensor:
        if zero:
            return self.params.add(name, np.zeros(shape, dtype=self.dtype), dtype=self.dtype)
        rng = self._prng.stream(f"init/{name}")
        return self.params.add(name, _glorot(rng, shape, self.dtype), dtype=self.dtype)

    def head_scores(self, h: Tensor) -> Tensor:
        s = nn.linear(h, self.params["head/w"], self.params["head/b"])
        return nn.reshape(s, (-1,))

    def loss(self, prep: PreparedGraph, train: bool = False,
             rng: np.random.Generator | None = None) -> Tensor:
        scores = self.node_scores(prep, train=train, rng=rng)
        probs = nn.softmax(scores)
        return nn.cross_entropy(probs, prep.label)

    def score_numpy(self, prep: PreparedGraph) -> np.ndarray:
        return self.node_scores(prep, train=False).data.copy()


class GgnnModel(_ModelBase):
    kind = "ggnn"

    def _build(self):
        cfg = self.config
        d = cfg.hidden_dim
        if cfg.input_dim != d:
            self._init("proj/w", (cfg.input_dim, d))
            self._init("proj/b", (d,), zero=True)
        for t in range(cfg.edge_types):
            self._init(f"edge{t}/w", (d, d))
            self._init(f"edge{t}/b", (d,), zero=True)
        for gate in ("r", "z", "n"):
            self._init(f"gru/wx{gate}", (d, d))
            self._init(f"gru/wh{gate}", (d, d))
            self._init(f"gru/b{gate}", (d,), zero=True)
        self._init("head/w", (d, 1))
        self._init("head/b", (1,), zero=True)

    def encode(self, prep: PreparedGraph, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        if prep.adjacency is None:
            raise ShapeMismatch("graph model needs adjacency matrices")
        cfg = self.config
        if prep.vectors.shape[1] != cfg.input_dim:
            raise ShapeMismatch(
                f"node vectors are {prep.vectors.shape[1]}-d, expected {cfg.input_dim}")
        p = self.params
        h = Tensor(prep.vectors.astype(self.dtype))
        if "proj/w" in p:
            h = nn.linear(h, p["proj/w"], p["proj/b"])
        adjacency = [a.astype(self.dtype) for a in prep.adjacency]
        weights = [p[f"edge{t}/w"] for t in range(cfg.edge_types)]
        biases = [p[f"edge{t}/b"] for t in range(cfg.edge_types)]
        gru = [p["gru/wxr"], p["gru/whr"], p["gru/br"],
               p["gru/wxz"], p["gru/whz"], p["gru/bz"],
               p["gru/wxn"], p["gru/whn"], p["gru/bn"]]
        for _ in range(cfg.time_steps):
            msg = nn.typed_messages(h, adjacency, weights, biases)
            h = nn.gru_cell(msg, h, *gru)
        return h

    def node_scores(self, prep: PreparedGraph, train: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
        return self.head_scores(self.encode(prep, train=train, rng=rng))


def sinusoidal_encoding(max_seq: int, dim: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(max_seq, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (idx // 2) / dim)
    enc = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)


class TransformerModel(_ModelBase):
    kind = "transformer"

    def _build(self):
        cfg = self.config
        d = cfg.attn_dim
        self._init("proj/w", (cfg.input_dim, d))
        self._init("proj/b", (d,), zero=True)
        for i in range(cfg.layers):
            pre = f"layer{i:02d}"
            for name in ("wq", "wk", "wv", "wo"):
                self._init(f"{pre}/attn/{name}", (d, d))
            for name in ("bq", "bv", "bo"):
                self._init(f"{pre}/attn/{name}", (d,), zero=True)
            self.params.add(f"{pre}/ln1/g", np.ones(d, dtype=self.dtype), dtype=self.dtype)
            self._init(f"{pre}/ln1/b", (d,), zero=True)
            self._init(f"{pre}/ffn/w1", (d, cfg.ffn_dim))
            self._init(f"{pre}/ffn/b1", (cfg.ffn_dim,), zero=True)
            self._init(f"{pre}/ffn/w2", (cfg.ffn_dim, d))
            self._init(f"{pre}/ffn/b2", (d,), zero=True)
            self.params.add(f"{pre}/ln2/g", np.ones(d, dtype=self.dtype), dtype=self.dtype)
            self._init(f"{pre}/ln2/b", (d,), zero=True)
        self._init("head/w", (d, 1))
        self._init("head/b", (1,), zero=True)
        self._posenc = sinusoidal_encoding(cfg.max_seq, d, self.dtype)

    def encode(self, prep: PreparedGraph, train: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        cfg = self.config
        n = prep.n
        if n > cfg.max_seq:
            raise SequenceTooLong(f"{n} nodes exceeds max_seq {cfg.max_seq}")
        if prep.vectors.shape[1] != cfg.input_dim:
            raise ShapeMismatch(
                f"node vectors are {prep.vectors.shape[1]}-d, expected {cfg.input_dim}")
        p = self.params
        x = nn.linear(Tensor(prep.vectors.astype(self.dtype)), p["proj/w"], p["proj/b"])
        x = nn.add(x, Tensor(self._posenc[:n]))
        x = nn.dropout(x, cfg.dropout, rng, train)
        for i in range(cfg.layers):
            pre = f"layer{i:02d}"
            attn = nn.multi_head_attention(
                x, x, x,
                p[f"{pre}/attn/wq"], p[f"{pre}/attn/bq"], p[f"{pre}/attn/wk"],
                p[f"{pre}/attn/wv"], p[f"{pre}/attn/bv"],
                p[f"{pre}/attn/wo"], p[f"{pre}/attn/bo"],
                cfg.heads)
            x = nn.layer_norm(nn.add(x, nn.dropout(attn, cfg.dropout, rng, train)),
                              p[f"{pre}/ln1/g"], p[f"{pre}/ln1/b"])
            ffn = nn.linear(nn.relu(nn.linear(x, p[f"{pre}/ffn/w1"], p[f"{pre}/ffn/b1"])),
                            p[f"{pre}/ffn/w2"], p[f"{pre}/ffn/b2"])
            x = nn.layer_norm(nn.add(x, nn.dropout(ffn, cfg.dropout, rng, train)),
                              p[f"{pre}/ln2/g"], p[f"{pre}/ln2/b"])
        return x

    def node_scores(self, prep: PreparedGraph, train: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor:
        return self.head_scores(self.encode(prep, train=train, rng=rng))


def build_model(kind: str, config, seed: int, dtype=np.float32):
    if kind == "ggnn":
        return GgnnModel(config, seed, dtype)
    if kind == "transformer":
        return TransformerModel(config, seed, dtype)
    raise ValueError(f"unknown model kind {kind!r}")


def predict(scores: np.ndarray) -> tuple[int, np.ndarray]:
    """(argmax index, softmax probabilities); ties go to the lowest index."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise EmptyScoreVector("cannot predict from an empty score vector")
    e = np.exp(s - s.max())
    probs = e / e.sum()
    return int(np.argmax(s)), probs


def ranked_nodes(scores: np.ndarray) -> list[int]:
    """Node indices sorted by descending score, ties by ascending index."""
    s = np.asarray(scores).reshape(-1)
    return sorted(range(s.size), key=lambda i: (-float(s[i]), i))


def config_dict(config) -> dict:
    return asdict(config)


def model_gradient_check(model, prep: PreparedGraph, h: float = 1e-5,
                         tiny: float = 1e-7) -> float:
    """Finite-difference check of d(loss)/d(params) for a full model.

    The model must be built with dtype float64. Returns max relative error.
    Components where both sides are below `tiny` count as agreeing: central
    differences cannot resolve a true zero below eps*|loss|/(2h), and the
    head bias has an identically-zero gradient by softmax shift invariance.
    """
    model.params.zero_grads()
    out = model.loss(prep)
    out.backward()
    worst = 0.0
    for name, p in model.params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = model.loss(prep).item()
            flat[i] = orig - h
            lo = model.loss(prep).item()
            flat[i] = orig
            numeric[i] = (hi - lo) / (2.0 * h)
        a = analytic.reshape(-1)
        scale_ok = np.maximum(np.abs(a), np.abs(numeric)) >= tiny
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        err = np.where(scale_ok, np.abs(a - numeric) / denom, 0.0)
        worst = max(worst, float(err.max()))
    return worst
