"""Token vocabulary and skip-gram embeddings over graph corpora.

Numeric literals are bucketed by magnitude and string literals collapsed to
a single class before counting, so the vocabulary stays small while keeping
the scale information that matters for overflow/bounds patterns. Embeddings
train with negative sampling on mini-batches; all randomness flows through a
named-stream PRNG, so a (corpus, settings, seed) triple pins the table.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .codegraph import Sample, serialize
from .errors import EmptyCorpus
from .nn.tensor import PrngState

PAD, UNK, GRAPH_TOKEN = "<PAD>", "<UNK>", "<GRAPH>"
RESERVED = (PAD, UNK, GRAPH_TOKEN)

DEFAULT_DIM = 32
DEFAULT_T_MAX = 8


def normalize_token(text: str) -> str:
    if text in RESERVED:
        return text
    if text.startswith('"'):
        return "STR"
    body = text[1:] if text.startswith("-") else text
    if body.isdigit():
        if text.startswith("-"):
            return "NUM_NEG"
        value = int(text)
        if value == 0:
            return "NUM_0"
        if value == 1:
            return "NUM_1"
        if value <= 9:
            return "NUM_SMALL"
        if value <= 255:
            return "NUM_MED"
        return "NUM_LARGE"
    return text


@dataclass
class Vocab:
    tokens: list[str]  # index -> token, reserved entries first
    min_count: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self.index.get(normalize_token(token), self.index[UNK])


def token_sequence(sample: Sample) -> list[str]:
    """Normalized token stream: node token lists concatenated in id order."""
    out = []
    for node in sample.graph.nodes:
        out.extend(normalize_token(t) for t in node.tokens)
    return out


def build_vocab(samples: list[Sample], min_count: int = 1) -> Vocab:
    counts: dict[str, int] = {}
    total = 0
    for sample in samples:
        for tok in token_sequence(sample):
            total += 1
            if tok in RESERVED:
                continue
            counts[tok] = counts.get(tok, 0) + 1
    if total == 0:
        raise EmptyCorpus("no tokens in corpus")
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(list(RESERVED) + kept, min_count)


def corpus_fingerprint(samples: list[Sample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(serialize(s))
    return h.hexdigest()


@dataclass
class EmbeddingTable:
    vectors: np.ndarray  # (|vocab|, dim) float32; PAD row frozen at zero
    vocab: Vocab
    hyper: dict
    corpus_fp: str

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.vocab.tokens).encode())
        h.update(json.dumps(self.hyper, sort_keys=True).encode())
        h.update(self.vectors.astype(np.float32).tobytes())
        return h.hexdigest()


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sgns_loss_grads(w_in: np.ndarray, w_out: np.ndarray,
                    center: int, context: int, negatives) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and full-matrix gradients of one negative-sampling step.

    loss = -log s(v_c . u_o) - sum_k log s(-v_c . u_k)
    """
    v = w_in[center]
    g_in = np.zeros_like(w_in)
    g_out = np.zeros_like(w_out)
    s_pos = sigmoid(v @ w_out[context])
    loss = -np.log(s_pos)
    coeff = s_pos - 1.0
    g_in[center] += coeff * w_out[context]
    g_out[context] += coeff * v
    for k in negatives:
        s_neg = sigmoid(v @ w_out[k])
        loss -= np.log(1.0 - s_neg)
        g_in[center] += s_neg * w_out[k]
        g_out[k] += s_neg * v
    return float(loss), g_in, g_out


def _window_pairs(seq: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) index pairs within a fixed window, in order."""
    n = len(seq)
    centers = []
    contexts = []
    for off in range(1, window + 1):
        if off >= n:
            break
        centers.append(seq[:-off])
        contexts.append(seq[off:])
        centers.append(seq[off:])
        contexts.append(seq[:-off])
    if not centers:
        return np.empty(0, np.int32), np.empty(0, np.int32)
    return np.concatenate(centers), np.concatenate(contexts)


def train_word2vec(samples: list[Sample], dim: int = DEFAULT_DIM, window: int = 5,
                   negatives: int = 5, epochs: int = 5, seed: int = 0,
                   min_count: int = 1, lr0: float = 0.025, min_lr: float = 1e-4,
                   batch: int = 128, subsample: float = 1e-3) -> EmbeddingTable:
    if not samples:
        raise EmptyCorpus("no samples to train embeddings on")
    vocab = build_vocab(samples, min_count)
    fp = corpus_fingerprint(samples)

    sequences = []
    counts = np.zeros(len(vocab), dtype=np.float64)
    for s in samples:
        idx = np.array([vocab.lookup(t) for t in token_sequence(s)], dtype=np.int32)
        sequences.append(idx)
        np.add.at(counts, idx, 1.0)
    counts[vocab.index[PAD]] = 0.0

    prng = PrngState(seed)
    init = prng.stream("w2v/init")
    w_in = ((init.random((len(vocab), dim)) - 0.5) / dim).astype(np.float32)
    w_in[vocab.index[PAD]] = 0.0
    w_out = np.zeros((len(vocab), dim), dtype=np.float32)

    hyper = {"dim": dim, "window": window, "negatives": negatives,
             "epochs": epochs, "seed": seed, "min_count": min_count,
             "lr0": lr0, "min_lr": min_lr, "batch": batch,
             "subsample": subsample}

    # keep probability per token: punctuation dominates code token streams,
    # and mini-batched updates diverge when one row absorbs dozens of stale
    # gradients, so aggressive frequent-token subsampling is load-bearing
    freq = counts / max(counts.sum(), 1.0)
    keep = np.ones(len(vocab), dtype=np.float64)
    if subsample > 0:
        hot = freq > subsample
        keep[hot] = np.sqrt(subsample / freq[hot])

    noise = counts ** 0.75
    total_noise = noise.sum()
    if total_noise == 0:
        return EmbeddingTable(w_in, vocab, hyper, fp)
    noise /= total_noise
    neg_rng = prng.stream("w2v/negatives")

    for epoch in range(epochs):
        sub_rng = prng.stream(f"w2v/subsample/{epoch}")
        all_centers, all_contexts = [], []
        for seq in sequences:
            if subsample > 0:
                seq = seq[sub_rng.random(len(seq)) < keep[seq]]
            c, o = _window_pairs(seq, window)
            all_centers.append(c)
            all_contexts.append(o)
        centers = np.concatenate(all_centers) if all_centers else np.empty(0, np.int32)
        contexts = np.concatenate(all_contexts) if all_contexts else np.empty(0, np.int32)
        n_pairs = len(centers)
        if n_pairs == 0:  # degenerate corpus: nothing left to train on
            continue
        lr = max(min_lr, lr0 * (1.0 - epoch / epochs))
        for start in range(0, n_pairs, batch):
            c = centers[start:start + batch]
            o = contexts[start:start + batch]
            b = len(c)
            negs = neg_rng.choice(len(vocab), size=(b, negatives), p=noise).astype(np.int32)

            v = w_in[c]                      # (b, d)
            u_pos = w_out[o]                 # (b, d)
            u_neg = w_out[negs]              # (b, k, d)
            s_pos = sigmoid(np.einsum("bd,bd->b", v, u_pos)) - 1.0
            s_neg = sigmoid(np.einsum("bd,bkd->bk", v, u_neg))

            g_v = s_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", s_neg, u_neg)
            g_pos = s_pos[:, None] * v
            g_neg = s_neg[..., None] * v[:, None, :]

            np.add.at(w_in, c, (-lr * g_v).astype(np.float32))
            np.add.at(w_out, o, (-lr * g_pos).astype(np.float32))
            np.add.at(w_out, negs.reshape(-1),
                      (-lr * g_neg.reshape(-1, dim)).astype(np.float32))

    w_in[vocab.index[PAD]] = 0.0
    return EmbeddingTable(w_in, vocab, hyper, fp)


def vectorize_tokens(tokens, table: EmbeddingTable, t_max: int = DEFAULT_T_MAX) -> np.ndarray:
    """First t_max token embeddings concatenated; short lists pad with zeros."""
    out = np.zeros(t_max * table.dim, dtype=np.float32)
    for slot, tok in enumerate(tokens[:t_max]):
        out[slot * table.dim:(slot + 1) * table.dim] = table.vectors[table.vocab.lookup(tok)]
    return out


def vectorize_graph(graph, table: EmbeddingTable, t_max: int = DEFAULT_T_MAX) -> np.ndarray:
    return np.stack([vectorize_tokens(n.tokens, table, t_max) for n in graph.nodes])
