import numpy as np
import pytest

from vulloc import checkpoint as ckpt
from vulloc import models, nn, vocab
from vulloc.codegraph import annotate, build_cpg
from vulloc.errors import CheckpointError, EmptyScoreVector, SequenceTooLong
from vulloc.frontend import parse_source
from vulloc.models import (
    GgnnConfig, GgnnModel, PreparedGraph, TransformerConfig, TransformerModel,
    model_gradient_check, predict, prepare, ranked_nodes,
)

SRC = "int f(int n)\n{\nint x = 0;\nif (n < 4)\n{\nx = n + 1;\n}\nreturn x;\n}"


def small_table(sources=(SRC,), dim=4):
    samples = [annotate(build_cpg(parse_source(s)), None) for s in sources]
    return vocab.train_word2vec(samples, dim=dim, epochs=1, seed=0)


def sample_prep(dim=4, t_max=2, dtype=np.float32):
    table = small_table(dim=dim)
    sample = annotate(build_cpg(parse_source(SRC)), 6)
    return prepare(sample, table, t_max=t_max, dtype=dtype)


def chain_prep(n=8, d=4, dtype=np.float32, vectors=None):
    """Path graph 0 -> 1 -> ... -> n-1 on edge type 0."""
    adj = [np.zeros((n, n), dtype=dtype) for _ in range(6)]
    for i in range(n - 1):
        adj[0][i + 1, i] = 1.0
    if vectors is None:
        vectors = np.random.default_rng(0).normal(size=(n, d)).astype(dtype)
    return PreparedGraph(n, vectors.astype(dtype), adj, 1, [None] * n)


class TestGgnn:
    def test_k0_is_identity(self):
        prep = chain_prep(d=4)
        model = GgnnModel(GgnnConfig(hidden_dim=4, time_steps=0, input_dim=4), seed=0)
        out = model.encode(prep)
        assert np.array_equal(out.data, prep.vectors)

    def test_zero_edge_weights_closed_form(self):
        prep = chain_prep(d=4)
        model = GgnnModel(GgnnConfig(hidden_dim=4, time_steps=3, input_dim=4), seed=0)
        for t in range(6):
            model.params[f"edge{t}/w"].data[:] = 0.0
        out = model.encode(prep)
        # expected: messages are all zero, so h = GRU(0, h) applied K times
        h = nn.Tensor(prep.vectors)
        zero = nn.Tensor(np.zeros_like(prep.vectors))
        p = model.params
        for _ in range(3):
            h = nn.gru_cell(zero, h, p["gru/wxr"], p["gru/whr"], p["gru/br"],
                            p["gru/wxz"], p["gru/whz"], p["gru/bz"],
                            p["gru/wxn"], p["gru/whn"], p["gru/bn"])
        assert np.allclose(out.data, h.data, atol=1e-6)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        n, d = 7, 4
        adj = [np.zeros((n, n), dtype=np.float32) for _ in range(6)]
        for t in range(6):
            for _ in range(5):
                i, j = rng.integers(0, n, 2)
                adj[t][i, j] = 1.0
        vectors = rng.normal(size=(n, d)).astype(np.float32)
        prep = PreparedGraph(n, vectors, adj, 0, [None] * n)

        model = GgnnModel(GgnnConfig(hidden_dim=4, time_steps=4, input_dim=4), seed=0)
        base = model.encode(prep).data

        perm = rng.permutation(n)
        pvec = np.empty_like(vectors)
        pvec[perm] = vectors
        padj = [np.zeros_like(a) for a in adj]
        for t in range(6):
            src = np.nonzero(adj[t])
            padj[t][perm[src[0]], perm[src[1]]] = 1.0
        pprep = PreparedGraph(n, pvec, padj, 0, [None] * n)
        permuted = model.encode(pprep).data

        assert np.max(np.abs(permuted[perm] - base)) < 1e-5

    def test_k_hop_locality_exact(self):
        n, d, k = 8, 4, 2
        base_vectors = np.random.default_rng(3).normal(size=(n, d)).astype(np.float32)
        model = GgnnModel(GgnnConfig(hidden_dim=4, time_steps=k, input_dim=4), seed=0)

        out_a = model.encode(chain_prep(n, d, vectors=base_vectors)).data
        bumped = base_vectors.copy()
        bumped[0] += 1.0
        out_b = model.encode(chain_prep(n, d, vectors=bumped)).data

        # distance along the chain: node v is v hops from node 0
        for v in range(n):
            if v > k:
                assert np.array_equal(out_a[v], out_b[v]), f"node {v} changed"
        assert not np.array_equal(out_a[0], out_b[0])

    def test_no_incoming_edges_zero_message(self):
        # node n-1 has no incoming edge in a reversed chain; its state must
        # match the zero-message GRU trajectory
        n, d = 4, 3
        prep = chain_prep(n, d)
        model = GgnnModel(GgnnConfig(hidden_dim=3, time_steps=2, input_dim=3), seed=1)
        out = model.encode(prep).data
        p = model.params
        h = nn.Tensor(prep.vectors[0:1])
        zero = nn.Tensor(np.zeros((1, d), dtype=np.float32))
        for _ in range(2):
            h = nn.gru_cell(zero, h, p["gru/wxr"], p["gru/whr"], p["gru/br"],
                            p["gru/wxz"], p["gru/whz"], p["gru/bz"],
                            p["gru/wxn"], p["gru/whn"], p["gru/bn"])
        assert np.allclose(out[0], h.data[0], atol=1e-6)


class TestTransformer:
    CFG = TransformerConfig(layers=2, heads=2, attn_dim=8, ffn_dim=16,
                            max_seq=64, dropout=0.1, input_dim=8)

    def test_deterministic_without_dropout(self):
        prep = sample_prep(dim=4, t_max=2)
        model = TransformerModel(self.CFG, seed=0)
        a = model.encode(prep).data
        b = model.encode(prep).data
        assert np.array_equal(a, b)

    def test_sequence_too_long(self):
        cfg = TransformerConfig(layers=1, heads=2, attn_dim=8, ffn_dim=8,
                                max_seq=4, dropout=0.0, input_dim=8)
        model = TransformerModel(cfg, seed=0)
        with pytest.raises(SequenceTooLong):
            model.encode(sample_prep(dim=4, t_max=2))

    def test_not_permutation_invariant(self):
        src_a = "int f(int n)\n{\nint x = 1;\nint y = 2;\nreturn x + y;\n}"
        src_b = "int f(int n)\n{\nint y = 2;\nint x = 1;\nreturn x + y;\n}"
        table = small_table((src_a, src_b), dim=4)
        model = TransformerModel(self.CFG, seed=0)
        pa = prepare(annotate(build_cpg(parse_source(src_a)), None), table, t_max=2)
        pb = prepare(annotate(build_cpg(parse_source(src_b)), None), table, t_max=2)
        out_a = model.encode(pa).data
        out_b = model.encode(pb).data
        assert out_a.shape == out_b.shape
        assert not np.allclose(out_a, out_b)

    def test_global_receptive_field(self):
        prep = sample_prep(dim=4, t_max=2)
        model = TransformerModel(self.CFG, seed=0)
        base = model.encode(prep).data
        bumped = prep.vectors.copy()
        bumped[-1] += 1.0
        prep2 = PreparedGraph(prep.n, bumped, prep.adjacency, prep.label, prep.lines)
        out = model.encode(prep2).data
        changed = np.abs(out - base).max(axis=1)
        assert (changed > 0).all()  # every position sees the perturbation

    def test_dropout_seeded(self):
        prep = sample_prep(dim=4, t_max=2)
        model = TransformerModel(self.CFG, seed=0)
        r1 = nn.PrngState(5).stream("dropout")
        r2 = nn.PrngState(5).stream("dropout")
        a = model.encode(prep, train=True, rng=r1).data
        b = model.encode(prep, train=True, rng=r2).data
        assert np.array_equal(a, b)


class TestHeadAndPredict:
    def test_zero_head_uniform(self):
        prep = sample_prep(dim=4, t_max=2)
        model = GgnnModel(GgnnConfig(hidden_dim=8, time_steps=1, input_dim=8), seed=0)
        model.params["head/w"].data[:] = 0.0
        scores = model.node_scores(prep).data
        assert np.allclose(scores, 0.0)
        yhat, probs = predict(scores)
        assert yhat == 0
        assert np.allclose(probs, 1.0 / len(probs))

    def test_single_node(self):
        yhat, probs = predict(np.array([2.5]))
        assert yhat == 0 and probs[0] == 1.0

    def test_tie_break_lowest_index(self):
        yhat, _ = predict(np.array([2.0, 5.0, 5.0]))
        assert yhat == 1

    def test_spec_examples(self):
        yhat, probs = predict(np.array([0.0, 0.0]))
        assert yhat == 0 and np.allclose(probs, [0.5, 0.5])
        yhat, _ = predict(np.array([1.0, 3.0, 2.0]))
        assert yhat == 1

    def test_affine_invariance_of_argmax(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = rng.normal(size=9)
            a = rng.uniform(0.1, 5.0)
            c = rng.normal() * 10
            y1, p1 = predict(s)
            y2, p2 = predict(a * s + c)
            assert y1 == y2
        # shift alone also preserves the probabilities
        y3, p3 = predict(s + 7.0)
        _, p0 = predict(s)
        assert np.allclose(p3, p0, atol=1e-9)

    def test_empty_scores(self):
        with pytest.raises(EmptyScoreVector):
            predict(np.array([]))

    def test_ranked_nodes(self):
        assert ranked_nodes(np.array([1.0, 3.0, 3.0, 0.5])) == [1, 2, 0, 3]


class TestEndToEndGradients:
    def test_ggnn_gradient(self):
        prep = sample_prep(dim=2, t_max=2, dtype=np.float64)
        model = GgnnModel(GgnnConfig(hidden_dim=4, time_steps=2, input_dim=4),
                          seed=0, dtype=np.float64)
        assert model_gradient_check(model, prep) < 1e-3

    def test_transformer_gradient(self):
        prep = sample_prep(dim=2, t_max=2, dtype=np.float64)
        cfg = TransformerConfig(layers=1, heads=2, attn_dim=4, ffn_dim=8,
                                max_seq=64, dropout=0.0, input_dim=4)
        model = TransformerModel(cfg, seed=0, dtype=np.float64)
        assert model_gradient_check(model, prep) < 1e-3


class TestCheckpoints:
    def test_model_roundtrip_bitwise(self, tmp_path):
        prep = sample_prep(dim=4, t_max=2)
        cfg = GgnnConfig(hidden_dim=8, time_steps=2, input_dim=8)
        model = GgnnModel(cfg, seed=7)
        before = model.score_numpy(prep)
        path = tmp_path / "m.ck"
        ckpt.save_checkpoint(path, "ggnn", models.config_dict(cfg),
                             model.params.state_arrays(), {"seed": 7})
        loaded = ckpt.load_checkpoint(path)
        assert loaded.model_kind == "ggnn"
        clone = GgnnModel(models.config_from_dict("ggnn", loaded.config), seed=99)
        clone.params.load_arrays(loaded.arrays)
        after = clone.score_numpy(prep)
        assert np.array_equal(before, after)

    def test_checkpoint_bytes_stable(self, tmp_path):
        cfg = GgnnConfig(hidden_dim=4, time_steps=1, input_dim=4)
        model = GgnnModel(cfg, seed=1)
        p1, p2 = tmp_path / "a.ck", tmp_path / "b.ck"
        for p in (p1, p2):
            ckpt.save_checkpoint(p, "ggnn", models.config_dict(cfg),
                                 model.params.state_arrays(), {"seed": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_embedding_roundtrip(self, tmp_path):
        table = small_table(dim=4)
        path = tmp_path / "e.ck"
        ckpt.save_embedding(table, path)
        loaded = ckpt.load_embedding(path)
        assert np.array_equal(loaded.vectors, table.vectors)
        assert loaded.vocab.tokens == table.vocab.tokens
        assert loaded.fingerprint() == table.fingerprint()
        assert loaded.corpus_fp == table.corpus_fp

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ck"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(CheckpointError):
            ckpt.load_checkpoint(path)

    def test_seed_pins_init(self):
        cfg = GgnnConfig(hidden_dim=4, time_steps=1, input_dim=4)
        a = GgnnModel(cfg, seed=3).params.state_arrays()
        b = GgnnModel(cfg, seed=3).params.state_arrays()
        c = GgnnModel(cfg, seed=4).params.state_arrays()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert any(not np.array_equal(a[k], c[k]) for k in a)


class TestDummyNodeMechanics:
    def test_dummy_state_is_graph_independent_for_ggnn(self):
        # node 0 has no incoming edges (GRAPH_LINK only points outward), so
        # its encoded state depends only on parameters, never on the code
        table = small_table((SRC,), dim=4)
        model = GgnnModel(GgnnConfig(hidden_dim=8, time_steps=3, input_dim=8), seed=3)
        src_b = "int g(int m)\n{\nint q = 9;\nwhile (m < q)\n{\nm = m + 2;\n}\nreturn m;\n}"
        table_b = small_table((SRC, src_b), dim=4)
        prep_a = prepare(annotate(build_cpg(parse_source(SRC)), None), table_b, t_max=2)
        prep_b = prepare(annotate(build_cpg(parse_source(src_b)), None), table_b, t_max=2)
        ha = model.encode(prep_a).data[0]
        hb = model.encode(prep_b).data[0]
        assert np.allclose(ha, hb, atol=1e-6)

    def test_dummy_state_is_graph_dependent_for_transformer(self):
        cfg = TransformerConfig(layers=1, heads=2, attn_dim=8, ffn_dim=16,
                                max_seq=64, dropout=0.0, input_dim=8)
        model = TransformerModel(cfg, seed=3)
        src_b = "int g(int m)\n{\nint q = 9;\nwhile (m < q)\n{\nm = m + 2;\n}\nreturn m;\n}"
        table_b = small_table((SRC, src_b), dim=4)
        prep_a = prepare(annotate(build_cpg(parse_source(SRC)), None), table_b, t_max=2)
        prep_b = prepare(annotate(build_cpg(parse_source(src_b)), None), table_b, t_max=2)
        ha = model.encode(prep_a).data[0]
        hb = model.encode(prep_b).data[0]
        assert not np.allclose(ha, hb)
