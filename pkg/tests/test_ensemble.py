import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from vulloc import models, pipeline, vocab
from vulloc.ensemble import EnsembleSpec, System, build_k_ensemble, ensemble_scores, load_system
from vulloc.errors import EmptyEnsemble, LengthMismatch, MemberMismatch
from vulloc.models import predict

from test_pipeline import MICRO, TABLE, TINY_GGNN, TINY_TR


class TestEnsembleScores:
    def test_idempotence(self):
        s = np.array([1.0, -2.0, 3.0])
        out = ensemble_scores([s, s])
        assert np.allclose(out, s)
        assert predict(out)[0] == predict(s)[0]

    def test_tie_breaks_to_lowest_index(self):
        out = ensemble_scores([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        assert np.allclose(out, [0.5, 0.5])
        assert predict(out)[0] == 0

    def test_degenerate_weights(self):
        g = np.array([3.0, 1.0])
        t = np.array([0.0, 9.0])
        assert np.array_equal(ensemble_scores([g, t], [1.0, 0.0]), g)

    def test_two_member_average_is_half_half(self):
        g = np.array([2.0, 0.0, 1.0])
        t = np.array([0.0, 2.0, 1.0])
        assert np.allclose(ensemble_scores([g, t]), 0.5 * g + 0.5 * t)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            ensemble_scores([np.zeros(3), np.zeros(4)])

    def test_empty(self):
        with pytest.raises(EmptyEnsemble):
            ensemble_scores([])

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            ensemble_scores([np.zeros(2), np.zeros(2)], [0.9, 0.3])
        with pytest.raises(ValueError):
            ensemble_scores([np.zeros(2), np.zeros(2)], [-0.5, 1.5])

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=8),
           st.floats(-10, 10))
    def test_argmax_invariant_under_common_shift(self, base, shift):
        a = np.array(base)
        b = a[::-1].copy()
        s = ensemble_scores([a, b])
        gap = np.diff(np.sort(s))
        # sub-rounding score gaps can collapse into exact ties after a shift
        assume(gap.size == 0 or gap[gap > 0].size == 0
               or np.min(gap[gap > 0]) > 1e-9 * (1.0 + abs(shift)))
        y1 = predict(s)[0]
        y2 = predict(ensemble_scores([a + shift, b + shift]))[0]
        assert y1 == y2

    @given(st.integers(0, 10))
    def test_uniform_commutes_with_reorder(self, seed):
        rng = np.random.default_rng(seed)
        vs = [rng.normal(size=6) for _ in range(3)]
        a = ensemble_scores(vs)
        b = ensemble_scores(vs[::-1])
        assert np.allclose(a, b)

    def test_linear_in_members(self):
        rng = np.random.default_rng(0)
        a, b, c = (rng.normal(size=5) for _ in range(3))
        w = [0.25, 0.25, 0.5]
        out = ensemble_scores([a, b, c], w)
        out2 = ensemble_scores([2 * a, b, c], w)
        assert np.allclose(out2 - out, 0.25 * a)


class TestEnsembleSpec:
    def test_json_roundtrip(self):
        spec = EnsembleSpec.uniform(["a.ck", "b.ck"])
        again = EnsembleSpec.from_json(spec.to_json())
        assert again == spec

    def test_uniform_weights(self):
        spec = EnsembleSpec.uniform(["a", "b", "c", "d"])
        assert spec.weights == [0.25] * 4

    def test_empty_rejected(self):
        with pytest.raises(EmptyEnsemble):
            EnsembleSpec.uniform([])


class TestBuildKEnsemble:
    def test_four_model_variant(self):
        calls = []

        def trainer(kind, seed):
            calls.append((kind, seed))
            return f"{kind}-{seed}.ck"

        spec = build_k_ensemble(["ggnn", "ggnn", "transformer", "transformer"],
                                [1, 2, 1, 2], trainer)
        assert calls == [("ggnn", 1), ("ggnn", 2), ("transformer", 1), ("transformer", 2)]
        assert spec.weights == [0.25] * 4

    def test_single_member(self):
        spec = build_k_ensemble(["ggnn"], [7], lambda k, s: "x.ck")
        assert spec.members == ["x.ck"] and spec.weights == [1.0]

    def test_duplicates_average_out(self):
        s = np.array([4.0, 1.0])
        assert np.allclose(ensemble_scores([s, s, s]), ensemble_scores([s]))

    def test_mismatched_lists(self):
        with pytest.raises(LengthMismatch):
            build_k_ensemble(["ggnn"], [1, 2], lambda k, s: "x")


def _train_and_save(tmp_path, kind, cfg, seed, name, table=TABLE):
    res = pipeline.train(kind, MICRO[:6], MICRO[6:],
                         pipeline.TrainConfig(lr=1e-3, max_epochs=1, seed=seed,
                                              vul_only=True),
                         cfg, table, t_max=4)
    path = tmp_path / name
    res.save(path)
    return path


class TestLoadSystem:
    def test_mixed_system_scores(self, tmp_path):
        g = _train_and_save(tmp_path, "ggnn", TINY_GGNN, 1, "g.ck")
        t = _train_and_save(tmp_path, "transformer", TINY_TR, 1, "t.ck")
        system = load_system("ens", [g, t], embed_fp=TABLE.fingerprint())
        prep = models.prepare(MICRO[0], TABLE, t_max=4)
        scores = system.scores(prep)
        assert scores.shape == (prep.n,)
        single = load_system("ggnn", [g])
        assert np.allclose(
            ensemble_scores([single.scores(prep), load_system("t", [t]).scores(prep)]),
            scores)

    def test_one_member_system_equals_model(self, tmp_path):
        g = _train_and_save(tmp_path, "ggnn", TINY_GGNN, 1, "g.ck")
        system = load_system("solo", [g])
        prep = models.prepare(MICRO[0], TABLE, t_max=4)
        assert np.allclose(system.scores(prep), system.models[0].score_numpy(prep))

    def test_embed_fingerprint_mismatch(self, tmp_path):
        g = _train_and_save(tmp_path, "ggnn", TINY_GGNN, 1, "g.ck")
        with pytest.raises(MemberMismatch):
            load_system("bad", [g], embed_fp="deadbeef")

    def test_members_must_share_table(self, tmp_path):
        other = vocab.train_word2vec(MICRO, dim=8, epochs=1, seed=42)
        g = _train_and_save(tmp_path, "ggnn", TINY_GGNN, 1, "g.ck")
        t = _train_and_save(tmp_path, "transformer", TINY_TR, 1, "t.ck", table=other)
        with pytest.raises(MemberMismatch):
            load_system("bad", [g, t])

    def test_embedding_checkpoint_rejected_as_member(self, tmp_path):
        from vulloc.checkpoint import save_embedding
        path = tmp_path / "embed.ck"
        save_embedding(TABLE, path)
        with pytest.raises(MemberMismatch):
            load_system("bad", [path])
