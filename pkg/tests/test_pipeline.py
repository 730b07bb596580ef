import numpy as np
import pytest

from vulloc import models, pipeline, vocab
from vulloc.checkpoint import load_checkpoint
from vulloc.codegraph import annotate, build_cpg
from vulloc.errors import EmptyTrainSet, TooFewSamples, VocabMismatch
from vulloc.frontend import parse_source
from vulloc.pipeline import EarlyStopper, SplitConfig, TrainConfig, split_dataset


def make_sample(ts, vulnerable=False, body_n=1):
    stmts = "\n".join(f"x = x + {i + 1};" for i in range(body_n))
    src = f"int f(int n)\n{{\nint x;\nx = n;\n{stmts}\nreturn x;\n}}"
    graph = build_cpg(parse_source(src))
    line = 4 if vulnerable else None
    return annotate(graph, line, commit_ts=ts, source_path=f"s{ts}.c")


class TestSplit:
    def test_90_5_5(self):
        samples = [make_sample(i) for i in range(100)]
        tr, va, te = split_dataset(samples, SplitConfig())
        assert (len(tr), len(va), len(te)) == (90, 5, 5)

    def test_temporal_latest_to_test(self):
        samples = [make_sample(ts) for ts in range(1, 21)]
        tr, va, te = split_dataset(samples, SplitConfig())
        assert [s.commit_ts for s in te] == [20]
        assert max(s.commit_ts for s in tr) <= min(s.commit_ts for s in te)
        assert max(s.commit_ts for s in tr) <= min(s.commit_ts for s in va)

    def test_exact_quarters(self):
        samples = [make_sample(i) for i in range(4)]
        tr, va, te = split_dataset(samples, SplitConfig(ratios=(0.5, 0.25, 0.25)))
        assert (len(tr), len(va), len(te)) == (2, 1, 1)

    def test_partition(self):
        samples = [make_sample(i) for i in (5, 3, 9, 1, 7, 2, 8, 4, 6, 0)]
        tr, va, te = split_dataset(samples, SplitConfig(ratios=(0.6, 0.2, 0.2)))
        ids = [s.commit_ts for part in (tr, va, te) for s in part]
        assert sorted(ids) == list(range(10))
        assert len(ids) == 10

    def test_given_order_policy(self):
        samples = [make_sample(i) for i in (5, 3, 9, 1)]
        tr, va, te = split_dataset(
            samples, SplitConfig(ratios=(0.5, 0.25, 0.25), order="given"))
        assert [s.commit_ts for s in tr] == [5, 3]
        assert [s.commit_ts for s in te] == [1]

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            split_dataset([make_sample(0), make_sample(1)], SplitConfig())

    def test_empty_split_rejected(self):
        samples = [make_sample(i) for i in range(4)]
        with pytest.raises(TooFewSamples):
            split_dataset(samples, SplitConfig())  # 4 * 0.05 rounds to 0

    def test_shuffled_input_same_temporal_split(self):
        a = [make_sample(i) for i in range(40)]
        b = list(reversed(a))
        ta = split_dataset(a, SplitConfig(ratios=(0.8, 0.1, 0.1)))
        tb = split_dataset(b, SplitConfig(ratios=(0.8, 0.1, 0.1)))
        for pa, pb in zip(ta, tb):
            assert [s.commit_ts for s in pa] == [s.commit_ts for s in pb]


class TestEarlyStopper:
    def test_patience_arithmetic(self):
        # valid losses [1.0, .9, .91, .92, .93], patience 3:
        # stop after epoch 5, best checkpoint is epoch 2
        stopper = EarlyStopper(patience=3)
        decisions = [stopper.update(v, e + 1)
                     for e, v in enumerate([1.0, 0.9, 0.91, 0.92, 0.93])]
        assert [d[1] for d in decisions] == [False, False, False, False, True]
        assert stopper.best_epoch == 2
        assert stopper.best == 0.9

    def test_tiny_decrease_is_not_improvement(self):
        stopper = EarlyStopper(patience=1)
        stopper.update(1.0, 1)
        improved, stop = stopper.update(1.0 - 1e-9, 2)
        assert not improved and stop


TRAIN_SOURCES_VULN = [
    ("int f%d(int n)\n{\nint d;\nint o;\nd = 0;\no = n / d;\nreturn o;\n}", 6),
    ("int g%d(int n)\n{\nint a[4];\nint i;\nfor (i = 0; i < 4; i = i + 1)\n{\na[i + 1] = n;\n}\nreturn a[0];\n}", 7),
]


def micro_corpus():
    samples = []
    ts = 0
    for rep in range(4):
        for tmpl, line in TRAIN_SOURCES_VULN:
            src = tmpl % ts
            graph = build_cpg(parse_source(src))
            samples.append(annotate(graph, line, commit_ts=ts,
                                    source_path=f"m{ts}.c"))
            ts += 1
    return samples


MICRO = micro_corpus()
TABLE = vocab.train_word2vec(MICRO, dim=8, epochs=2, seed=5)
TINY_GGNN = models.GgnnConfig(hidden_dim=16, time_steps=2, input_dim=32)
TINY_TR = models.TransformerConfig(layers=1, heads=2, attn_dim=16, ffn_dim=32,
                                   max_seq=64, dropout=0.0, input_dim=32)


class TestTrain:
    def test_deterministic_checkpoints(self, tmp_path):
        cfg = TrainConfig(lr=1e-3, max_epochs=2, seed=9, vul_only=True)
        paths = []
        for name in ("a.ck", "b.ck"):
            res = pipeline.train("ggnn", MICRO[:6], MICRO[6:], cfg,
                                 TINY_GGNN, TABLE, t_max=4)
            p = tmp_path / name
            res.save(p)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_seed_changes_result(self):
        a = pipeline.train("ggnn", MICRO[:6], MICRO[6:],
                           TrainConfig(lr=1e-3, max_epochs=1, seed=1, vul_only=True),
                           TINY_GGNN, TABLE, t_max=4)
        b = pipeline.train("ggnn", MICRO[:6], MICRO[6:],
                           TrainConfig(lr=1e-3, max_epochs=1, seed=2, vul_only=True),
                           TINY_GGNN, TABLE, t_max=4)
        arrays_a, arrays_b = a.model.params.state_arrays(), b.model.params.state_arrays()
        assert any(not np.array_equal(arrays_a[k], arrays_b[k]) for k in arrays_a)

    def test_loss_decreases(self):
        res = pipeline.train("transformer", MICRO[:6], MICRO[6:],
                             TrainConfig(lr=1e-3, max_epochs=4, seed=0, vul_only=True),
                             TINY_TR, TABLE, t_max=4)
        losses = [h.train_loss for h in res.history]
        assert losses[-1] < losses[0]

    def test_history_contract(self):
        res = pipeline.train("ggnn", MICRO[:6], MICRO[6:],
                             TrainConfig(lr=1e-3, max_epochs=3, seed=0, vul_only=True),
                             TINY_GGNN, TABLE, t_max=4)
        steps = [h.steps for h in res.history]
        assert steps == sorted(steps)
        best = res.provenance["best_valid_loss"]
        assert best == min(h.valid_loss for h in res.history)
        assert res.provenance["best_epoch"] in [h.epoch for h in res.history]

    def test_empty_train_set(self):
        with pytest.raises(EmptyTrainSet):
            pipeline.train("ggnn", [], MICRO[:2],
                           TrainConfig(max_epochs=1), TINY_GGNN, TABLE, t_max=4)

    def test_vul_only_precondition(self):
        clean = [make_sample(0)]
        with pytest.raises(EmptyTrainSet):
            pipeline.train("ggnn", MICRO[:2] + clean, MICRO[2:4],
                           TrainConfig(max_epochs=1, vul_only=True),
                           TINY_GGNN, TABLE, t_max=4)


class TestFinetune:
    def base(self, tmp_path):
        res = pipeline.train("ggnn", MICRO[:6], MICRO[6:],
                             TrainConfig(lr=1e-3, max_epochs=1, seed=0, vul_only=True),
                             TINY_GGNN, TABLE, t_max=4)
        p = tmp_path / "base.ck"
        res.save(p)
        return load_checkpoint(p)

    def test_zero_epochs_is_identity(self, tmp_path):
        base = self.base(tmp_path)
        res = pipeline.finetune(base, MICRO[:6], MICRO[6:],
                                TrainConfig(lr=1e-5, max_epochs=0, seed=0),
                                TABLE, t_max=4)
        arrays = res.model.params.state_arrays()
        assert all(np.array_equal(arrays[k], base.arrays[k]) for k in arrays)
        assert res.history == []

    def test_continuation_does_not_regress(self, tmp_path):
        base = self.base(tmp_path)
        base_valid = base.provenance["best_valid_loss"]
        res = pipeline.finetune(base, MICRO[:6], MICRO[6:],
                                TrainConfig(lr=1e-5, max_epochs=3, seed=0, vul_only=True),
                                TABLE, t_max=4)
        assert res.provenance["best_valid_loss"] <= base_valid * 1.05

    def test_vocab_mismatch(self, tmp_path):
        base = self.base(tmp_path)
        other = vocab.train_word2vec(MICRO, dim=8, epochs=1, seed=99)
        with pytest.raises(VocabMismatch):
            pipeline.finetune(base, MICRO[:6], MICRO[6:],
                              TrainConfig(lr=1e-5, max_epochs=1), other, t_max=4)

    def test_provenance_links_base(self, tmp_path):
        base = self.base(tmp_path)
        res = pipeline.finetune(base, MICRO[:6], MICRO[6:],
                                TrainConfig(lr=1e-5, max_epochs=1, seed=0, vul_only=True),
                                TABLE, t_max=4)
        assert res.provenance["initialized_from"]["corpus_fp"] == \
            base.provenance["corpus_fp"]


class TestHistoryJsonl:
    def test_format(self):
        res = pipeline.train("ggnn", MICRO[:6], MICRO[6:],
                             TrainConfig(lr=1e-3, max_epochs=2, seed=0, vul_only=True),
                             TINY_GGNN, TABLE, t_max=4)
        text = pipeline.history_jsonl(res.history)
        import json
        rows = [json.loads(line) for line in text.splitlines()]
        assert len(rows) == len(res.history)
        assert set(rows[0]) == {"epoch", "train_loss", "valid_loss", "wall_ms", "steps"}
