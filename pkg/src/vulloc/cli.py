"""Batch command-line surface: gen, graph, vocab, train, finetune, eval,
predict. Every command reads versioned inputs, writes deterministic outputs,
and removes partial outputs when it fails. Exit codes: 0 success, 1 domain
error, 2 usage error.
"""

import argparse
import json
import shutil
import sys
from pathlib import Path

from . import datagen, evaluation, models, pipeline, vocab as V
from .checkpoint import load_checkpoint, load_embedding, save_embedding
from .codegraph import load_samples, save_samples
from .ensemble import EnsembleSpec, load_system
from .errors import VullocError


class _Outputs:
    """Tracks files/directories created by a command for failure cleanup."""

    def __init__(self):
        self.paths: list[Path] = []

    def claim(self, path) -> Path:
        p = Path(path)
        self.paths.append(p)
        return p

    def discard_all(self) -> None:
        for p in self.paths:
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink()


def _load_json(path, what: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise VullocError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise VullocError(f"{what} file {path} is not valid JSON: {exc}") from None


def _model_config(kind: str, spec: dict | None):
    spec = dict(spec or {})
    preset = spec.pop("preset", "desk")
    if preset == "desk":
        cfg = (models.desk_ggnn_config() if kind == "ggnn"
               else models.desk_transformer_config())
    elif preset == "paper":
        cfg = models.GgnnConfig() if kind == "ggnn" else models.TransformerConfig()
    else:
        raise VullocError(f"unknown model preset {preset!r}")
    for key, value in spec.items():
        if not hasattr(cfg, key):
            raise VullocError(f"unknown {kind} config field {key!r}")
        setattr(cfg, key, value)
    return cfg


def _train_configs(blob: dict, vul_only: bool):
    fields = {k: blob[k] for k in ("lr", "max_epochs", "patience", "seed",
                                   "batch_size") if k in blob}
    train_cfg = pipeline.TrainConfig(vul_only=vul_only, **fields)
    split_blob = blob.get("split", {})
    split_cfg = pipeline.SplitConfig(
        ratios=tuple(split_blob.get("ratios", (0.90, 0.05, 0.05))),
        order=split_blob.get("order", "temporal"))
    return train_cfg, split_cfg


def cmd_gen(args, out: _Outputs) -> int:
    blob = _load_json(args.spec, "corpus spec")
    spec = datagen.CorpusSpec(
        count=blob["count"],
        vulnerable_fraction=blob.get("vulnerable_fraction", 0.5),
        difficulty=blob.get("difficulty", "easy"),
        seed=blob.get("seed", 0),
        weights=blob.get("weights"),
        timestamp_start=blob.get("timestamp_start"),
    )
    out_dir = out.claim(args.out)
    entries = datagen.generate_corpus(spec, out_dir)
    n_vul = sum(1 for e in entries if e["vulnerable"])
    print(f"wrote {len(entries)} files ({n_vul} vulnerable) under {out_dir}")
    return 0


def cmd_graph(args, out: _Outputs) -> int:
    manifest_path = Path(args.manifest)
    entries = datagen.load_manifest(manifest_path)
    samples, skipped = datagen.manifest_to_samples(
        entries, manifest_path.parent, max_nodes=args.max_nodes)
    save_samples(samples, out.claim(args.out))
    for s in skipped:
        print(f"skipped {s['path']}: {s['reason']}", file=sys.stderr)
    print(f"wrote {len(samples)} graphs to {args.out} "
          f"({len(skipped)} skipped)")
    return 0


def _load_graph_files(paths) -> list:
    samples = []
    for path in paths:
        samples.extend(load_samples(path))
    return samples


def cmd_vocab(args, out: _Outputs) -> int:
    samples = _load_graph_files(args.graphs)
    table = V.train_word2vec(
        samples, dim=args.dim, window=args.window, negatives=args.negatives,
        epochs=args.epochs, seed=args.seed, min_count=args.min_count)
    save_embedding(table, out.claim(args.out))
    print(f"trained {len(table.vocab)}-token embedding table "
          f"(dim {table.dim}) -> {args.out}")
    return 0


def cmd_train(args, out: _Outputs) -> int:
    blob = _load_json(args.config, "train config")
    train_cfg, split_cfg = _train_configs(blob, args.vul_only)
    table = load_embedding(args.embed)
    samples = _load_graph_files([args.graphs])
    if args.vul_only:
        samples = pipeline.filter_vulnerable(samples)
    train_set, valid_set, _ = pipeline.split_dataset(samples, split_cfg)
    t_max = blob.get("t_max", V.DEFAULT_T_MAX)
    model_cfg = _model_config(args.model, blob.get("model"))
    model_cfg.input_dim = table.dim * t_max  # node vectors fix the input width
    result = pipeline.train(args.model, train_set, valid_set, train_cfg,
                            model_cfg, table, t_max=t_max)
    result.save(out.claim(args.out))
    if args.history:
        Path(args.history).write_text(pipeline.history_jsonl(result.history))
    print(f"{args.model}: {result.provenance['epochs_trained']} epochs, "
          f"best valid loss {result.provenance['best_valid_loss']:.4f} "
          f"(epoch {result.provenance['best_epoch']}) -> {args.out}")
    return 0


def cmd_finetune(args, out: _Outputs) -> int:
    blob = _load_json(args.config, "finetune config")
    if "embed" not in blob:
        raise VullocError("finetune config must name the 'embed' checkpoint")
    table = load_embedding(blob["embed"])
    base = load_checkpoint(getattr(args, "from"))
    train_cfg, split_cfg = _train_configs(blob, args.vul_only)
    if "lr" not in blob:
        train_cfg.lr = 1e-5
    if "max_epochs" not in blob:
        train_cfg.max_epochs = 50
    samples = _load_graph_files([args.graphs])
    if args.vul_only:
        samples = pipeline.filter_vulnerable(samples)
    train_set, valid_set, _ = pipeline.split_dataset(samples, split_cfg)
    t_max = base.provenance.get("t_max", V.DEFAULT_T_MAX)
    result = pipeline.finetune(base, train_set, valid_set, train_cfg, table,
                               t_max=t_max)
    result.save(out.claim(args.out))
    if args.history:
        Path(args.history).write_text(pipeline.history_jsonl(result.history))
    print(f"fine-tuned {base.model_kind}: "
          f"{result.provenance['epochs_trained']} epochs -> {args.out}")
    return 0


def _load_systems(path):
    blob = _load_json(path, "systems")
    if "embed" not in blob:
        raise VullocError("systems file must name the 'embed' checkpoint")
    table = load_embedding(blob["embed"])
    base = Path(path).parent
    systems = []
    for entry in blob.get("systems", []):
        name = entry.get("name")
        if not name:
            raise VullocError("every system needs a 'name'")
        if "spec" in entry:
            spec = EnsembleSpec.from_json(Path(entry["spec"]).read_text())
            members, weights = spec.members, spec.weights
        else:
            members = entry.get("members", [])
            weights = entry.get("weights")
        members = [str(base / m) if not Path(m).is_absolute() else m
                   for m in members]
        systems.append(load_system(name, members, weights,
                                   embed_fp=table.fingerprint()))
    if not systems:
        raise VullocError(f"{path} lists no systems")
    if len({s.t_max for s in systems}) > 1:
        raise VullocError("systems disagree on tokens-per-node; "
                          "evaluate them separately")
    return systems, table


def cmd_eval(args, out: _Outputs) -> int:
    systems, table = _load_systems(args.systems)
    samples = _load_graph_files([args.graphs])
    ks = tuple(int(k) for k in args.topk.split(","))
    result = evaluation.compare_report(systems, samples, table,
                                       t_max=systems[0].t_max, ks=ks)
    out.claim(args.out)
    Path(args.out).write_text(evaluation.report_json(result["report"]))
    if args.records:
        Path(args.records).write_text(evaluation.records_jsonl(result["records"]))
    if args.text:
        Path(args.text).write_text(evaluation.report_text(result["report"]))
    print(evaluation.report_text(result["report"]), end="")
    return 0


def cmd_predict(args, out: _Outputs) -> int:
    systems, table = _load_systems(args.systems)
    source = Path(args.src).read_text()
    from .codegraph import annotate, build_cpg
    from .frontend import dump_ast, parse_source
    try:
        ast = parse_source(source)
    except VullocError as exc:
        raise VullocError(f"{args.src}: {exc}") from None
    if args.dump_ast:
        print(dump_ast(ast), end="")
    sample = annotate(build_cpg(ast), None, source_path=str(args.src))
    for system in systems:
        prep = models.prepare(sample, table, t_max=system.t_max,
                              need_adjacency=system.needs_adjacency)
        scores = system.scores(prep)
        yhat, probs = models.predict(scores)
        print(f"[{system.name}] {args.src}")
        if yhat == 0:
            print(f"  non-vulnerable (dummy)  p={probs[0]:.3f}")
        rec = evaluation.make_record(sample, scores)
        by_line = {}
        for node, score in rec.ranking:
            line = rec.node_lines[node]
            if line is not None and line not in by_line:
                by_line[line] = (score, probs[node])
        for rank, (line, (score, p)) in enumerate(
                list(by_line.items())[:args.topk], start=1):
            print(f"  {rank}. line {line:>4}  score {score:+.4f}  p={p:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vulloc",
        description="Statement-level vulnerability localization over code "
                    "property graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("graph", help="build code property graphs from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-nodes", type=int, default=512)
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("vocab", help="train token embeddings over graph files")
    p.add_argument("--graphs", action="append", required=True)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_vocab)

    p = sub.add_parser("train", help="train a node-scoring model")
    p.add_argument("--model", choices=("ggnn", "transformer"), required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--embed", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vul-only", action="store_true")
    p.add_argument("--history")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("finetune", help="continue training from a checkpoint")
    p.add_argument("--from", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vul-only", action="store_true")
    p.add_argument("--history")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="score systems on a graph file")
    p.add_argument("--systems", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--topk", default="1,3")
    p.add_argument("--out", required=True)
    p.add_argument("--records")
    p.add_argument("--text")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="rank lines of one source file")
    p.add_argument("--systems", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--dump-ast", action="store_true")
    p.set_defaults(fn=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    outputs = _Outputs()
    try:
        return args.fn(args, outputs)
    except VullocError as exc:
        outputs.discard_all()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        outputs.discard_all()
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
