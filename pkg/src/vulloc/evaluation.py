"""Localization metrics and comparison reports.

Three views of the same predictions: exact node-index accuracy, line-level
top-k localization over vulnerable samples, and function-level vulnerability
classification where predicting the dummy node means "clean". Distances are
line deltas, defined only when both sides name a line; dummy predictions on
vulnerable samples are excluded and counted.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import models as M
from .codegraph import Sample
from .errors import EmptyRecordSet


@dataclass
class PredictionRecord:
    sample_id: str
    ranking: list[tuple[int, float]]  # (node id, score), best first
    node_lines: list  # node id -> line (None for the dummy)
    label_node: int
    true_line: int | None
    ranked_lines: list[int] = field(init=False)

    def __post_init__(self):
        seen = set()
        lines = []
        for node, _ in self.ranking:
            line = self.node_lines[node]
            if line is None or line in seen:
                continue
            seen.add(line)
            lines.append(line)
        self.ranked_lines = lines

    @property
    def predicted_node(self) -> int:
        return self.ranking[0][0]

    @property
    def predicted_line(self) -> int | None:
        return self.node_lines[self.predicted_node]

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "predicted_node": self.predicted_node,
            "predicted_line": self.predicted_line,
            "label_node": self.label_node,
            "true_line": self.true_line,
            "ranked_lines": self.ranked_lines[:16],
            "ranking": [[n, float(s)] for n, s in self.ranking[:16]],
        }


def make_record(sample: Sample, scores: np.ndarray) -> PredictionRecord:
    order = M.ranked_nodes(scores)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    ranking = [(i, float(s[i])) for i in order]
    return PredictionRecord(
        sample_id=sample.source_path or sample.graph.function_name,
        ranking=ranking,
        node_lines=[n.line for n in sample.graph.nodes],
        label_node=sample.label_node,
        true_line=sample.vulnerable_line,
    )


def _vulnerable(records) -> list[PredictionRecord]:
    return [r for r in records if r.label_node != 0]


def topk_accuracy(records, k: int) -> float:
    """Fraction of vulnerable records whose true line is in the k best lines."""
    if k < 1:
        raise ValueError("k must be >= 1")
    vul = _vulnerable(records)
    if not vul:
        raise EmptyRecordSet("no vulnerable-ground-truth records")
    hits = sum(1 for r in vul if r.true_line in r.ranked_lines[:k])
    return hits / len(vul)


def prediction_distance(record: PredictionRecord) -> int | None:
    """|predicted line - true line|; None when either side has no line."""
    if record.true_line is None or record.predicted_line is None:
        return None
    return abs(record.predicted_line - record.true_line)


def mean_distance(records) -> tuple[float | None, int, int]:
    """(mean over defined distances, defined count, excluded count).

    Only vulnerable-ground-truth records participate; those predicted as the
    dummy node have no line and are excluded (and counted).
    """
    vul = _vulnerable(records)
    if not vul:
        raise EmptyRecordSet("no vulnerable-ground-truth records")
    distances = [prediction_distance(r) for r in vul]
    defined = [d for d in distances if d is not None]
    excluded = len(distances) - len(defined)
    mean = sum(defined) / len(defined) if defined else None
    return mean, len(defined), excluded


def classification_metrics(records) -> dict:
    """Function-level vulnerable-vs-clean metrics; positive class = vulnerable.

    Any non-dummy prediction on a vulnerable sample counts as a true
    positive here, regardless of which node it names.
    """
    if not records:
        raise EmptyRecordSet("no records")
    tp = fp = tn = fn = 0
    for r in records:
        truth_vul = r.label_node != 0
        pred_vul = r.predicted_node != 0
        if truth_vul and pred_vul:
            tp += 1
        elif truth_vul:
            fn += 1
        elif pred_vul:
            fp += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return {
        "accuracy": (tp + tn) / len(records),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "confusion": {"tp": tp, "fp": fp, "tn": tn, "fn": fn},
    }


def prediction_accuracy(records) -> float:
    """Exact node-index match over every record (dummy counts as class 0)."""
    if not records:
        raise EmptyRecordSet("no records")
    return sum(1 for r in records if r.predicted_node == r.label_node) / len(records)


def aggregate(records, ks=(1, 3)) -> dict:
    out = {"n_records": len(records),
           "n_vulnerable": len(_vulnerable(records))}
    if out["n_vulnerable"]:
        out["topk"] = {str(k): topk_accuracy(records, k) for k in ks}
        mean, defined, excluded = mean_distance(records)
        out["mean_distance"] = mean
        out["distance_defined"] = defined
        out["distance_excluded"] = excluded
        out["vul_loc"] = out["topk"].get("1", topk_accuracy(records, 1))
    hybrid = out["n_vulnerable"] < len(records)
    out["hybrid"] = hybrid
    out["pred_acc"] = prediction_accuracy(records)
    if hybrid:
        out["vul_cls"] = classification_metrics(records)
    return out


def evaluate_system(system, samples, table, t_max=8, ks=(1, 3)) -> tuple[list, dict]:
    records = []
    for sample in samples:
        prep = M.prepare(sample, table, t_max=t_max,
                         need_adjacency=system.needs_adjacency)
        records.append(make_record(sample, system.scores(prep)))
    return records, aggregate(records, ks)


def compare_report(systems, samples, table, t_max=8, ks=(1, 3)) -> dict:
    """One row per scored system over the same test samples."""
    rows = []
    per_system_records = {}
    for system in systems:
        records, agg = evaluate_system(system, samples, table, t_max, ks)
        rows.append({"name": system.name, "members": len(system.models), **agg})
        per_system_records[system.name] = records
    report = {"v": 1, "topk": list(ks), "n_samples": len(samples),
              "systems": rows}
    return {"report": report, "records": per_system_records}


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def records_jsonl(per_system_records: dict) -> str:
    lines = []
    for name in sorted(per_system_records):
        for rec in per_system_records[name]:
            lines.append(json.dumps({"system": name, **rec.as_dict()},
                                    separators=(",", ":")))
    return "\n".join(lines) + "\n"


def _fmt(value, pct=True) -> str:
    if value is None:
        return "n/a"
    return f"{value * 100:.1f}%" if pct else f"{value:.2f}"


def report_text(report: dict) -> str:
    ks = report["topk"]
    headers = ["system", "members"] + [f"top-{k}" for k in ks] + [
        "distance", "pred-acc", "vul-cls-f1", "vul-loc"]
    rows = []
    for row in report["systems"]:
        cells = [row["name"], str(row["members"])]
        for k in ks:
            cells.append(_fmt(row.get("topk", {}).get(str(k))))
        cells.append(_fmt(row.get("mean_distance"), pct=False))
        cells.append(_fmt(row.get("pred_acc")))
        vul_cls = row.get("vul_cls")
        cells.append(_fmt(vul_cls["f1"]) if vul_cls else "n/a")
        cells.append(_fmt(row.get("vul_loc")))
        rows.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    out.append("  ".join("-" * w for w in widths))
    for cells in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(out) + "\n"
