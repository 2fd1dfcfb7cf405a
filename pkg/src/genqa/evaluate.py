"""Accuracy evaluation and report rendering.

A generative system is correct on a question when the gold object string
occurs in its generated answer; fact-ranking systems must return exactly the
gold object. Reports carry per-question records, a sentence-shape fluency
proxy, and the split of wrong answers into "picked the wrong fact" versus
"right fact, broken surroundings". Reports write as JSON plus a fixed-width
text table, a CSV, and a bar-chart PNG side by side.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

from .kb import GroundedInstance, Triple
from .model import Model
from .search import answer

SYSTEM_LABELS = {
    "retrieval": "Retrieval-based QA",
    "nrm": "NRM (no-knowledge seq2seq)",
    "embedding": "Embedding-based QA",
    "genqa": "GenQA (bilinear)",
    "genqa-cnn": "GenQA (CNN matcher)",
}


@dataclass(frozen=True)
class QuestionRecord:
    question: str
    generated: str
    gold_object: str
    correct: bool
    ungrounded: bool
    fluent: bool
    wrong_triple: bool


@dataclass(frozen=True)
class SystemEval:
    system: str
    n: int
    accuracy: float
    fluency: float
    improper_surround_rate: float
    wrong_triple_rate: float
    ungrounded_rate: float
    records: tuple[QuestionRecord, ...]


@dataclass
class EvalReport:
    systems: list[SystemEval]

    def accuracy(self, system: str) -> float:
        for s in self.systems:
            if s.system == system:
                return s.accuracy
        raise KeyError(system)

    def to_json(self) -> dict:
        return {
            "systems": [
                {k: v for k, v in asdict(s).items() if k != "records"}
                for s in self.systems
            ],
            "records": {s.system: [asdict(r) for r in s.records] for s in self.systems},
        }


def is_fluent(text: str) -> bool:
    """Sentence-shape template: a few words, letters first, closed by . ! or ?"""
    tokens = text.split()
    if len(tokens) < 3:
        return False
    return tokens[0][0].isalpha() and text.rstrip()[-1:] in {".", "!", "?"}


def _summarize(system: str, records: list[QuestionRecord]) -> SystemEval:
    n = len(records)
    correct = [r for r in records if r.correct]
    improper = [r for r in correct if not r.fluent]
    wrong = [r for r in records if not r.correct]
    wrong_triple = [r for r in wrong if r.wrong_triple]
    return SystemEval(
        system=system,
        n=n,
        accuracy=len(correct) / n if n else 0.0,
        fluency=sum(r.fluent for r in records) / n if n else 0.0,
        improper_surround_rate=len(improper) / len(correct) if correct else 0.0,
        wrong_triple_rate=len(wrong_triple) / n if n else 0.0,
        ungrounded_rate=sum(r.ungrounded for r in records) / n if n else 0.0,
        records=tuple(records),
    )


def evaluate_generative(
    system: str,
    model: Model,
    instances: Sequence[GroundedInstance],
    threads: int = 1,
) -> SystemEval:
    """Generate an answer per question and judge by object containment."""

    def judge(inst: GroundedInstance) -> QuestionRecord:
        gold = model.store.triples[inst.gold_triple_id]
        result = answer(model, inst.question.text)
        correct = gold.object in result.answer
        others = {
            model.store.triples[c.triple_id].object
            for c in model.prepare_candidates(model.retrieve(model.question_vocab.encode(inst.question.surfaces)))
            if c.triple_id != inst.gold_triple_id
        }
        wrong_triple = (not correct) and any(obj in result.answer for obj in others)
        return QuestionRecord(
            question=inst.question.text,
            generated=result.answer,
            gold_object=gold.object,
            correct=correct,
            ungrounded=result.ungrounded,
            fluent=is_fluent(result.answer),
            wrong_triple=wrong_triple,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(judge, instances))
    else:
        records = [judge(inst) for inst in instances]
    return _summarize(system, records)


def evaluate_fact_system(
    system: str,
    answer_fn: Callable[[GroundedInstance], Triple | None],
    store_triples: Sequence[Triple],
    instances: Sequence[GroundedInstance],
) -> SystemEval:
    """Judge a system that returns a fact (object only, no sentence)."""
    records = []
    for inst in instances:
        gold = store_triples[inst.gold_triple_id]
        got = answer_fn(inst)
        generated = got.object if got is not None else ""
        correct = got is not None and got.object == gold.object
        records.append(
            QuestionRecord(
                question=inst.question.text,
                generated=generated,
                gold_object=gold.object,
                correct=correct,
                ungrounded=got is None,
                fluent=False,  # object-only systems produce no sentence
                wrong_triple=(got is not None) and not correct,
            )
        )
    return _summarize(system, records)


# --- report files -------------------------------------------------------------

def report_table(report: EvalReport) -> str:
    """Fixed-width accuracy table, one row per system."""
    labels = [SYSTEM_LABELS.get(s.system, s.system) for s in report.systems]
    width = max([len("Models")] + [len(x) for x in labels])
    lines = [f"{'Models'.ljust(width)}  Test", f"{'-' * width}  ----"]
    for s, label in zip(report.systems, labels):
        lines.append(f"{label.ljust(width)}  {100.0 * s.accuracy:.1f}%")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "system", "n", "accuracy", "fluency",
            "improper_surround_rate", "wrong_triple_rate", "ungrounded_rate",
        ]
    )
    for s in report.systems:
        writer.writerow(
            [
                s.system, s.n, f"{s.accuracy:.6f}", f"{s.fluency:.6f}",
                f"{s.improper_surround_rate:.6f}", f"{s.wrong_triple_rate:.6f}",
                f"{s.ungrounded_rate:.6f}",
            ]
        )
    return buf.getvalue()


def render_accuracy_figure(report: EvalReport, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    systems = [SYSTEM_LABELS.get(s.system, s.system) for s in report.systems]
    values = [100.0 * s.accuracy for s in report.systems]
    fig, ax = plt.subplots(figsize=(7, 0.7 * max(len(systems), 2) + 1.2))
    bars = ax.barh(range(len(systems)), values, color="#4878a8")
    ax.set_yticks(range(len(systems)))
    ax.set_yticklabels(systems)
    ax.invert_yaxis()
    ax.set_xlabel("test accuracy (%)")
    ax.set_xlim(0, 100)
    ax.bar_label(bars, fmt="%.1f")
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None, "CreationDate": None})
    plt.close(fig)


def write_report(report: EvalReport, json_path: str | Path) -> dict[str, Path]:
    """Write report.json plus .txt/.csv/.png siblings, atomically."""
    base = Path(json_path)
    paths = {
        "json": base,
        "txt": base.with_suffix(".txt"),
        "csv": base.with_suffix(".csv"),
        "png": base.with_suffix(".png"),
    }
    payloads = {
        "json": json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
        "txt": report_table(report),
        "csv": report_csv(report),
    }
    for key, text in payloads.items():
        tmp = paths[key].with_name(paths[key].name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(paths[key])
    tmp = paths["png"].with_name(paths["png"].name + ".tmp")
    render_accuracy_figure(report, tmp)
    tmp.replace(paths["png"])
    return paths
