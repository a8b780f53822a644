"""
Strict entity-level evaluation in the CoNLL-2003 style.

An entity counts as correct only when its type, start and end all match.
Stray I- tags open a new entity, as in conlleval.
"""

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Sequence, Set, Tuple


class EntitySpan(NamedTuple):
    entity_type: str
    start: int
    end: int  # inclusive


def _split_tag(tag: str) -> Tuple[str, str]:
    if tag == "O":
        return "O", ""
    return tag[0], tag[2:]


def extract_entities(tags: Sequence[str]) -> List[EntitySpan]:
    spans: List[EntitySpan] = []
    current_type = None
    start = 0
    for index, tag in enumerate(tags):
        prefix, entity_type = _split_tag(tag)
        continues = prefix == "I" and entity_type == current_type
        if current_type is not None and not continues:
            spans.append(EntitySpan(current_type, start, index - 1))
            current_type = None
        if prefix in ("B", "I") and not continues:
            current_type = entity_type
            start = index
    if current_type is not None:
        spans.append(EntitySpan(current_type, start, len(tags) - 1))
    return spans


@dataclass
class ClassScores:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0 if self.fn == 0 else 0.0
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0 if self.fp == 0 else 0.0
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class EvalReport:
    per_class: Dict[str, ClassScores] = field(default_factory=dict)
    micro: ClassScores = field(default_factory=ClassScores)
    # neither side contains any entity; p = r = f1 = 1 by convention
    zero_support: bool = False

    @property
    def precision(self) -> float:
        return self.micro.precision

    @property
    def recall(self) -> float:
        return self.micro.recall

    @property
    def f1(self) -> float:
        return self.micro.f1


def evaluate(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> EvalReport:
    """
    Micro-averaged strict precision, recall and f1 over a list of sentences.

    Args:
        gold: Gold BIO tag lists, one per sentence
        pred: Predicted BIO tag lists with the same shape

    Returns:
        EvalReport: per-class counts and the micro average
    """
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sentences, pred has {len(pred)}")

    gold_spans: Set[Tuple[int, EntitySpan]] = set()
    pred_spans: Set[Tuple[int, EntitySpan]] = set()
    for index, (gold_tags, pred_tags) in enumerate(zip(gold, pred)):
        if len(gold_tags) != len(pred_tags):
            raise ValueError(
                f"sentence {index}: gold has {len(gold_tags)} tags, pred has {len(pred_tags)}"
            )
        gold_spans.update((index, span) for span in extract_entities(gold_tags))
        pred_spans.update((index, span) for span in extract_entities(pred_tags))

    report = EvalReport()
    for _, span in gold_spans | pred_spans:
        report.per_class.setdefault(span.entity_type, ClassScores())
    for item in gold_spans & pred_spans:
        report.per_class[item[1].entity_type].tp += 1
    for item in pred_spans - gold_spans:
        report.per_class[item[1].entity_type].fp += 1
    for item in gold_spans - pred_spans:
        report.per_class[item[1].entity_type].fn += 1

    report.micro = ClassScores(
        tp=sum(s.tp for s in report.per_class.values()),
        fp=sum(s.fp for s in report.per_class.values()),
        fn=sum(s.fn for s in report.per_class.values()),
    )
    report.zero_support = not gold_spans and not pred_spans
    return report


def format_report(report: EvalReport) -> str:
    lines = [
        f"processed entities: tp={report.micro.tp} fp={report.micro.fp} fn={report.micro.fn}",
        f"{'overall':>10}  precision {report.precision:7.2%}  recall {report.recall:7.2%}  f1 {report.f1:7.2%}",
    ]
    for entity_type in sorted(report.per_class):
        scores = report.per_class[entity_type]
        lines.append(
            f"{entity_type:>10}  precision {scores.precision:7.2%}  recall {scores.recall:7.2%}  "
            f"f1 {scores.f1:7.2%}  ({scores.tp + scores.fp} predicted)"
        )
    if report.zero_support:
        lines.append("no entities in gold or prediction")
    return "\n".join(lines)
