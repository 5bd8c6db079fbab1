"""Dataset ingestion and the correlation / model-selection experiment drivers.

A :class:`SegmentDataset` holds references, per-system candidates, and
segment-level human judgments. On top of it the harness computes
system-level scores (means over segments), pooled and per-system
correlations, hybrid super-sampled systems, Hits@1/MRR/Diff model-selection
reports, per-layer correlation sweeps, and paraphrase ROC AUC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .embeddings import (
    EmbeddingProvider,
    PrecomputedStore,
    Sentence,
    SingleLayer,
    StaticTable,
    embed_sentence,
)
from .errors import (
    AllTiedError,
    DatasetFormatError,
    IncompleteStacksError,
    MissingJudgmentsError,
    OneClassOnlyError,
    SampleTooLargeError,
    UnknownSystemError,
    ZeroVarianceError,
)
from .rng import DOMAIN_HYBRID, DOMAIN_TRIAL, substream
from .scorer import ScoreConfig, greedy_score, similarity_matrix
from .stats import kendall, pearson, roc_auc
from .tokenizer import Vocabulary, tokenize

# Record-id conventions for precomputed embedding files. Components are
# joined with tabs, which the TSV ingesters guarantee cannot occur inside
# ids or system names.
def ref_record_id(sentence_id: str) -> str:
    return "ref\t" + sentence_id


def cand_record_id(system: str, sentence_id: str) -> str:
    return "cand\t" + system + "\t" + sentence_id


def score_record_id(kind: str, *parts: str) -> str:
    return "\t".join((kind,) + parts)


@dataclass
class SegmentDataset:
    """System outputs with human judgments over a shared reference set."""

    references: dict[str, str]
    systems: dict[str, dict[str, str]]
    human_segment: dict[tuple[str, str], float]
    human_system: dict[str, float] | None = None

    def __post_init__(self):
        self.validate()

    @property
    def ids(self) -> list[str]:
        return sorted(self.references)

    def validate(self) -> None:
        """Check coverage strictly; report every gap instead of guessing."""
        if not self.references:
            raise DatasetFormatError("dataset has no references")
        if not self.systems:
            raise DatasetFormatError("dataset has no systems")
        gaps = []
        for system, cands in self.systems.items():
            for sid in self.references:
                if sid not in cands:
                    gaps.append(f"system {system!r} lacks candidate for id {sid!r}")
            for sid in cands:
                if sid not in self.references:
                    gaps.append(f"system {system!r} has orphan candidate id {sid!r}")
        if gaps:
            raise DatasetFormatError("; ".join(sorted(gaps)[:20]))
        missing = [
            (system, sid)
            for system in self.systems
            for sid in self.references
            if (system, sid) not in self.human_segment
        ]
        if missing:
            raise MissingJudgmentsError(
                f"missing human judgments for {len(missing)} (system, id) pairs, "
                f"e.g. {sorted(missing)[:5]}"
            )


def load_segment_tsv(path) -> SegmentDataset:
    """Read the segment corpus format.

    TSV with header ``id  system  reference  candidate  human_score``; no
    quoting, so a row with extra tab-separated fields (a literal tab inside
    text) is rejected.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    header = lines[0].split("\t")
    expected = ["id", "system", "reference", "candidate", "human_score"]
    if header != expected:
        raise DatasetFormatError(f"{path}: header {header} != {expected}")
    references: dict[str, str] = {}
    systems: dict[str, dict[str, str]] = {}
    human: dict[tuple[str, str], float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 5:
            raise DatasetFormatError(
                f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)} "
                "(literal tabs in text are not allowed)"
            )
        sid, system, reference, candidate, score = fields
        if sid in references and references[sid] != reference:
            raise DatasetFormatError(f"{path}:{lineno}: id {sid!r} has conflicting references")
        references[sid] = reference
        systems.setdefault(system, {})
        if sid in systems[system]:
            raise DatasetFormatError(f"{path}:{lineno}: duplicate row for ({system!r}, {sid!r})")
        systems[system][sid] = candidate
        try:
            human[(system, sid)] = float(score)
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: bad human_score {score!r}") from None
    return SegmentDataset(references=references, systems=systems, human_segment=human)


@dataclass(frozen=True)
class ParaphrasePair:
    id: str
    sentence1: str
    sentence2: str
    label: bool


def load_paraphrase_tsv(path) -> list[ParaphrasePair]:
    """TSV columns: id, sentence1, sentence2, label(0/1)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    header = lines[0].split("\t")
    expected = ["id", "sentence1", "sentence2", "label"]
    if header != expected:
        raise DatasetFormatError(f"{path}: header {header} != {expected}")
    pairs = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4:
            raise DatasetFormatError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
        sid, s1, s2, label = fields
        if label not in ("0", "1"):
            raise DatasetFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
        pairs.append(ParaphrasePair(sid, s1, s2, label == "1"))
    return pairs


@dataclass(frozen=True)
class MetricUnderTest:
    """A named, deterministic segment scorer: (system, id) -> real."""

    name: str
    score_fn: Callable[[str, str], float]
    fingerprint: str = ""


def vocab_from_table(table: StaticTable, unknown_piece: str = "[UNK]") -> Vocabulary:
    """Derive a tokenizer vocabulary from a static table's piece inventory."""
    return Vocabulary(pieces=frozenset(table.vectors) | {unknown_piece},
                      unknown_piece=unknown_piece)


def dataset_sentences(dataset: SegmentDataset, system: str, sentence_id: str,
                      provider: EmbeddingProvider,
                      vocab: Vocabulary | None = None) -> tuple[Sentence, Sentence]:
    """Provider-ready (reference, candidate) sentences for one segment."""
    ref_text = dataset.references[sentence_id]
    cand_text = dataset.systems[system][sentence_id]
    if isinstance(provider, StaticTable):
        if vocab is None:
            vocab = vocab_from_table(provider)
        return (
            Sentence(id=sentence_id, text=ref_text, tokens=tokenize(ref_text, vocab)),
            Sentence(id=sentence_id, text=cand_text, tokens=tokenize(cand_text, vocab)),
        )
    return (
        Sentence(id=ref_record_id(sentence_id), text=ref_text),
        Sentence(id=cand_record_id(system, sentence_id), text=cand_text),
    )


def system_score(dataset: SegmentDataset, system: str, metric: MetricUnderTest) -> float:
    """Unweighted mean of the metric over the system's segments."""
    if system not in dataset.systems:
        raise UnknownSystemError(f"unknown system {system!r}")
    ids = dataset.ids
    return sum(metric.score_fn(system, sid) for sid in ids) / len(ids)


@dataclass
class CorrelationReport:
    pooled_pearson: float
    pooled_kendall: float
    n: int
    per_system: dict[str, dict]


def segment_correlation(dataset: SegmentDataset, metric: MetricUnderTest) -> CorrelationReport:
    """Pearson and Kendall between metric and human over all (system, id) pairs.

    The pooled statistics propagate degeneracy errors; per-system entries
    record them as error strings so one flat system cannot sink the report.
    """
    pooled_metric: list[float] = []
    pooled_human: list[float] = []
    per_system: dict[str, dict] = {}
    for system in sorted(dataset.systems):
        m = [metric.score_fn(system, sid) for sid in dataset.ids]
        h = [dataset.human_segment[(system, sid)] for sid in dataset.ids]
        pooled_metric.extend(m)
        pooled_human.extend(h)
        entry: dict = {}
        for stat_name, fn in (("pearson", pearson), ("kendall", kendall)):
            try:
                entry[stat_name] = fn(m, h)
            except (ZeroVarianceError, AllTiedError, ValueError) as exc:
                entry[stat_name] = {"error": str(exc)}
        per_system[system] = entry
    return CorrelationReport(
        pooled_pearson=pearson(pooled_metric, pooled_human),
        pooled_kendall=kendall(pooled_metric, pooled_human),
        n=len(pooled_metric),
        per_system=per_system,
    )


@dataclass(frozen=True)
class HybridSystem:
    """A synthetic system: per-sentence outputs sampled from real systems."""

    assignment: tuple[tuple[str, str], ...]  # (sentence id, source system), id-sorted
    human_score: float


def hybrid_supersample(dataset: SegmentDataset, count: int, seed: int) -> list[HybridSystem]:
    """Draw ``count`` hybrid systems, one uniform source system per sentence.

    Hybrid i draws from the substream (seed, hybrid domain, i), so the list
    is reproducible and independent of evaluation order.
    """
    system_names = sorted(dataset.systems)
    ids = dataset.ids
    hybrids = []
    for i in range(count):
        rng = substream(seed, DOMAIN_HYBRID, i)
        picks = rng.integers(0, len(system_names), size=len(ids))
        assignment = tuple((sid, system_names[int(p)]) for sid, p in zip(ids, picks))
        human = sum(dataset.human_segment[(system, sid)] for sid, system in assignment)
        hybrids.append(HybridSystem(assignment=assignment, human_score=human / len(ids)))
    return hybrids


def hybrid_metric_score(hybrid: HybridSystem, metric: MetricUnderTest) -> float:
    """Metric system-score of a hybrid: mean over its sampled segments."""
    return sum(metric.score_fn(system, sid) for sid, system in hybrid.assignment) / len(
        hybrid.assignment
    )


@dataclass(frozen=True)
class ModelSelectionReport:
    hits_at_1: float
    mrr: float
    mean_diff: float
    trials: int
    sample_size: int


def model_selection(hybrids: Sequence[HybridSystem], metric_scores: Sequence[float],
                    trials: int, sample_size: int, seed: int) -> ModelSelectionReport:
    """Repeatedly pick ``sample_size`` hybrids and test the metric's top choice.

    Per trial the metric-top hybrid is ranked by human score within the
    sample; a human tie for best still counts as a hit, mean reciprocal rank
    uses the min-rank convention, and the diff is the human-score gap to the
    sample's human-best. Metric ties break to the first tied hybrid in the
    (seeded) draw order, which makes the tie-break uniform over the sample:
    a constant metric then hits with probability exactly 1/sample_size.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    if sample_size > len(hybrids):
        raise SampleTooLargeError(
            f"sample_size {sample_size} exceeds {len(hybrids)} hybrids"
        )
    if len(metric_scores) != len(hybrids):
        raise ValueError("metric_scores must align with hybrids")
    metric_arr = np.asarray(metric_scores, dtype=np.float64)
    human_arr = np.asarray([h.human_score for h in hybrids], dtype=np.float64)
    hits = 0
    mrr_total = 0.0
    diff_total = 0.0
    for trial in range(trials):
        rng = substream(seed, DOMAIN_TRIAL, trial)
        chosen = rng.choice(len(hybrids), size=sample_size, replace=False)
        sample_metric = metric_arr[chosen]
        top_pos = int(np.argmax(sample_metric))  # first max in draw order
        top = int(chosen[top_pos])
        sample_human = human_arr[chosen]
        top_human = float(human_arr[top])
        rank = 1 + int((sample_human > top_human).sum())
        if rank == 1:
            hits += 1
        mrr_total += 1.0 / rank
        diff_total += float(sample_human.max()) - top_human
    return ModelSelectionReport(
        hits_at_1=hits / trials,
        mrr=mrr_total / trials,
        mean_diff=diff_total / trials,
        trials=trials,
        sample_size=sample_size,
    )


def layer_sweep(dataset: SegmentDataset, store: PrecomputedStore,
                layers: Sequence[int], cfg: ScoreConfig = ScoreConfig()):
    """Segment-level Pearson of greedy F1 per layer; best layer by argmax.

    Every reference and candidate must have a stored stack that covers every
    requested layer. Ties break to the lowest layer index.
    """
    layers = list(layers)
    if not layers:
        raise ValueError("no layers requested")
    needed = [ref_record_id(sid) for sid in dataset.ids]
    needed += [
        cand_record_id(system, sid)
        for system in sorted(dataset.systems)
        for sid in dataset.ids
    ]
    max_layer = max(layers)
    missing = [rid for rid in needed if rid not in store.records]
    if missing:
        raise IncompleteStacksError(f"missing stacks for {len(missing)} ids, e.g. {missing[:5]}")
    shallow = [rid for rid in needed if len(store.records[rid].stack) <= max_layer]
    if shallow:
        raise IncompleteStacksError(
            f"stacks too shallow for layer {max_layer}: e.g. {shallow[:5]}"
        )
    curve: dict[int, float] = {}
    humans = [
        dataset.human_segment[(system, sid)]
        for system in sorted(dataset.systems)
        for sid in dataset.ids
    ]
    from dataclasses import replace

    for layer in layers:
        layer_cfg = replace(cfg, layer_policy=SingleLayer(layer))
        scores = []
        for system in sorted(dataset.systems):
            for sid in dataset.ids:
                ref_s, cand_s = dataset_sentences(dataset, system, sid, store)
                ref_tokens, ref_emb = embed_sentence(ref_s, store, layer_cfg.layer_policy)
                cand_tokens, cand_emb = embed_sentence(cand_s, store, layer_cfg.layer_policy)
                sim = similarity_matrix(ref_emb, cand_emb)
                scores.append(greedy_score(sim, ref_tokens, cand_tokens, layer_cfg).f1)
        try:
            curve[layer] = pearson(scores, humans)
        except ZeroVarianceError:
            curve[layer] = None  # a constant layer has no defined correlation
    defined = [layer for layer in layers if curve[layer] is not None]
    if not defined:
        raise ZeroVarianceError("every requested layer produced constant scores")
    best = max(defined, key=lambda layer: (curve[layer], -layer))
    return best, curve


def paraphrase_auc(pairs: Sequence[ParaphrasePair],
                   score_fn: Callable[[str, str], float]) -> float:
    """ROC AUC of a similarity score as a paraphrase detector.

    The first sentence of each pair is treated as the reference. Needs at
    least one positive and one negative pair.
    """
    if not pairs:
        raise OneClassOnlyError("no pairs")
    labels = [p.label for p in pairs]
    scores = [score_fn(p.sentence1, p.sentence2) for p in pairs]
    return roc_auc(labels, scores)
