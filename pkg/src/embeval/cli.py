"""Operator-facing command line.

Every command writes a single machine-readable report (JSON or JSON Lines)
that embeds the toolkit version, the full resolved configuration, the
provider fingerprint, and the seed, so a report can be reproduced
byte-for-byte from its own header. Output files are written atomically.

Exit codes: 0 success, 2 validation failure (bad flags, missing files,
misaligned ids), 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .embeddings import (
    PowerMeans,
    PrecomputedStore,
    RemoteClient,
    Sentence,
    SingleLayer,
    StaticTable,
    embed_sentence,
)
from .errors import EvalError
from .harness import (
    MetricUnderTest,
    cand_record_id,
    dataset_sentences,
    hybrid_metric_score,
    hybrid_supersample,
    layer_sweep,
    load_paraphrase_tsv,
    load_segment_tsv,
    model_selection,
    paraphrase_auc,
    ref_record_id,
    score_record_id,
    segment_correlation,
    system_score,
    vocab_from_table,
)
from .idf import IdfVariant, build_idf, build_idf_variant, load_idf, save_idf
from .ngram import sentence_bleu
from .scorer import (
    RescaleBaseline,
    ScoreConfig,
    compute_baseline,
    greedy_score,
    multi_reference_score,
    score_pair,
    similarity_matrix,
)
from .stats import bootstrap_compare, kendall, pearson, williams_test
from .tokenizer import FilterPolicy, Vocabulary, tokenize
from .transport import compare_matching, wmd_score
from .errors import AllTiedError, DegenerateInputError, ZeroVarianceError


class UsageError(Exception):
    """Input validation failure; maps to exit code 2."""


# ---------------------------------------------------------------- file I/O

def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return p


def _atomic_write(path: str, data: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _write_report(path: str, report: dict) -> None:
    _atomic_write(path, json.dumps(report, sort_keys=True, indent=2) + "\n")


def _load_texts(path: str, what: str) -> list[tuple[str, str]]:
    """TSV with header ``id  text``; duplicate ids are allowed (multi-reference)."""
    _require_file(path, what)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].split("\t") != ["id", "text"]:
        raise UsageError(f"{path}: expected TSV header 'id\\ttext'")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 2:
            raise UsageError(f"{path}:{lineno}: expected 2 tab-separated fields")
        out.append((fields[0], fields[1]))
    return out


# ------------------------------------------------------- provider plumbing

def _provider_from_args(args):
    spec = args.provider
    kind, _, rest = spec.partition(":")
    if kind == "static":
        _require_file(rest, "static table")
        return StaticTable.from_file(rest)
    if kind == "precomputed":
        _require_file(rest, "precomputed embeddings")
        return PrecomputedStore.from_file(rest)
    if kind == "remote":
        layers = [int(x) for x in getattr(args, "remote_layers", "0").split(",")]
        return RemoteClient(rest, layers=layers, timeout=getattr(args, "timeout", 10.0))
    raise UsageError(f"unknown provider spec {spec!r} (use static:/precomputed:/remote:)")


def _vocab_for(provider, args) -> Vocabulary | None:
    vocab_path = getattr(args, "vocab", None)
    if vocab_path:
        _require_file(vocab_path, "vocabulary")
        return Vocabulary.from_file(vocab_path)
    if isinstance(provider, StaticTable):
        return vocab_from_table(provider)
    return None


def _resolve_tokens(sentence: Sentence, provider, vocab):
    """Token sequence for a sentence under the provider's own tokenization."""
    if isinstance(provider, StaticTable):
        if sentence.tokens is not None:
            return sentence.tokens
        if vocab is None:
            raise UsageError("static provider needs a vocabulary to tokenize")
        return tokenize(sentence.text or "", vocab)
    if isinstance(provider, PrecomputedStore):
        return provider.record(sentence.id).tokens
    return provider.fetch(sentence.id, sentence.text or "").tokens


def _sentence(provider, vocab, *, record_id: str, text: str) -> Sentence:
    if isinstance(provider, StaticTable):
        return Sentence(id=record_id, text=text, tokens=tokenize(text, vocab))
    return Sentence(id=record_id, text=text)


# ------------------------------------------------------ score configuration

def _layer_policy_from_args(args):
    pmeans = getattr(args, "pmeans", None)
    if pmeans:
        exponents = []
        for token in pmeans.split("/"):
            token = token.strip()
            if token in ("inf", "+inf"):
                exponents.append(math.inf)
            elif token == "-inf":
                exponents.append(-math.inf)
            else:
                exponents.append(float(token))
        return PowerMeans(tuple(exponents))
    return SingleLayer(getattr(args, "layer", 0))


def _filters_from_args(args) -> FilterPolicy:
    return FilterPolicy(
        drop_punctuation=getattr(args, "filter_punctuation", False),
        drop_continuations=getattr(args, "filter_continuations", False),
    )


def _baseline_from_args(args) -> RescaleBaseline | None:
    path = getattr(args, "baseline", None)
    if not path:
        return None
    _require_file(path, "baseline")
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return RescaleBaseline(
        b_precision=float(obj["b_P"]), b_recall=float(obj["b_R"]), b_f1=float(obj["b_F"]),
        sample_count=int(obj["samples"]), provider_fingerprint=obj.get("provider", ""),
    )


def _idf_corpus_tokens(path: str, vocab) -> list:
    """Plain-text corpus (one sentence per line) tokenized for idf building."""
    _require_file(path, "idf corpus")
    if vocab is None:
        raise UsageError("--idf-corpus requires a vocabulary (static provider or --vocab)")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().split("\n") if line.strip()]
    return [tokenize(line, vocab) for line in lines]


def _build_config(args, provider, vocab, ref_sentences, cand_corpora):
    """Base ScoreConfig plus per-corpus-key candidate idf tables.

    ``ref_sentences`` are provider-ready reference Sentences; ``cand_corpora``
    maps a key (system name or "*") to that corpus's candidate Sentences.
    Returns (base_cfg, cfg_by_key).
    """
    filters = _filters_from_args(args)
    policy = _layer_policy_from_args(args)
    baseline = _baseline_from_args(args)
    variant_name = getattr(args, "idf_variant", "none")
    base = ScoreConfig(idf=None, filters=filters, layer_policy=policy, baseline=baseline)
    if variant_name == "none":
        return base, {key: base for key in cand_corpora}
    variant = IdfVariant(variant_name)
    idf_table_path = getattr(args, "idf_table", None)
    if idf_table_path:
        ref_table = load_idf(_require_file(idf_table_path, "idf table"))
    elif variant is IdfVariant.LARGE_REF_CORPUS:
        corpus_path = getattr(args, "idf_corpus", None)
        if not corpus_path:
            raise UsageError("--idf-variant large-ref-corpus needs --idf-corpus or --idf-table")
        ref_table = build_idf(_idf_corpus_tokens(corpus_path, vocab))
    else:
        ref_table = build_idf([_resolve_tokens(s, provider, vocab) for s in ref_sentences])
    cfg_by_key = {}
    for key, cands in cand_corpora.items():
        if variant is IdfVariant.SEPARATE_CANDIDATES:
            cand_table = build_idf([_resolve_tokens(s, provider, vocab) for s in cands])
        else:
            cand_table = ref_table
        cfg_by_key[key] = replace(base, idf=(ref_table, cand_table))
    return replace(base, idf=(ref_table, ref_table)), cfg_by_key


def _config_block(args, provider, seed=None) -> dict:
    block = {
        "provider": args.provider,
        "provider_fingerprint": provider.fingerprint(),
        "idf_variant": getattr(args, "idf_variant", "none"),
        "filter_punctuation": getattr(args, "filter_punctuation", False),
        "filter_continuations": getattr(args, "filter_continuations", False),
        "layer": getattr(args, "layer", 0),
        "pmeans": getattr(args, "pmeans", None),
        "baseline": getattr(args, "baseline", None),
        "seed": seed,
    }
    return block


def _envelope(command: str, args, provider, seed=None) -> dict:
    return {
        "version": __version__,
        "command": command,
        "config": _config_block(args, provider, seed),
    }


# ------------------------------------------------------------- metric zoo

def _segment_metrics(args, dataset, provider, vocab, cfg_by_system) -> list[MetricUnderTest]:
    """Instantiate the requested metrics with precomputed per-segment scores."""
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    triples = None
    token_cache: dict[tuple[str, str], tuple] = {}

    def pair_tokens(system, sid):
        if (system, sid) not in token_cache:
            ref_s, cand_s = dataset_sentences(dataset, system, sid, provider, vocab)
            token_cache[(system, sid)] = (
                _resolve_tokens(ref_s, provider, vocab),
                _resolve_tokens(cand_s, provider, vocab),
            )
        return token_cache[(system, sid)]

    def greedy_triples():
        nonlocal triples
        if triples is None:
            triples = {}
            for system in sorted(dataset.systems):
                cfg = cfg_by_system[system]
                for sid in dataset.ids:
                    ref_s, cand_s = dataset_sentences(dataset, system, sid, provider, vocab)
                    triples[(system, sid)] = score_pair(ref_s, cand_s, provider, cfg)
        return triples

    def lookup(table):
        return lambda system, sid: table[(system, sid)]

    metrics = []
    fp = provider.fingerprint()
    for name in names:
        if name in ("greedy-F", "greedy-P", "greedy-R"):
            component = {"greedy-F": "f1", "greedy-P": "precision", "greedy-R": "recall"}[name]
            table = {k: getattr(t, component) for k, t in greedy_triples().items()}
            metrics.append(MetricUnderTest(name, lookup(table), fp))
        elif name == "sentbleu":
            table = {}
            for system in sorted(dataset.systems):
                for sid in dataset.ids:
                    ref_t, cand_t = pair_tokens(system, sid)
                    table[(system, sid)] = sentence_bleu(cand_t, ref_t)
            metrics.append(MetricUnderTest(name, lookup(table), "sentbleu"))
        elif name in ("wmd1", "wmd2"):
            order = int(name[-1])
            table = {}
            for system in sorted(dataset.systems):
                cfg = cfg_by_system[system]
                for sid in dataset.ids:
                    ref_s, cand_s = dataset_sentences(dataset, system, sid, provider, vocab)
                    ref_t, ref_emb = embed_sentence(ref_s, provider, cfg.layer_policy)
                    cand_t, cand_emb = embed_sentence(cand_s, provider, cfg.layer_policy)
                    table[(system, sid)] = wmd_score(
                        ref_t, ref_emb, cand_t, cand_emb, order=order, idf=cfg.idf
                    )
            metrics.append(MetricUnderTest(name, lookup(table), fp))
        elif name == "human":
            metrics.append(
                MetricUnderTest("human", lambda s, i: dataset.human_segment[(s, i)], "human")
            )
        else:
            raise UsageError(f"unknown metric {name!r}")
    return metrics


def _segment_vectors(dataset, metric) -> tuple[list[float], list[float]]:
    m, h = [], []
    for system in sorted(dataset.systems):
        for sid in dataset.ids:
            m.append(metric.score_fn(system, sid))
            h.append(dataset.human_segment[(system, sid)])
    return m, h


def _significance_blocks(dataset, metrics, seed, bootstrap_iterations):
    """Williams p on |pearson| and bootstrap p on kendall, for all ordered pairs."""
    vectors = {}
    human = None
    for metric in metrics:
        m, h = _segment_vectors(dataset, metric)
        vectors[metric.name] = m
        human = h
    n = len(human)
    williams: dict[str, dict] = {}
    boot: dict[str, dict] = {}
    for a in metrics:
        williams[a.name] = {}
        boot[a.name] = {}
        for b in metrics:
            if a.name == b.name:
                continue
            try:
                ra = pearson(vectors[a.name], human)
                rb = pearson(vectors[b.name], human)
                rab = pearson(vectors[a.name], vectors[b.name])
                sign = (1.0 if ra >= 0 else -1.0) * (1.0 if rb >= 0 else -1.0)
                res = williams_test(abs(ra), abs(rb), sign * rab, n)
                williams[a.name][b.name] = {"t": res.t, "p": res.p, "df": res.df}
            except (ZeroVarianceError, DegenerateInputError, ValueError) as exc:
                williams[a.name][b.name] = {"error": str(exc)}
            if bootstrap_iterations > 0:
                try:
                    boot[a.name][b.name] = bootstrap_compare(
                        vectors[a.name], vectors[b.name], human,
                        bootstrap_iterations, seed,
                    )
                except (AllTiedError, ValueError) as exc:
                    boot[a.name][b.name] = {"error": str(exc)}
    blocks = {"williams_on": "abs_pearson", "williams": williams}
    if bootstrap_iterations > 0:
        blocks["bootstrap"] = boot
        blocks["bootstrap_iterations"] = bootstrap_iterations
    return blocks


def _stat_or_error(fn, *vals):
    try:
        return fn(*vals)
    except (ZeroVarianceError, AllTiedError, ValueError) as exc:
        return {"error": str(exc)}


# ---------------------------------------------------------------- commands

def cmd_score(args) -> int:
    provider = _provider_from_args(args)
    vocab = _vocab_for(provider, args)
    refs = _load_texts(args.refs, "references")
    cands = _load_texts(args.cands, "candidates")
    ref_by_id: dict[str, list[str]] = {}
    for sid, text in refs:
        ref_by_id.setdefault(sid, []).append(text)
    orphans = sorted({sid for sid, _ in cands if sid not in ref_by_id})
    if orphans:
        raise UsageError(f"candidate ids missing from references: {orphans}")

    def ref_sentence(sid, j, text):
        rid = ref_record_id(sid) if len(ref_by_id[sid]) == 1 else score_record_id("ref", sid, str(j))
        return _sentence(provider, vocab, record_id=rid, text=text)

    ref_sentences = [
        ref_sentence(sid, j, text)
        for sid, texts in ref_by_id.items()
        for j, text in enumerate(texts)
    ]
    cand_sentences = [
        _sentence(provider, vocab, record_id=score_record_id("cand", sid), text=text)
        for sid, text in cands
    ]
    _, cfg_by_key = _build_config(args, provider, vocab, ref_sentences, {"*": cand_sentences})
    cfg = cfg_by_key["*"]
    lines = []
    for (sid, text), cand_s in zip(cands, cand_sentences):
        texts = ref_by_id[sid]
        if len(texts) == 1:
            triple = score_pair(ref_sentence(sid, 0, texts[0]), cand_s, provider, cfg)
            record = {"id": sid, "P": triple.precision, "R": triple.recall,
                      "F": triple.f1, "rescaled": triple.rescaled}
        else:
            triple, idx = multi_reference_score(
                cand_s, [ref_sentence(sid, j, t) for j, t in enumerate(texts)], provider, cfg
            )
            record = {"id": sid, "P": triple.precision, "R": triple.recall,
                      "F": triple.f1, "rescaled": triple.rescaled, "ref_index": idx}
        lines.append(json.dumps(record, sort_keys=True))
    _atomic_write(args.out, "\n".join(lines) + ("\n" if lines else ""))
    return 0


def cmd_idf(args) -> int:
    provider = _provider_from_args(args)
    vocab = _vocab_for(provider, args)
    refs = _load_texts(args.refs, "references")
    sentences = [
        _sentence(provider, vocab, record_id=ref_record_id(sid), text=text)
        for sid, text in refs
    ]
    table = build_idf([_resolve_tokens(s, provider, vocab) for s in sentences])
    tmp = f"{args.out}.tmp"
    save_idf(tmp, table)
    os.replace(tmp, args.out)
    return 0


def cmd_baseline(args) -> int:
    provider = _provider_from_args(args)
    vocab = _vocab_for(provider, args)
    pool_rows = _load_texts(args.pool, "pool")
    pool = [
        _sentence(provider, vocab, record_id=sid, text=text)
        for sid, text in pool_rows
    ]
    _, cfg_by_key = _build_config(args, provider, vocab, pool, {"*": pool})
    base = compute_baseline(pool, args.pairs, provider, cfg_by_key["*"], args.seed)
    report = {
        "b_P": base.b_precision, "b_R": base.b_recall, "b_F": base.b_f1,
        "samples": base.sample_count, "provider": base.provider_fingerprint,
        "seed": args.seed, "version": __version__,
    }
    _write_report(args.out, report)
    return 0


def _eval_prep(args):
    provider = _provider_from_args(args)
    vocab = _vocab_for(provider, args)
    _require_file(args.data, "segment corpus")
    dataset = load_segment_tsv(args.data)
    ref_sentences = [
        _sentence(provider, vocab, record_id=ref_record_id(sid),
                  text=dataset.references[sid])
        for sid in dataset.ids
    ]
    cand_corpora = {
        system: [
            _sentence(provider, vocab, record_id=cand_record_id(system, sid),
                      text=dataset.systems[system][sid])
            for sid in dataset.ids
        ]
        for system in sorted(dataset.systems)
    }
    _, cfg_by_system = _build_config(args, provider, vocab, ref_sentences, cand_corpora)
    return provider, vocab, dataset, cfg_by_system


def cmd_eval_segment(args) -> int:
    provider, vocab, dataset, cfg_by_system = _eval_prep(args)
    metrics = _segment_metrics(args, dataset, provider, vocab, cfg_by_system)
    report = _envelope("eval-segment", args, provider, seed=args.seed)
    report["dataset"] = {"path": args.data, "systems": sorted(dataset.systems),
                         "num_ids": len(dataset.ids)}
    report["metrics"] = {}
    for metric in metrics:
        corr = segment_correlation(dataset, metric)
        per_segment = {
            system: {sid: metric.score_fn(system, sid) for sid in dataset.ids}
            for system in sorted(dataset.systems)
        }
        report["metrics"][metric.name] = {
            "pooled": {
                "pearson": {"statistic": "pearson", "value": corr.pooled_pearson,
                            "n": corr.n},
                "abs_pearson": {"statistic": "abs_pearson",
                                "value": abs(corr.pooled_pearson), "n": corr.n},
                "kendall": {"statistic": "kendall", "value": corr.pooled_kendall,
                            "n": corr.n},
            },
            "per_system": corr.per_system,
            "segment_scores": per_segment,
        }
    report["human_segment"] = {
        system: {sid: dataset.human_segment[(system, sid)] for sid in dataset.ids}
        for system in sorted(dataset.systems)
    }
    report["significance"] = _significance_blocks(
        dataset, metrics, args.seed, args.bootstrap_iterations
    )
    _write_report(args.out, report)
    return 0


def cmd_eval_system(args) -> int:
    provider, vocab, dataset, cfg_by_system = _eval_prep(args)
    metrics = _segment_metrics(args, dataset, provider, vocab, cfg_by_system)
    systems = sorted(dataset.systems)
    if dataset.human_system is not None:
        human = [dataset.human_system[s] for s in systems]
        human_source = "provided"
    else:
        human = [
            sum(dataset.human_segment[(s, sid)] for sid in dataset.ids) / len(dataset.ids)
            for s in systems
        ]
        human_source = "segment_means"
    report = _envelope("eval-system", args, provider)
    report["dataset"] = {"path": args.data, "systems": systems, "num_ids": len(dataset.ids)}
    report["human_system"] = {"source": human_source,
                              "scores": dict(zip(systems, human))}
    report["metrics"] = {}
    metric_system_scores = {}
    for metric in metrics:
        scores = [system_score(dataset, s, metric) for s in systems]
        metric_system_scores[metric.name] = scores
        r = _stat_or_error(pearson, scores, human)
        report["metrics"][metric.name] = {
            "system_scores": dict(zip(systems, scores)),
            "pearson": r,
            "abs_pearson": abs(r) if not isinstance(r, dict) else r,
            "kendall": _stat_or_error(kendall, scores, human),
        }
    williams: dict[str, dict] = {}
    for a in metrics:
        williams[a.name] = {}
        for b in metrics:
            if a.name == b.name:
                continue
            try:
                ra = pearson(metric_system_scores[a.name], human)
                rb = pearson(metric_system_scores[b.name], human)
                rab = pearson(metric_system_scores[a.name], metric_system_scores[b.name])
                sign = (1.0 if ra >= 0 else -1.0) * (1.0 if rb >= 0 else -1.0)
                res = williams_test(abs(ra), abs(rb), sign * rab, len(systems))
                williams[a.name][b.name] = {"t": res.t, "p": res.p, "df": res.df}
            except (ZeroVarianceError, DegenerateInputError, ValueError) as exc:
                williams[a.name][b.name] = {"error": str(exc)}
    report["significance"] = {"williams_on": "abs_pearson", "williams": williams}
    _write_report(args.out, report)
    return 0


def cmd_model_select(args) -> int:
    provider, vocab, dataset, cfg_by_system = _eval_prep(args)
    metrics = _segment_metrics(args, dataset, provider, vocab, cfg_by_system)
    hybrids = hybrid_supersample(dataset, args.hybrids, args.seed)
    report = _envelope("model-select", args, provider, seed=args.seed)
    report["dataset"] = {"path": args.data, "systems": sorted(dataset.systems),
                         "num_ids": len(dataset.ids)}
    report["parameters"] = {"hybrids": args.hybrids, "sample_size": args.sample,
                            "trials": args.trials}
    report["metrics"] = {}
    for metric in metrics:
        scores = [hybrid_metric_score(h, metric) for h in hybrids]
        sel = model_selection(hybrids, scores, args.trials, args.sample, args.seed)
        report["metrics"][metric.name] = {
            "hits_at_1": sel.hits_at_1, "mrr": sel.mrr, "mean_diff": sel.mean_diff,
            "trials": sel.trials, "sample_size": sel.sample_size,
        }
    _write_report(args.out, report)
    return 0


def _parse_variant(spec: str):
    """NAME=FLAG+FLAG... with flags: idf-ref, idf-large, idf-sep,
    filter-punct, filter-cont, layer:K, pmeans:1/3/inf."""
    name, _, flagspec = spec.partition("=")
    if not name:
        raise UsageError(f"variant {spec!r} needs a name")
    opts = {"idf_variant": "none", "filter_punctuation": False,
            "filter_continuations": False, "layer": 0, "pmeans": None}
    for flag in filter(None, flagspec.split("+")):
        if flag == "idf-ref":
            opts["idf_variant"] = "ref-corpus"
        elif flag == "idf-large":
            opts["idf_variant"] = "large-ref-corpus"
        elif flag == "idf-sep":
            opts["idf_variant"] = "separate-candidates"
        elif flag == "filter-punct":
            opts["filter_punctuation"] = True
        elif flag == "filter-cont":
            opts["filter_continuations"] = True
        elif flag.startswith("layer:"):
            opts["layer"] = int(flag.split(":", 1)[1])
        elif flag.startswith("pmeans:"):
            opts["pmeans"] = flag.split(":", 1)[1]
        else:
            raise UsageError(f"unknown ablation flag {flag!r} in {spec!r}")
    return name, opts


def cmd_ablation(args) -> int:
    provider = _provider_from_args(args)
    vocab = _vocab_for(provider, args)
    _require_file(args.data, "segment corpus")
    dataset = load_segment_tsv(args.data)
    variants = args.variant or ["vanilla="]
    report = _envelope("ablation", args, provider)
    report["dataset"] = {"path": args.data, "systems": sorted(dataset.systems),
                         "num_ids": len(dataset.ids)}
    report["variants"] = {}
    for spec in variants:
        name, opts = _parse_variant(spec)
        sub_args = argparse.Namespace(**{**vars(args), **opts})
        ref_sentences = [
            _sentence(provider, vocab, record_id=ref_record_id(sid),
                      text=dataset.references[sid])
            for sid in dataset.ids
        ]
        cand_corpora = {
            system: [
                _sentence(provider, vocab, record_id=cand_record_id(system, sid),
                          text=dataset.systems[system][sid])
                for sid in dataset.ids
            ]
            for system in sorted(dataset.systems)
        }
        base_cfg, cfg_by_system = _build_config(
            sub_args, provider, vocab, ref_sentences, cand_corpora
        )
        report["variants"][name] = compare_matching(
            dataset, provider, base_cfg, vocab=vocab,
            per_system_cfg=cfg_by_system,
        )
    _write_report(args.out, report)
    return 0


def cmd_layer_sweep(args) -> int:
    provider = _provider_from_args(args)
    if not isinstance(provider, PrecomputedStore):
        raise UsageError("layer-sweep requires a precomputed: provider")
    _require_file(args.data, "segment corpus")
    dataset = load_segment_tsv(args.data)
    if "-" in args.layers:
        lo, hi = args.layers.split("-", 1)
        layers = list(range(int(lo), int(hi) + 1))
    else:
        layers = [int(x) for x in args.layers.split(",")]
    cfg = ScoreConfig(filters=_filters_from_args(args))
    best, curve = layer_sweep(dataset, provider, layers, cfg)
    report = _envelope("layer-sweep", args, provider)
    report["dataset"] = {"path": args.data, "systems": sorted(dataset.systems),
                         "num_ids": len(dataset.ids)}
    report["best_layer"] = best
    report["per_layer_pearson"] = {str(layer): curve[layer] for layer in layers}
    _write_report(args.out, report)
    return 0


def cmd_auc(args) -> int:
    provider = _provider_from_args(args)
    vocab = _vocab_for(provider, args)
    _require_file(args.pairs, "paraphrase pairs")
    pairs = load_paraphrase_tsv(args.pairs)
    ref_sents = [
        _sentence(provider, vocab, record_id=score_record_id("s1", p.id), text=p.sentence1)
        for p in pairs
    ]
    cand_sents = [
        _sentence(provider, vocab, record_id=score_record_id("s2", p.id), text=p.sentence2)
        for p in pairs
    ]
    _, cfg_by_key = _build_config(args, provider, vocab, ref_sents, {"*": cand_sents})
    cfg = cfg_by_key["*"]
    scores = {}
    for pair, ref_s, cand_s in zip(pairs, ref_sents, cand_sents):
        scores[pair.id] = score_pair(ref_s, cand_s, provider, cfg).f1
    from .stats import roc_auc
    value = roc_auc([p.label for p in pairs], [scores[p.id] for p in pairs])
    report = _envelope("auc", args, provider)
    report["pairs"] = {"path": args.pairs, "positives": sum(p.label for p in pairs),
                       "negatives": sum(not p.label for p in pairs)}
    report["auc"] = value
    report["pair_scores"] = {p.id: scores[p.id] for p in pairs}
    _write_report(args.out, report)
    return 0


# ------------------------------------------------------------------ parser

def _add_common(p, *, seed_required=False, needs_out=True):
    p.add_argument("--provider", required=True,
                   help="static:TABLE.jsonl | precomputed:RECORDS.jsonl | remote:URL")
    p.add_argument("--vocab", help="vocabulary file (one piece per line)")
    p.add_argument("--idf-variant", default="none",
                   choices=["none", "ref-corpus", "large-ref-corpus", "separate-candidates"])
    p.add_argument("--idf-corpus", help="plain-text corpus for large-ref-corpus idf")
    p.add_argument("--idf-table", help="prebuilt idf table file (overrides corpus building)")
    p.add_argument("--filter-punctuation", action="store_true",
                   help="exclude punctuation-only pieces from matching")
    p.add_argument("--filter-continuations", action="store_true",
                   help="exclude non-initial sub-word pieces from matching")
    p.add_argument("--layer", type=int, default=0, help="embedding layer to use")
    p.add_argument("--pmeans", help="power-mean exponents, e.g. 1/3/inf/-inf")
    p.add_argument("--baseline", help="baseline JSON for rescaling")
    p.add_argument("--remote-layers", default="0", help="layers to request from remote")
    p.add_argument("--timeout", type=float, default=10.0)
    if seed_required:
        p.add_argument("--seed", type=int, required=True)
    if needs_out:
        p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embeval",
        description="Embedding-based text generation evaluation toolkit.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score candidates against references (JSON Lines out)")
    p.add_argument("--refs", required=True, help="TSV id\\ttext; repeated ids = multi-reference")
    p.add_argument("--cands", required=True, help="TSV id\\ttext")
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("idf", help="build and export an idf table")
    p.add_argument("--refs", required=True, help="TSV id\\ttext reference corpus")
    _add_common(p)
    p.set_defaults(func=cmd_idf)

    p = sub.add_parser("baseline", help="estimate the random-pair rescaling baseline")
    p.add_argument("--pool", required=True, help="TSV id\\ttext sentence pool")
    p.add_argument("--pairs", type=int, default=10000,
                   help="number of random pairs (default 10000)")
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval-segment", help="segment-level correlation report")
    p.add_argument("--data", required=True, help="segment corpus TSV")
    p.add_argument("--metrics", default="greedy-F,greedy-P,greedy-R,sentbleu")
    p.add_argument("--bootstrap-iterations", type=int, default=200)
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_eval_segment)

    p = sub.add_parser("eval-system", help="system-level correlation report")
    p.add_argument("--data", required=True, help="segment corpus TSV")
    p.add_argument("--metrics", default="greedy-F,greedy-P,greedy-R,sentbleu")
    _add_common(p)
    p.set_defaults(func=cmd_eval_system)

    p = sub.add_parser("model-select", help="hybrid super-sampling model selection")
    p.add_argument("--data", required=True, help="segment corpus TSV")
    p.add_argument("--metrics", default="greedy-F,sentbleu")
    p.add_argument("--hybrids", type=int, default=1000)
    p.add_argument("--sample", type=int, default=100)
    p.add_argument("--trials", type=int, default=10000)
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_model_select)

    p = sub.add_parser("ablation", help="greedy vs transport correlation comparison")
    p.add_argument("--data", required=True, help="segment corpus TSV")
    p.add_argument("--variant", action="append",
                   help="NAME=FLAG+FLAG (idf-ref, idf-large, idf-sep, filter-punct, "
                        "filter-cont, layer:K, pmeans:SPEC); repeatable")
    _add_common(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("layer-sweep", help="per-layer correlation sweep")
    p.add_argument("--data", required=True, help="segment corpus TSV")
    p.add_argument("--layers", required=True, help="e.g. 0-12 or 0,3,7")
    _add_common(p)
    p.set_defaults(func=cmd_layer_sweep)

    p = sub.add_parser("auc", help="paraphrase detection ROC AUC")
    p.add_argument("--pairs", required=True, help="paraphrase TSV")
    _add_common(p)
    p.set_defaults(func=cmd_auc)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EvalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
