"""Embedding-based text generation evaluation toolkit."""

__version__ = "0.1.0"

from .embeddings import (
    EmbeddingMatrix,
    EmbeddingRecord,
    LayerStack,
    PowerMeans,
    PrecomputedStore,
    RemoteClient,
    Sentence,
    SingleLayer,
    StaticTable,
    embed,
    embed_sentence,
    normalize_rows,
    power_mean_aggregate,
    select_layer,
)
from .idf import IdfTable, IdfVariant, build_idf, build_idf_variant, idf_weight
from .ngram import NGramBag, corpus_bleu, exact_pr, ngram_bag, sentence_bleu
from .scorer import (
    RescaleBaseline,
    ScoreConfig,
    ScoreTriple,
    SimilarityMatrix,
    compute_baseline,
    greedy_score,
    multi_reference_score,
    rescale,
    score_pair,
    similarity_matrix,
)
from .stats import WilliamsResult, bootstrap_compare, kendall, pearson, roc_auc, williams_test
from .tokenizer import (
    FilterPolicy,
    KEEP_ALL,
    TokenSequence,
    Vocabulary,
    is_filtered,
    tokenize,
)
from .transport import (
    TransportPlan,
    TransportProblem,
    compare_matching,
    optimal_assignment,
    solve_transport,
    wmd_score,
)
from .harness import (
    HybridSystem,
    MetricUnderTest,
    ModelSelectionReport,
    ParaphrasePair,
    SegmentDataset,
    hybrid_metric_score,
    hybrid_supersample,
    layer_sweep,
    load_paraphrase_tsv,
    load_segment_tsv,
    model_selection,
    paraphrase_auc,
    segment_correlation,
    system_score,
    vocab_from_table,
)
