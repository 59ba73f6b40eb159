"""Semantic-consistency scoring for language-model answers.

Thin Python surface over the C++ core: semantic graph entropy (SGE),
lexical/embedding baselines, paraphrase-quality filtering, agreement
statistics, and the batch pipeline runner.
"""

from semcon._core import (
    bleu,
    cosine_consistency,
    cosine_similarity,
    entropy,
    fleiss_kappa,
    mean_distance,
    metric_tokens,
    normalized_edit_distance,
    pairwise_consistency,
    parascore,
    pearson,
    raw_entropy,
    rouge_l,
    run_pipeline,
    sge,
    sge_from_distances,
    spearman,
    test_embed,
    word_tokens,
)

__all__ = [
    "bleu",
    "cosine_consistency",
    "cosine_similarity",
    "entropy",
    "fleiss_kappa",
    "mean_distance",
    "metric_tokens",
    "normalized_edit_distance",
    "pairwise_consistency",
    "parascore",
    "pearson",
    "raw_entropy",
    "rouge_l",
    "run_pipeline",
    "sge",
    "sge_from_distances",
    "spearman",
    "test_embed",
    "word_tokens",
]

__version__ = "0.1.0"
