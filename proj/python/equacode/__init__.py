"""Python bindings for the EquaCode red-teaming harness."""

from ._core import (
    AsrResult,
    AttackPrompt,
    BypassReport,
    DataError,
    EndpointError,
    Error,
    FilterDecision,
    JudgeVerdict,
    MaliciousQuery,
    NgramScorer,
    PerplexityScore,
    StoreError,
    UsageError,
    bypass_rate,
    compute_asr,
    format_percent,
    keyword_filter,
    load_corpus,
    parse_verdict,
    perplexity,
    ppl_filter,
    render_prompt,
    report,
    run_cli,
    subset,
    template_version,
)

__all__ = [name for name in dir() if not name.startswith("_")]
