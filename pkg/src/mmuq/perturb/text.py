"""Text perturbation operators.

``word_swap`` is rule-based and keeps the word multiset intact;
``llm_rephrase`` delegates to a rephrasing backend at a degree-scaled
temperature.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvariantViolation
from ..media import TextContent
from .kinds import DEFAULT_PARAMS, PerturbParams, TextKind, check_degree


def word_swap(text: TextContent, degree: float, rng: np.random.Generator) -> TextContent:
    """Swap ``floor(degree * (W - 1) / 2)`` disjoint adjacent word pairs.

    ``W`` is the word count. The pair positions are drawn uniformly from all
    sets of that many disjoint adjacent pairs, so every word participates in
    at most one swap. Degree 0 (or a swap budget of 0) returns the input
    unchanged.
    """
    degree = check_degree(degree)
    words = text.text.split()
    w = len(words)
    k = int(degree * (w - 1) / 2)
    if k == 0:
        return text
    # Choosing k pairwise non-adjacent start positions from the w-1 possible
    # pair starts bijects onto unordered k-subsets of range(w - k): sort the
    # subset and add 0, 1, ..., k-1 to its elements.
    base = np.sort(rng.choice(w - k, size=k, replace=False))
    starts = base + np.arange(k)
    for s in starts:
        words[s], words[s + 1] = words[s + 1], words[s]
    return TextContent(" ".join(words))


def rephrase(
    text: TextContent,
    degree: float,
    rephraser,
    params: PerturbParams = DEFAULT_PARAMS,
) -> TextContent:
    """Ask a backend for a meaning-preserving rewrite.

    Sampling temperature grows linearly with the degree from the configured
    base. Degree 0 still returns the input verbatim without calling the
    backend, matching the identity contract of the rule-based operators.
    """
    degree = check_degree(degree)
    if degree == 0.0:
        return text
    if rephraser is None:
        raise InvariantViolation("llm_rephrase requires a rephrasing backend")
    temperature = (
        params.rephrase_base_temperature + params.rephrase_temperature_span * degree
    )
    out = rephraser.rephrase(text, temperature=temperature)
    if not isinstance(out, TextContent):
        out = TextContent(str(out))
    return out


def perturb_text(
    text: TextContent,
    kind: TextKind,
    degree: float,
    rng: np.random.Generator,
    rephraser=None,
    params: PerturbParams = DEFAULT_PARAMS,
) -> TextContent:
    if kind is TextKind.WORD_SWAP:
        return word_swap(text, degree, rng)
    if kind is TextKind.LLM_REPHRASE:
        return rephrase(text, degree, rephraser, params)
    raise InvariantViolation(f"unknown text kind {kind!r}")
