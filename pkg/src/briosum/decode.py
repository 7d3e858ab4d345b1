"""Autoregressive decoding: greedy, beam search, and diverse beam search.

Diverse beam search splits the beam into groups decoded sequentially at
each timestep; a token's log-prob in group g is reduced by
``diversity_penalty`` times the number of times groups 0..g-1 already chose
that token at the same timestep (Hamming diversity). Beam search is the
single-group special case, and greedy is a single beam.

All searches are deterministic: score ties break toward the lower token id,
then the earlier hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .corpus import BOS_ID, EOS_ID
from .model import ModelParams, decoder_logprobs, encode_source

Scorer = Callable[[Sequence[tuple[int, ...]]], np.ndarray]


class DecodeConfigError(ValueError):
    """Raised when a decoding configuration violates its invariants."""


@dataclass
class DecodeConfig:
    num_beams: int = 6
    num_beam_groups: int = 6
    diversity_penalty: float = 1.0
    max_decode_len: int = 32
    length_penalty: float = 1.0

    def validate(self) -> None:
        if self.num_beams < 1:
            raise DecodeConfigError(f"num_beams must be >= 1, got {self.num_beams}")
        if self.num_beam_groups < 1:
            raise DecodeConfigError(
                f"num_beam_groups must be >= 1, got {self.num_beam_groups}"
            )
        if self.num_beam_groups > self.num_beams:
            raise DecodeConfigError(
                f"num_beam_groups ({self.num_beam_groups}) cannot exceed "
                f"num_beams ({self.num_beams})"
            )
        if self.num_beams % self.num_beam_groups != 0:
            raise DecodeConfigError(
                f"num_beams ({self.num_beams}) must be divisible by "
                f"num_beam_groups ({self.num_beam_groups})"
            )
        if self.diversity_penalty < 0.0:
            raise DecodeConfigError(
                f"diversity_penalty must be >= 0, got {self.diversity_penalty}"
            )
        if self.max_decode_len < 2:
            raise DecodeConfigError(f"max_decode_len must be >= 2, got {self.max_decode_len}")
        if self.length_penalty < 0.0:
            raise DecodeConfigError(
                f"length_penalty must be >= 0, got {self.length_penalty}"
            )


@dataclass(frozen=True)
class Hypothesis:
    """A BOS-prefixed candidate with its cumulative (possibly diversity-
    penalized) log-prob; ``finished`` means EOS was emitted."""

    tokens: tuple[int, ...]
    log_prob: float
    finished: bool

    def scored_length(self) -> int:
        return len(self.tokens) - 1

    def score(self, length_penalty: float) -> float:
        return self.log_prob / (self.scored_length() ** length_penalty)


def make_scorer(params: ModelParams, source_ids: Sequence[int]) -> Scorer:
    """Next-token log-prob function with the encoder pass cached.

    The returned callable maps a batch of equal-length BOS-prefixed
    prefixes to a (batch, vocab) array of next-token log-probs.
    """
    src = np.asarray([source_ids], dtype=np.int64)
    with ad.no_grad():
        enc_out, src_mask = encode_source(params, src)

    def step(prefixes: Sequence[tuple[int, ...]]) -> np.ndarray:
        tgt = np.asarray(prefixes, dtype=np.int64)
        with ad.no_grad():
            table = decoder_logprobs(params, enc_out, src_mask, tgt)
        return table.data[:, -1, :]

    return step


def _check_budget(params: ModelParams, config: DecodeConfig) -> None:
    config.validate()
    if config.max_decode_len > params.config.max_target_len:
        raise DecodeConfigError(
            f"max_decode_len ({config.max_decode_len}) exceeds the model's "
            f"max_target_len ({params.config.max_target_len})"
        )


def group_beam_search(
    scorer: Scorer, vocab_size: int, config: DecodeConfig
) -> list[Hypothesis]:
    """Run grouped beam search against a next-token scorer.

    Returns hypotheses group by group (group 0 first), each group sorted by
    length-penalized score descending. Finished slots are not refilled, so
    each group contributes at most ``num_beams / num_beam_groups``
    hypotheses (exactly that many when the vocabulary is wide enough).
    """
    config.validate()
    width = config.num_beams // config.num_beam_groups
    active: list[list[Hypothesis]] = [
        [Hypothesis((BOS_ID,), 0.0, False)] for _ in range(config.num_beam_groups)
    ]
    done: list[list[Hypothesis]] = [[] for _ in range(config.num_beam_groups)]

    for _ in range(config.max_decode_len - 1):
        if not any(active):
            break
        chosen_counts = np.zeros(vocab_size)
        for g in range(config.num_beam_groups):
            if not active[g]:
                continue
            logps = scorer([h.tokens for h in active[g]])
            if config.diversity_penalty != 0.0:
                logps = logps - config.diversity_penalty * chosen_counts
            budget = width - len(done[g])
            candidates = [
                (-(active[g][i].log_prob + logps[i, v]), v, i)
                for i in range(len(active[g]))
                for v in range(vocab_size)
            ]
            candidates.sort()
            next_active: list[Hypothesis] = []
            for neg_cum, token, i in candidates[:budget]:
                hyp = Hypothesis(
                    tokens=active[g][i].tokens + (token,),
                    log_prob=-neg_cum,
                    finished=token == EOS_ID,
                )
                chosen_counts[token] += 1.0
                if hyp.finished or len(hyp.tokens) >= config.max_decode_len:
                    done[g].append(hyp)
                else:
                    next_active.append(hyp)
            active[g] = next_active

    results: list[Hypothesis] = []
    for g in range(config.num_beam_groups):
        pool = done[g] + active[g]
        order = sorted(
            range(len(pool)),
            key=lambda k: (-pool[k].score(config.length_penalty), k),
        )
        results.extend(pool[k] for k in order)
    return results


def greedy_decode(
    params: ModelParams, source_ids: Sequence[int], config: DecodeConfig
) -> Hypothesis:
    """Pick the argmax token each step (ties go to the lowest id)."""
    _check_budget(params, config)
    scorer = make_scorer(params, source_ids)
    tokens = (BOS_ID,)
    log_prob = 0.0
    while len(tokens) < config.max_decode_len:
        logps = scorer([tokens])[0]
        token = int(np.argmax(logps))
        tokens += (token,)
        log_prob += float(logps[token])
        if token == EOS_ID:
            return Hypothesis(tokens, log_prob, True)
    return Hypothesis(tokens, log_prob, False)


def beam_search(
    params: ModelParams, source_ids: Sequence[int], config: DecodeConfig
) -> list[Hypothesis]:
    """Standard beam search; requires a single beam group."""
    if config.num_beam_groups != 1:
        raise DecodeConfigError(
            f"beam_search requires num_beam_groups == 1, got {config.num_beam_groups}"
        )
    _check_budget(params, config)
    scorer = make_scorer(params, source_ids)
    hyps = group_beam_search(scorer, params.config.vocab_size, config)
    hyps.sort(key=lambda h: -h.score(config.length_penalty))
    return hyps


def diverse_beam_search(
    params: ModelParams, source_ids: Sequence[int], config: DecodeConfig
) -> list[Hypothesis]:
    """Grouped beam search with the Hamming diversity penalty, group-ordered."""
    _check_budget(params, config)
    scorer = make_scorer(params, source_ids)
    return group_beam_search(scorer, params.config.vocab_size, config)
