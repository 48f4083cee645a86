"""RNN-T decoding: prediction/joint networks, beam search, silence reset.

Beam search is time-synchronous with bounded within-frame expansion.
The silence reset (SRS) zeroes every hypothesis's prediction-network
state after more than t_sil consecutive frames in which no hypothesis
emitted a non-blank token.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .encoder import EncoderOutputs
from .errors import ParameterError, ShapeError, VocabularyError
from .numerics import RecurrentState, lstm_cell_step

__all__ = [
    "Hypothesis",
    "Transcript",
    "SrsParams",
    "SrsCounter",
    "predict_step",
    "joint",
    "beam_search_step",
    "check_blank_token",
    "reset_prediction_states",
    "decode_with_srs",
    "greedy_decode",
]


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    frames: tuple[int, ...]  # encoder frame index of each emission
    log_prob: float
    pred_state: RecurrentState
    pred_out: np.ndarray  # prediction-network output for the current prefix
    last_was_blank: bool = True

    def sort_key(self):
        return (-self.log_prob, self.tokens)


@dataclass
class Transcript:
    token_ids: tuple[int, ...]
    frames: tuple[int, ...]
    log_prob: float

    def render(self, vocab) -> str:
        return vocab.render(self.token_ids)


@dataclass
class SrsParams:
    """Silence-triggered prediction-state reset parameters."""

    t_sil: int = 15
    enabled: bool = True

    def __post_init__(self):
        if self.t_sil < 1:
            raise ParameterError(f"t_sil must be >= 1, got {self.t_sil}")


class SrsCounter:
    """Counts consecutive all-blank steps; fires once the count exceeds t_sil."""

    def __init__(self, t_sil: int):
        self.t_sil = t_sil
        self.count = 0

    def update(self, all_blank: bool) -> bool:
        if not all_blank:
            self.count = 0
            return False
        self.count += 1
        if self.count > self.t_sil:
            self.count = 0
            return True
        return False


def predict_step(token_id, state: RecurrentState, model):
    """Advance the prediction network by one token (None = start symbol)."""
    if token_id is None:
        emb = np.zeros(model.config.embed_dim)
    else:
        vocab_size = len(model.config.vocab)
        if not 0 <= token_id < vocab_size:
            raise VocabularyError(
                f"token id {token_id} outside vocabulary of {vocab_size}"
            )
        emb = model.prediction.embedding[token_id]
    g, new_state = lstm_cell_step(emb, state, model.prediction.lstm)
    return g, new_state


def joint(h_t: np.ndarray, g_u: np.ndarray, model) -> np.ndarray:
    """Joint network: tanh combiner then log-softmax over the vocabulary."""
    jw = model.joint
    if h_t.shape[0] != jw.enc_proj.shape[0]:
        raise ShapeError(
            f"encoder frame dim {h_t.shape[0]} != joint input {jw.enc_proj.shape[0]}"
        )
    z = np.tanh(h_t @ jw.enc_proj + g_u @ jw.pred_proj + jw.bias)
    logits = z @ jw.out + jw.out_bias
    shifted = logits - logits.max()
    return shifted - np.log(np.sum(np.exp(shifted)))


def start_hypothesis(model) -> Hypothesis:
    g, state = predict_step(None, RecurrentState.zeros(model.config.pred_dim), model)
    return Hypothesis((), (), 0.0, state, g, last_was_blank=True)


def _logsumexp(a: float, b: float) -> float:
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + np.log1p(np.exp(lo - hi))


@dataclass
class _Entry:
    hyp: Hypothesis
    active: bool  # still expandable within the current frame
    emitted: bool  # emitted a non-blank token during the current frame


def _merge_and_prune(entries: list[_Entry], beam: int) -> list[_Entry]:
    merged: dict = {}
    for ent in entries:
        key = (ent.hyp.tokens, ent.active)
        prev = merged.get(key)
        if prev is None:
            merged[key] = ent
        else:
            # same prefix implies the same prediction state; combine scores
            prev.hyp = replace(
                prev.hyp, log_prob=_logsumexp(prev.hyp.log_prob, ent.hyp.log_prob)
            )
            prev.emitted = prev.emitted or ent.emitted
    ranked = sorted(merged.values(), key=lambda e: e.hyp.sort_key())
    return ranked[:beam]


def beam_search_step(
    h_i: np.ndarray,
    hyps_prev: list[Hypothesis],
    beam: int,
    model,
    frame_idx: int = 0,
    max_expansions: int = 5,
) -> list[Hypothesis]:
    """Consume one encoder frame; every returned hypothesis has taken blank.

    Within the frame, hypotheses may emit up to max_expansions non-blank
    tokens; after each expansion round the pool is merged (log-sum-exp on
    identical prefixes) and pruned to the beam width. Ties break on the
    lexicographic token sequence.
    """
    if beam < 1:
        raise ParameterError(f"beam must be >= 1, got {beam}")
    if not hyps_prev:
        raise ParameterError("beam_search_step requires at least one hypothesis")
    blank = model.config.vocab.blank_id
    pool = [_Entry(h, active=True, emitted=False) for h in hyps_prev]
    for _ in range(max_expansions):
        actives = [e for e in pool if e.active]
        if not actives:
            break
        new_entries = [e for e in pool if not e.active]
        for ent in actives:
            log_probs = joint(h_i, ent.hyp.pred_out, model)
            new_entries.append(
                _Entry(
                    replace(
                        ent.hyp,
                        log_prob=ent.hyp.log_prob + log_probs[blank],
                        last_was_blank=not ent.emitted,
                    ),
                    active=False,
                    emitted=ent.emitted,
                )
            )
            for k in range(len(log_probs)):
                if k == blank:
                    continue
                g, state = predict_step(k, ent.hyp.pred_state, model)
                new_entries.append(
                    _Entry(
                        Hypothesis(
                            ent.hyp.tokens + (k,),
                            ent.hyp.frames + (frame_idx,),
                            ent.hyp.log_prob + log_probs[k],
                            state,
                            g,
                            last_was_blank=False,
                        ),
                        active=True,
                        emitted=True,
                    )
                )
        pool = _merge_and_prune(new_entries, beam)
    # force-terminate any hypotheses still mid-frame at the expansion cap
    leftover = [e for e in pool if e.active]
    if leftover:
        finished = [e for e in pool if not e.active]
        for ent in leftover:
            log_probs = joint(h_i, ent.hyp.pred_out, model)
            finished.append(
                _Entry(
                    replace(
                        ent.hyp,
                        log_prob=ent.hyp.log_prob + log_probs[blank],
                        last_was_blank=not ent.emitted,
                    ),
                    active=False,
                    emitted=ent.emitted,
                )
            )
        pool = _merge_and_prune(finished, beam)
    return [e.hyp for e in pool]


def check_blank_token(hyps: list[Hypothesis]) -> bool:
    """True iff no hypothesis emitted a non-blank token at the last step."""
    if not hyps:
        raise ParameterError("check_blank_token requires at least one hypothesis")
    return all(h.last_was_blank for h in hyps)


def reset_prediction_states(hyps: list[Hypothesis], model) -> list[Hypothesis]:
    """Zero recurrent states (and thus outputs); prefixes and scores untouched."""
    n = model.config.pred_dim
    return [
        replace(h, pred_state=RecurrentState.zeros(n), pred_out=np.zeros(n))
        for h in hyps
    ]


def decode_with_srs(
    h: EncoderOutputs,
    model,
    beam: int = 4,
    srs: SrsParams | None = None,
    max_expansions: int = 5,
) -> Transcript:
    """Beam decoding over all encoder frames with the optional silence reset."""
    srs = srs or SrsParams()
    hyps = [start_hypothesis(model)]
    counter = SrsCounter(srs.t_sil)
    for i in range(h.length):
        hyps = beam_search_step(h.h[i], hyps, beam, model, frame_idx=i,
                                max_expansions=max_expansions)
        if srs.enabled and counter.update(check_blank_token(hyps)):
            hyps = reset_prediction_states(hyps, model)
    best = min(hyps, key=lambda hy: hy.sort_key())
    return Transcript(best.tokens, best.frames, best.log_prob)


def greedy_decode(h: EncoderOutputs, model, max_symbols: int = 5) -> Transcript:
    """Argmax decoding; baseline and the beam=1 oracle."""
    blank = model.config.vocab.blank_id
    hyp = start_hypothesis(model)
    tokens: list[int] = []
    frames: list[int] = []
    log_prob = 0.0
    state, g = hyp.pred_state, hyp.pred_out
    for i in range(h.length):
        emitted = 0
        while True:
            log_probs = joint(h.h[i], g, model)
            k = int(np.argmax(log_probs))
            if k == blank or emitted == max_symbols:
                log_prob += log_probs[blank]
                break
            tokens.append(k)
            frames.append(i)
            log_prob += log_probs[k]
            g, state = predict_step(k, state, model)
            emitted += 1
    return Transcript(tuple(tokens), tuple(frames), log_prob)
