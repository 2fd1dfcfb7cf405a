"""Answer generation: length-normalized beam search over the union vocabulary.

Each step expands every live hypothesis over the full union of common words
and candidate objects, keeps the top beam_width expansions by cumulative
log-probability, and retires those that just emitted EOS. Hypotheses still
alive at the maximum length retire as they are. Final ranking uses the
cumulative log-probability divided by the emitted token count (EOS included);
exact ties fall back to token-id lexicographic order, where knowledge-only
units take ids after the common vocabulary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .decoder import DecoderState, KbEmission, MixtureStepDistribution
from .kb import Triple
from .model import Model, PreparedCandidate
from .vocab import EOS_ID, UNK_ID


@dataclass(frozen=True)
class EmittedToken:
    """One generated unit with its provenance trace."""

    uid: int  # common-vocab id, or vocab_size + unit index for OOV units
    surface: str
    embed_id: int  # id fed to the next step's input embedding
    from_kb: bool
    switch: float
    kb_share: float  # probability contributed by the knowledge branch
    logp: float


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[EmittedToken, ...]
    log_prob: float
    state: DecoderState
    finished: bool

    @property
    def normalized_score(self) -> float:
        return self.log_prob / len(self.tokens)

    @property
    def uid_sequence(self) -> tuple[int, ...]:
        return tuple(t.uid for t in self.tokens)


def _expansions(
    hyp: BeamHypothesis,
    dist: MixtureStepDistribution,
    kb: KbEmission | None,
    vocab_size: int,
):
    """(sort_key, candidate hypothesis) for every positive-probability token."""
    out = []
    kb_by_vid = {}
    if kb is not None:
        for unit in kb.units:
            if unit.vocab_id is not None:
                kb_by_vid[unit.vocab_id] = unit.surface
    for vid in np.flatnonzero(dist.dense > 0.0):
        vid = int(vid)
        p = float(dist.dense[vid])
        surface = kb_by_vid.get(vid)
        kb_share = dist.kb_share(surface) if surface is not None else 0.0
        token = EmittedToken(
            uid=vid,
            surface=surface if surface is not None else "",
            embed_id=vid,
            from_kb=kb_share > p - kb_share,
            switch=dist.switch,
            kb_share=kb_share,
            logp=float(np.log(p)),
        )
        out.append((hyp, token, p))
    for unit_idx, p in dist.extra:
        if p <= 0.0:
            continue
        unit = kb.units[unit_idx]
        token = EmittedToken(
            uid=vocab_size + unit_idx,
            surface=unit.surface,
            embed_id=UNK_ID,
            from_kb=True,
            switch=dist.switch,
            kb_share=p,
            logp=float(np.log(p)),
        )
        out.append((hyp, token, p))
    return out


def beam_search(
    model: Model,
    encoded,
    kb: KbEmission | None,
    r: np.ndarray | None,
    beam_width: int,
    max_len: int,
) -> list[BeamHypothesis]:
    """Ranked complete hypotheses (best normalized score first)."""
    if beam_width < 1 or max_len < 1:
        raise ValueError("beam_width and max_len must be at least 1")
    decoder = model.decoder
    vocab_size = decoder.vocab_size
    use_kb = not model.kb_disabled and kb is not None and len(kb) > 0 and r is not None
    start = BeamHypothesis(
        tokens=(), log_prob=0.0, state=decoder.start(encoded), finished=False
    )
    live = [start]
    finished: list[BeamHypothesis] = []
    for _ in range(max_len):
        pool = []
        for hyp in live:
            dist, advanced = decoder.decode_step(
                hyp.state,
                encoded,
                kb if use_kb else None,
                r if use_kb else None,
                kb_disabled=not use_kb,
            )
            for h, token, _ in _expansions(hyp, dist, kb if use_kb else None, vocab_size):
                pool.append((h, token, advanced))
        candidates = []
        for h, token, advanced in pool:
            total = h.log_prob + token.logp
            candidates.append((-total, h.uid_sequence + (token.uid,), h, token, advanced))
        candidates.sort(key=lambda c: (c[0], c[1]))
        live = []
        for neg_total, uids, h, token, advanced in candidates[:beam_width]:
            state = decoder.advanced_state(advanced, token.embed_id, token.from_kb)
            nxt = BeamHypothesis(
                tokens=h.tokens + (token,),
                log_prob=-neg_total,
                state=state,
                finished=token.uid == EOS_ID,
            )
            if nxt.finished:
                finished.append(nxt)
            else:
                live.append(nxt)
        if not live:
            break
    finished.extend(
        BeamHypothesis(h.tokens, h.log_prob, h.state, True) for h in live
    )
    finished.sort(key=lambda h: (-h.normalized_score, h.uid_sequence))
    return finished


@dataclass(frozen=True)
class KbWordUse:
    word: str
    subject: str
    predicate: str


@dataclass(frozen=True)
class AnswerResult:
    """A generated answer with its knowledge provenance."""

    answer: str
    kb_words: tuple[KbWordUse, ...]
    score: float
    ungrounded: bool
    relevance: tuple[tuple[Triple, float], ...] = ()

    def to_json(self) -> dict:
        return {
            "answer": self.answer,
            "kb_words": [
                {"word": k.word, "subject": k.subject, "predicate": k.predicate}
                for k in self.kb_words
            ],
            "score": self.score,
            "ungrounded": self.ungrounded,
        }


def detokenize(surfaces: list[str]) -> str:
    text = " ".join(surfaces)
    return re.sub(r" ([!?.,;:])", r"\1", text)


def _source_triple(
    surface: str, candidates: tuple[PreparedCandidate, ...], r: np.ndarray, model: Model
) -> Triple:
    """Best-relevance candidate among those sharing the emitted object."""
    best = None
    for idx, cand in enumerate(candidates):
        if cand.object_surface != surface:
            continue
        key = (-float(r[idx]), cand.triple_id)
        if best is None or key < best:
            best = key
    return model.store.triples[best[1]]


def answer(
    model: Model,
    question: str,
    beam_width: int | None = None,
    max_len: int | None = None,
) -> AnswerResult:
    """Full pipeline: tokenize, encode, retrieve, score, search, detokenize."""
    beam_width = beam_width or model.config.beam_width
    max_len = max_len or model.config.max_answer_len
    ts = model.encode_text_question(question)
    encoded = model.encode_question(ts)
    candidates = model.prepare_candidates(model.retrieve(ts))
    ungrounded = len(candidates) == 0
    kb = None
    r = None
    relevance_pairs: tuple[tuple[Triple, float], ...] = ()
    if candidates and not model.kb_disabled:
        r = model.candidate_relevance(encoded, candidates).data
        kb = KbEmission.from_objects([c.object_surface for c in candidates], model.answer_vocab)
        relevance_pairs = tuple(
            (model.store.triples[c.triple_id], float(r[i]))
            for i, c in enumerate(candidates)
        )
    hyps = beam_search(model, encoded, kb, r, beam_width, max_len)
    top = hyps[0]
    surfaces: list[str] = []
    kb_words: list[KbWordUse] = []
    for token in top.tokens:
        if token.uid == EOS_ID:
            continue
        surface = token.surface if token.surface else model.answer_vocab.token_of(token.uid)
        surfaces.append(surface)
        if token.from_kb and candidates:
            triple = _source_triple(surface, candidates, r, model)
            kb_words.append(
                KbWordUse(word=surface, subject=triple.subject, predicate=triple.predicate)
            )
    return AnswerResult(
        answer=detokenize(surfaces),
        kb_words=tuple(kb_words),
        score=top.normalized_score,
        ungrounded=ungrounded,
        relevance=relevance_pairs,
    )
