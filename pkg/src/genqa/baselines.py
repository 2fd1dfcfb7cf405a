"""Comparison systems: no-knowledge ablation, TF-IDF retrieval, embedding QA.

The retrieval baseline treats each fact as a bag-of-words document over its
subject and predicate tokens and ranks by TF-IDF overlap with the question;
it returns an object string, never a sentence. The embedding baseline learns
separate question-side and fact-side embedding tables with a margin ranking
loss and answers with the argmax candidate's object. The ablation is the full
model with its knowledge switch clamped to zero.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .encoder import init_matrix
from .kb import GroundedInstance, Triple, TripleStore
from .model import Model
from .tensor import Tensor
from .vocab import TokenSequence, Vocabulary, tokenize


def nrm_mode(model: Model) -> Model:
    """The model with its knowledge branch disabled at train and test time."""
    return model.with_kb_disabled()


class TfidfIndex:
    """Inverted index over facts-as-documents (subject + predicate tokens)."""

    def __init__(self, store: TripleStore):
        if len(store) == 0:
            raise ValueError("empty store")
        self.store = store
        self._postings: dict[str, list[tuple[int, int]]] = {}
        self._df: Counter[str] = Counter()
        for triple in store.triples:
            tokens = tokenize(triple.subject) + tokenize(triple.predicate)
            counts = Counter(tokens)
            for tok, tf in counts.items():
                self._postings.setdefault(tok, []).append((triple.id, tf))
                self._df[tok] += 1
        self._n_docs = len(store)

    def idf(self, token: str) -> float:
        return math.log((self._n_docs + 1) / (self._df.get(token, 0) + 1)) + 1.0

    def score_all(self, question_tokens: Sequence[str]) -> dict[int, float]:
        scores: dict[int, float] = {}
        for tok, q_tf in Counter(question_tokens).items():
            postings = self._postings.get(tok)
            if not postings:
                continue
            w = q_tf * self.idf(tok)
            for doc_id, tf in postings:
                scores[doc_id] = scores.get(doc_id, 0.0) + w * tf
        return scores

    def best(self, question_tokens: Sequence[str]) -> Triple | None:
        scores = self.score_all(question_tokens)
        if not scores:
            return None
        doc_id = min(scores, key=lambda d: (-scores[d], d))
        return self.store.triples[doc_id]


def retrieval_answer(index: TfidfIndex, question: TokenSequence) -> Triple | None:
    """Top TF-IDF fact for the question, or None with no token overlap."""
    return index.best(question.surfaces)


@dataclass(frozen=True)
class RankingConfig:
    margin: float = 0.5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")


class EmbeddingQA:
    """Question and fact embeddings scored by inner product of mean pools."""

    def __init__(
        self,
        question_vocab: Vocabulary,
        kb_tokens: Sequence[str],
        store: TripleStore,
        embed_size: int = 32,
        seed: int = 0,
        dtype=np.float64,
    ):
        self.question_vocab = question_vocab
        self.kb_tokens = list(kb_tokens)
        self._kb_index = {t: i for i, t in enumerate(self.kb_tokens)}
        self.store = store
        self.embed_size = embed_size
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.q_embed = init_matrix(rng, (len(question_vocab), embed_size), dtype)
        self.kb_embed = init_matrix(rng, (len(self.kb_tokens), embed_size), dtype)
        self._fact_rows: dict[int, tuple[int, ...]] = {
            t.id: tuple(
                self._kb_index[tok]
                for tok in tokenize(t.subject) + tokenize(t.predicate)
            )
            for t in store.triples
        }

    @classmethod
    def build(
        cls, question_vocab: Vocabulary, store: TripleStore, embed_size: int = 32, seed: int = 0
    ) -> "EmbeddingQA":
        tokens: list[str] = []
        seen: set[str] = set()
        for t in store.triples:
            for tok in tokenize(t.subject) + tokenize(t.predicate):
                if tok not in seen:
                    seen.add(tok)
                    tokens.append(tok)
        return cls(question_vocab, tokens, store, embed_size=embed_size, seed=seed)

    def slots(self) -> dict[str, Tensor]:
        return {"emb_qa.question": self.q_embed, "emb_qa.kb": self.kb_embed}

    def question_vec(self, question: TokenSequence) -> Tensor:
        return T.mean_rows(T.take_rows(self.q_embed, question.ids))

    def fact_vec(self, triple_id: int) -> Tensor:
        return T.mean_rows(T.take_rows(self.kb_embed, self._fact_rows[triple_id]))

    def score(self, question: TokenSequence, triple_id: int) -> Tensor:
        return T.dot(self.question_vec(question), self.fact_vec(triple_id))


def hinge_terms(
    qa: EmbeddingQA, question: TokenSequence, pos_id: int, neg_ids: Sequence[int], margin: float
) -> Tensor:
    """Sum of max(0, margin - S(Q, pos) + S(Q, neg)) over the negatives."""
    pos = qa.score(question, pos_id)
    total = None
    for neg_id in neg_ids:
        neg = qa.score(question, neg_id)
        term = T.relu(T.add_const(T.sub(neg, pos), margin))
        total = term if total is None else T.add(total, term)
    return total


def train_embedding_qa(
    qa: EmbeddingQA,
    instances: Sequence[GroundedInstance],
    config: RankingConfig,
    candidate_cap: int = 256,
) -> list[float]:
    """Per-instance hinge-loss SGD; negatives come from the instance's own
    candidate set (random store facts when it is a singleton). Returns the
    per-epoch mean loss log."""
    store = qa.store
    prepared = []
    for inst in instances:
        question = qa.question_vocab.encode(inst.question.surfaces)
        cands = store.retrieve_candidates(question, cap=candidate_cap)
        negatives = [t for t in cands.triple_ids if t != inst.gold_triple_id]
        prepared.append((question, inst.gold_triple_id, negatives))
    rnd = random.Random(config.seed)
    all_ids = [t.id for t in store.triples]
    history = []
    order = list(range(len(prepared)))
    for _ in range(config.epochs):
        rnd.shuffle(order)
        total = 0.0
        for i in order:
            question, gold, negatives = prepared[i]
            pool = negatives
            if not pool:
                pool = [t for t in all_ids if t != gold]
            negs = [rnd.choice(pool) for _ in range(config.negatives)]
            with T.Tape() as tape:
                loss = hinge_terms(qa, question, gold, negs, config.margin)
            value = loss.item()
            total += value
            if value > 0.0:
                grads = T.backward(tape, loss)
                for t in (qa.q_embed, qa.kb_embed):
                    t.data -= config.learning_rate * grads[t]
        history.append(total / len(prepared))
    return history


def embedding_answer(
    qa: EmbeddingQA, question: TokenSequence, candidate_cap: int = 256
) -> Triple | None:
    """Argmax-scored candidate's fact, or None without candidates."""
    cands = qa.store.retrieve_candidates(question, cap=candidate_cap)
    if len(cands) == 0:
        return None
    best = None
    for tid in cands.triple_ids:
        key = (-qa.score(question, tid).item(), tid)
        if best is None or key < best:
            best = key
    return qa.store.triples[best[1]]


def save_embedding_qa(path, qa: EmbeddingQA, extra_meta: dict | None = None) -> None:
    from .training import save_checkpoint

    meta = {
        "kind": "embedding-qa",
        "system": "embedding",
        "seed": qa.seed,
        "embed_size": qa.embed_size,
        "question_vocab": qa.question_vocab.tokens,
        "kb_tokens": qa.kb_tokens,
        "triples": [[t.subject, t.predicate, t.object] for t in qa.store.triples],
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, qa.slots(), meta, "float64")


def load_embedding_qa(path) -> tuple[EmbeddingQA, dict]:
    from .training import CheckpointError, load_checkpoint

    arrays, meta, _ = load_checkpoint(path)
    if meta.get("kind") != "embedding-qa":
        raise CheckpointError(
            f"{path}: checkpoint holds {meta.get('kind')!r}, not an embedding baseline"
        )
    vocab = Vocabulary(meta["question_vocab"])
    store = TripleStore([tuple(row) for row in meta["triples"]])
    qa = EmbeddingQA(
        vocab,
        meta["kb_tokens"],
        store,
        embed_size=meta["embed_size"],
        seed=meta.get("seed", 0),
    )
    qa.q_embed.data[...] = arrays["emb_qa.question"]
    qa.kb_embed.data[...] = arrays["emb_qa.kb"]
    return qa, meta
