"""Scoring of candidate facts against the encoded question.

Two interchangeable scorers produce a scalar per candidate; a softmax over
the candidate list turns the scores into the relevance distribution that
doubles as the knowledge branch's emission distribution.

Word embeddings are shared with the question encoder: a constituent token of
a fact reuses its question-vocabulary row when it has one, and otherwise gets
a row in a small extension table of the same width.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .encoder import EncodedQuestion, init_matrix, zeros
from .kb import TripleStore
from .tensor import Tensor
from .vocab import PAD_ID, Vocabulary, tokenize

VARIANTS = ("bilinear", "cnn")


class KbLexicon:
    """Embedding-row assignment for every fact constituent token.

    Tokens of subjects and predicates resolve either to the question
    vocabulary (shared rows) or to an extension table for tokens the
    question vocabulary lacks. Objects never need rows: they are emitted
    through the relevance distribution, not embedded.
    """

    def __init__(self, question_vocab: Vocabulary, ext_tokens: Sequence[str]):
        self._vocab = question_vocab
        self._ext_tokens = list(ext_tokens)
        self._ext_index = {t: i for i, t in enumerate(self._ext_tokens)}

    @classmethod
    def build(cls, question_vocab: Vocabulary, store: TripleStore) -> "KbLexicon":
        ext: list[str] = []
        seen: set[str] = set()
        for triple in store.triples:
            for field in (triple.subject, triple.predicate):
                for tok in tokenize(field):
                    if tok not in question_vocab and tok not in seen:
                        seen.add(tok)
                        ext.append(tok)
        return cls(question_vocab, ext)

    @property
    def ext_tokens(self) -> list[str]:
        return list(self._ext_tokens)

    @property
    def ext_size(self) -> int:
        return len(self._ext_tokens)

    def rows(self, text: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """(question-vocab row ids, extension row ids) for a constituent."""
        q_rows: list[int] = []
        x_rows: list[int] = []
        for tok in tokenize(text):
            if tok in self._vocab:
                q_rows.append(self._vocab.id_of(tok))
            else:
                x_rows.append(self._ext_index[tok])
        return tuple(q_rows), tuple(x_rows)


def triple_embedding(
    q_embed: Tensor, ext_embed: Tensor, q_rows: Sequence[int], ext_rows: Sequence[int]
) -> Tensor:
    """Flat average over all subject and predicate token embeddings."""
    parts = []
    if q_rows:
        parts.append(T.take_rows(q_embed, q_rows))
    if ext_rows:
        parts.append(T.take_rows(ext_embed, ext_rows))
    if not parts:
        raise ValueError("fact constituent has no tokens")
    return T.mean_rows(T.concat(parts, axis=0))


class BilinearMatcher:
    """Score = mean question embedding, through a square matrix, dotted with
    the fact embedding."""

    def __init__(self, m: Tensor):
        self.m = m

    @classmethod
    def create(cls, rng: np.random.Generator, embed_size: int, dtype) -> "BilinearMatcher":
        return cls(init_matrix(rng, (embed_size, embed_size), dtype))

    def slots(self) -> dict[str, Tensor]:
        return {"match.bilinear.m": self.m}

    def question_summary(self, encoded: EncodedQuestion) -> Tensor:
        # The mean is over the embedding components of the memory, not the
        # recurrent states.
        return T.mean_rows(encoded.embeds)

    def score(self, summary: Tensor, fact_vec: Tensor) -> Tensor:
        return T.dot(T.vecmat(summary, self.m), fact_vec)


class CnnMatcher:
    """Convolution + max-pooling question summary scored by an MLP.

    Questions shorter than the filter width are right-padded with the PAD
    embedding before the convolution.
    """

    def __init__(
        self,
        conv_w: Tensor,
        conv_b: Tensor,
        mlp_w1: Tensor,
        mlp_b1: Tensor,
        mlp_w2: Tensor,
        mlp_b2: Tensor,
        width: int,
        pad_source: Tensor,
    ):
        self.conv_w = conv_w
        self.conv_b = conv_b
        self.mlp_w1 = mlp_w1
        self.mlp_b1 = mlp_b1
        self.mlp_w2 = mlp_w2
        self.mlp_b2 = mlp_b2
        self.width = width
        self._pad_source = pad_source  # question embedding table (PAD row)

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        embed_size: int,
        q_embed: Tensor,
        dtype,
        width: int = 3,
        feature_maps: int = 64,
        mlp_hidden: int = 64,
    ) -> "CnnMatcher":
        return cls(
            conv_w=init_matrix(rng, (width * embed_size, feature_maps), dtype),
            conv_b=zeros((feature_maps,), dtype),
            mlp_w1=init_matrix(rng, (feature_maps + embed_size, mlp_hidden), dtype),
            mlp_b1=zeros((mlp_hidden,), dtype),
            mlp_w2=init_matrix(rng, (mlp_hidden,), dtype),
            mlp_b2=zeros((), dtype),
            width=width,
            pad_source=q_embed,
        )

    def slots(self) -> dict[str, Tensor]:
        return {
            "match.cnn.conv_w": self.conv_w,
            "match.cnn.conv_b": self.conv_b,
            "match.cnn.mlp_w1": self.mlp_w1,
            "match.cnn.mlp_b1": self.mlp_b1,
            "match.cnn.mlp_w2": self.mlp_w2,
            "match.cnn.mlp_b2": self.mlp_b2,
        }

    def question_summary(self, encoded: EncodedQuestion) -> Tensor:
        embeds = encoded.embeds
        if embeds.shape[0] < self.width:
            pad = T.row(self._pad_source, PAD_ID)
            pads = T.stack([pad] * (self.width - embeds.shape[0]))
            embeds = T.concat([embeds, pads], axis=0)
        conv = T.tanh(T.add(T.matmul(T.windows(embeds, self.width), self.conv_w), self.conv_b))
        return T.max_cols(conv)

    def score(self, summary: Tensor, fact_vec: Tensor) -> Tensor:
        hidden = T.tanh(T.vecmat(T.concat([summary, fact_vec]), self.mlp_w1) + self.mlp_b1)
        return T.dot(hidden, self.mlp_w2) + self.mlp_b2


class EmptyCandidatesError(ValueError):
    """Relevance is undefined for an empty candidate list."""


def relevance(scores: Sequence[Tensor]) -> Tensor:
    """Softmax over candidate scores, in candidate order."""
    if len(scores) == 0:
        raise EmptyCandidatesError("no candidate scores")
    return T.softmax(T.stack(list(scores)))
