"""Tokenization and the dual-vocabulary bookkeeping.

Questions and answers use independent vocabularies by default; candidate-fact
object words are never drawn from these tables but emitted by the knowledge
branch, so the only reserved token that reaches generated text is UNK for
out-of-vocabulary common words.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

UNK, BOS, EOS, PAD = "<unk>", "<bos>", "<eos>", "<pad>"
RESERVED = (UNK, BOS, EOS, PAD)
UNK_ID, BOS_ID, EOS_ID, PAD_ID = 0, 1, 2, 3

_PUNCT = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and detach edge punctuation.

    Punctuation characters at the edges of a whitespace token become tokens
    of their own ("ming?" -> "ming", "?"), while interior punctuation is kept
    so units like "2.29m" survive intact. Idempotent over its own output.
    """
    out: list[str] = []
    for raw in text.lower().split():
        lead: list[str] = []
        while len(raw) > 1 and raw[0] in _PUNCT:
            lead.append(raw[0])
            raw = raw[1:]
        trail: list[str] = []
        while len(raw) > 1 and raw[-1] in _PUNCT:
            trail.append(raw[-1])
            raw = raw[:-1]
        out.extend(lead)
        out.append(raw)
        out.extend(reversed(trail))
    return out


def normalize(text: str) -> str:
    """Canonical surface form: tokenized and re-joined with single spaces."""
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class TokenSequence:
    """Token ids paired with the surface strings they were encoded from."""

    ids: tuple[int, ...]
    surfaces: tuple[str, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.surfaces):
            raise ValueError("ids and surfaces must align")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def text(self) -> str:
        return " ".join(self.surfaces)


class Vocabulary:
    """Bijective token <-> id map with fixed reserved ids 0..3."""

    def __init__(self, tokens: Sequence[str]):
        self._id_to_token: list[str] = list(RESERVED)
        self._token_to_id: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self._token_to_id:
                raise ValueError(f"duplicate token {tok!r}")
            self._token_to_id[tok] = len(self._id_to_token)
            self._id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    @property
    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self._id_to_token[len(RESERVED) :]

    def encode(self, surfaces: Sequence[str]) -> TokenSequence:
        """Map surface tokens to ids; unknown tokens map to UNK but keep
        their surface string so downstream fact matching still sees them."""
        return TokenSequence(
            ids=tuple(self.id_of(s) for s in surfaces),
            surfaces=tuple(surfaces),
        )

    def encode_text(self, text: str) -> TokenSequence:
        return self.encode(tokenize(text))

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(t + "\n" for t in self.tokens), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


def build_vocab(
    corpus: Iterable[Sequence[str]],
    size: int,
    must_include: Iterable[str] = (),
) -> Vocabulary:
    """Keep the ``size`` most frequent corpus tokens plus every must_include
    token, on top of the reserved entries. Frequency ties break by first
    occurrence in the corpus."""
    if size < 0:
        raise ValueError(f"size must be non-negative, got {size}")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    n_docs = 0
    for doc in corpus:
        n_docs += 1
        for tok in doc:
            counts[tok] += 1
            if tok not in first_seen:
                first_seen[tok] = len(first_seen)
    if n_docs == 0:
        raise ValueError("empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    chosen = [t for t in ranked[:size] if t not in RESERVED]
    seen = set(chosen)
    for tok in sorted(set(must_include)):
        if tok not in seen and tok not in RESERVED:
            chosen.append(tok)
            seen.add(tok)
    return Vocabulary(chosen)
