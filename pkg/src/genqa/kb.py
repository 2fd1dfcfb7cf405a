"""Triple knowledge-base: storage, subject matching, grounding, splitting.

All surface text entering the store is normalized through the shared
tokenizer (lowercase, edge punctuation detached), so matching between
questions, answers, and facts happens in one canonical space. Subject
occurrences are located with an Aho-Corasick automaton and then filtered to
token-boundary-aligned spans, which keeps "art" from matching inside
"martha" while still allowing overlapping multi-word subjects.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .ahocorasick import AhoCorasick
from .vocab import TokenSequence, normalize, tokenize


@dataclass(frozen=True)
class Triple:
    """One (subject, predicate, object) fact with a store-stable id."""

    subject: str
    predicate: str
    object: str
    id: int

    def __post_init__(self):
        if not (self.subject and self.predicate and self.object):
            raise ValueError(f"triple {self.id}: all fields must be non-empty")


@dataclass(frozen=True)
class CandidateSet:
    """Ids of facts whose subject occurs in one question, in ranked order."""

    triple_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.triple_ids)


@dataclass(frozen=True)
class GroundedInstance:
    """A question-answer pair tied to the single fact that supports it.

    ``object_span`` is the half-open token range in the answer whose joined
    surface equals the fact's object string.
    """

    question: TokenSequence
    answer: TokenSequence
    gold_triple_id: int
    object_span: tuple[int, int]


class TripleStore:
    """Deduplicated triples indexed by subject for candidate retrieval."""

    def __init__(self, triples: Iterable[tuple[str, str, str]]):
        self.triples: list[Triple] = []
        seen: dict[tuple[str, str, str], int] = {}
        self._by_subject: dict[str, list[int]] = {}
        for raw_s, raw_p, raw_o in triples:
            key = (normalize(raw_s), normalize(raw_p), normalize(raw_o))
            if key in seen:
                continue
            if not all(key):
                raise ValueError(f"triple with empty field: {(raw_s, raw_p, raw_o)!r}")
            tid = len(self.triples)
            seen[key] = tid
            self.triples.append(Triple(key[0], key[1], key[2], tid))
            self._by_subject.setdefault(key[0], []).append(tid)
        if not self.triples:
            raise ValueError("empty triple stream")
        self._automaton = AhoCorasick(self._by_subject.keys())

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def subjects(self) -> set[str]:
        return set(self._by_subject)

    def find_subject_mentions(self, text: str) -> list[tuple[str, tuple[int, int]]]:
        """All occurrences of all subject strings in ``text``, overlapping
        included, as (subject, (start, end)) character spans."""
        return [(pat, (lo, hi)) for pat, lo, hi in self._automaton.finditer(text)]

    def retrieve_candidates(self, question: TokenSequence, cap: int = 256) -> CandidateSet:
        """Facts whose subject occurs token-aligned in the question.

        Ordered by longest matched subject first, then lowest triple id;
        truncated to ``cap``. An empty result marks the question unanswerable.
        """
        text = question.text
        boundaries = _token_boundaries(question.surfaces)
        starts, ends = boundaries
        matched: set[str] = set()
        for subject, (lo, hi) in self.find_subject_mentions(text):
            if lo in starts and hi in ends:
                matched.add(subject)
        ids: list[tuple[int, int]] = []
        for subject in matched:
            for tid in self._by_subject[subject]:
                ids.append((-len(subject), tid))
        ids.sort()
        return CandidateSet(tuple(tid for _, tid in ids[:cap]))

    def ground(self, question: TokenSequence, answer: TokenSequence, cap: int = 256) -> GroundedInstance | None:
        """Attach the best-matching fact to a QA pair, or None.

        Candidates come from subject mentions in the question; a candidate
        survives only if its object occurs verbatim (token-aligned) in the
        answer. Survivors are scored by question/predicate token overlap
        (+2 per overlapping question token) plus matched subject length
        (+1 per character); ties break toward the lowest triple id.
        """
        candidates = self.retrieve_candidates(question, cap=cap)
        q_tokens = list(question.surfaces)
        best: tuple[int, int] | None = None  # (-score, id)
        best_span: tuple[int, int] | None = None
        for tid in candidates.triple_ids:
            triple = self.triples[tid]
            span = find_token_subsequence(answer.surfaces, tokenize(triple.object))
            if span is None:
                continue
            predicate_tokens = set(tokenize(triple.predicate))
            overlap = sum(1 for tok in q_tokens if tok in predicate_tokens)
            score = 2 * overlap + len(triple.subject)
            key = (-score, tid)
            if best is None or key < best:
                best = key
                best_span = span
        if best is None:
            return None
        return GroundedInstance(
            question=question,
            answer=answer,
            gold_triple_id=best[1],
            object_span=best_span,
        )


def _token_boundaries(surfaces: Sequence[str]) -> tuple[set[int], set[int]]:
    starts: set[int] = set()
    ends: set[int] = set()
    pos = 0
    for tok in surfaces:
        starts.add(pos)
        pos += len(tok)
        ends.add(pos)
        pos += 1  # joining space
    return starts, ends


def find_token_subsequence(haystack: Sequence[str], needle: Sequence[str]) -> tuple[int, int] | None:
    """First token span [start, end) where ``needle`` occurs contiguously."""
    n = len(needle)
    if n == 0 or n > len(haystack):
        return None
    for i in range(len(haystack) - n + 1):
        if list(haystack[i : i + n]) == list(needle):
            return (i, i + n)
    return None


class DegenerateSplitError(ValueError):
    """A requested partition would leave train or test empty."""


def split_triple_keys(keys: Iterable, test_fraction: float, seed: int) -> set:
    """Pick the test-side share of distinct partition keys, seeded.

    Keys are shuffled deterministically and a rounded test_fraction share of
    them goes to test; the caller assigns every instance to its key's side.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    distinct = sorted(set(keys))
    if not distinct:
        raise DegenerateSplitError("no instances to split")
    rnd = random.Random(seed)
    rnd.shuffle(distinct)
    n_test = int(len(distinct) * test_fraction + 0.5)
    if n_test == 0 or n_test == len(distinct):
        raise DegenerateSplitError(
            f"{len(distinct)} partition keys at fraction {test_fraction} leaves one side empty"
        )
    return set(distinct[:n_test])


def partition_by_triple(
    instances: Sequence[GroundedInstance],
    test_fraction: float,
    seed: int,
) -> tuple[list[GroundedInstance], list[GroundedInstance]]:
    """Split instances so train and test share no gold triple."""
    test_ids = split_triple_keys(
        (inst.gold_triple_id for inst in instances), test_fraction, seed
    )
    train = [inst for inst in instances if inst.gold_triple_id not in test_ids]
    test = [inst for inst in instances if inst.gold_triple_id in test_ids]
    return train, test


# --- JSON Lines interchange -------------------------------------------------

def _read_jsonl(path: str | Path, required: Sequence[str]) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or any(k not in obj for k in required):
                raise ValueError(f"{path}:{lineno}: expected keys {list(required)}")
            yield lineno, obj


def load_triples(path: str | Path) -> TripleStore:
    rows = [
        (obj["subject"], obj["predicate"], obj["object"])
        for _, obj in _read_jsonl(path, ("subject", "predicate", "object"))
    ]
    return TripleStore(rows)


def load_qa_pairs(path: str | Path) -> list[tuple[str, str]]:
    return [
        (obj["question"], obj["answer"])
        for _, obj in _read_jsonl(path, ("question", "answer"))
    ]


def grounded_to_json(inst: GroundedInstance, store: TripleStore) -> dict:
    triple = store.triples[inst.gold_triple_id]
    return {
        "question": inst.question.text,
        "answer": inst.answer.text,
        "triple": {
            "subject": triple.subject,
            "predicate": triple.predicate,
            "object": triple.object,
        },
        "object_span": list(inst.object_span),
    }


def load_grounded(path: str | Path, store: TripleStore) -> list[GroundedInstance]:
    """Read grounded instances, re-binding each triple to its store id."""
    key_to_id = {(t.subject, t.predicate, t.object): t.id for t in store.triples}
    out = []
    for lineno, obj in _read_jsonl(path, ("question", "answer", "triple", "object_span")):
        t = obj["triple"]
        key = (normalize(t["subject"]), normalize(t["predicate"]), normalize(t["object"]))
        tid = key_to_id.get(key)
        if tid is None:
            raise ValueError(f"{path}:{lineno}: triple {key} not present in the store")
        span = tuple(obj["object_span"])
        question = _plain_sequence(obj["question"])
        answer = _plain_sequence(obj["answer"])
        joined = " ".join(answer.surfaces[span[0] : span[1]])
        if joined != key[2]:
            raise ValueError(
                f"{path}:{lineno}: object_span text {joined!r} != object {key[2]!r}"
            )
        out.append(GroundedInstance(question, answer, tid, (span[0], span[1])))
    return out


def _plain_sequence(text: str) -> TokenSequence:
    toks = tokenize(text)
    return TokenSequence(ids=tuple(0 for _ in toks), surfaces=tuple(toks))
