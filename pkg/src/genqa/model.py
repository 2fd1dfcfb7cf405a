"""Full model assembly: parameters, vocabularies, and example preparation.

A Model owns the question encoder, the candidate matcher (bilinear or CNN),
the mixture decoder, the shared embedding tables, and the knowledge store it
answers from. Every trainable array is registered in ModelParameters under a
unique slot name; checkpointing, regularization, and gradient bookkeeping all
go through those named slots.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .decoder import Decoder, KbEmission, TargetStep, build_target_steps
from .encoder import EncodedQuestion, QuestionEncoder, init_matrix
from .kb import CandidateSet, GroundedInstance, TripleStore
from .matcher import BilinearMatcher, CnnMatcher, KbLexicon, relevance, triple_embedding
from .tensor import Tensor
from .vocab import TokenSequence, Vocabulary, build_vocab, tokenize

_PRECISIONS = {"float64": np.float64, "float32": np.float32}


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int = 64
    embed_size: int = 32
    question_vocab_size: int = 2000
    answer_vocab_size: int = 2000
    enquirer: str = "bilinear"
    precision: str = "float64"
    candidate_cap: int = 256
    cnn_filter_width: int = 3
    cnn_feature_maps: int = 64
    cnn_mlp_hidden: int = 64
    share_vocab: bool = False
    beam_width: int = 5
    max_answer_len: int = 40

    def __post_init__(self):
        if self.enquirer not in ("bilinear", "cnn"):
            raise ValueError(f"unknown enquirer variant {self.enquirer!r}")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


class ModelParameters:
    """Ordered, uniquely named trainable slots."""

    def __init__(self):
        self._slots: dict[str, Tensor] = {}

    def register(self, name: str, t: Tensor) -> None:
        if name in self._slots:
            raise ValueError(f"duplicate slot name {name!r}")
        self._slots[name] = t

    def register_all(self, slots: Mapping[str, Tensor]) -> None:
        for name, t in slots.items():
            self.register(name, t)

    def __getitem__(self, name: str) -> Tensor:
        return self._slots[name]

    def __iter__(self):
        return iter(self._slots)

    def __len__(self) -> int:
        return len(self._slots)

    def items(self):
        return self._slots.items()

    def names(self) -> list[str]:
        return list(self._slots)

    def total_size(self) -> int:
        return sum(t.size for t in self._slots.values())


@dataclass(frozen=True)
class PreparedCandidate:
    """A candidate fact resolved to embedding rows and its object surface."""

    triple_id: int
    q_rows: tuple[int, ...]
    ext_rows: tuple[int, ...]
    object_surface: str


@dataclass(frozen=True)
class PreparedExample:
    """One training example with candidates and targets precomputed.

    The retrieval stage is string matching and not differentiable, so it runs
    once up front; only candidate scoring participates in each forward pass.
    """

    index: int
    question: TokenSequence
    candidates: tuple[PreparedCandidate, ...]
    kb: KbEmission | None
    gold_triple_id: int
    steps: tuple[TargetStep, ...]

    @property
    def n_steps(self) -> int:
        return len(self.steps)


class Model:
    """GenQA model: encode, score candidates, and generate mixed answers."""

    def __init__(
        self,
        config: ModelConfig,
        question_vocab: Vocabulary,
        answer_vocab: Vocabulary,
        lexicon: KbLexicon,
        store: TripleStore,
        seed: int = 0,
        kb_disabled: bool = False,
    ):
        self.config = config
        self.question_vocab = question_vocab
        self.answer_vocab = answer_vocab
        self.lexicon = lexicon
        self.store = store
        self.seed = seed
        self.kb_disabled = kb_disabled
        dtype = config.dtype

        rng = np.random.default_rng(seed)
        self.encoder = QuestionEncoder.create(
            rng, len(question_vocab), config.embed_size, config.hidden_size, dtype
        )
        self.ext_embed = init_matrix(rng, (lexicon.ext_size, config.embed_size), dtype)
        if config.enquirer == "bilinear":
            self.matcher = BilinearMatcher.create(rng, config.embed_size, dtype)
        else:
            self.matcher = CnnMatcher.create(
                rng,
                config.embed_size,
                self.encoder.embed,
                dtype,
                width=config.cnn_filter_width,
                feature_maps=config.cnn_feature_maps,
                mlp_hidden=config.cnn_mlp_hidden,
            )
        self.decoder = Decoder.create(
            rng,
            len(answer_vocab),
            config.embed_size,
            config.hidden_size,
            2 * config.hidden_size,
            dtype,
        )

        self.params = ModelParameters()
        self.params.register_all(self.encoder.slots())
        self.params.register("embed.kb_ext", self.ext_embed)
        self.params.register_all(self.matcher.slots())
        self.params.register_all(self.decoder.slots())

    @classmethod
    def build(
        cls,
        config: ModelConfig,
        store: TripleStore,
        instances: Sequence[GroundedInstance],
        seed: int = 0,
        kb_disabled: bool = False,
    ) -> "Model":
        """Construct vocabularies from training instances and initialize.

        The question vocabulary always includes every predicate token of the
        store, whatever its corpus frequency.
        """
        predicate_tokens = {
            tok for t in store.triples for tok in tokenize(t.predicate)
        }
        if config.share_vocab:
            corpus = [list(i.question.surfaces) for i in instances]
            corpus += [list(i.answer.surfaces) for i in instances]
            shared = build_vocab(corpus, config.question_vocab_size, predicate_tokens)
            q_vocab = a_vocab = shared
        else:
            q_vocab = build_vocab(
                (list(i.question.surfaces) for i in instances),
                config.question_vocab_size,
                predicate_tokens,
            )
            a_vocab = build_vocab(
                (list(i.answer.surfaces) for i in instances),
                config.answer_vocab_size,
            )
        lexicon = KbLexicon.build(q_vocab, store)
        return cls(config, q_vocab, a_vocab, lexicon, store, seed=seed, kb_disabled=kb_disabled)

    # --- forward pieces ------------------------------------------------------

    def encode_text_question(self, text: str) -> TokenSequence:
        ts = self.question_vocab.encode_text(text)
        if len(ts) == 0:
            raise ValueError("empty question")
        return ts

    def encode_question(self, question: TokenSequence) -> EncodedQuestion:
        return self.encoder.encode(question.ids)

    def retrieve(self, question: TokenSequence) -> CandidateSet:
        return self.store.retrieve_candidates(question, cap=self.config.candidate_cap)

    def prepare_candidates(self, cands: CandidateSet) -> tuple[PreparedCandidate, ...]:
        out = []
        for tid in cands.triple_ids:
            triple = self.store.triples[tid]
            sq, sx = self.lexicon.rows(triple.subject)
            pq, px = self.lexicon.rows(triple.predicate)
            out.append(
                PreparedCandidate(
                    triple_id=tid,
                    q_rows=sq + pq,
                    ext_rows=sx + px,
                    object_surface=triple.object,
                )
            )
        return tuple(out)

    def candidate_relevance(
        self, encoded: EncodedQuestion, candidates: Sequence[PreparedCandidate]
    ) -> Tensor:
        """Softmax relevance over the candidates, in candidate order."""
        summary = self.matcher.question_summary(encoded)
        scores = [
            self.matcher.score(
                summary,
                triple_embedding(self.encoder.embed, self.ext_embed, c.q_rows, c.ext_rows),
            )
            for c in candidates
        ]
        return relevance(scores)

    def example_log_prob(self, ex: PreparedExample) -> Tensor:
        """Teacher-forced log-likelihood of one prepared example."""
        encoded = self.encode_question(ex.question)
        if self.kb_disabled or not ex.candidates:
            return self.decoder.sequence_log_prob(
                encoded, None, None, ex.steps, kb_disabled=True
            )
        r = self.candidate_relevance(encoded, ex.candidates)
        return self.decoder.sequence_log_prob(encoded, ex.kb, r, ex.steps)

    # --- dataset preparation --------------------------------------------------

    def prepare_example(self, index: int, inst: GroundedInstance) -> PreparedExample | None:
        """Re-encode an instance against this model's vocabularies.

        In the full model the gold triple must be among the retrieved
        candidates (None otherwise: the caller drops and counts it). With the
        knowledge branch disabled, answers stay plain token sequences.
        """
        question = self.question_vocab.encode(inst.question.surfaces)
        if len(question) == 0:
            return None
        answer = self.answer_vocab.encode(inst.answer.surfaces)
        if self.kb_disabled:
            steps = build_target_steps(answer, None, self.answer_vocab, collapse_object=False)
            return PreparedExample(
                index=index,
                question=question,
                candidates=(),
                kb=None,
                gold_triple_id=inst.gold_triple_id,
                steps=steps,
            )
        cands = self.retrieve(question)
        if inst.gold_triple_id not in cands.triple_ids:
            return None
        prepared = self.prepare_candidates(cands)
        kb = KbEmission.from_objects([c.object_surface for c in prepared], self.answer_vocab)
        steps = build_target_steps(answer, inst.object_span, self.answer_vocab)
        return PreparedExample(
            index=index,
            question=question,
            candidates=prepared,
            kb=kb,
            gold_triple_id=inst.gold_triple_id,
            steps=steps,
        )

    def prepare_dataset(
        self, instances: Sequence[GroundedInstance]
    ) -> tuple[list[PreparedExample], int]:
        """Prepare all instances; returns (kept, dropped_count)."""
        kept: list[PreparedExample] = []
        dropped = 0
        for i, inst in enumerate(instances):
            ex = self.prepare_example(i, inst)
            if ex is None:
                dropped += 1
            else:
                kept.append(ex)
        return kept, dropped

    def with_kb_disabled(self) -> "Model":
        """Same parameters and tables, knowledge branch clamped off."""
        clone = object.__new__(Model)
        clone.__dict__.update(self.__dict__)
        clone.kb_disabled = True
        return clone
