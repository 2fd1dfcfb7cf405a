"""Attention-equipped GRU decoder mixing two word sources.

Each step forms a context vector by attending over the encoder memory,
advances the GRU, and then emits a word from a two-component mixture: a
softmax language model over the common answer vocabulary, and the knowledge
branch, which assigns each candidate fact's object the relevance mass of
that fact. A logistic switch on the decoder state sets the mixing weight.

A candidate object is one emission unit even when its surface spans several
tokens; units sharing a surface pool their relevance mass. Words that exist
in both sources keep contributions from both (the switch variable is
marginalized, never supervised), words private to one source get exactly
zero from the other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .encoder import EncodedQuestion, GRUCell, init_matrix, zeros
from .tensor import Tensor
from .vocab import BOS_ID, EOS, EOS_ID, TokenSequence, UNK_ID, Vocabulary


class GroundingMismatchError(RuntimeError):
    """A knowledge-only target word has zero knowledge mass available."""


@dataclass(frozen=True)
class KbUnit:
    """One emittable object: surface string, optional common-vocab id, and
    the candidate positions whose relevance mass it aggregates."""

    surface: str
    vocab_id: int | None
    cand_rows: tuple[int, ...]


class KbEmission:
    """Per-question view of the knowledge vocabulary, in candidate order."""

    def __init__(self, units: Sequence[KbUnit]):
        self.units = tuple(units)
        self.by_surface = {u.surface: i for i, u in enumerate(self.units)}

    def __len__(self) -> int:
        return len(self.units)

    @classmethod
    def from_objects(cls, objects: Sequence[str], answer_vocab: Vocabulary) -> "KbEmission":
        order: list[str] = []
        rows: dict[str, list[int]] = {}
        for row_idx, obj in enumerate(objects):
            if obj not in rows:
                order.append(obj)
                rows[obj] = []
            rows[obj].append(row_idx)
        units = []
        for surface in order:
            single = " " not in surface and surface in answer_vocab
            units.append(
                KbUnit(
                    surface=surface,
                    vocab_id=answer_vocab.id_of(surface) if single else None,
                    cand_rows=tuple(rows[surface]),
                )
            )
        return cls(units)


@dataclass(frozen=True)
class TargetStep:
    """One teacher-forcing target: a surface and, when the common vocabulary
    can name it directly, its id there."""

    surface: str
    vocab_id: int | None


def build_target_steps(
    answer: TokenSequence,
    object_span: tuple[int, int] | None,
    answer_vocab: Vocabulary,
    collapse_object: bool = True,
) -> tuple[TargetStep, ...]:
    """Teacher-forcing targets for an answer, ending with EOS.

    With ``collapse_object`` the tokens inside the object span become a
    single knowledge-word unit. Without it (the no-knowledge ablation) the
    answer is ordinary text.
    """
    steps: list[TargetStep] = []

    def common(tok: str) -> TargetStep:
        return TargetStep(tok, answer_vocab.id_of(tok))

    if collapse_object and object_span is not None and object_span[1] > object_span[0]:
        lo, hi = object_span
        steps.extend(common(t) for t in answer.surfaces[:lo])
        surface = " ".join(answer.surfaces[lo:hi])
        in_common = hi - lo == 1 and surface in answer_vocab
        steps.append(TargetStep(surface, answer_vocab.id_of(surface) if in_common else None))
        steps.extend(common(t) for t in answer.surfaces[hi:])
    else:
        steps.extend(common(t) for t in answer.surfaces)
    steps.append(TargetStep(EOS, EOS_ID))
    return tuple(steps)


class Attention:
    """Additive alignment over the contextual part of the encoder memory."""

    def __init__(self, mem_w: Tensor, state_w: Tensor, b: Tensor, v: Tensor):
        self.mem_w = mem_w
        self.state_w = state_w
        self.b = b
        self.v = v

    @classmethod
    def create(cls, rng, context_size: int, state_size: int, hidden: int, dtype) -> "Attention":
        return cls(
            mem_w=init_matrix(rng, (context_size, hidden), dtype),
            state_w=init_matrix(rng, (state_size, hidden), dtype),
            b=zeros((hidden,), dtype),
            v=init_matrix(rng, (hidden,), dtype),
        )

    def slots(self) -> dict[str, Tensor]:
        return {
            "dec.attn.mem_w": self.mem_w,
            "dec.attn.state_w": self.state_w,
            "dec.attn.b": self.b,
            "dec.attn.v": self.v,
        }

    def weights(self, s_prev: Tensor, states: Tensor) -> Tensor:
        """Softmax-normalized alignment of the previous state to each position."""
        proj = T.matmul(states, self.mem_w)
        shift = T.vecmat(s_prev, self.state_w) + self.b
        return T.softmax(T.matvec(T.tanh(T.add(proj, shift)), self.v))

    def context(self, alpha: Tensor, states: Tensor) -> Tensor:
        return T.vecmat(alpha, states)


@dataclass(frozen=True)
class DecoderState:
    """Recurrent state between emission steps."""

    s: np.ndarray
    t: int
    prev_vocab_id: int
    prev_from_kb: bool


@dataclass(frozen=True)
class MixtureStepDistribution:
    """One step's emission distribution over the union vocabulary.

    ``dense`` holds the mixed probability for every common-vocabulary id
    (knowledge mass for in-vocabulary objects is already folded in);
    ``extra`` carries the knowledge-only units as (unit index, probability).
    """

    switch: float
    common: np.ndarray
    kb: tuple[tuple[str, float], ...]
    dense: np.ndarray
    extra: tuple[tuple[int, float], ...]

    def union_sum(self) -> float:
        return float(self.dense.sum() + sum(p for _, p in self.extra))

    def kb_share(self, surface: str) -> float:
        """Probability contributed by the knowledge branch for a surface."""
        for s, mass in self.kb:
            if s == surface:
                return self.switch * mass
        return 0.0


class Decoder:
    """GRU generator over the union of common words and candidate objects."""

    def __init__(
        self,
        embed: Tensor,
        s0_w: Tensor,
        s0_b: Tensor,
        gru: GRUCell,
        attn: Attention,
        out_w: Tensor,
        out_b: Tensor,
        sw_w: Tensor,
        sw_b: Tensor,
    ):
        self.embed = embed
        self.s0_w = s0_w
        self.s0_b = s0_b
        self.gru = gru
        self.attn = attn
        self.out_w = out_w
        self.out_b = out_b
        self.sw_w = sw_w
        self.sw_b = sw_b

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        vocab_size: int,
        embed_size: int,
        hidden_size: int,
        context_size: int,
        dtype,
        attn_hidden: int | None = None,
    ) -> "Decoder":
        attn_hidden = attn_hidden or hidden_size
        return cls(
            embed=init_matrix(rng, (vocab_size, embed_size), dtype),
            s0_w=init_matrix(rng, (context_size, hidden_size), dtype),
            s0_b=zeros((hidden_size,), dtype),
            gru=GRUCell.create(rng, embed_size + context_size, hidden_size, dtype),
            attn=Attention.create(rng, context_size, hidden_size, attn_hidden, dtype),
            out_w=init_matrix(rng, (hidden_size + context_size + embed_size, vocab_size), dtype),
            out_b=zeros((vocab_size,), dtype),
            sw_w=init_matrix(rng, (hidden_size,), dtype),
            sw_b=zeros((), dtype),
        )

    def slots(self) -> dict[str, Tensor]:
        out = {
            "embed.answer": self.embed,
            "dec.s0_w": self.s0_w,
            "dec.s0_b": self.s0_b,
            "dec.out_w": self.out_w,
            "dec.out_b": self.out_b,
            "dec.sw_w": self.sw_w,
            "dec.sw_b": self.sw_b,
        }
        for name, t in self.gru.slots().items():
            out[f"dec.gru.{name}"] = t
        out.update(self.attn.slots())
        return out

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    def initial_state(self, encoded: EncodedQuestion) -> Tensor:
        return T.vecmat(T.mean_rows(encoded.states), self.s0_w) + self.s0_b

    def advance(
        self, s_prev: Tensor, prev_emb: Tensor, encoded: EncodedQuestion
    ) -> tuple[Tensor, Tensor, Tensor]:
        """One recurrence: attention context from s_{t-1}, then the GRU."""
        alpha = self.attn.weights(s_prev, encoded.states)
        context = self.attn.context(alpha, encoded.states)
        s = self.gru.step(T.concat([prev_emb, context]), s_prev)
        return alpha, context, s

    def switch_probability(self, s: Tensor) -> Tensor:
        return T.sigmoid(T.dot(s, self.sw_w) + self.sw_b)

    def sequence_log_prob(
        self,
        encoded: EncodedQuestion,
        kb: KbEmission | None,
        r: Tensor | None,
        steps: Sequence[TargetStep],
        kb_disabled: bool = False,
    ) -> Tensor:
        """Teacher-forced log-probability of the target steps.

        The recurrence runs step by step, but the output projection and both
        softmaxes batch over all steps at once. With the knowledge branch
        disabled (or no candidates) the switch is exactly zero and the
        distribution is the common-vocabulary softmax alone.
        """
        if not steps:
            raise ValueError("no target steps")
        use_kb = not kb_disabled and kb is not None and len(kb) > 0 and r is not None
        if use_kb and len(r.data) != sum(len(u.cand_rows) for u in kb.units):
            raise ValueError(
                f"relevance length {len(r.data)} misaligned with candidate rows"
            )
        s = self.initial_state(encoded)
        prev_emb = T.row(self.embed, BOS_ID)
        rows = []
        states = []
        for step in steps:
            _, context, s = self.advance(s, prev_emb, encoded)
            rows.append(T.concat([s, context, prev_emb]))
            states.append(s)
            prev_emb = T.row(self.embed, step.vocab_id if step.vocab_id is not None else UNK_ID)
        probs = T.softmax_rows(T.add(T.matmul(T.stack(rows), self.out_w), self.out_b))

        total = None
        for t, step in enumerate(steps):
            if not use_kb:
                if step.vocab_id is None:
                    raise GroundingMismatchError(
                        f"target {step.surface!r} needs the knowledge branch, "
                        "which is disabled or empty"
                    )
                p = T.get2(probs, t, step.vocab_id)
            else:
                switch = self.switch_probability(states[t])
                keep = T.add_const(T.neg(switch), 1.0)
                parts = []
                if step.vocab_id is not None:
                    parts.append(keep * T.get2(probs, t, step.vocab_id))
                unit_idx = kb.by_surface.get(step.surface)
                if unit_idx is not None:
                    mass = T.sum_all(T.take(r, kb.units[unit_idx].cand_rows))
                    parts.append(switch * mass)
                if not parts:
                    raise GroundingMismatchError(
                        f"target {step.surface!r} is outside both the common "
                        "vocabulary and the candidate objects"
                    )
                p = parts[0] if len(parts) == 1 else T.add(parts[0], parts[1])
            logp = T.log(p)
            total = logp if total is None else T.add(total, logp)
        return total

    # --- inference ---------------------------------------------------------

    def start(self, encoded: EncodedQuestion) -> DecoderState:
        return DecoderState(
            s=self.initial_state(encoded).data,
            t=0,
            prev_vocab_id=BOS_ID,
            prev_from_kb=False,
        )

    def decode_step(
        self,
        state: DecoderState,
        encoded: EncodedQuestion,
        kb: KbEmission | None,
        r: np.ndarray | None,
        kb_disabled: bool = False,
    ) -> tuple[MixtureStepDistribution, DecoderState]:
        """One emission distribution plus the advanced state (no taping)."""
        use_kb = not kb_disabled and kb is not None and len(kb) > 0 and r is not None
        if use_kb and len(r) != sum(len(u.cand_rows) for u in kb.units):
            raise ValueError(f"relevance length {len(r)} misaligned with candidates")
        prev_emb = T.row(self.embed, state.prev_vocab_id)
        _, context, s = self.advance(T.Tensor(state.s), prev_emb, encoded)
        logits = T.vecmat(T.concat([s, context, prev_emb]), self.out_w) + self.out_b
        common = T.softmax(logits).data
        if use_kb:
            switch = self.switch_probability(s).item()
            kb_masses = tuple(
                (u.surface, float(r[list(u.cand_rows)].sum())) for u in kb.units
            )
        else:
            switch = 0.0
            kb_masses = ()
        dense = (1.0 - switch) * common
        extra = []
        if use_kb:
            for idx, u in enumerate(kb.units):
                p = switch * kb_masses[idx][1]
                if u.vocab_id is not None:
                    dense[u.vocab_id] += p
                else:
                    extra.append((idx, p))
        dist = MixtureStepDistribution(
            switch=switch,
            common=common,
            kb=kb_masses,
            dense=dense,
            extra=tuple(extra),
        )
        next_state = DecoderState(
            s=s.data, t=state.t + 1, prev_vocab_id=state.prev_vocab_id, prev_from_kb=False
        )
        return dist, next_state

    def advanced_state(
        self, state: DecoderState, chosen_vocab_id: int, from_kb: bool
    ) -> DecoderState:
        """Bind the emitted token into the state produced by decode_step."""
        return DecoderState(
            s=state.s, t=state.t, prev_vocab_id=chosen_vocab_id, prev_from_kb=from_kb
        )
