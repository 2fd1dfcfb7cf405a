"""Bidirectional GRU question encoder.

Encoding a question yields one record per token: the concatenated
forward/backward hidden states (the contextual part read by attention and
candidate scoring), the token embedding, and the raw token id. The id stands
in for a one-hot component; materializing vocabulary-sized vectors per
position would change nothing mathematically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def init_matrix(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> Tensor:
    """Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_in, fan_out = shape
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape).astype(dtype, copy=False))


def zeros(shape: tuple[int, ...], dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


class GRUCell:
    """Standard GRU: update/reset gates and a tanh candidate state.

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        c = tanh(x Wc + (r * h) Uc + bc)
        h' = (1 - z) * h + z * c
    """

    GATES = ("z", "r", "c")

    def __init__(self, weights: dict[str, Tensor]):
        self.w = weights

    @classmethod
    def create(cls, rng: np.random.Generator, input_size: int, hidden_size: int, dtype) -> "GRUCell":
        w = {}
        for gate in cls.GATES:
            w[f"wx_{gate}"] = init_matrix(rng, (input_size, hidden_size), dtype)
            w[f"wh_{gate}"] = init_matrix(rng, (hidden_size, hidden_size), dtype)
            w[f"b_{gate}"] = zeros((hidden_size,), dtype)
        return cls(w)

    def slots(self) -> dict[str, Tensor]:
        return dict(self.w)

    @property
    def hidden_size(self) -> int:
        return self.w["b_z"].shape[0]

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        w = self.w
        update = T.sigmoid(T.vecmat(x, w["wx_z"]) + T.vecmat(h, w["wh_z"]) + w["b_z"])
        reset = T.sigmoid(T.vecmat(x, w["wx_r"]) + T.vecmat(h, w["wh_r"]) + w["b_r"])
        cand = T.tanh(T.vecmat(x, w["wx_c"]) + T.vecmat(reset * h, w["wh_c"]) + w["b_c"])
        # h + z * (c - h) == (1 - z) * h + z * c
        return h + update * (cand - h)


@dataclass(frozen=True)
class EncodedQuestion:
    """Per-token memory produced by the encoder.

    states:  (T, 2 * hidden) forward/backward concatenation per position
    embeds:  (T, embed) token embeddings
    ids:     token ids, the compact stand-in for one-hot vectors
    """

    states: Tensor
    embeds: Tensor
    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


class QuestionEncoder:
    """Embedding table plus forward and backward GRUs over the question."""

    def __init__(self, embed: Tensor, forward: GRUCell, backward: GRUCell):
        self.embed = embed
        self.forward = forward
        self.backward = backward

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        vocab_size: int,
        embed_size: int,
        hidden_size: int,
        dtype,
    ) -> "QuestionEncoder":
        return cls(
            embed=init_matrix(rng, (vocab_size, embed_size), dtype),
            forward=GRUCell.create(rng, embed_size, hidden_size, dtype),
            backward=GRUCell.create(rng, embed_size, hidden_size, dtype),
        )

    def slots(self) -> dict[str, Tensor]:
        out = {"embed.question": self.embed}
        for name, t in self.forward.slots().items():
            out[f"enc.fwd.{name}"] = t
        for name, t in self.backward.slots().items():
            out[f"enc.bwd.{name}"] = t
        return out

    def encode(self, ids: Sequence[int]) -> EncodedQuestion:
        """Run both directions from zero states and concatenate per position."""
        if len(ids) == 0:
            raise ValueError("cannot encode an empty question")
        dtype = self.embed.dtype
        hidden = self.forward.hidden_size
        embeds = T.take_rows(self.embed, ids)
        xs = [T.row(embeds, t) for t in range(len(ids))]

        h = zeros((hidden,), dtype)
        fwd_states = []
        for x in xs:
            h = self.forward.step(x, h)
            fwd_states.append(h)

        h = zeros((hidden,), dtype)
        bwd_states: list[Tensor] = [None] * len(ids)  # type: ignore[list-item]
        for t in range(len(ids) - 1, -1, -1):
            h = self.backward.step(xs[t], h)
            bwd_states[t] = h

        states = T.stack([T.concat([f, b]) for f, b in zip(fwd_states, bwd_states)])
        return EncodedQuestion(states=states, embeds=embeds, ids=tuple(ids))
