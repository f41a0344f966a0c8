"""Parameter container tying encoders, prior, and attention head together.

The model stores plain float64 arrays keyed by stable names. Each
training step binds those arrays onto a fresh tape; inference binds them
as constants. Attention projections start at identity so the untrained
fusion path passes text features through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionHead, PredilectionMatrix
from .autodiff import Matrix, Tape
from .encoders import Encoder, TextVocabulary, token_index_from_tokens, vocabulary_tokens
from .errors import ContractError
from .synthetic import DiseaseSpec

PARAM_NAMES = (
    "fundus_encoder.weight",
    "fundus_encoder.bias",
    "oct_encoder.weight",
    "oct_encoder.bias",
    "text_encoder.weight",
    "text_encoder.bias",
    "text_embedding.table",
    "prior.logits",
    "attention.w_query",
    "attention.w_key",
    "attention.w_value",
)


@dataclass
class BoundModel:
    """Model parameters wrapped as matrices on one tape (or as constants)."""

    fundus_encoder: Encoder
    oct_encoder: Encoder
    text_encoder: Encoder
    vocab: TextVocabulary
    prior: PredilectionMatrix
    head: AttentionHead
    tape: Tape | None


@dataclass
class PredilectionModel:
    """Named parameter tensors plus the token list and grid dimensions."""

    n: int
    d: int
    tokens: list[str]  # without the reserved OOV slot
    class_ids: tuple[int, ...]
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, world: list[DiseaseSpec], n: int, d: int, seed: int) -> "PredilectionModel":
        if not world:
            raise ContractError("world is empty")
        rng = np.random.default_rng([int(seed), 10])
        tokens = vocabulary_tokens(p for spec in world for p in spec.prompt_bank)
        vocab_rows = len(tokens) + 1
        lim = np.sqrt(6.0 / (2.0 * d))
        params = {}
        for modality in ("fundus", "oct", "text"):
            params[f"{modality}_encoder.weight"] = rng.uniform(-lim, lim, size=(d, d))
            params[f"{modality}_encoder.bias"] = np.zeros((1, d))
        params["text_embedding.table"] = rng.uniform(-0.5, 0.5, size=(vocab_rows, d))
        params["prior.logits"] = rng.uniform(-0.1, 0.1, size=(n, d))
        for name in ("attention.w_query", "attention.w_key", "attention.w_value"):
            params[name] = np.eye(d)
        return cls(
            n=n,
            d=d,
            tokens=tokens,
            class_ids=tuple(spec.class_id for spec in world),
            params=params,
        )

    def copy(self) -> "PredilectionModel":
        return PredilectionModel(
            n=self.n,
            d=self.d,
            tokens=list(self.tokens),
            class_ids=tuple(self.class_ids),
            params={k: v.copy() for k, v in self.params.items()},
        )

    def bind(self, tape: Tape | None = None) -> BoundModel:
        """Wrap parameters as tape-tracked matrices (or constants if no tape)."""

        def wrap(name):
            arr = self.params[name]
            return tape.parameter(arr, name) if tape is not None else Matrix(arr)

        encoders = {
            m: Encoder(
                weight=wrap(f"{m}_encoder.weight"),
                bias=wrap(f"{m}_encoder.bias"),
                modality=m,
            )
            for m in ("fundus", "oct", "text")
        }
        vocab = TextVocabulary(
            token_index_from_tokens(self.tokens), wrap("text_embedding.table")
        )
        prior = PredilectionMatrix(logits=wrap("prior.logits"))
        head = AttentionHead(
            w_query=wrap("attention.w_query"),
            w_key=wrap("attention.w_key"),
            w_value=wrap("attention.w_value"),
        )
        return BoundModel(
            fundus_encoder=encoders["fundus"],
            oct_encoder=encoders["oct"],
            text_encoder=encoders["text"],
            vocab=vocab,
            prior=prior,
            head=head,
            tape=tape,
        )

    def apply_gradients(self, grads: dict[str, Matrix], lr: float):
        """One plain SGD step: p <- p - lr * g for every named tensor."""
        for name, g in grads.items():
            if name not in self.params:
                raise ContractError(f"gradient for unknown parameter {name!r}")
            if g.shape != self.params[name].shape:
                raise ContractError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name!r} shape {self.params[name].shape}"
                )
            self.params[name] = self.params[name] - lr * g.array
