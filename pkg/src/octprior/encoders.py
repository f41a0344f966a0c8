"""Toy trainable encoders mapping raw modality grids to token embeddings.

Each image encoder is a single row-wise affine map followed by tanh, so
outputs keep the input's n x d shape and stay bounded in (-1, 1). The
text path looks tokens up in a trainable embedding table, mean-pools them
to one row, and tiles that row to n identical token rows.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Matrix
from .errors import ContractError, ShapeError

MODALITIES = ("fundus", "oct", "text")

# Index 0 of every embedding table is reserved for out-of-vocabulary tokens.
OOV_INDEX = 0


@dataclass
class Encoder:
    """Affine + tanh stand-in for a per-modality deep encoder."""

    weight: Matrix  # d x d
    bias: Matrix  # 1 x d
    modality: str

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ContractError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.weight.rows != self.weight.cols:
            raise ShapeError(f"encoder weight must be square, got {self.weight.shape}")
        if self.bias.shape != (1, self.weight.cols):
            raise ShapeError(
                f"encoder bias must be 1x{self.weight.cols}, got {self.bias.shape}"
            )


def encode(enc: Encoder, raw) -> Matrix:
    """Row-wise affine map followed by tanh; output shape equals input shape."""
    raw = raw if isinstance(raw, Matrix) else Matrix(raw)
    if raw.cols != enc.weight.rows:
        raise ShapeError(
            f"input width {raw.cols} does not match encoder width {enc.weight.rows}"
        )
    return ad.tanh(ad.add_rowvec(ad.matmul(raw, enc.weight), enc.bias))


class TextVocabulary:
    """Whitespace-token table plus a trainable V x d embedding table.

    Unknown tokens map to the reserved index 0.
    """

    def __init__(self, token_index: dict[str, int], table: Matrix):
        self.token_index = dict(token_index)
        self.table = table
        if any(i <= 0 or i >= table.rows for i in self.token_index.values()):
            raise ContractError("token indices must lie in [1, table rows)")

    @property
    def size(self) -> int:
        return self.table.rows

    def lookup(self, token: str) -> int:
        return self.token_index.get(token, OOV_INDEX)

    def tokens(self) -> list[str]:
        """Token list in index order, with the OOV sentinel at position 0."""
        ordered = [""] * self.size
        for tok, i in self.token_index.items():
            ordered[i] = tok
        return ordered


def vocabulary_tokens(prompts) -> list[str]:
    """Collect distinct whitespace tokens in first-seen order."""
    seen = {}
    for prompt in prompts:
        for tok in prompt.split():
            if tok not in seen:
                seen[tok] = len(seen)
    return list(seen)


def token_index_from_tokens(tokens) -> dict[str, int]:
    return {tok: i + 1 for i, tok in enumerate(tokens)}


def encode_text(vocab: TextVocabulary, prompt: str, n: int) -> Matrix:
    """Tokenize, look up, mean-pool to one row, and tile to n identical rows."""
    if n < 1:
        raise ContractError(f"token row count must be >= 1, got {n}")
    tokens = prompt.split()
    if not tokens:
        raise ContractError("prompt is empty")
    indices = [vocab.lookup(t) for t in tokens]
    pooled = ad.mean_rows(ad.gather_rows(vocab.table, indices))
    return ad.tile_rows(pooled, n)
