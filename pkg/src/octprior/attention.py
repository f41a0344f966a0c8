"""Sigmoid-gated predilection weighting and cross-attention fusion.

The learnable prior holds pre-sigmoid logits; its gated form reweights
OCT embeddings entry-wise during training, and replaces them outright as
the attention query source at inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Matrix
from .errors import ShapeError


@dataclass
class PredilectionMatrix:
    """Trainable n x d pre-sigmoid logits of the spatial prior."""

    logits: Matrix

    @property
    def shape(self):
        return self.logits.shape

    def gated(self) -> Matrix:
        """sigmoid(logits); entries strictly in (0, 1)."""
        return ad.sigmoid(self.logits)


@dataclass
class AttentionHead:
    """Single-head query/key/value projections, each d x d."""

    w_query: Matrix
    w_key: Matrix
    w_value: Matrix

    def __post_init__(self):
        for name, w in (("w_query", self.w_query), ("w_key", self.w_key), ("w_value", self.w_value)):
            if w.rows != w.cols:
                raise ShapeError(f"{name} must be square, got {w.shape}")


@dataclass
class FusionOutput:
    query_source: Matrix  # n x d features the query was built from
    weights: Matrix  # n x n row-stochastic attention
    refined: Matrix  # n x d attention-weighted value rows


def gate(prior: PredilectionMatrix, oct_embedding: Matrix) -> Matrix:
    """Entry-wise product of the OCT embedding with the sigmoid-gated prior."""
    if prior.shape != oct_embedding.shape:
        raise ShapeError(
            f"prior shape {prior.shape} does not match embedding shape {oct_embedding.shape}"
        )
    return ad.hadamard(oct_embedding, prior.gated())


def cross_attend(head: AttentionHead, query_src: Matrix, text_embedding: Matrix) -> FusionOutput:
    """Scaled dot-product cross-attention from the query source onto text rows."""
    if query_src.shape != text_embedding.shape:
        raise ShapeError(
            f"query source {query_src.shape} and text embedding "
            f"{text_embedding.shape} must share shape"
        )
    d = query_src.cols
    q = ad.matmul(query_src, head.w_query)
    k = ad.matmul(text_embedding, head.w_key)
    v = ad.matmul(text_embedding, head.w_value)
    logits = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d))
    weights = ad.softmax_rows(logits)
    refined = ad.matmul(weights, v)
    return FusionOutput(query_source=query_src, weights=weights, refined=refined)


def training_query(prior: PredilectionMatrix, oct_embedding: Matrix) -> Matrix:
    """Training-time query source: the gated OCT embedding."""
    return gate(prior, oct_embedding)


def inference_query(prior: PredilectionMatrix) -> Matrix:
    """Inference-time query source: the gated prior itself, gradient-detached."""
    return ad.sigmoid(Matrix(prior.logits.array))
