"""In-batch contrastive objectives and their weighted total.

The loss is one-directional (anchor -> target), with the batch's targets
serving as negatives, averaged over anchors. An optional mirrored term
can be switched on for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Matrix
from .errors import ContractError, ShapeError


@dataclass(frozen=True)
class LossWeights:
    """Weights of the two contrastive branches and the shared temperature."""

    lambda1: float = 0.4  # fundus <-> gated-OCT branch
    lambda2: float = 0.6  # fundus <-> text branch
    tau: float = 0.07
    symmetric: bool = False  # add the mirrored target -> anchor term

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ContractError("branch weights must be non-negative")
        if self.lambda1 + self.lambda2 <= 0:
            raise ContractError("at least one branch weight must be positive")
        if self.tau <= 0:
            raise ContractError(f"temperature must be positive, got {self.tau}")


@dataclass
class BatchEmbeddings:
    """Pooled per-sample rows for one batch, one B x d matrix per branch."""

    fundus: Matrix
    gated_oct: Matrix
    text: Matrix

    def __post_init__(self):
        b = self.fundus.rows
        if b < 2:
            raise ContractError(f"batch must hold >= 2 samples, got {b}")
        for name, m in (("gated_oct", self.gated_oct), ("text", self.text)):
            if m.rows != b:
                raise ShapeError(
                    f"{name} has {m.rows} rows, expected {b} to match fundus"
                )


def pool(tokens: Matrix) -> Matrix:
    """Mean over token rows, producing one 1 x d row per sample."""
    return ad.mean_rows(tokens)


def contrastive_loss(anchors: Matrix, targets: Matrix, tau: float) -> Matrix:
    """Mean over anchors of -log softmax(sim(anchor, target)/tau) at the positive.

    Anchor i's positive is target i; every other target in the batch is a
    negative. Similarity is cosine, so the loss is invariant to positive
    rescaling of any row.
    """
    anchors = anchors if isinstance(anchors, Matrix) else Matrix(anchors)
    targets = targets if isinstance(targets, Matrix) else Matrix(targets)
    if anchors.shape != targets.shape:
        raise ShapeError(
            f"anchors {anchors.shape} and targets {targets.shape} must share shape"
        )
    if anchors.rows < 2:
        raise ContractError(f"need >= 2 rows for in-batch negatives, got {anchors.rows}")
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    sims = ad.matmul(ad.normalize_rows(anchors), ad.transpose(ad.normalize_rows(targets)))
    logits = ad.scale(sims, 1.0 / tau)
    per_anchor = ad.sub(ad.logsumexp_rows(logits), ad.take_diag(logits))
    return ad.mean_entries(per_anchor)


def total_loss(batch: BatchEmbeddings, w: LossWeights) -> Matrix:
    """Weighted sum of the fundus<->gated-OCT and fundus<->text branches."""

    def branch(anchors, targets):
        loss = contrastive_loss(anchors, targets, w.tau)
        if w.symmetric:
            mirrored = contrastive_loss(targets, anchors, w.tau)
            loss = ad.scale(ad.add(loss, mirrored), 0.5)
        return loss

    oct_term = ad.scale(branch(batch.fundus, batch.gated_oct), w.lambda1)
    text_term = ad.scale(branch(batch.fundus, batch.text), w.lambda2)
    return ad.add(oct_term, text_term)
