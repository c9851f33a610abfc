"""Symmetric InfoNCE loss for image-text contrastive batches."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def symmetric_infonce(logits: torch.Tensor) -> torch.Tensor:
    """Contrastive loss over a B x B similarity matrix.

    Entry (i, j) is the scaled similarity of image i with text j; the
    diagonal holds the matching pairs. The loss averages the image-to-text
    and text-to-image cross entropies, so it is invariant under transposing
    the logits and under any simultaneous permutation of rows and columns.

    For an all-zero matrix the loss is exactly ln(B).
    """
    if logits.ndim != 2 or logits.shape[0] != logits.shape[1]:
        raise ValueError(f"logits must be square, got shape {tuple(logits.shape)}")
    targets = torch.arange(logits.shape[0], device=logits.device)
    image_to_text = F.cross_entropy(logits, targets)
    text_to_image = F.cross_entropy(logits.t(), targets)
    return (image_to_text + text_to_image) / 2.0
