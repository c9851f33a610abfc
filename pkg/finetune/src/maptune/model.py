"""Trainable two-tower encoder used by the harness.

This is the stand-in for a real pretrained multimodal model: two linear
projections into a shared space with a frozen temperature. The training
loop only relies on the (images, texts) -> logits interface, so a wrapper
around an actual CLIP-style model can be dropped in unchanged.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class TwoTowerEncoder(nn.Module):
    # ln(1/0.07): the customary contrastive temperature; frozen so a tiny
    # dataset cannot collapse the logit scale.
    DEFAULT_LOG_SCALE = math.log(1.0 / 0.07)

    def __init__(
        self,
        embed_dim: int = 64,
        image_size: int = 16,
        text_buckets: int = 512,
        log_logit_scale: float | None = None,
        train_logit_scale: bool = False,
    ):
        super().__init__()
        self.image_size = image_size
        self.text_buckets = text_buckets
        self.image_proj = nn.Linear(3 * image_size * image_size, embed_dim)
        self.text_proj = nn.Linear(text_buckets, embed_dim)
        scale = self.DEFAULT_LOG_SCALE if log_logit_scale is None else log_logit_scale
        self.log_logit_scale = nn.Parameter(
            torch.tensor(float(scale)), requires_grad=train_logit_scale
        )

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return nn.functional.normalize(self.image_proj(images), dim=-1)

    def encode_text(self, texts: torch.Tensor) -> torch.Tensor:
        return nn.functional.normalize(self.text_proj(texts), dim=-1)

    def forward(self, images: torch.Tensor, texts: torch.Tensor) -> torch.Tensor:
        """B x B logits: row i scores image i against every text."""
        image_emb = self.encode_image(images)
        text_emb = self.encode_text(texts)
        return self.log_logit_scale.exp() * (image_emb @ text_emb.t())
