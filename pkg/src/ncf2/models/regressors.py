"""Per-point extrinsic contact regressors.

Three variants over a shared input family:

* ``recurrent``: the v1 baseline; consumes its own previous output p_{t-1}
  next to the window embedding, shape feature, and pose window.
* ``mlp``: feedforward; a three-layer head with output widths [512, 128, 1],
  batch norm + ReLU after the first two layers.
* ``transformer``: feedforward; one token per window frame (tactile latent +
  that frame's pose + the query point's shape feature), encoder-only with two
  layers and two heads at model width 512, then a [128, 1] head on the last
  token.

All variants end in a sigmoid and share weights across query points: outputs
are per-point probabilities of extrinsic contact.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from ..config import NcfConfig

VARIANTS = ("recurrent", "mlp", "transformer")
POSE_DIM = 7
POSE_WINDOW = 3  # poses fed to the feedforward trunk: t-2, t-1, t


class _Trunk(nn.Module):
    """Linear stack with batch norm + ReLU between hidden layers, sigmoid out."""

    def __init__(self, in_dim: int, widths: list[int]):
        super().__init__()
        layers: list[nn.Module] = []
        prev = in_dim
        for w in widths[:-1]:
            layers += [nn.Linear(prev, w), nn.BatchNorm1d(w), nn.ReLU(inplace=True)]
            prev = w
        layers += [nn.Linear(prev, widths[-1])]
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.net(x)).squeeze(-1)


class NcfModel(nn.Module):
    """One estimator variant plus the shared tactile-window embedding."""

    def __init__(self, cfg: NcfConfig, d_z: int = 32, d_r: int = 67):
        super().__init__()
        self.cfg = cfg
        self.variant = cfg.variant
        self.d_z = d_z
        self.d_r = d_r
        self.T = cfg.window
        self.window_embed = nn.Sequential(
            nn.Linear(self.T * d_z, 2 * cfg.embed_dim), nn.ReLU(inplace=True),
            nn.Linear(2 * cfg.embed_dim, cfg.embed_dim),
        )
        base = cfg.embed_dim + d_r + POSE_WINDOW * POSE_DIM
        if self.variant == "mlp":
            self.trunk = _Trunk(base, list(cfg.mlp_widths))
        elif self.variant == "recurrent":
            self.trunk = _Trunk(1 + base, list(cfg.mlp_widths))
        else:
            d = cfg.transformer_dim
            self.token_proj = nn.Linear(d_z + POSE_DIM + d_r, d)
            self.pos_embed = nn.Parameter(torch.zeros(self.T, d))
            layer = nn.TransformerEncoderLayer(
                d_model=d, nhead=cfg.transformer_heads, dim_feedforward=cfg.transformer_ff,
                dropout=0.0, batch_first=True,
            )
            self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.transformer_layers)
            head: list[nn.Module] = []
            prev = d
            for w in cfg.head_widths[:-1]:
                head += [nn.Linear(prev, w), nn.ReLU(inplace=True)]
                prev = w
            head += [nn.Linear(prev, cfg.head_widths[-1])]
            self.head = nn.Sequential(*head)

    def forward(
        self,
        z_seq: torch.Tensor,  # (B, T, d_z)
        poses_seq: torch.Tensor,  # (B, T, 7)
        r: torch.Tensor,  # (B, P, d_r)
        p_prev: torch.Tensor | None = None,  # (B, P) for the recurrent variant
    ) -> torch.Tensor:
        B, T, _ = z_seq.shape
        P = r.shape[1]
        if T != self.T:
            raise ValueError(f"expected window of {self.T} frames, got {T}")
        if self.variant in ("mlp", "recurrent"):
            g = self.window_embed(z_seq.reshape(B, -1))  # (B, embed)
            e_flat = poses_seq[:, -POSE_WINDOW:].reshape(B, POSE_WINDOW * POSE_DIM)
            shared = torch.cat([g, e_flat], dim=1)  # (B, embed + 21)
            x = torch.cat([shared[:, None].expand(B, P, -1), r], dim=2)
            if self.variant == "recurrent":
                if p_prev is None:
                    raise ValueError("recurrent variant requires p_prev")
                x = torch.cat([p_prev[..., None], x], dim=2)
            elif p_prev is not None:
                raise ValueError("feedforward variants do not accept p_prev")
            return self.trunk(x.reshape(B * P, -1)).reshape(B, P)
        if p_prev is not None:
            raise ValueError("feedforward variants do not accept p_prev")
        tokens = torch.cat(
            [
                z_seq[:, None].expand(B, P, T, self.d_z),
                poses_seq[:, None].expand(B, P, T, POSE_DIM),
                r[:, :, None].expand(B, P, T, self.d_r),
            ],
            dim=3,
        )
        h = self.token_proj(tokens.reshape(B * P, T, -1)) + self.pos_embed
        h = self.encoder(h)
        out = self.head(h[:, -1])
        return torch.sigmoid(out).reshape(B, P)


def regress(
    model: NcfModel,
    window_inputs: tuple[np.ndarray, np.ndarray],
    query_features: np.ndarray,
    p_prev: np.ndarray | None = None,
) -> np.ndarray:
    """Numpy-facing single-window inference: returns n probabilities in (0, 1)."""
    z_seq, poses_seq = window_inputs
    dtype = next(model.parameters()).dtype
    zt = torch.as_tensor(np.asarray(z_seq), dtype=dtype)[None]
    pt = torch.as_tensor(np.asarray(poses_seq), dtype=dtype)[None]
    rt = torch.as_tensor(np.asarray(query_features), dtype=dtype)[None]
    prev = None if p_prev is None else torch.as_tensor(np.asarray(p_prev), dtype=dtype)[None]
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(zt, pt, rt, prev)
    finally:
        model.train(was_training)
    return out[0].numpy()


def bce_loss(pred: torch.Tensor, labels: torch.Tensor, pos_weight: float = 1.0) -> torch.Tensor:
    """Weighted binary cross entropy, mean over all points and steps.

    Predictions are clipped to [1e-7, 1 - 1e-7]; the positive-class terms are
    scaled by ``pos_weight`` while the normalizer stays the element count, so
    ``pos_weight == 1`` reduces to the plain mean.
    """
    p = pred.clamp(1e-7, 1.0 - 1e-7)
    y = labels.to(p.dtype)
    terms = pos_weight * y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)
    return -terms.mean()
