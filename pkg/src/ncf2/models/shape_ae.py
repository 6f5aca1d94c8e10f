"""Point-cloud autoencoder: the per-object global shape latent.

Stands in for a pretrained per-point descriptor network: the per-query-point
feature is the query point's own grasp-frame coordinates concatenated with
this autoencoder's 64-D global latent for the object's surface cloud.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class PointCloudAutoencoder(nn.Module):
    def __init__(self, latent_dim: int = 64, out_points: int = 512):
        super().__init__()
        self.latent_dim = latent_dim
        self.out_points = out_points
        self.point_mlp = nn.Sequential(
            nn.Linear(3, 64), nn.ReLU(inplace=True),
            nn.Linear(64, 128), nn.ReLU(inplace=True),
        )
        self.to_latent = nn.Linear(128, latent_dim)
        self.decoder = nn.Sequential(
            nn.Linear(latent_dim, 256), nn.ReLU(inplace=True),
            nn.Linear(256, out_points * 3),
        )

    def encode(self, clouds: torch.Tensor) -> torch.Tensor:
        """(B, N, 3) surface clouds to (B, latent_dim) via max-pooled point MLP."""
        feat = self.point_mlp(clouds).max(dim=1).values
        return self.to_latent(feat)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        return self.decoder(latent).view(-1, self.out_points, 3)

    def forward(self, clouds: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z = self.encode(clouds)
        return self.decode(z), z


def chamfer_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Symmetric squared-distance Chamfer between (B, N, 3) and (B, M, 3)."""
    d = torch.cdist(a, b) ** 2
    return d.min(dim=2).values.mean() + d.min(dim=1).values.mean()
