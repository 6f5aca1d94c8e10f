"""Variational encoder for background-subtracted tactile images.

Inputs are difference images in [-1, 1] (H x W x 3); the latent is 32-D.
At inference the embedding is the posterior mean; sampling is only used
during training, with an explicitly seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

LOGVAR_CLAMP = 10.0


@dataclass
class TactileLatent:
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray


class TactileVAE(nn.Module):
    def __init__(self, latent_dim: int = 32, height: int = 64, width: int = 48):
        super().__init__()
        if height % 16 or width % 16:
            raise ValueError("image sides must be divisible by 16")
        self.latent_dim = latent_dim
        self.height = height
        self.width = width
        ch = (32, 64, 128, 256)
        enc = []
        prev = 3
        for c in ch:
            enc += [nn.Conv2d(prev, c, 4, stride=2, padding=1), nn.ReLU(inplace=True)]
            prev = c
        self.encoder = nn.Sequential(*enc)
        self._feat = (ch[-1], height // 16, width // 16)
        flat = int(np.prod(self._feat))
        self.fc_mu = nn.Linear(flat, latent_dim)
        self.fc_logvar = nn.Linear(flat, latent_dim)
        self.fc_dec = nn.Linear(latent_dim, flat)
        dec = []
        chs = (256, 128, 64, 32)
        for i, c in enumerate(chs[1:] + (3,)):
            dec += [nn.ConvTranspose2d(chs[i], c, 4, stride=2, padding=1)]
            if c != 3:
                dec += [nn.ReLU(inplace=True)]
        dec += [nn.Tanh()]
        self.decoder = nn.Sequential(*dec)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.encoder(x).flatten(1)
        mu = self.fc_mu(h)
        logvar = self.fc_logvar(h).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
        return mu, logvar

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        h = self.fc_dec(z).view(-1, *self._feat)
        return self.decoder(h)

    def forward(self, x: torch.Tensor, generator: torch.Generator | None = None):
        mu, logvar = self.encode(x)
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
        z = mu + torch.exp(0.5 * logvar) * eps
        return self.decode(z), mu, logvar, z


def vae_loss(inputs: torch.Tensor, reconstruction: torch.Tensor, mu: torch.Tensor,
             logvar: torch.Tensor, beta: float) -> torch.Tensor:
    """Mean-squared reconstruction error plus beta-weighted KL to N(0, I).

    The KL term is summed over latent dimensions and averaged over the batch;
    the reconstruction term is a plain mean over all pixels.
    """
    if inputs.shape != reconstruction.shape:
        raise ValueError("input/reconstruction shape mismatch")
    recon = torch.mean((inputs - reconstruction) ** 2)
    kl = -0.5 * torch.sum(1 + logvar - mu**2 - torch.exp(logvar), dim=1).mean()
    return recon + beta * kl


def to_tensor(diff_images: np.ndarray) -> torch.Tensor:
    """(..., H, W, 3) difference image(s) to a (B, 3, H, W) float tensor."""
    arr = np.asarray(diff_images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def encode_tactile(model: TactileVAE, diff_image: np.ndarray, seed: int | None = None) -> TactileLatent:
    """Embed one background-subtracted image; z = mu unless a seed is given."""
    arr = np.asarray(diff_image)
    if arr.shape != (model.height, model.width, 3):
        raise ValueError(f"expected ({model.height}, {model.width}, 3), got {arr.shape}")
    if arr.min() < -1.0 or arr.max() > 1.0:
        raise ValueError("difference image out of [-1, 1]")
    with torch.no_grad():
        mu, logvar = model.encode(to_tensor(arr))
        if seed is None:
            z = mu
        else:
            gen = torch.Generator().manual_seed(seed)
            eps = torch.randn(mu.shape, generator=gen, dtype=mu.dtype)
            z = mu + torch.exp(0.5 * logvar) * eps
    return TactileLatent(mu[0].numpy(), logvar[0].numpy(), z[0].numpy())


def encode_batch(model: TactileVAE, diff_images: np.ndarray, batch: int = 256) -> np.ndarray:
    """Posterior means for (L, H, W, 3) difference images, as (L, d_z)."""
    outs = []
    with torch.no_grad():
        for i in range(0, len(diff_images), batch):
            mu, _ = model.encode(to_tensor(diff_images[i : i + batch]))
            outs.append(mu.numpy())
    return np.concatenate(outs, axis=0)
