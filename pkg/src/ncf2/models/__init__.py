from .vae import TactileVAE, TactileLatent, encode_tactile, vae_loss
from .shape_ae import PointCloudAutoencoder, chamfer_distance
from .regressors import NcfModel, bce_loss, regress

__all__ = [
    "TactileVAE",
    "TactileLatent",
    "encode_tactile",
    "vae_loss",
    "PointCloudAutoencoder",
    "chamfer_distance",
    "NcfModel",
    "bce_loss",
    "regress",
]
