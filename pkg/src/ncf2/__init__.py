"""Synthetic extrinsic-contact estimation and contact-guided insertion policies."""

__version__ = "0.1.0"
