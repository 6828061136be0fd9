"""Gradient-guided suggestive annotation for image segmentation.

A VAE learns the latent manifold of an unlabeled image pool; a mini U-Net
is trained on a growing labeled subset; each iteration follows the
segmentation-loss gradient through image space into latent space to pick
the next samples to annotate. Includes simulated-oracle experiments, an
evaluation/statistics toolkit, a CLI, and an HTTP annotation service.
"""

__version__ = "0.1.0"

from .backend import BACKEND  # noqa: F401
