"""lamward: latent-action world models on procedural sprite videos.

The package trains a joint inverse-dynamics + forward model whose latent
actions are squeezed through one of three information regularizers (sparse
variance/covariance/magnitude, noisy KL, discrete vector quantization),
then probes what leaked into the latents with capacity sweeps, scene-cut
stitching, cross-video cycles, a learned action controller, CEM planning,
and latent-space samplers.  Everything runs on float64 numpy with a
hand-rolled reverse-mode tape; there is no framework underneath.
"""

__version__ = "0.1.0"

from .rng import Rng
from .tensor import Tensor, grad, no_grad

__all__ = ["Rng", "Tensor", "grad", "no_grad", "__version__"]
