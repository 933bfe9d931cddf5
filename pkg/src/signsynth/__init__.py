"""Desk-scale sign-language avatar synthesis with a conditional latent diffusion model.

Everything runs on 64-bit floats with hand-written backward passes so that
gradients, training trajectories, and sampled clips are reproducible bit for
bit at a fixed seed and thread count 1.  Import submodules directly, e.g.
``from signsynth.metrics import psnr``; this package module stays import-light
so the CLI can pin BLAS thread counts before numpy loads.
"""

__version__ = "0.1.0"
