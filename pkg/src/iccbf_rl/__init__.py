"""Two-stage RL-tuned input-constrained control barrier function toolkit."""

import jax

# Barrier chains and gradient checks need 64-bit arithmetic throughout.
jax.config.update("jax_enable_x64", True)
jax.config.update("jax_platforms", "cpu")

__version__ = "0.1.0"
