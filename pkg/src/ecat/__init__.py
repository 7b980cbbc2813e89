"""ecat: joint image compression and classification codec.

An image is analyzed into a quantized latent, entropy coded to a real
bitstream, and on the receiving side either classified directly from the
latent by a transformer or reconstructed via feature aggregation.
"""

from .config import ModelConfig, PROFILES, desk_config, paper_config

__version__ = "0.1.0"

__all__ = ["ModelConfig", "PROFILES", "desk_config", "paper_config", "__version__"]
