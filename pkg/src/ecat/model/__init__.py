from .layers import Conv, Deconv, LayerNorm, Linear
from .network import CompressionClassifier, draw_quantizer_noise
from .reconstruct import FeatureAggregation, SynthesisTransform
from .transformer import Attention, Block, FeedForward, TokenEmbedding, TransformerHead

__all__ = [
    "Conv", "Deconv", "LayerNorm", "Linear",
    "CompressionClassifier", "draw_quantizer_noise",
    "FeatureAggregation", "SynthesisTransform",
    "Attention", "Block", "FeedForward", "TokenEmbedding", "TransformerHead",
]
