from .bitstream import BitstreamError, LatentPack, deserialize, serialize
from .encoder import AnalysisTransform, quantize_noise, quantize_round
from .hyperprior import (
    FactorizedPrior,
    HyperDecoder,
    HyperEncoder,
    factorized_bin_likelihood,
    gaussian_bin_likelihood,
    rate_bits,
    rate_estimate,
)
from .rangecoder import RangeCoderError, decode_slots, encode_slots
from .tables import EntropyTables, gaussian_tables, logistic_tables, tables_from_pmf

__all__ = [
    "BitstreamError", "LatentPack", "serialize", "deserialize",
    "AnalysisTransform", "quantize_noise", "quantize_round",
    "FactorizedPrior", "HyperDecoder", "HyperEncoder",
    "factorized_bin_likelihood", "gaussian_bin_likelihood", "rate_bits", "rate_estimate",
    "RangeCoderError", "encode_slots", "decode_slots",
    "EntropyTables", "gaussian_tables", "logistic_tables", "tables_from_pmf",
]
