"""Quantized compressed sensing with Bayesian de-quantization."""
from .bdq import BdqOptions, RecoveryResult, recover, recover_blind
from .errors import (CorruptPayloadError, DataError, GenerationFailureError, IllConditionedError,
                     InvalidConfigError, InvalidParameterError, QcsError, UndefinedMetricError)
from .kernels import BACKEND
from .metrics import HrReport, RecoveryReport, arsnr, rsnr, ssim_1d
from .quantizer import QuantizedPayload, QuantizerConfig, dequantize, quantize
from .sensing import SparseBinaryMatrix, compress, generate_matrix

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BdqOptions", "CorruptPayloadError", "DataError", "GenerationFailureError",
    "HrReport", "IllConditionedError", "InvalidConfigError", "InvalidParameterError",
    "QcsError", "QuantizedPayload", "QuantizerConfig", "RecoveryReport", "RecoveryResult",
    "SparseBinaryMatrix", "UndefinedMetricError", "arsnr", "compress", "dequantize",
    "generate_matrix", "quantize", "recover", "recover_blind", "rsnr", "ssim_1d",
]
