"""QR code synthesis, degradation, decoding and a small CNN classifier for
measuring how well a constant can be recovered from noisy symbols."""

from .decoder import DecodeResult, decode_image, detect_constant
from .degrade import NoiseSpec, apply_noise
from .encoder import ModuleMatrix, QrSpec, encode, encode_matrix, render

__version__ = "0.1.0"

__all__ = ["DecodeResult", "ModuleMatrix", "NoiseSpec", "QrSpec", "apply_noise", "decode_image",
           "detect_constant", "encode", "encode_matrix", "render"]
