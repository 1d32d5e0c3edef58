"""Organ-regional radiology report generation.

Mask-gated image features, organ-based cross-modal fusion, graph-attention
organ importance weighting, and an encoder-decoder report generator with
beam-search inference, plus the instruction-dataset builder and the full
evaluation protocol.
"""

from .organs import Organ, ORGAN_ORDER, MASK_CHANNELS, DESC_LENGTHS

__version__ = "0.1.0"

__all__ = ["Organ", "ORGAN_ORDER", "MASK_CHANNELS", "DESC_LENGTHS", "__version__"]
