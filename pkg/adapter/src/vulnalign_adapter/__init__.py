"""Bridge pretrained transformer vulnerability detectors to vulnalign."""

from .export import (
    MAX_CONTENT_TOKENS,
    ExportError,
    convert_attnlrp,
    encode_function,
    export_attention,
    export_ig,
    load_detector,
    validate_record,
)
from .toymodel import build_toy_checkpoint

__version__ = "0.1.0"
