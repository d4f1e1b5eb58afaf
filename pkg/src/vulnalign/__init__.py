"""Detection Alignment evaluation toolkit for code vulnerability detectors."""

from .tokenizer import Vocabulary, TokenizedFunction, train_bpe, encode, decode
from .groundtruth import GroundTruth, FunctionPair, line_diff, extract_ground_truth
from .relevance import (
    TokenRelevanceRecord,
    LineRelevanceVector,
    AttentionTensor,
    attention_token_relevance,
    aggregate_lines,
    rescale,
    line_relevance,
    absolute_variant,
)
from .metric import (
    DAResult,
    EvalSummary,
    fuzzify_ground_truth,
    detection_alignment,
    aggregate,
    f1_score,
)
from .microformer import (
    Hyper,
    ModelParams,
    IGConfig,
    init_params,
    forward,
    grad_embeddings,
    integrated_gradients,
    attention_relevance,
    train_toy,
    save_checkpoint,
    load_checkpoint,
)

__version__ = "0.1.0"
