"""Named entity recognition as word-pair relation classification.

Flat, nested and discontinuous mentions are all expressed on one N x N grid of
word-pair relations, which a small numpy network learns to predict.
"""

from .codec import DecodeOptions, PathExplosion, ThwConflict, decode_grid, encode_grid, is_representable
from .core import (
    NNW,
    NONE,
    EmptyEntity,
    Entity,
    GridNerError,
    LabelSet,
    NonFinite,
    RelationGrid,
    Sentence,
    ShapeMismatch,
    ValidationError,
    canonicalize_entity,
    validate_sentence,
)
from .data import SynthSpec, Vocabulary, build_vocab, from_conll_bio, gen_synthetic, read_jsonl, write_jsonl
from .metrics import PRF, micro_prf, subset_prf
from .model import ModelConfig, forward, init_params
from .train import TrainConfig, predict_entities, train_epochs

__version__ = "0.1.0"
