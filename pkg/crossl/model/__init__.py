"""Encoders, aggregator, classifier and checkpoint persistence."""

from crossl.model.checkpoint import (
    CHECKPOINT_VERSION,
    checkpoint_bytes,
    checkpoint_id,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)
from crossl.model.network import (
    GROUPS,
    ModelState,
    aggregate,
    classifier_logits,
    classify,
    encode,
    encode_all,
    init_model,
    min_window_len,
    parameter_shapes,
)
