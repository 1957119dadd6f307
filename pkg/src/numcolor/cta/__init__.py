from .config import CtaConfig, toy_config
from .model import CtaModel, TAGS, TAG_TO_ID
from .crf import crf_nll, viterbi_decode
from .train import (
    AdamW,
    loss_and_grads,
    train_step,
    predict_spans,
    save_checkpoint,
    load_checkpoint,
)

__all__ = [
    "CtaConfig", "toy_config", "CtaModel", "TAGS", "TAG_TO_ID",
    "crf_nll", "viterbi_decode", "AdamW", "loss_and_grads", "train_step",
    "predict_spans", "save_checkpoint", "load_checkpoint",
]
