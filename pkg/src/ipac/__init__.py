"""Cross-lingual IPA contrastive learning on a from-scratch phonemic encoder."""

from .contrastive import PairBatch, brute_force_info_nce, info_nce, ipac_loss
from .encoder import (
    EncoderConfig,
    EncoderModel,
    count_params,
    embed_word,
    forward_tokens,
    ner_logits,
    strip_projection,
)
from .lora import LoraConfig, attach_lora, freeze_base_enable_lora, merge_lora
from .phoneme import Vocabulary, build_vocab, encode, tokenize
from .trainer import TrainConfig, finalize_for_inference, train_ipac, train_ner

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig", "EncoderModel", "LoraConfig", "PairBatch", "TrainConfig", "Vocabulary",
    "attach_lora", "brute_force_info_nce", "build_vocab", "count_params", "embed_word", "encode",
    "finalize_for_inference", "forward_tokens", "freeze_base_enable_lora", "info_nce", "ipac_loss",
    "merge_lora", "ner_logits", "strip_projection", "tokenize", "train_ipac", "train_ner",
]
