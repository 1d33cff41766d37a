import numpy as np
import pytest

from ipac.encoder import EncoderConfig, EncoderModel
from ipac.lora import LoraConfig, attach_lora
from ipac.phoneme import Vocabulary
from ipac.synthetic import IPA_INVENTORY


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def vocab():
    return Vocabulary(IPA_INVENTORY)


@pytest.fixture
def tiny_config(vocab):
    return EncoderConfig(layers=2, hidden=32, heads=2, ff_dim=64, vocab_size=len(vocab),
                         max_positions=32, dropout=0.1, proj_dim=16)


@pytest.fixture
def tiny_model(tiny_config):
    return EncoderModel.build(tiny_config, seed=7)


@pytest.fixture
def adapted_model(tiny_config):
    model = EncoderModel.build(tiny_config, seed=7)
    return attach_lora(model, LoraConfig(r=4, alpha=16, dropout=0.1), seed=3)
