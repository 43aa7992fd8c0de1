"""Shared builders for the test suite."""

import numpy as np
import pytest

from versebyte.corpus import ParallelExample, VerseId
from versebyte.model import ModelConfig, init_params


def synthetic_examples(n, source_lang="eng", target_lang="deu",
                       source_fmt="sun {i} rise {j}", target_fmt="mond {i} auf {j} tal"):
    """n distinct parallel examples with valid sequential verse ids."""
    out = []
    for i in range(n):
        vid = VerseId(book=1 + i // (999 * 999),
                      chapter=1 + (i // 999) % 999,
                      verse=1 + i % 999)
        out.append(ParallelExample(
            verse_id=vid, source_lang=source_lang, target_lang=target_lang,
            source_text=source_fmt.format(i=i, j=i % 5),
            target_text=target_fmt.format(i=i, j=i % 7)))
    return out


@pytest.fixture
def tiny_config():
    return ModelConfig(d_model=8, n_heads=2, d_ff=16, enc_layers=1,
                       dec_layers=1, dropout_rate=0.0)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
