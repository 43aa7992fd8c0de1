"""versebyte: a byte-level neural machine translation toolkit for verse corpora.

End to end in plain numpy: verse alignment, byte tokenization, a small
encoder-decoder transformer with its own reverse-mode autodiff, the full
training protocol, BLEU-4 scoring, and a command line. ByteTranslator
offers the whole pipeline behind an sklearn-style fit/predict interface.
"""

from .corpus import (BibleVersion, CorpusError, DatasetSplit, ParallelExample,
                     VerseId, align, corpus_stats, load_version, make_split,
                     parse_verse_id, read_examples_jsonl, write_examples_jsonl)
from .estimator import ByteTranslator
from .evaluation import (BleuReport, ComparisonRow, corpus_bleu, evaluate_model,
                         ngram_clip_counts, render_comparison, translate_text)
from .checkpoint import (CheckpointError, ChecksumError, load_checkpoint,
                         save_checkpoint)
from .model import (ModelConfig, ModelParams, beam_decode, forward,
                    greedy_decode, init_params, relative_position_bucket)
from .tokenizer import EOS_ID, PAD_ID, UNK_ID, VOCAB_SIZE, decode, encode, tag_source
from .trainer import TrainConfig, TrainReport, TrainState, fit, make_batches

__version__ = "0.1.0"

__all__ = [
    "BibleVersion", "BleuReport", "ByteTranslator", "CheckpointError",
    "ChecksumError", "ComparisonRow", "CorpusError", "DatasetSplit", "EOS_ID",
    "ModelConfig", "ModelParams", "PAD_ID", "ParallelExample", "TrainConfig",
    "TrainReport", "TrainState", "UNK_ID", "VOCAB_SIZE", "VerseId", "align",
    "beam_decode", "corpus_bleu", "corpus_stats", "decode", "encode",
    "evaluate_model", "fit", "forward", "greedy_decode", "init_params",
    "load_checkpoint", "load_version", "make_batches", "make_split",
    "ngram_clip_counts", "parse_verse_id", "read_examples_jsonl",
    "relative_position_bucket", "render_comparison", "save_checkpoint",
    "tag_source", "translate_text", "write_examples_jsonl",
]
