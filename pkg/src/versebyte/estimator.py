"""Scikit-learn style facade over the translation pipeline.

ByteTranslator wires corpus-free text pairs through tokenization, the
transformer, and the training protocol behind the familiar fit / predict /
score surface, so the toolkit drops into sklearn-flavoured workflows
(get_params, set_params, clone all behave normally).
"""

import tempfile
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .checkpoint import load_checkpoint
from .evaluation import corpus_bleu, translate_text
from .model import ModelConfig
from .trainer import TrainConfig, fit as run_fit
from .validation import check_text_pairs


@dataclass
class _FitPair:
    # duck-typed example: the trainer only reads these three fields
    source_text: str
    target_lang: str
    target_text: str


class ByteTranslator(BaseEstimator):
    """Byte-level encoder-decoder translator with an sklearn interface.

    X is a sequence of source strings, or of (source_text, target_lang)
    pairs for multilingual targets; y holds the reference translations.
    Bare strings are allowed when every fit pair shares one target
    language, which then becomes the default at predict time.
    """

    def __init__(self, d_model: int = 64, n_heads: int = 4, d_ff: int = 128,
                 enc_layers: int = 6, dec_layers: int = 2,
                 dropout_rate: float = 0.1, max_seq_len: int = 512,
                 learning_rate: float = 0.0002, scheduler_factor: float = 0.5,
                 scheduler_patience: int = 10, batch_size: int = 48,
                 max_epochs: int = 500, early_stop_patience: int = 20,
                 min_lr: float = 1e-6, grad_clip_norm: float = 1.0,
                 validation_fraction: float = 0.1, target_lang: str = "eng",
                 beam_width: int = 1, max_len: int = 256,
                 length_penalty: float = 0.0, seed: int = 0,
                 work_dir=None, verbose: bool = False):
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.dropout_rate = dropout_rate
        self.max_seq_len = max_seq_len
        self.learning_rate = learning_rate
        self.scheduler_factor = scheduler_factor
        self.scheduler_patience = scheduler_patience
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.min_lr = min_lr
        self.grad_clip_norm = grad_clip_norm
        self.validation_fraction = validation_fraction
        self.target_lang = target_lang
        self.beam_width = beam_width
        self.max_len = max_len
        self.length_penalty = length_penalty
        self.seed = seed
        self.work_dir = work_dir
        self.verbose = verbose

    def _configs(self):
        model_config = ModelConfig(
            d_model=self.d_model, n_heads=self.n_heads, d_ff=self.d_ff,
            enc_layers=self.enc_layers, dec_layers=self.dec_layers,
            dropout_rate=self.dropout_rate, max_seq_len=self.max_seq_len)
        train_config = TrainConfig(
            learning_rate=self.learning_rate, scheduler_factor=self.scheduler_factor,
            scheduler_patience=self.scheduler_patience, batch_size=self.batch_size,
            max_epochs=self.max_epochs, early_stop_patience=self.early_stop_patience,
            min_lr=self.min_lr, grad_clip_norm=self.grad_clip_norm, seed=self.seed)
        return model_config, train_config

    def fit(self, X, y):
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must be in [0, 1), "
                             f"got {self.validation_fraction}")
        sources, langs, targets = check_text_pairs(X, y, default_lang=self.target_lang)
        pairs = [_FitPair(s, lang, t) for s, lang, t in zip(sources, langs, targets)]
        self.fit_target_langs_ = sorted(set(langs))

        n_val = int(len(pairs) * self.validation_fraction)
        if n_val == 0 or n_val == len(pairs):
            train_pairs, val_pairs = pairs, pairs
        else:
            order = np.random.default_rng([self.seed, 0x5E]).permutation(len(pairs))
            val_idx = set(order[:n_val].tolist())
            train_pairs = [p for i, p in enumerate(pairs) if i not in val_idx]
            val_pairs = [p for i, p in enumerate(pairs) if i in val_idx]

        model_config, train_config = self._configs()
        log = print if self.verbose else None
        if self.work_dir is not None:
            report = run_fit(train_pairs, val_pairs, model_config, train_config,
                             self.work_dir, log=log)
            self.params_, _ = load_checkpoint(report.best_checkpoint)
        else:
            with tempfile.TemporaryDirectory(prefix="versebyte_") as tmp:
                report = run_fit(train_pairs, val_pairs, model_config, train_config,
                                 tmp, log=log)
                self.params_, _ = load_checkpoint(report.best_checkpoint)
                report.best_checkpoint = ""  # directory is gone after fit
        self.model_config_ = model_config
        self.train_report_ = report
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("this ByteTranslator instance is not fitted yet; "
                               "call fit before predict or score")

    def predict(self, X):
        self._check_fitted()
        sources, langs, _ = check_text_pairs(X, None, default_lang=self.target_lang)
        return [translate_text(self.params_, s, lang, self.beam_width,
                               self.max_len, self.length_penalty)
                for s, lang in zip(sources, langs)]

    def score(self, X, y):
        """Corpus BLEU-4 of the predictions against y, on [0, 1]."""
        self._check_fitted()
        _, _, targets = check_text_pairs(X, y, default_lang=self.target_lang)
        return corpus_bleu(self.predict(X), targets).score
