"""scikit-learn compatible wrappers.

``LogMelTransformer`` and ``PatchTokenizer`` are stateless transformers;
``UiTTagger`` trains and serves the multilabel keyword/event model, so the
whole front-end composes in a :class:`sklearn.pipeline.Pipeline`::

    Pipeline([("mel", LogMelTransformer()), ("tagger", UiTTagger("uit-3xs"))])
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import model as M
from . import metrics, weightfile
from .dsp import MelConfig, log_mel
from .labels import DEFAULT_LABELS
from .train import OptimState, lr_at, train_step
from .validation import check_spectrograms, check_targets, check_waveforms


class LogMelTransformer(TransformerMixin, BaseEstimator):
    """Waveform batch ``[n, samples]`` -> log-Mel batch ``[n, frames, n_mels]``."""

    def __init__(self, n_mels=64, win_ms=32.0, hop_ms=10.0, fft_size=512, fmin=0.0, fmax=8000.0,
                 log_floor=1e-10):
        self.n_mels = n_mels
        self.win_ms = win_ms
        self.hop_ms = hop_ms
        self.fft_size = fft_size
        self.fmin = fmin
        self.fmax = fmax
        self.log_floor = log_floor

    def fit(self, X, y=None):
        self.mel_config_ = MelConfig(self.n_mels, self.win_ms, self.hop_ms, self.fft_size,
                                     self.fmin, self.fmax, self.log_floor)
        self.n_features_in_ = check_waveforms(X).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mel_config_")
        X = check_waveforms(X)
        return np.stack([log_mel(x, self.mel_config_) for x in X])


class PatchTokenizer(TransformerMixin, BaseEstimator):
    """Spectrogram batch -> token batch ``[n, N, P]`` for a model preset."""

    def __init__(self, model="uit-xs"):
        self.model = model

    def fit(self, X=None, y=None):
        self.config_ = M.preset(self.model)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        cfg = self.config_
        X = check_spectrograms(X, cfg.n_mels, cfg.input_frames)
        return np.stack([M.patchify(x, cfg) for x in X])


class UiTTagger(BaseEstimator):
    """Multilabel UiT model over spectrogram inputs.

    ``fit`` runs AdamW with linear warmup and cosine decay on BCE against
    ``Y`` (``[n, n_labels]`` in [0, 1]). ``predict_proba`` gives per-label
    sigmoid scores and ``predict`` the thresholded keyword decision
    (a keyword label index, or -1 for none).
    """

    def __init__(self, model="uit-3xs", attention="bottleneck", activation="relu", labels=None,
                 epochs=10, batch_size=32, lr=1e-3, warmup_epochs=1, weight_decay=0.01,
                 threshold=0.2, random_state=None):
        self.model = model
        self.attention = attention
        self.activation = activation
        self.labels = labels
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.warmup_epochs = warmup_epochs
        self.weight_decay = weight_decay
        self.threshold = threshold
        self.random_state = random_state

    def _make_config(self):
        if isinstance(self.model, M.UiTConfig):
            return self.model.replace(attention=self.attention, activation=self.activation,
                                      labels=self.labels or self.model.labels)
        return M.preset(self.model, attention=self.attention, activation=self.activation,
                        labels=self.labels or DEFAULT_LABELS)

    def _tokens(self, X):
        cfg = self.config_
        X = check_spectrograms(X, cfg.n_mels, cfg.input_frames)
        return np.stack([M.patchify(x, cfg) for x in X])

    def fit(self, X, Y):
        self.config_ = cfg = self._make_config()
        tokens = self._tokens(X)
        Y = check_targets(Y, len(tokens), cfg.n_labels)
        rng = np.random.default_rng(self.random_state)
        w = M.init_weights(cfg, rng)
        st = OptimState(lr0=self.lr, weight_decay=self.weight_decay,
                        warmup_epochs=self.warmup_epochs, total_epochs=self.epochs)
        n_batches = max(1, -(-len(tokens) // self.batch_size))
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            order = rng.permutation(len(tokens))
            losses = []
            for b in range(n_batches):
                idx = order[b * self.batch_size:(b + 1) * self.batch_size]
                lr = lr_at(epoch + b / n_batches, st)
                loss, w = train_step(w, st, tokens[idx], Y[idx], cfg, lr)
                losses.append(loss)
            self.loss_curve_.append(float(np.mean(losses)))
        self.weights_ = M.WeightStore(w, cfg)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "weights_")
        return M.forward(self._tokens(X), self.weights_, self.config_, check=False)

    def predict_proba(self, X):
        return M.score(self.decision_function(X))

    def predict(self, X):
        return np.atleast_1d(metrics.kws_decide(self.predict_proba(X), self.config_.labels, self.threshold))

    def score(self, X, Y):
        """Mean average precision of ``predict_proba(X)`` against ``Y``."""
        return metrics.mean_ap(self.predict_proba(X), Y)

    def save_weights(self, path):
        check_is_fitted(self, "weights_")
        weightfile.save(path, self.weights_)

    @classmethod
    def from_weights(cls, path, model="uit-xs", **params):
        est = cls(model=model, **params)
        est.config_ = est._make_config()
        est.weights_ = weightfile.load_weights(path, est.config_)
        return est
