import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from uit import LogMelTransformer, PatchTokenizer, UiTTagger
from uit.labels import LabelSpace
from uit.model import UiTConfig


def test_logmel_transformer(rng):
    X = (0.1 * rng.standard_normal((3, 16000))).astype(np.float32)
    out = LogMelTransformer().fit_transform(X)
    assert out.shape == (3, 97, 64)
    assert LogMelTransformer(n_mels=32).fit_transform(X).shape == (3, 97, 32)


def test_get_params_and_clone():
    est = UiTTagger(model="uit-2xs", epochs=3)
    params = est.get_params()
    assert params["model"] == "uit-2xs" and params["epochs"] == 3
    assert clone(est).get_params() == params


def test_unfitted_raises(rng):
    with pytest.raises(NotFittedError):
        UiTTagger().predict_proba(rng.normal(size=(1, 97, 64)))
    with pytest.raises(NotFittedError):
        LogMelTransformer().transform(np.zeros((1, 16000)))


def test_patch_tokenizer_validates(rng):
    tok = PatchTokenizer("uit-3xs").fit()
    assert tok.transform(rng.normal(size=(2, 97, 64))).shape == (2, 24, 256)
    with pytest.raises(ValueError, match="mel bins"):
        tok.transform(rng.normal(size=(2, 97, 40)))


def test_pipeline_fit_predict(rng):
    labels = LabelSpace.small(2, 2)
    cfg = UiTConfig(layers=1, dim=16, bottleneck=4, heads=2, mlp_dim=48, labels=labels)
    t = np.arange(16000) / 16000
    freqs = [300, 900, 2200, 5000]
    X, Y = [], []
    for k in range(16):
        c = k % 4
        X.append(0.5 * np.sin(2 * np.pi * freqs[c] * t) + 0.01 * rng.standard_normal(16000))
        y = np.zeros(4)
        y[[2, 3, 0, 1][c]] = 1
        Y.append(y)
    X, Y = np.array(X, np.float32), np.array(Y)
    pipe = Pipeline([("mel", LogMelTransformer()),
                     ("tagger", UiTTagger(model=cfg, epochs=30, batch_size=8, lr=1e-2, random_state=0))])
    pipe.fit(X, Y)
    tagger = pipe.named_steps["tagger"]
    assert tagger.loss_curve_[-1] < tagger.loss_curve_[0]
    proba = pipe.predict_proba(X)
    assert proba.shape == (16, 4) and np.all((proba > 0) & (proba < 1))
    assert pipe.score(X, Y) > 0.9
    pred = pipe.predict(X)
    assert set(pred.tolist()) <= {-1, 2, 3}


def test_save_and_reload(tmp_path, rng):
    cfg = UiTConfig(layers=1, dim=8, bottleneck=2, heads=2, mlp_dim=24, labels=LabelSpace.small(1, 1))
    X = rng.normal(size=(4, 97, 64)).astype(np.float32)
    Y = rng.integers(0, 2, (4, 2)).astype(np.float32)
    est = UiTTagger(model=cfg, epochs=1, batch_size=4, random_state=0).fit(X, Y)
    est.save_weights(tmp_path / "w.uitw")
    again = UiTTagger.from_weights(tmp_path / "w.uitw", model=cfg)
    np.testing.assert_array_equal(again.predict_proba(X), est.predict_proba(X))


def test_bad_targets_rejected(rng):
    cfg = UiTConfig(layers=1, dim=8, bottleneck=2, heads=2, mlp_dim=24, labels=LabelSpace.small(1, 1))
    with pytest.raises(ValueError, match="targets"):
        UiTTagger(model=cfg).fit(rng.normal(size=(2, 97, 64)), np.full((2, 2), 2.0))
