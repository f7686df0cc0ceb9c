"""scikit-learn style wrappers: the CNN classifier, the decoder baseline and
the noise models, so both methods plug into the same fit/predict/score code."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import cnn, datagen, raster
from .decoder import decode_image, detect_constant
from .degrade import NoiseSpec, apply_noise


def check_images(X):
    """List of float 2-D images in [0, 1]; accepts a 3-D stack or any iterable."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        raise ValueError("expected a collection of images, got a single 2-D array")
    images = [raster.as_image(x) for x in X]
    if not images:
        raise ValueError("empty image collection")
    return images


def check_labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.intp)


class ResidualCNNClassifier(ClassifierMixin, BaseEstimator):
    """Residual CNN trained with Adam and plateau scheduling.

    ``fit`` holds out a stratified validation fraction unless explicit
    validation data is given; the best-validation-accuracy weights are kept.
    """

    def __init__(self, input_side=96, widths=(8, 16, 32), blocks=1, epochs=30, batch_size=64,
                 learning_rate=1e-4, weight_decay=1e-4, plateau_factor=0.1, patience=5,
                 threshold=1e-4, validation_fraction=0.2, random_state=0, dtype="float32"):
        self.input_side = input_side
        self.widths = widths
        self.blocks = blocks
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.plateau_factor = plateau_factor
        self.patience = patience
        self.threshold = threshold
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.dtype = dtype

    @classmethod
    def from_preset(cls, preset, **overrides):
        m, t = cnn.MODEL_PRESETS[preset], cnn.TRAIN_PRESETS[preset]
        params = dict(input_side=m.input_side, widths=m.widths, blocks=m.blocks, epochs=t.epochs,
                      batch_size=t.batch_size, learning_rate=t.lr, weight_decay=t.weight_decay,
                      plateau_factor=t.factor, patience=t.patience, threshold=t.threshold)
        params.update(overrides)
        return cls(**params)

    def _configs(self):
        model_cfg = cnn.ModelConfig(self.input_side, tuple(self.widths), self.blocks, 2)
        train_cfg = cnn.TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.weight_decay,
                                    self.plateau_factor, self.patience, self.threshold, self.random_state)
        return model_cfg, train_cfg

    def _batch(self, images):
        return cnn.to_batch(images, self.input_side, np.dtype(self.dtype))

    def fit(self, X, y, X_val=None, y_val=None, log=None):
        images = check_images(X)
        y = check_labels(y, len(images))
        if X_val is None:
            idx = np.arange(len(images))
            train, val = datagen.split_train_val(
                [_Indexed(i, int(y[i])) for i in idx], self.validation_fraction, self.random_state)
            tr, va = [r.i for r in train], [r.i for r in val]
            x = self._batch(images)
            x_tr, y_tr, x_va, y_va = x[tr], y[tr], x[va], y[va]
        else:
            x_tr, y_tr = self._batch(images), y
            val_images = check_images(X_val)
            x_va, y_va = self._batch(val_images), check_labels(y_val, len(val_images))
        model_cfg, train_cfg = self._configs()
        self.model_, self.history_ = cnn.train(model_cfg, train_cfg, x_tr, y_tr, x_va, y_va,
                                               dtype=np.dtype(self.dtype), log=log)
        self.classes_ = np.array([0, 1])
        return self

    @classmethod
    def from_model(cls, model):
        est = cls(input_side=model.config.input_side, widths=model.config.widths,
                  blocks=model.config.blocks, dtype=model.params["fc.w"].dtype.name)
        est.model_ = model
        est.history_ = []
        est.classes_ = np.array([0, 1])
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict_proba(self._batch(check_images(X)))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


class _Indexed:
    def __init__(self, i, label):
        self.i = i
        self.label = label


class DecoderBaselineClassifier(ClassifierMixin, BaseEstimator):
    """Deterministic decoding followed by constant matching.

    Predicts -1 when the symbol does not decode or no single constant matches,
    which ``score`` counts as an error.
    """

    def __init__(self, constants=datagen.DEFAULT_CONSTANTS["constant_first"]):
        self.constants = constants

    def fit(self, X=None, y=None):
        self.match_ = [datagen.match_string(c) for c in self.constants]
        self.classes_ = np.arange(len(self.constants))
        return self

    def decode(self, X):
        return [decode_image(img) for img in check_images(X)]

    def predict(self, X):
        if not hasattr(self, "match_"):
            self.fit()
        out = [detect_constant(r, self.match_) for r in self.decode(X)]
        return np.array([-1 if c is None else c for c in out])


class NoiseTransformer(TransformerMixin, BaseEstimator):
    """Applies one noise model; image k gets the seed derived from (random_state, k)."""

    def __init__(self, noise="inversion:p=10", random_state=0):
        self.noise = noise
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.spec_ = NoiseSpec.parse(self.noise) if isinstance(self.noise, str) else self.noise
        return self

    def transform(self, X):
        if not hasattr(self, "spec_"):
            self.fit()
        return [apply_noise(self.spec_, img, datagen.derive_seed(self.random_state, k))
                for k, img in enumerate(check_images(X))]
