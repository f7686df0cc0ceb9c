"""A small residual CNN with Adam and plateau scheduling, in plain numpy.

Activations are stored channel-first as (C, N, H, W) so that im2col copies
contiguous image rows; conv weights have shape (c_out, c_in, kh, kw).
"""

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import raster


class NonFiniteLoss(FloatingPointError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_side: int = 96
    widths: tuple = (8, 16, 32)
    blocks: int = 1
    classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        factor = self.downsampling
        if self.input_side % factor:
            raise ValueError(f"input_side {self.input_side} not divisible by {factor}")

    @property
    def downsampling(self):
        """Stride-2 stem plus one stride-2 block between consecutive stages."""
        return 2 ** len(self.widths)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-4
    factor: float = 0.1
    patience: int = 5
    threshold: float = 1e-4
    seed: int = 0


MODEL_PRESETS = {
    "desk": ModelConfig(),
    "paper": ModelConfig(),
    "tiny": ModelConfig(input_side=16, widths=(2, 2)),
}
TRAIN_PRESETS = {
    "desk": TrainConfig(epochs=30, batch_size=64),
    "paper": TrainConfig(epochs=100, batch_size=1024),
}


# -- layers -------------------------------------------------------------------

def conv_forward(x, w, b, stride=1):
    """Same-padded convolution of x (C, N, H, W); returns (out, cols)."""
    c, n, h, wd = x.shape
    f, cin, kh, kw = w.shape
    if cin != c:
        raise ShapeMismatch(f"conv expects {cin} channels, got {c}")
    pad = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    cols = np.empty((c, kh * kw, n, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i * kw + j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    out = w.reshape(f, -1) @ cols.reshape(c * kh * kw, -1) + b[:, None]
    return out.reshape(f, n, ho, wo), cols


def conv_backward(dout, cols, x_shape, w, stride=1):
    c, n, h, wd = x_shape
    f, _, kh, kw = w.shape
    pad = kh // 2
    ho, wo = dout.shape[2:]
    d2 = dout.reshape(f, -1)
    c2 = cols.reshape(c * kh * kw, -1)
    dw = (d2 @ c2.T).reshape(w.shape)
    db = d2.sum(axis=1)
    dcols = (w.reshape(f, -1).T @ d2).reshape(c, kh * kw, n, ho, wo)
    dxp = np.zeros((c, n, h + 2 * pad, wd + 2 * pad), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i * kw + j]
    return dxp[:, :, pad:pad + h, pad:pad + wd], dw, db


# -- model --------------------------------------------------------------------

STEM_STRIDE = 2


def layer_specs(cfg):
    """Ordered (name, kh, c_in, c_out, stride) for every convolution."""
    specs = [("stem", 3, 1, cfg.widths[0], STEM_STRIDE)]
    prev = cfg.widths[0]
    for s, width in enumerate(cfg.widths):
        if s > 0:
            specs += [(f"s{s}.down.c1", 3, prev, width, 2), (f"s{s}.down.c2", 3, width, width, 1),
                      (f"s{s}.down.proj", 1, prev, width, 2)]
        for k in range(cfg.blocks):
            specs += [(f"s{s}.b{k}.c1", 3, width, width, 1), (f"s{s}.b{k}.c2", 3, width, width, 1)]
        prev = width
    return specs


def init_params(cfg, seed=0, dtype=np.float32):
    """He-initialised weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, k, cin, cout, _ in layer_specs(cfg):
        std = np.sqrt(2.0 / (k * k * cin))
        params[name + ".w"] = (rng.standard_normal((cout, cin, k, k)) * std).astype(dtype)
        params[name + ".b"] = np.zeros(cout, dtype=dtype)
    last = cfg.widths[-1]
    params["fc.w"] = (rng.standard_normal((last, cfg.classes)) * np.sqrt(1.0 / last)).astype(dtype)
    params["fc.b"] = np.zeros(cfg.classes, dtype=dtype)
    return params


def _relu(a):
    return np.maximum(a, 0)


def forward(params, cfg, x, keep=False):
    """Logits for a batch of shape (N, 1, S, S) or (N, S, S) in [0, 1]."""
    x = np.asarray(x)
    if x.ndim == 4 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 3 or x.shape[1:] != (cfg.input_side, cfg.input_side):
        raise ShapeMismatch(f"expected (N, 1, {cfg.input_side}, {cfg.input_side}), got {x.shape}")
    dtype = params["fc.w"].dtype
    # centre the input; channel-first layout (1, N, S, S)
    h = x[None].astype(dtype) - dtype.type(0.5)
    tape = []

    def conv(name, inp, stride=1):
        out, cols = conv_forward(inp, params[name + ".w"], params[name + ".b"], stride)
        if keep:
            tape.append(("conv", name, cols, inp.shape, stride))
        return out

    h = conv("stem", h, STEM_STRIDE)
    h = _relu(h)
    if keep:
        tape.append(("relu", h))
    for s in range(len(cfg.widths)):
        names = []
        if s > 0:
            names.append((f"s{s}.down", True))
        names += [(f"s{s}.b{k}", False) for k in range(cfg.blocks)]
        for base, down in names:
            skip_in = h
            r = conv(base + ".c1", h, 2 if down else 1)
            r = _relu(r)
            if keep:
                tape.append(("relu", r))
            r = conv(base + ".c2", r)
            skip = conv(base + ".proj", skip_in, 2) if down else skip_in
            h = _relu(r + skip)
            if keep:
                tape.append(("block", base, down, h))
    pooled = h.mean(axis=(2, 3)).T
    logits = pooled @ params["fc.w"] + params["fc.b"]
    if keep:
        return logits, (tape, h.shape, pooled)
    return logits


def _backward(params, cfg, state, dlogits):
    """Gradients of every parameter given d(loss)/d(logits)."""
    tape, hshape, pooled = state
    grads = {"fc.w": pooled.T @ dlogits, "fc.b": dlogits.sum(axis=0)}
    c, n, hh, ww = hshape
    dh = np.broadcast_to((dlogits @ params["fc.w"].T).T[:, :, None, None] / (hh * ww), hshape).copy()
    # walk the tape backwards; blocks were recorded as conv c1, relu, conv c2,
    # [conv proj], block
    i = len(tape) - 1
    while i >= 0:
        entry = tape[i]
        if entry[0] == "block":
            _, base, down, out = entry
            d = dh * (out > 0)
            if down:
                _, name, cols, shape, stride = tape[i - 1]
                dskip, grads[name + ".w"], grads[name + ".b"] = conv_backward(
                    d, cols, shape, params[name + ".w"], stride)
                i -= 1
            else:
                dskip = d
            _, name, cols, shape, stride = tape[i - 1]
            dr, grads[name + ".w"], grads[name + ".b"] = conv_backward(d, cols, shape, params[name + ".w"], stride)
            _, act = tape[i - 2]
            dr = dr * (act > 0)
            _, name, cols, shape, stride = tape[i - 3]
            dx, grads[name + ".w"], grads[name + ".b"] = conv_backward(dr, cols, shape, params[name + ".w"], stride)
            dh = dx + dskip
            i -= 4
        elif entry[0] == "relu":
            dh = dh * (entry[1] > 0)
            i -= 1
        else:
            _, name, cols, shape, stride = entry
            dh, grads[name + ".w"], grads[name + ".b"] = conv_backward(dh, cols, shape, params[name + ".w"], stride)
            i -= 1
    return grads


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))


def cross_entropy(logits, labels):
    return float(-log_softmax(logits)[np.arange(len(labels)), labels].mean())


def decay_term(params, weight_decay):
    return 0.5 * weight_decay * sum(float(np.sum(p.astype(np.float64) ** 2)) for p in params.values())


def loss_and_grad(params, cfg, x, labels, weight_decay=0.0):
    """Mean softmax cross-entropy plus (wd/2)*||theta||^2, and its gradients."""
    labels = np.asarray(labels)
    logits, state = forward(params, cfg, x, keep=True)
    logp = log_softmax(logits)
    n = len(labels)
    loss = -float(logp[np.arange(n), labels].mean()) + decay_term(params, weight_decay)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}; max |logit| = {np.nanmax(np.abs(logits))}")
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    grads = _backward(params, cfg, state, dlogits.astype(logits.dtype))
    if weight_decay:
        for k, p in params.items():
            grads[k] = grads[k] + weight_decay * p
    return loss, grads


def relu_pattern(params, cfg, x):
    """Sign pattern of every ReLU output, used to detect kink crossings."""
    _, (tape, _, _) = forward(params, cfg, x, keep=True)
    acts = [e[1] if e[0] == "relu" else e[3] for e in tape if e[0] in ("relu", "block")]
    return np.concatenate([a.ravel() > 0 for a in acts])


def gradcheck(params, cfg, x, labels, weight_decay=0.0, h=1e-4, min_h=1e-9):
    """Max relative error of analytic gradients against central differences.

    An entry whose +-h perturbation flips a ReLU is re-measured with halved
    steps until the activation pattern is stable (the difference quotient is
    meaningless across a kink). Returns (max_error, entries, refined).
    """
    _, grads = loss_and_grad(params, cfg, x, labels, weight_decay)
    worst, count, refined = 0.0, 0, 0
    for name, a in params.items():
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            step = h
            while True:
                a[idx] = orig + step
                lp, _ = loss_and_grad(params, cfg, x, labels, weight_decay)
                pp = relu_pattern(params, cfg, x)
                a[idx] = orig - step
                lm, _ = loss_and_grad(params, cfg, x, labels, weight_decay)
                pm = relu_pattern(params, cfg, x)
                a[idx] = orig
                if np.array_equal(pp, pm) or step / 2 < min_h:
                    break
                step /= 2
            refined += step != h
            fd = (lp - lm) / (2 * step)
            an = float(grads[name][idx])
            worst = max(worst, abs(fd - an) / max(abs(fd) + abs(an), 1e-8))
            count += 1
    return worst, count, refined


# -- optimisation -------------------------------------------------------------

@dataclass
class Model:
    config: ModelConfig
    params: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def create(cls, config, seed=0, dtype=np.float32):
        params = init_params(config, seed, dtype)
        zeros = {k: np.zeros_like(p) for k, p in params.items()}
        return cls(config, params, zeros, {k: z.copy() for k, z in zeros.items()}, 0)

    def copy(self):
        dup = lambda d: {k: a.copy() for k, a in d.items()}  # noqa: E731
        return Model(self.config, dup(self.params), dup(self.m), dup(self.v), self.step)

    def logits(self, x, batch_size=256):
        out = [forward(self.params, self.config, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.empty((0, self.config.classes))

    def predict_proba(self, x, batch_size=256):
        return softmax(self.logits(x, batch_size))


BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


def adam_step(model, grads, lr):
    """In-place Adam update with bias correction; returns the model."""
    model.step += 1
    t = model.step
    c1 = 1 - BETA1 ** t
    c2 = 1 - BETA2 ** t
    for k, p in model.params.items():
        g = grads[k]
        m = model.m[k]
        v = model.v[k]
        m *= BETA1
        m += (1 - BETA1) * g
        v *= BETA2
        v += (1 - BETA2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + EPS)).astype(p.dtype)
    return model


class ReduceOnPlateau:
    """Multiply the learning rate by ``factor`` once the monitored value has
    not improved (relative threshold, min mode) for more than ``patience``
    epochs."""

    def __init__(self, lr, factor=0.1, patience=5, threshold=1e-4):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, value):
        if value < self.best * (1 - self.threshold):
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.lr *= self.factor
            self.bad_epochs = 0
        return self.lr


def evaluate(model, x, y, batch_size=256):
    logits = model.logits(x, batch_size)
    return cross_entropy(logits, y), float(np.mean(np.argmax(logits, axis=1) == y))


def train(model_cfg, train_cfg, x_train, y_train, x_val, y_val, dtype=np.float32, log=None):
    """Train from scratch; returns (best-validation-accuracy Model, history)."""
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train, dtype=np.intp)
    x_val = np.asarray(x_val)
    y_val = np.asarray(y_val, dtype=np.intp)
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    model = Model.create(model_cfg, train_cfg.seed, dtype)
    sched = ReduceOnPlateau(train_cfg.lr, train_cfg.factor, train_cfg.patience, train_cfg.threshold)
    rng = np.random.default_rng(train_cfg.seed + 1)
    history = []
    best, best_acc = model.copy(), -1.0
    for epoch in range(train_cfg.epochs):
        lr = sched.lr
        order = rng.permutation(len(x_train))
        total = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            loss, grads = loss_and_grad(model.params, model_cfg, x_train[idx], y_train[idx],
                                        train_cfg.weight_decay)
            adam_step(model, grads, lr)
            total += loss * len(idx)
        val_loss, val_acc = evaluate(model, x_val, y_val)
        if not np.isfinite(val_loss):
            raise NonFiniteLoss(f"validation loss is {val_loss} at epoch {epoch}")
        history.append({"epoch": epoch + 1, "train_loss": total / len(order), "val_loss": val_loss,
                        "val_acc": val_acc, "lr": lr})
        if log:
            log(history[-1])
        if val_acc > best_acc:
            best, best_acc = model.copy(), val_acc
        sched.step(val_loss)
    return best, history


# -- inputs and checkpoints -----------------------------------------------------

def to_input(img, side):
    """Canonical classifier input: nearest resize for binary images
    (no invented gray levels), bilinear otherwise."""
    img = raster.as_image(img)
    if img.shape == (side, side):
        return img.copy()
    if raster.is_binary(img):
        return raster.resize_nearest(img, side, side)
    return raster.resize(img, side, side)


def to_batch(images, side, dtype=np.float32):
    return np.stack([to_input(im, side) for im in images]).astype(dtype)


MAGIC = b"QRLABCK1"


def save_checkpoint(path, model, extra=None):
    """Header JSON (config, tensor names/dims/dtype, step) + little-endian payload."""
    groups = [("param", model.params), ("m", model.m), ("v", model.v)]
    tensors = []
    for group, d in groups:
        for name in sorted(d):
            a = d[name]
            tensors.append({"group": group, "name": name, "dims": list(a.shape), "dtype": a.dtype.str.lstrip("<>=|")})
    header = {
        "config": {"input_side": model.config.input_side, "widths": list(model.config.widths),
                   "blocks": model.config.blocks, "classes": model.config.classes},
        "step": model.step,
        "tensors": tensors,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for group, d in groups:
            for name in sorted(d):
                a = d[name]
                f.write(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path):
    """Returns (Model, extra)."""
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise ValueError(f"{path} is not a qrlab checkpoint")
        (size,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(size))
        data = {"param": {}, "m": {}, "v": {}}
        for t in header["tensors"]:
            dt = np.dtype("<" + t["dtype"])
            count = int(np.prod(t["dims"])) if t["dims"] else 1
            a = np.frombuffer(f.read(count * dt.itemsize), dtype=dt).reshape(t["dims"])
            data[t["group"]][t["name"]] = a.astype(dt.newbyteorder("=")).copy()
    cfg = ModelConfig(**header["config"])
    model = Model(cfg, data["param"], data["m"], data["v"], header["step"])
    return model, header.get("extra", {})


def with_widths(cfg, widths):
    return replace(cfg, widths=tuple(widths))
