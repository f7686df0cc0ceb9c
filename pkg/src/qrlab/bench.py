"""Noise-robustness experiments: inversion sweep, realistic-noise table,
constant-position ablation, and their CSV/SVG reports."""

import csv
import io
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import cnn, datagen, tables
from .decoder import decode_image, detect_constant
from .degrade import NoiseSpec, apply_noise, invert_modules
from .encoder import QrSpec, encode_matrix, render


class IoFailure(OSError):
    pass


FAMILIES = {
    "rdist": ("rdist:sigma=2", "rdist:sigma=5", "rdist:sigma=20"),
    "ruled": ("ruled:mag=10", "ruled:mag=20", "ruled:mag=50"),
    "fgbg": ("fgbg",),
}
CSV_HEADER = ("percent", "decoder_acc", "classifier_acc", "n")
# tags keep trial seeds of different experiments apart
_SWEEP_TAG, _REALISTIC_TAG = 101, 202


@dataclass
class SweepRow:
    percent: int
    decoder_hits: int
    classifier_hits: int | None
    n: int

    @property
    def decoder_acc(self):
        return Fraction(self.decoder_hits, self.n)

    @property
    def classifier_acc(self):
        return None if self.classifier_hits is None else Fraction(self.classifier_hits, self.n)


@dataclass
class SweepResult:
    rows: list
    failures: list = field(default_factory=list)  # (percent, trial, label, reason)

    def decoder_curve(self):
        return np.array([float(r.decoder_acc) for r in self.rows])

    def classifier_curve(self):
        return np.array([np.nan if r.classifier_hits is None else float(r.classifier_acc) for r in self.rows])

    def percents(self):
        return np.array([r.percent for r in self.rows])

    def auc(self, method="classifier"):
        """Normalised area under accuracy vs noise percent (1.0 = perfect everywhere)."""
        y = self.classifier_curve() if method == "classifier" else self.decoder_curve()
        x = self.percents() / 100.0
        if len(x) < 2:
            return float(y[0]) if len(y) else float("nan")
        return float(np.trapezoid(y, x) / (x[-1] - x[0]))


@dataclass
class NoiseTable:
    configs: dict   # noise string -> (classifier_acc, decoder_acc, n)
    families: dict  # family -> (classifier_mean, decoder_mean)


def _classify(model, images):
    if model is None:
        return None
    if hasattr(model, "config"):
        x = cnn.to_batch(images, model.config.input_side, model.params["fc.w"].dtype)
        return np.argmax(model.logits(x), axis=1)
    return np.asarray(model.predict(images))


def _trial(template, constants, label, seed, build):
    rng = np.random.default_rng(seed)
    payload = datagen.gen_payload(template, constants, label, rng)
    ec = tables.EC_LEVELS[int(rng.integers(len(tables.EC_LEVELS)))]
    return build(payload, ec, int(rng.integers(2 ** 63)))


def _score(images, labels, model, match):
    dec = []
    reasons = []
    for img in images:
        res = decode_image(img)
        dec.append(detect_constant(res, match))
        reasons.append(res.failure if not res.ok else (None if dec[-1] is not None else "no_constant"))
    labels = np.asarray(labels)
    dec_hits = sum(int(d == y) for d, y in zip(dec, labels))
    pred = _classify(model, images)
    cls_hits = None if pred is None else int(np.sum(pred == labels))
    return dec_hits, cls_hits, reasons


def sweep_inversion(model=None, template="constant_first", constants=None, percents=range(101),
                    n=50, seed=0):
    """Fresh labelled symbols per percent, inverted, scored by both methods on
    the same images. ``model`` may be None to score the decoder only."""
    if n < 1:
        raise ValueError("n must be >= 1")
    constants = tuple(constants or datagen.DEFAULT_CONSTANTS[template])
    match = [datagen.match_string(c) for c in constants]
    rows, failures = [], []
    for p in percents:
        p = int(p)
        labels = [i % 2 for i in range(n)]
        build = lambda payload, ec, s, p=p: render(  # noqa: E731
            invert_modules(encode_matrix(QrSpec(payload, ec)), p, s), **datagen.INVERSION_RENDER)
        images = [_trial(template, constants, y, datagen.derive_seed(seed, _SWEEP_TAG, p, i), build)
                  for i, y in enumerate(labels)]
        dec, cls, reasons = _score(images, labels, model, match)
        rows.append(SweepRow(p, dec, cls, n))
        failures += [(p, i, labels[i], r) for i, r in enumerate(reasons) if r]
    return SweepResult(rows, failures)


def eval_realistic(model=None, families=None, n=100, seed=0, template="constant_first", constants=None):
    """Per-config accuracies and unweighted family means for the realistic noises."""
    if n < 1:
        raise ValueError("n must be >= 1")
    families = families or FAMILIES
    constants = tuple(constants or datagen.DEFAULT_CONSTANTS[template])
    match = [datagen.match_string(c) for c in constants]
    configs, means = {}, {}
    for c, fam in enumerate(sorted(families)):
        for k, noise in enumerate(families[fam]):
            noise = str(NoiseSpec.parse(noise))
            labels = [i % 2 for i in range(n)]
            build = lambda payload, ec, s, noise=noise: datagen.make_sample(payload, ec, noise, s)  # noqa: E731
            images = [_trial(template, constants, y, datagen.derive_seed(seed, _REALISTIC_TAG, c, k, i), build)
                      for i, y in enumerate(labels)]
            dec, cls, _ = _score(images, labels, model, match)
            configs[noise] = (None if cls is None else Fraction(cls, n), Fraction(dec, n), n)
        rows = [configs[str(NoiseSpec.parse(x))] for x in families[fam]]
        cls_mean = None if rows[0][0] is None else sum(r[0] for r in rows) / len(rows)
        means[fam] = (cls_mean, sum(r[1] for r in rows) / len(rows))
    return NoiseTable(configs, means)


def ablate_constants(configs, percents=range(101), n=50, seed=0):
    """configs: name -> (template, constants, model). Returns (curves, names
    ordered by decreasing classifier AUC)."""
    curves = {name: sweep_inversion(model, template, constants, percents, n, seed)
              for name, (template, constants, model) in configs.items()}
    order = sorted(curves, key=lambda k: (-curves[k].auc(), k))
    return curves, order


# -- emission -------------------------------------------------------------------

def _fmt(x):
    return "nan" if x is None else f"{float(x):.4f}"


def sweep_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        w.writerow((r.percent, _fmt(r.decoder_acc), _fmt(r.classifier_acc), r.n))
    return buf.getvalue()


def failures_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("percent", "trial", "label", "failure"))
    w.writerows(result.failures)
    return buf.getvalue()


def table_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("config", "classifier_acc", "decoder_acc", "n"))
    for noise, (c, d, n) in table.configs.items():
        w.writerow((noise, _fmt(c), _fmt(d), n))
    for fam, (c, d) in table.families.items():
        w.writerow((f"{fam}:mean", _fmt(c), _fmt(d), ""))
    return buf.getvalue()


def read_sweep_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for p, d, c, n in reader:
            n = int(n)
            rows.append(SweepRow(int(p), round(float(d) * n), None if c == "nan" else round(float(c) * n), n))
    return SweepResult(rows)


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def sweep_svg(curves, title="accuracy vs inverted modules (%)", width=480, height=320):
    """Line chart, x axis 0-100 %, y axis 0-1; one path per method and curve.
    ``curves`` is a SweepResult or a dict name -> SweepResult."""
    if isinstance(curves, SweepResult):
        curves = {"": curves}
    left, right, top, bottom = 50, 130, 30, 40
    pw, ph = width - left - right, height - top - bottom

    def xy(p, a):
        return f"{left + pw * p / 100:.2f},{top + ph * (1 - a):.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<text x="{left}" y="18" font-size="12" font-family="sans-serif">{_esc(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>']
    for t in range(0, 101, 20):
        x = left + pw * t / 100
        out.append(f'<text x="{x:.2f}" y="{top + ph + 15}" font-size="10" text-anchor="middle" '
                   f'font-family="sans-serif">{t}</text>')
    for t in range(0, 6):
        y = top + ph * (1 - t / 5)
        out.append(f'<text x="{left - 5}" y="{y + 3:.2f}" font-size="10" text-anchor="end" '
                   f'font-family="sans-serif">{t / 5:.1f}</text>')
    k = 0
    for name, res in curves.items():
        for method, ys, dash in (("decoder", res.decoder_curve(), "4,3"), ("classifier", res.classifier_curve(), "")):
            if np.all(np.isnan(ys)):
                continue
            pts = " ".join(xy(p, a) for p, a in zip(res.percents(), ys) if not np.isnan(a))
            color = PALETTE[k % len(PALETTE)]
            label = f"{name} {method}".strip()
            style = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{style} points="{pts}">'
                       f'<title>{_esc(label)}</title></polyline>')
            ly = top + 12 + 14 * k
            out.append(f'<line x1="{left + pw + 8}" y1="{ly}" x2="{left + pw + 24}" y2="{ly}" '
                       f'stroke="{color}"{style}/>')
            out.append(f'<text x="{left + pw + 28}" y="{ly + 3}" font-size="10" '
                       f'font-family="sans-serif">{_esc(label)}</text>')
            k += 1
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def write_text(path, text):
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def emit(result, csv_path=None, svg_path=None, failures_path=None):
    if not result.rows:
        raise ValueError("empty sweep")
    if csv_path:
        write_text(csv_path, sweep_csv(result))
    if svg_path:
        write_text(svg_path, sweep_svg(result))
    if failures_path:
        write_text(failures_path, failures_csv(result))
