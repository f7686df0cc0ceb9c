"""Seeded payload generation and dataset assembly.

Record seeds are derived from the master seed with
``numpy.random.SeedSequence(master_seed, spawn_key=(class, ec index,
config index, item index))``, so any record can be regenerated on its own
and datasets do not depend on generation order.
"""

import datetime as dt
import json
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from . import raster, tables
from .degrade import NoiseSpec, apply_noise
from .encoder import QrSpec, encode_matrix, render

TEMPLATES = ("constant_first", "constant_last", "url")
DEFAULT_CONSTANTS = {
    "constant_first": ("approuvé", "invalide"),
    "constant_last": ("approuvé", "invalide"),
    "url": ("Facebook", "Twitter"),
}
DATE_MIN = dt.date(1921, 1, 1)
DATE_MAX = dt.date(2021, 1, 1)
USERNAME_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789"
USERNAME_LEN = (5, 20)

# the twelve training configurations, in config-index order
TRAIN_CONFIGS = (
    ["inversion:p=%d" % p for p in (0, 10, 20, 30, 40)]
    + ["rdist:sigma=%d" % s for s in (2, 5, 20)]
    + ["ruled:mag=%d" % m for m in (10, 20, 50)]
    + ["fgbg"]
)

PRESETS = {
    "paper": {"configs": TRAIN_CONFIGS, "n_per_cell": 165},
    "desk": {"configs": TRAIN_CONFIGS, "n_per_cell": 8},
    # one noise config; 250 per class and EC level = 1000 per class
    "test": {"configs": ["inversion:p=0"], "n_per_cell": 250},
}

INVERSION_RENDER = {"scale": 1, "quiet": 0}
REALISTIC_RENDER = {"scale": 8, "quiet": 4}


@lru_cache(maxsize=None)
def _names(kind):
    text = resources.files("qrlab").joinpath(f"data/{kind}_names.txt").read_text("ascii")
    return tuple(text.split())


def first_names():
    return _names("first")


def last_names():
    return _names("last")


def match_string(constant):
    """ASCII prefix used to spot a constant in decoded text ("approuvé" -> "approuv")."""
    out = []
    for ch in constant:
        if ord(ch) > 127:
            break
        out.append(ch)
    return "".join(out)


def random_date(rng):
    span = (DATE_MAX - DATE_MIN).days
    return DATE_MIN + dt.timedelta(days=int(rng.integers(0, span + 1)))


def gen_payload(template, constants, label, seed):
    """Payload text for class ``label`` (index into ``constants``)."""
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    constant = constants[label]
    if template == "url":
        n = int(rng.integers(USERNAME_LEN[0], USERNAME_LEN[1] + 1))
        user = "".join(USERNAME_CHARS[i] for i in rng.integers(0, len(USERNAME_CHARS), n))
        return f"https://{constant}/{user}"
    first = first_names()[rng.integers(len(first_names()))]
    last = last_names()[rng.integers(len(last_names()))]
    date = random_date(rng).strftime("%d/%m/%Y")
    if template == "constant_first":
        return f"{constant}/{first}/{last}/{date}"
    return f"{first}/{last}/{date}/{constant}"


def derive_seed(master_seed, *key):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class Record:
    image_path: str | None
    label: int
    payload: str
    ec: str
    noise: str
    seed: int
    template: str = "constant_first"
    constants: tuple = DEFAULT_CONSTANTS["constant_first"]

    def __post_init__(self):
        self.constants = tuple(self.constants)

    def to_json(self):
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


def make_sample(payload, ec, noise, seed):
    """Render one labelled image: inversion on the 1 px/module matrix,
    realistic noise on an 8 px/module render with a 4-module quiet zone."""
    spec = noise if isinstance(noise, NoiseSpec) else NoiseSpec.parse(noise)
    matrix = encode_matrix(QrSpec(payload, ec))
    if spec.on_matrix:
        noisy = apply_noise(spec, matrix, seed)
        return render(noisy, **INVERSION_RENDER)
    return apply_noise(spec, render(matrix, **REALISTIC_RENDER), seed)


def plan(preset="desk", template="constant_first", constants=None, master_seed=0,
         configs=None, n_per_cell=None):
    """Records of a dataset without rendering images (paths left empty)."""
    cfg = PRESETS[preset] if isinstance(preset, str) else preset
    configs = list(configs or cfg["configs"])
    n = n_per_cell if n_per_cell is not None else cfg["n_per_cell"]
    constants = tuple(constants or DEFAULT_CONSTANTS[template])
    if len(constants) != 2 or constants[0] == constants[1]:
        raise ValueError("need two distinct constants")
    records = []
    for label in (0, 1):
        for e, ec in enumerate(tables.EC_LEVELS):
            for c, noise in enumerate(configs):
                noise = str(NoiseSpec.parse(noise))
                for i in range(n):
                    seed = derive_seed(master_seed, label, e, c, i)
                    rng = np.random.default_rng(seed)
                    payload = gen_payload(template, constants, label, rng)
                    records.append(Record(None, label, payload, ec, noise, seed, template, constants))
    return records


def sample_for(record):
    """(payload, image) regenerated from a record's seed alone."""
    rng = np.random.default_rng(record.seed)
    payload = gen_payload(record.template, record.constants, record.label, rng)
    noise_seed = int(rng.integers(2 ** 63))
    return payload, make_sample(payload, record.ec, record.noise, noise_seed)


def build_dataset(out_dir, preset="desk", template="constant_first", constants=None,
                  master_seed=0, configs=None, n_per_cell=None):
    """Render every record of a preset to PGM files and write manifest.jsonl."""
    records = plan(preset, template, constants, master_seed, configs, n_per_cell)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    for k, rec in enumerate(records):
        payload, img = sample_for(rec)
        assert payload == rec.payload
        rel = os.path.join("images", f"{k:06d}.pgm")
        raster.write_pgm(os.path.join(out_dir, rel), img)
        rec.image_path = rel
    write_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    return records


def write_manifest(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")


def read_manifest(path):
    with open(path, encoding="utf-8") as f:
        return [Record.from_json(line) for line in f if line.strip()]


def load_images(records, root):
    return [raster.read_pgm(os.path.join(root, r.image_path)) for r in records]


def split_train_val(records, fraction=0.2, seed=0):
    """Stratified, seeded train/validation split (order preserved within each part)."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    val_idx = set()
    for label in sorted({r.label for r in records}):
        idx = [i for i, r in enumerate(records) if r.label == label]
        k = int(round(fraction * len(idx)))
        val_idx.update(np.asarray(idx)[rng.permutation(len(idx))[:k]].tolist())
    train = [r for i, r in enumerate(records) if i not in val_idx]
    val = [r for i, r in enumerate(records) if i in val_idx]
    return train, val
