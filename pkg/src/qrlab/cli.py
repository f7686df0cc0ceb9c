"""qrlab command line."""

import argparse
import json
import os
import sys

import numpy as np

from . import bench, cnn, datagen, raster
from .decoder import decode_image, detect_constant
from .degrade import NoiseSpec, apply_noise
from .encoder import QrSpec, encode_matrix, render

EXIT_FAILURE, EXIT_IO = 1, 3


def _pair(text):
    parts = text.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two comma-separated constants")
    return tuple(parts)


def _percents(text):
    """'0:101' (range), '0:101:5' or '0,1,2'."""
    if ":" in text:
        return list(range(*[int(x) for x in text.split(":")]))
    return [int(x) for x in text.split(",")]


def cmd_encode(a):
    spec = QrSpec(a.text, a.ec, mask=a.mask, version=a.version)
    raster.write_pgm(a.out, render(encode_matrix(spec), a.scale, a.quiet))


def cmd_degrade(a):
    spec = NoiseSpec.parse(a.noise)
    raster.write_pgm(a.out, apply_noise(spec, raster.read_pgm(a.input), a.seed))


def cmd_decode(a):
    res = decode_image(raster.read_pgm(a.input))
    if not res.ok:
        print(f"failure: {res.failure}", file=sys.stderr)
        return EXIT_FAILURE
    print(res.text.decode("utf-8", errors="replace"))
    if a.expect_constants:
        match = [datagen.match_string(c) for c in a.expect_constants]
        k = detect_constant(res, match)
        if k is None:
            print("failure: no_constant", file=sys.stderr)
            return EXIT_FAILURE
        print(f"class {k} ({a.expect_constants[k]})")
    return 0


def cmd_gen_dataset(a):
    if a.no_images:
        records = datagen.plan(a.preset, a.template, a.constants, a.seed)
        os.makedirs(a.out, exist_ok=True)
        datagen.write_manifest(os.path.join(a.out, "manifest.jsonl"), records)
    else:
        records = datagen.build_dataset(a.out, a.preset, a.template, a.constants, a.seed)
    print(f"{len(records)} records -> {os.path.join(a.out, 'manifest.jsonl')}")


def load_manifest_images(path):
    records = datagen.read_manifest(path)
    root = os.path.dirname(os.path.abspath(path))
    images = [raster.read_pgm(os.path.join(root, r.image_path)) if r.image_path else datagen.sample_for(r)[1]
              for r in records]
    return records, images


def train_from_manifest(manifest, preset="desk", seed=0, epochs=None, log=None):
    records, images = load_manifest_images(manifest)
    model_cfg = cnn.MODEL_PRESETS[preset]
    train_cfg = cnn.TRAIN_PRESETS[preset]
    train_cfg = cnn.TrainConfig(**{**train_cfg.__dict__, "seed": seed, **({"epochs": epochs} if epochs else {})})
    index = {id(r): k for k, r in enumerate(records)}
    tr, va = datagen.split_train_val(records, 0.2, seed)
    x = cnn.to_batch(images, model_cfg.input_side)
    y = np.array([r.label for r in records])
    ti = [index[id(r)] for r in tr]
    vi = [index[id(r)] for r in va]
    return cnn.train(model_cfg, train_cfg, x[ti], y[ti], x[vi], y[vi], log=log)


def cmd_train(a):
    log = (lambda h: print(json.dumps(h), file=sys.stderr)) if a.verbose else None
    model, history = train_from_manifest(a.manifest, a.preset, a.seed, a.epochs, log)
    records = datagen.read_manifest(a.manifest)
    extra = {"preset": a.preset, "seed": a.seed, "history": history,
             "template": records[0].template, "constants": list(records[0].constants)}
    cnn.save_checkpoint(a.out, model, extra)
    best = max(h["val_acc"] for h in history)
    print(f"best val_acc {best:.4f} -> {a.out}")


def _load_model(path):
    if not path:
        return None, {}
    return cnn.load_checkpoint(path)


def cmd_sweep(a):
    model, extra = _load_model(a.model)
    template = a.template or extra.get("template", "constant_first")
    constants = a.constants or tuple(extra.get("constants", ())) or None
    res = bench.sweep_inversion(model, template, constants, a.percents, a.n, a.seed)
    bench.emit(res, a.out_csv, a.out_svg, a.failures_csv)
    if not a.out_csv:
        sys.stdout.write(bench.sweep_csv(res))


def cmd_eval(a):
    model, extra = _load_model(a.model)
    template = a.template or extra.get("template", "constant_first")
    constants = a.constants or tuple(extra.get("constants", ())) or None
    table = bench.eval_realistic(model, n=a.n, seed=a.seed, template=template, constants=constants)
    text = bench.table_csv(table)
    if a.out_csv:
        bench.write_text(a.out_csv, text)
    else:
        sys.stdout.write(text)


def cmd_ablate(a):
    configs = {}
    for name, template, constants, path in a.run:
        model, _ = cnn.load_checkpoint(path)
        configs[name] = (template, _pair(constants), model)
    curves, order = bench.ablate_constants(configs, a.percents, a.n, a.seed)
    if a.out_dir:
        for name, res in curves.items():
            bench.write_text(os.path.join(a.out_dir, f"{name}.csv"), bench.sweep_csv(res))
    if a.out_svg:
        bench.write_text(a.out_svg, bench.sweep_svg(curves, "accuracy by training configuration"))
    for name in order:
        print(f"{name}\tclassifier_auc={curves[name].auc():.4f}\tdecoder_auc={curves[name].auc('decoder'):.4f}")


def cmd_plot(a):
    labels = a.labels.split(",") if a.labels else [os.path.splitext(os.path.basename(p))[0] for p in a.csv]
    if len(labels) != len(a.csv):
        raise SystemExit("--labels must name every csv")
    curves = {lab: bench.read_sweep_csv(p) for lab, p in zip(labels, a.csv)}
    if len(curves) == 1:
        curves = next(iter(curves.values()))
    bench.write_text(a.out_svg, bench.sweep_svg(curves))


def build_parser():
    p = argparse.ArgumentParser(prog="qrlab", description="QR robustness lab")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("encode", help="render a QR symbol to PGM")
    s.add_argument("--text", required=True)
    s.add_argument("--ec", default="M", choices=list("LMQH"))
    s.add_argument("--scale", type=int, default=8)
    s.add_argument("--quiet", type=int, default=4)
    s.add_argument("--mask", type=int, default=None)
    s.add_argument("--version", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("degrade", help="apply a noise model to a PGM")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--noise", required=True, help="e.g. inversion:p=12, rdist:sigma=5, ruled:mag=20, fgbg")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("decode", help="decode a PGM")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--expect-constants", type=_pair, default=None)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("gen-dataset", help="generate a labelled dataset")
    s.add_argument("--preset", default="desk", choices=sorted(datagen.PRESETS))
    s.add_argument("--template", default="constant_first", choices=datagen.TEMPLATES)
    s.add_argument("--constants", type=_pair, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-images", action="store_true", help="manifest only; images regenerate from seeds")
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("train", help="train the classifier on a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--preset", default="desk", choices=sorted(cnn.TRAIN_PRESETS))
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=None, help="override the preset's epoch count")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_train)

    def bench_args(s, csv=True):
        s.add_argument("--model", default=None, help="checkpoint; omit to score the decoder only")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--n", type=int, default=50)
        s.add_argument("--template", default=None, choices=datagen.TEMPLATES)
        s.add_argument("--constants", type=_pair, default=None)
        if csv:
            s.add_argument("--out-csv", default=None)

    s = sub.add_parser("sweep", help="inversion sweep, both methods")
    bench_args(s)
    s.add_argument("--percents", type=_percents, default=list(range(101)))
    s.add_argument("--out-svg", default=None)
    s.add_argument("--failures-csv", default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("eval", help="realistic-noise table")
    bench_args(s)
    s.set_defaults(n=100, func=cmd_eval)

    s = sub.add_parser("ablate", help="compare models trained on different payload configurations")
    s.add_argument("--run", nargs=4, action="append", required=True,
                   metavar=("NAME", "TEMPLATE", "CONSTANTS", "CKPT"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--percents", type=_percents, default=list(range(101)))
    s.add_argument("--out-dir", default=None)
    s.add_argument("--out-svg", default=None)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("plot", help="SVG chart from sweep CSVs")
    s.add_argument("--csv", nargs="+", required=True)
    s.add_argument("--labels", default=None)
    s.add_argument("--out-svg", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except OSError as e:
        print(f"io failure: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
