"""Command-line entry point: ``fdmnet <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import logging
import math
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, build_configs, parse_kv, read_config
from .fileio import FormatError, export_falsecolor, load_hsic, load_mosa, save_hsic, save_mosa
from .msfa import MsfaPattern, PatternError, SizingError, mosaic

METRIC_KEYS = ("psnr", "ssim", "sam", "mrae")


class UsageError(Exception):
    pass


def _int_triplet(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three band indices, got {len(vals)}")
    return vals


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random draw")
    common.add_argument("--config", help="key=value file overriding model/train/loss/lowpass defaults")
    common.add_argument("--out", help="output path")

    ap = argparse.ArgumentParser(prog="fdmnet", description="Multispectral demosaicing toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="write a synthetic cube (.hsic)")
    p.add_argument("--size", type=int, nargs=2, default=(64, 64), metavar=("M", "N"))
    p.add_argument("--bands", type=int, default=16)
    p.add_argument("--max-freq", type=int, default=3)
    p.add_argument("--detail", type=float, default=0.2, help="detail amplitude")
    p.add_argument("--shapes", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.0)

    p = sub.add_parser("mosaic", parents=[common], help="sample a cube with the filter array (.mosa)")
    p.add_argument("input")

    p = sub.add_parser("demosaic", parents=[common], help="reconstruct a cube from a mosaic")
    p.add_argument("input")
    p.add_argument("--method", choices=("bilinear", "lowpass", "fdm"), default="lowpass")
    p.add_argument("--checkpoint", help="trained weights (required for --method fdm)")

    p = sub.add_parser("train", parents=[common], help="train the network on .hsic cubes")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--steps", type=int)
    p.add_argument("--trace", help="CSV loss trace path")
    p.add_argument("--holdout", help="cube whose PSNR is logged during training")

    p = sub.add_parser("eval", parents=[common], help="score reconstructions of reference cubes")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--checkpoint")
    p.add_argument("--method", choices=("bilinear", "lowpass", "fdm", "all"), default="all")
    p.add_argument("--json", action="store_true", help="one JSON object per line")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--no-network", action="store_true", help="skip the full micro network")

    p = sub.add_parser("export-falsecolor", parents=[common], help="8-bit RGB preview of a cube")
    p.add_argument("input")
    p.add_argument("--bands", type=_int_triplet, default=(2, 11, 16), help="1-based R,G,B bands")
    return ap


def _configs(args):
    pairs = read_config(args.config) if args.config else []
    if args.seed is not None:
        pairs.append(("seed", str(args.seed)))
    return build_configs(pairs)


def _require_out(args):
    if not args.out:
        raise UsageError(f"{args.command} needs --out")
    return args.out


def _load_model(path):
    from .maformer import MaFormer

    header, arrays = load_checkpoint(path)
    cfgs = build_configs(parse_kv(header))
    model = MaFormer(cfgs["model"])
    model.load_arrays(arrays)
    return model, cfgs


def _pattern_for(bands):
    p = math.isqrt(bands)
    if p * p != bands:
        raise SizingError(f"{bands} bands do not fill a square filter array")
    return MsfaPattern.default(p)


def cmd_synth(args):
    from .synth import SceneSpec, generate

    out = _require_out(args)
    spec = SceneSpec(m=args.size[0], n=args.size[1], bands=args.bands, max_freq=args.max_freq,
                     detail_amplitude=args.detail, n_shapes=args.shapes, noise=args.noise,
                     seed=args.seed or 0)
    save_hsic(out, generate(spec).cube)


def cmd_mosaic(args):
    out = _require_out(args)
    cube = load_hsic(args.input)
    save_mosa(out, mosaic(cube, _pattern_for(cube.shape[2])))


def cmd_demosaic(args):
    from .lowpass import bilinear_demosaic, reconstruct_lowpass
    from .training import predict

    out = _require_out(args)
    mos = load_mosa(args.input)
    lowcfg = _configs(args)["lowpass"]
    if args.method == "bilinear":
        cube = np.clip(bilinear_demosaic(mos), 0.0, 1.0)
    elif args.method == "lowpass":
        cube = reconstruct_lowpass(mos, lowcfg)
    else:
        if not args.checkpoint:
            raise UsageError("--method fdm needs --checkpoint")
        model, cfgs = _load_model(args.checkpoint)
        cube = predict(model, mos, cfgs["lowpass"], cfgs["train"].target)
    save_hsic(out, cube)


def cmd_train(args):
    from .maformer import MaFormer
    from .training import train

    out = _require_out(args)
    cfgs = _configs(args)
    if args.steps is not None:
        cfgs["train"] = build_configs([("train.steps", str(args.steps))], cfgs)["train"]
    cubes = [load_hsic(p) for p in args.inputs]
    holdout = load_hsic(args.holdout) if args.holdout else None
    model = MaFormer(cfgs["model"])
    result = train(cubes, model, cfgs["train"], cfgs["loss"], cfgs["lowpass"],
                   pattern=_pattern_for(cfgs["model"].bands), holdout=holdout,
                   checkpoint_path=out, trace_path=args.trace)
    if result.trace:
        print(f"steps={result.steps_done}")
        print(f"final_loss={result.trace[-1]['total']!r}")


def cmd_eval(args):
    from .training import evaluate

    model, cfgs = (None, _configs(args))
    if args.checkpoint:
        model, cfgs = _load_model(args.checkpoint)
    elif args.method == "fdm":
        raise UsageError("--method fdm needs --checkpoint")
    cubes = [load_hsic(p) for p in args.inputs]
    bands = {c.shape[2] for c in cubes}
    if len(bands) != 1:
        raise SizingError(f"cubes disagree on band count: {sorted(bands)}")
    rows, _ = evaluate(cubes, model, cfgs["lowpass"], _pattern_for(bands.pop()), args.inputs,
                       cfgs["train"].target)
    if args.method != "all":
        want = {"fdm": ("fdm", "blind")}.get(args.method, (args.method,))
        rows = [r for r in rows if r["method"] in want]
    lines = []
    for r in rows:
        if args.json:
            lines.append(json.dumps({k: r[k] for k in METRIC_KEYS + ("method", "file")}))
        else:
            lines.append(" ".join([f"file={r['file']}", f"method={r['method']}"]
                                  + [f"{k}={r[k]:.6f}" for k in METRIC_KEYS]))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)


def cmd_gradcheck(args):
    from .gradsuite import run_suite

    ok = True
    for name, report in run_suite(seed=args.seed or 0, include_network=not args.no_network):
        print(f"{name}: {report}", flush=True)
        ok &= report.passed
    return 0 if ok else 1


def cmd_export_falsecolor(args):
    export_falsecolor(load_hsic(args.input), _require_out(args), args.bands)


COMMANDS = {"synth": cmd_synth, "mosaic": cmd_mosaic, "demosaic": cmd_demosaic,
            "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "export-falsecolor": cmd_export_falsecolor}


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except (UsageError, ConfigError) as exc:
        ap.print_usage(sys.stderr)
        print(f"fdmnet: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, FormatError, CheckpointError, PatternError, ValueError) as exc:
        # SizingError and ShapeError are ValueErrors too
        print(f"fdmnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FloatingPointError as exc:
        print(f"fdmnet: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
