"""Command-line front end.

    pixie enhance --input in.ppm --output out.ppm [--weights w.pixw]
                  [--prompts p.pixt | --synth-seed N] [--config cfg.json]
    pixie init-weights --out w.pixw [--seed N] [--base-channels C] [--scc-variant V]
    pixie analyze [--config cfg.json] --height H --width W
    pixie ablate-modulation --strategy S --seed N --out-prefix PREFIX
    pixie compare --a a.ppm --b b.ppm
    pixie synth-prompts --input in.ppm --seed N --out p.pixt

Errors go to stderr as a single ``pixie-error:`` line with exit status 1.
"""
import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import rng
from .enhance import SCC_VARIANTS, STRATEGIES, UPSAMPLE_MODES, DppbParams, upsample_modulation
from .errors import PixieError, ShapeError
from .imageio import read_ppm, write_pgm, write_ppm
from .metrics import compare, psnr, seam_energy_ratio
from .pipeline import PipelineConfig, check_weights, count_flops, count_params, init_weights, pipeline_forward
from .prompt import PATCH, SyntheticPromptConfig, load_prompts, save_prompts, synth_prompts
from .tensor import Conv2dParams
from .weights import load_weights, save_weights

ERROR_PREFIX = "pixie-error:"


def _load_config(args, **overrides):
    base = {}
    if getattr(args, "config", None):
        cfg = PipelineConfig.from_json(Path(args.config).read_text())
        base = dataclasses.asdict(cfg)
    base.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(base)


def _config_overrides(args):
    return dict(
        base_channels=getattr(args, "base_channels", None),
        scc_variant=getattr(args, "scc_variant", None),
        strategy=getattr(args, "strategy", None),
        upsample_mode=getattr(args, "upsample_mode", None),
        d_attn=getattr(args, "d_attn", None),
        dppb_per_scale=getattr(args, "dppb_per_scale", None),
        seed=getattr(args, "seed", None),
    )


def _pad_to(image, multiple):
    H, W = image.shape[2:]
    ph = (-H) % multiple
    pw = (-W) % multiple
    if ph == 0 and pw == 0:
        return image
    return np.pad(image, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")


def _tsv(rows, out):
    for row in rows:
        out.write("\t".join(str(c) for c in row) + "\n")


def _format_psnr(value):
    return "inf" if math.isinf(value) else f"{value:.4f} dB"


def cmd_enhance(args, out):
    cfg = _load_config(args)
    image = read_ppm(args.input)
    H, W = image.shape[2:]
    padded = _pad_to(image, cfg.min_divisor)
    if args.weights:
        weights = load_weights(args.weights)
        check_weights(weights, cfg)
    else:
        weights = init_weights(cfg)
    if args.prompts:
        prompts = load_prompts(args.prompts)
    else:
        prompts = synth_prompts(padded, SyntheticPromptConfig(
            seed=args.synth_seed, token_dim=cfg.token_dim, layers=cfg.layers))
    result = pipeline_forward(padded, weights, prompts, cfg)[:, :, :H, :W]
    if not np.all(np.isfinite(result)):
        raise PixieError("enhancement produced non-finite values")
    result = np.clip(result, 0.0, 1.0)
    write_ppm(args.output, result)
    if args.reference:
        ref = read_ppm(args.reference)
        out.write(f"PSNR {_format_psnr(psnr(result, ref))}\n")


def cmd_init_weights(args, out):
    cfg = _load_config(args, **_config_overrides(args))
    store = init_weights(cfg)
    save_weights(store, args.out)
    if args.config_out:
        Path(args.config_out).write_text(cfg.to_json() + "\n")
    _tsv([("group", "params")] + list(count_params(cfg).items()), out)


def cmd_analyze(args, out):
    cfg = _load_config(args, **_config_overrides(args))
    params = count_params(cfg)
    macs = count_flops(cfg, args.height, args.width, args.batch)
    rows = [("kind", "stage", "count")]
    rows += [("params", k, v) for k, v in params.items()]
    rows += [("macs", k, v) for k, v in macs.items()]
    _tsv(rows, out)


def _identity_dw(channels):
    w = np.zeros((channels, 1, 3, 3), np.float32)
    w[:, 0, 1, 1] = 1.0
    return w


def ablation_field(strategy, seed, grid=8, channels=6, upsample_mode="bilinear"):
    """Random token grid pushed through one modulation strategy (identity
    smoother, no MLP)."""
    tokens = rng.uniform(rng.stream_state(seed, "ablation.tokens"), (1, channels, grid, grid), 1.0)
    smoother = Conv2dParams(weight=_identity_dw(channels), padding=1, groups=channels)
    p = DppbParams(mod_fc1=None, mod_fc2=None, smoother=smoother, attn_norm=None,
                   ffn_norm=None, scc=None, ffn_fc1=None, ffn_fc2=None,
                   strategy=strategy, upsample_mode=upsample_mode)
    return tokens, upsample_modulation(tokens, grid * PATCH, grid * PATCH, p)


def cmd_ablate_modulation(args, out):
    _, field = ablation_field(args.strategy, args.seed, args.grid, upsample_mode=args.upsample_mode)
    plane = field[0, 0].astype(np.float64)
    lo, hi = plane.min(), plane.max()
    plane = (plane - lo) / (hi - lo) if hi > lo else np.zeros_like(plane)
    path = f"{args.out_prefix}_{args.strategy}.pgm"
    write_pgm(path, plane)
    ratio = seam_energy_ratio(field, PATCH)
    _tsv([("strategy", "seam_energy_ratio", "pgm"), (args.strategy, repr(ratio), path)], out)


def cmd_compare(args, out):
    a = read_ppm(args.a)
    b = read_ppm(args.b)
    if a.shape != b.shape:
        raise ShapeError(f"image sizes differ: {a.shape[2:]} vs {b.shape[2:]}")
    report = compare(a, b)
    out.write(f"PSNR {_format_psnr(report.psnr_db)}, SSIM {round(report.ssim, 6)}\n")


def cmd_synth_prompts(args, out):
    image = read_ppm(args.input)
    H, W = image.shape[2:]
    if H % PATCH or W % PATCH:
        raise ShapeError(f"image {W}x{H} is not a multiple of {PATCH}; pad it "
                         f"(e.g. to {W + (-W) % PATCH}x{H + (-H) % PATCH}) first")
    layers = tuple(int(t) for t in args.layers.split(",")) if args.layers else None
    cfg = SyntheticPromptConfig(seed=args.seed, token_dim=args.token_dim,
                                **({"layers": layers} if layers else {}))
    prompts = synth_prompts(image, cfg)
    save_prompts(prompts, args.out)
    hp, wp = prompts.grid_shape
    _tsv([("layers", "token_dim", "grid_h", "grid_w"),
          (",".join(map(str, prompts.layers)), prompts.token_dim, hp, wp)], out)


def _add_arch_flags(p, with_seed=True):
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--base-channels", type=int)
    p.add_argument("--scc-variant", choices=SCC_VARIANTS)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--upsample-mode", choices=UPSAMPLE_MODES)
    p.add_argument("--d-attn", type=int)
    p.add_argument("--dppb-per-scale", type=int)
    if with_seed:
        p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="pixie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance a P6 image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--weights")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--prompts", help="PIXT token-grid file")
    src.add_argument("--synth-seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--reference", help="print PSNR of the result against this image")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("init-weights", help="write seeded PIXW weights")
    _add_arch_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config-out", help="also write the resolved config as JSON")
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("analyze", help="parameter and MAC breakdown as TSV")
    _add_arch_flags(p, with_seed=False)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--batch", type=int, default=1)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ablate-modulation", help="render one modulation strategy")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--upsample-mode", choices=UPSAMPLE_MODES, default="bilinear")
    p.set_defaults(func=cmd_ablate_modulation)

    p = sub.add_parser("compare", help="PSNR and SSIM of two P6 images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth-prompts", help="write synthetic PIXT token grids")
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--token-dim", type=int, default=384)
    p.add_argument("--layers", help="comma-separated layer indices (default 2,5,8,11)")
    p.set_defaults(func=cmd_synth_prompts)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        args.func(args, out)
    except (PixieError, OSError, ValueError) as exc:
        sys.stderr.write(f"{ERROR_PREFIX} {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
