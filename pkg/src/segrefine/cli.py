"""Command-line interface: generate phantoms, refine one image, run sweeps."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .masks import dice, double_threshold
from .phantom import PhantomConfig, write_dataset
from .pipeline import (
    RefinementConfig,
    default_workers,
    discover_phantoms,
    evaluate_multi_init,
    make_segmentor,
    refine_segmentation,
    run_sweep,
    write_sweep_outputs,
)
from .raster_io import load_binary_mask, load_image, load_soft_mask, save_png
from .segmentor import OracleParams

# The analytic backend's default influence radius is sized for 512px
# images; "auto" scales it with the actual resolution.
_REFERENCE_EDGE = 512.0


def _auto_sigma(width: int, height: int, base: float) -> float:
    return max(2.0, base * min(width, height) / _REFERENCE_EDGE)


def _env_seed() -> int:
    raw = os.environ.get("SEGREFINE_SEED", "")
    try:
        return int(raw) if raw else 0
    except ValueError:
        raise SystemExit(f"SEGREFINE_SEED must be an integer, got {raw!r}")


def _int_list(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def _build_config(args, width: int, height: int) -> RefinementConfig:
    if args.config:
        cfg = RefinementConfig.from_json(args.config)
    else:
        cfg = RefinementConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    elif cfg.seed == 0:
        cfg = replace(cfg, seed=_env_seed())
    if getattr(args, "strategy", None):
        cfg = replace(cfg, negative_strategy=args.strategy)
    if getattr(args, "n_init", None):
        cfg = replace(cfg, n_init=args.n_init)
    if getattr(args, "backend", None):
        cfg = replace(cfg, backend=args.backend)
    if args.oracle_sigma == "auto":
        cfg = replace(cfg, oracle=replace(cfg.oracle, sigma=_auto_sigma(width, height, cfg.oracle.sigma)))
    elif args.oracle_sigma:
        cfg = replace(cfg, oracle=replace(cfg.oracle, sigma=float(args.oracle_sigma)))
    return cfg


def _cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed()
    cfg = PhantomConfig(width=args.width, height=args.height)
    severities = [float(s) for s in _str_list(args.severities)] if args.severities else []
    manifest = write_dataset(args.out, args.count, cfg, seed, severities)
    print(f"wrote {manifest['count']} phantoms to {args.out}")
    return 0


def _cmd_refine(args) -> int:
    image = load_image(args.image)
    coarse = load_soft_mask(args.coarse)
    tendon = load_binary_mask(args.tendon)
    gt = load_binary_mask(args.gt) if args.gt else None
    cfg = _build_config(args, image.width, image.height)
    seg = make_segmentor(cfg.backend, cfg.oracle)

    result = evaluate_multi_init(
        image, coarse, tendon, seg, cfg, seed=cfg.seed, pathology_gt=gt
    )
    report = {
        "inputs": {"image": str(args.image), "coarse": str(args.coarse), "tendon": str(args.tendon)},
        "config": cfg.to_dict(),
        "result": result.to_dict(),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2))

    if args.mask_out:
        best = 0
        if gt is not None and result.dices:
            best = int(max(range(len(result.dices)), key=lambda i: result.dices[i]))
        refined, _ = refine_segmentation(
            image, coarse, tendon, seg, cfg, seed=cfg.seed + best, positive_seed=cfg.seed
        )
        save_png(args.mask_out, refined.bits.astype(float))

    if gt is not None:
        print(
            f"coarse dice {result.coarse_dice:.4f} -> refined mean {result.mean_dice:.4f} "
            f"(std {result.std_dice:.4f}, max {result.max_dice:.4f}) over {len(result.dices)} inits"
        )
    else:
        print(f"refined {len(result.rows)} inits (no ground truth given, dice omitted)")
    print(f"report written to {out}")
    return 0


def _cmd_sweep(args) -> int:
    found, _ = discover_phantoms(args.data)
    if found:
        probe = load_image(Path(args.data) / found[0] / "image.png")
        width, height = probe.width, probe.height
    else:
        width = height = int(_REFERENCE_EDGE)
    cfg = _build_config(args, width, height)
    report = run_sweep(
        args.data,
        _int_list(args.regimes),
        _str_list(args.strategies),
        cfg,
        master_seed=cfg.seed,
        workers=args.workers,
    )
    write_sweep_outputs(report, args.out)
    for agg in report["aggregates"]:
        print(
            f"regime {agg['regime']:>3} {agg['strategy']:>9}: "
            f"coarse {agg['mean_coarse_dice']:.4f} -> refined {agg['mean_refined_dice']:.4f} "
            f"({agg['n_images']} images)"
        )
    if report["skips"]:
        print(f"skipped {len(report['skips'])} incomplete phantom dirs")
    print(f"outputs written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segrefine",
        description="Refine coarse segmentation masks with optimized prompt points.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic phantom dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--count", type=int, default=20)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--width", type=int, default=64)
    gen.add_argument("--height", type=int, default=256)
    gen.add_argument(
        "--severities",
        default="",
        help="comma-separated severities for pre-degraded coarse masks (e.g. 0.1,0.5,0.9)",
    )
    gen.set_defaults(func=_cmd_generate)

    ref = sub.add_parser("refine", help="refine one coarse mask")
    ref.add_argument("--image", required=True)
    ref.add_argument("--coarse", required=True)
    ref.add_argument("--tendon", required=True, help="band mask the negatives are drawn from")
    ref.add_argument("--gt", default=None, help="ground-truth mask for dice reporting")
    ref.add_argument("--backend", default=None, help="oracle | bridge:HOST:PORT | bridge-stdio:CMD")
    ref.add_argument("--strategy", default=None, choices=["optimized", "random", "none"])
    ref.add_argument("--n-init", type=int, default=None)
    ref.add_argument("--seed", type=int, default=None)
    ref.add_argument("--out", default="report.json")
    ref.add_argument("--mask-out", default=None, help="write the best refined mask as PNG")
    ref.add_argument("--config", default=None, help="JSON config file; flags override it")
    ref.add_argument("--oracle-sigma", default="auto", help="'auto' or a pixel radius")
    ref.set_defaults(func=_cmd_refine)

    sw = sub.add_parser("sweep", help="grid-evaluate a dataset")
    sw.add_argument("--data", required=True)
    sw.add_argument("--regimes", default="5,8,15,35,100")
    sw.add_argument("--strategies", default="optimized,random,none")
    sw.add_argument("--out", required=True)
    sw.add_argument("--backend", default=None)
    sw.add_argument("--n-init", type=int, default=None)
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--workers", type=int, default=default_workers())
    sw.add_argument("--config", default=None)
    sw.add_argument("--oracle-sigma", default="auto")
    sw.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
