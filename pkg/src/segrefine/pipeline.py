"""End-to-end refinement runs, multi-init evaluation, and sweeps.

A single run turns (image, coarse soft mask, band mask) into a refined
binary mask: threshold the coarse mask, pick positive prompts on it,
derive hard negative prompts from the band background, and re-predict with
the full prompt set. Multi-init evaluation repeats the run over several
negative initializations; sweeps grid that over degradation regimes and
negative strategies for a whole dataset directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .adamw import OptimizerConfig
from .bridge_client import BridgeSegmentor
from .errors import NoForegroundError
from .kmedoids import ELBOW_1PCT, POSITIVE_SAMPLE_CAP, select_positive_points
from .masks import FULL_BCE, BinaryMask, Image, SoftMask, dice, double_threshold, mask_subtract
from .phantom import DegradeConfig, degrade_mask, severity_for_regime
from .points import PromptSet
from .raster_io import load_binary_mask, load_image, load_soft_mask
from .refine import init_complementary, random_negative_points, refine_negative_points
from .segmentor import AnalyticOracle, OracleParams, PromptableSegmentor

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_NO_DETECTION = "no-detection"
STATUS_FALLBACK = "fallback-no-negatives"

STRATEGY_OPTIMIZED = "optimized"
STRATEGY_RANDOM = "random"
STRATEGY_NONE = "none"
STRATEGIES = (STRATEGY_OPTIMIZED, STRATEGY_RANDOM, STRATEGY_NONE)

SWEEP_CSV_COLUMNS = (
    "regime,strategy,image,coarse_dice,mean_dice,std_dice,max_dice,chosen_k,steps"
)


@dataclass(frozen=True)
class RefinementConfig:
    t_min: float = 0.15
    alpha: float = 0.4
    k_min: int = 4
    k_max: int = 6
    k_rule: str = ELBOW_1PCT
    negative_strategy: str = STRATEGY_OPTIMIZED
    n_init: int = 10
    backend: str = "oracle"
    loss: str = FULL_BCE
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    oracle: OracleParams = field(default_factory=OracleParams)

    def __post_init__(self):
        if self.negative_strategy not in STRATEGIES:
            raise ValueError(f"negative_strategy must be one of {STRATEGIES}")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")

    @staticmethod
    def from_dict(data: dict) -> "RefinementConfig":
        data = dict(data)
        opt = OptimizerConfig(**data.pop("optimizer", {}))
        oracle = OracleParams(**data.pop("oracle", {}))
        return RefinementConfig(optimizer=opt, oracle=oracle, **data)

    @staticmethod
    def from_json(path) -> "RefinementConfig":
        return RefinementConfig.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


def make_segmentor(spec: str, oracle_params: OracleParams) -> PromptableSegmentor:
    """Build a backend from its CLI spec string.

    ``oracle`` uses the in-process analytic backend; ``bridge:HOST:PORT``
    connects over TCP; ``bridge-stdio:CMD ...`` spawns CMD and talks over
    its stdio.
    """
    if spec == "oracle":
        return AnalyticOracle(oracle_params)
    if spec.startswith("bridge-stdio:"):
        return BridgeSegmentor.spawn_stdio(spec[len("bridge-stdio:") :])
    if spec.startswith("bridge:"):
        host, _, port = spec[len("bridge:") :].rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bridge spec {spec!r} must look like bridge:HOST:PORT")
        return BridgeSegmentor.connect_tcp(host, int(port))
    raise ValueError(f"unknown backend spec {spec!r}")


def stable_hash(*parts) -> int:
    """Platform-stable 63-bit hash used to derive per-item seeds."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class RunRow:
    """Outcome of a single refinement run (one negative initialization)."""

    status: str
    chosen_k: int
    steps: int
    converged: bool
    subsampled: bool
    loss_initial: float
    loss_final: float
    prompts: tuple  # wire-shaped point records

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prompts"] = list(self.prompts)
        return d


def refine_segmentation(
    image: Image,
    coarse: SoftMask,
    tendon: BinaryMask,
    seg: PromptableSegmentor,
    cfg: RefinementConfig = RefinementConfig(),
    seed: int = 0,
    positive_seed=None,
    positives: PromptSet = None,
):
    """One refinement run; returns (refined BinaryMask, RunRow).

    ``seed`` drives the negative-prompt initialization. ``positive_seed``
    (default: same as seed) drives positive-prompt selection separately so
    repeated runs can share positives while varying negatives; callers that
    already hold the selection can pass ``positives`` to skip recomputing it.

    An empty thresholded coarse mask short-circuits to an empty result with
    status "no-detection". If the band background vanishes after
    subtracting the detection, the run falls back to positives-only with
    status "fallback-no-negatives".
    """
    if tendon.is_empty:
        raise NoForegroundError("band mask is empty")
    thresholded = double_threshold(coarse, cfg.t_min, cfg.alpha)
    if thresholded.is_empty:
        empty = BinaryMask.empty(image.width, image.height)
        row = RunRow(STATUS_NO_DETECTION, 0, 0, True, False, float("nan"), float("nan"), ())
        return empty, row

    if positives is None:
        pos_seed = seed if positive_seed is None else positive_seed
        positives = select_positive_points(thresholded, cfg.k_min, cfg.k_max, pos_seed, cfg.k_rule)
    subsampled = thresholded.count > POSITIVE_SAMPLE_CAP
    background = mask_subtract(tendon, thresholded)

    strategy = cfg.negative_strategy
    status = STATUS_OK
    if strategy != STRATEGY_NONE and background.is_empty:
        logger.warning("no band background left after subtraction; dropping negatives")
        strategy = STRATEGY_NONE
        status = STATUS_FALLBACK

    trace = None
    if strategy == STRATEGY_OPTIMIZED:
        init = init_complementary(positives, background, seed)
        opt_cfg = replace(cfg.optimizer, loss=cfg.loss)
        prompts, trace = refine_negative_points(image, init, background, seg, opt_cfg)
    elif strategy == STRATEGY_RANDOM:
        negatives = random_negative_points(background, len(positives), seed)
        prompts = PromptSet(positives.points + negatives.points)
    else:
        prompts = positives

    refined = seg.predict(image, prompts).binarize(0.5)
    row = RunRow(
        status=status,
        chosen_k=len(positives),
        steps=trace.steps if trace else 0,
        converged=trace.converged if trace else True,
        subsampled=subsampled,
        loss_initial=trace.losses[0] if trace else float("nan"),
        loss_final=trace.losses[-1] if trace else float("nan"),
        prompts=tuple(prompts.to_records()),
    )
    return refined, row


@dataclass(frozen=True)
class MultiInitResult:
    """Aggregate of n_init refinement runs on one (image, coarse) pair."""

    image_id: str
    coarse_dice: float
    dices: tuple
    mean_dice: float
    std_dice: float
    max_dice: float
    chosen_k: int
    mean_steps: float
    statuses: tuple
    errors: tuple
    rows: tuple

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rows"] = [r.to_dict() if isinstance(r, RunRow) else r for r in self.rows]
        return d


def evaluate_multi_init(
    image: Image,
    coarse: SoftMask,
    tendon: BinaryMask,
    seg: PromptableSegmentor,
    cfg: RefinementConfig = RefinementConfig(),
    seed: int = 0,
    pathology_gt: BinaryMask = None,
) -> MultiInitResult:
    """Run refine_segmentation with seeds seed .. seed + n_init - 1.

    Positive selection is pinned to the base seed, so strategies without
    negative-path randomness produce identical results across inits. Dice
    statistics (population std) are computed against ``pathology_gt`` when
    given, over the runs that succeeded; at least one must.
    """
    shared_positives = None
    thresholded = double_threshold(coarse, cfg.t_min, cfg.alpha)
    if not thresholded.is_empty:
        shared_positives = select_positive_points(
            thresholded, cfg.k_min, cfg.k_max, seed, cfg.k_rule
        )

    dices = []
    statuses = []
    errors = []
    rows = []
    steps = []
    chosen_k = 0
    for i in range(cfg.n_init):
        try:
            refined, row = refine_segmentation(
                image, coarse, tendon, seg, cfg, seed=seed + i, positives=shared_positives
            )
        except (ValueError, RuntimeError) as exc:
            logger.warning("init %d failed: %s", i, exc)
            errors.append(f"init {i}: {exc}")
            continue
        rows.append(row)
        statuses.append(row.status)
        steps.append(row.steps)
        chosen_k = max(chosen_k, row.chosen_k)
        if pathology_gt is not None:
            dices.append(dice(refined, pathology_gt))
    if not rows:
        raise RuntimeError(f"all {cfg.n_init} initializations failed: {errors}")

    if pathology_gt is not None:
        coarse_dice = dice(double_threshold(coarse, cfg.t_min, cfg.alpha), pathology_gt)
        arr = np.array(dices)
        mean_d, std_d, max_d = float(arr.mean()), float(arr.std()), float(arr.max())
    else:
        coarse_dice = mean_d = std_d = max_d = float("nan")

    return MultiInitResult(
        image_id="",
        coarse_dice=coarse_dice,
        dices=tuple(dices),
        mean_dice=mean_d,
        std_dice=std_d,
        max_dice=max_d,
        chosen_k=chosen_k,
        mean_steps=float(np.mean(steps)) if steps else 0.0,
        statuses=tuple(statuses),
        errors=tuple(errors),
        rows=tuple(rows),
    )


def discover_phantoms(data_dir) -> tuple:
    """(found, skips): phantom ids with complete triples, and skip reasons."""
    data = Path(data_dir)
    manifest = data / "manifest.json"
    if manifest.exists():
        ids = [e["id"] for e in json.loads(manifest.read_text())["phantoms"]]
    else:
        ids = sorted(p.name for p in data.iterdir() if p.is_dir())
    found = []
    skips = []
    for pid in ids:
        missing = [
            f
            for f in ("image.png", "tendon.png", "pathology.png")
            if not (data / pid / f).exists()
        ]
        if missing:
            skips.append({"image": pid, "reason": f"missing {', '.join(missing)}"})
        else:
            found.append(pid)
    return found, skips


def _sweep_task(args) -> MultiInitResult:
    data_dir, image_id, regime, strategy, cfg, master_seed = args
    pdir = Path(data_dir) / image_id
    image = load_image(pdir / "image.png")
    tendon = load_binary_mask(pdir / "tendon.png")
    pathology = load_binary_mask(pdir / "pathology.png")

    severity = severity_for_regime(regime)
    coarse = degrade_mask(
        pathology,
        DegradeConfig(severity=severity, seed=stable_hash(master_seed, image_id, "degrade", regime)),
    )
    run_cfg = replace(cfg, negative_strategy=strategy)
    seg = make_segmentor(cfg.backend, cfg.oracle)
    result = evaluate_multi_init(
        image,
        coarse,
        tendon,
        seg,
        run_cfg,
        seed=stable_hash(master_seed, image_id),
        pathology_gt=pathology,
    )
    return replace(result, image_id=image_id)


def run_sweep(
    data_dir,
    regimes,
    strategies,
    cfg: RefinementConfig = RefinementConfig(),
    master_seed=None,
    workers: int = 1,
) -> dict:
    """Grid-evaluate a dataset over regimes and strategies.

    Returns a report dict with per-(regime, strategy, image) rows in a
    deterministic order, per-cell aggregates, and the skip manifest for
    incomplete phantom directories. ``workers`` > 1 fans tasks out to a
    process pool; results are assembled in task order either way.
    """
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    master = cfg.seed if master_seed is None else master_seed
    found, skips = discover_phantoms(data_dir)
    tasks = [
        (str(data_dir), pid, regime, strategy, cfg, master)
        for regime in regimes
        for strategy in strategies
        for pid in found
    ]

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, tasks, chunksize=1))
    else:
        results = [_sweep_task(t) for t in tasks]

    rows = []
    for (_, pid, regime, strategy, _, _), res in zip(tasks, results):
        rows.append(
            {
                "regime": regime,
                "strategy": strategy,
                "image": pid,
                "coarse_dice": res.coarse_dice,
                "dices": list(res.dices),
                "mean_dice": res.mean_dice,
                "std_dice": res.std_dice,
                "max_dice": res.max_dice,
                "chosen_k": res.chosen_k,
                "steps": res.mean_steps,
                "statuses": list(res.statuses),
                "errors": list(res.errors),
            }
        )

    aggregates = []
    for regime in regimes:
        for strategy in strategies:
            cell = [r for r in rows if r["regime"] == regime and r["strategy"] == strategy]
            if cell:
                aggregates.append(
                    {
                        "regime": regime,
                        "strategy": strategy,
                        "n_images": len(cell),
                        "mean_coarse_dice": float(np.mean([r["coarse_dice"] for r in cell])),
                        "mean_refined_dice": float(np.mean([r["mean_dice"] for r in cell])),
                    }
                )

    return {
        "config": cfg.to_dict(),
        "master_seed": master,
        "regimes": list(regimes),
        "strategies": list(strategies),
        "rows": rows,
        "aggregates": aggregates,
        "skips": skips,
    }


def sweep_csv(report: dict) -> str:
    """Render a sweep report as the canonical CSV text."""
    lines = [SWEEP_CSV_COLUMNS]
    for r in report["rows"]:
        lines.append(
            f"{r['regime']},{r['strategy']},{r['image']},"
            f"{r['coarse_dice']:.6f},{r['mean_dice']:.6f},{r['std_dice']:.6f},"
            f"{r['max_dice']:.6f},{r['chosen_k']},{r['steps']:.1f}"
        )
    return "\n".join(lines) + "\n"


def write_sweep_outputs(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(report))
    (out / "report.json").write_text(json.dumps(report, indent=2))


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
