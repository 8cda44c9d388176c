"""Synthetic ultrasound-like phantoms and coarse-mask degradation.

A phantom is a dark field crossed by a brighter horizontal band holding a
few darker elliptical blobs (the segmentation target), finished with
multiplicative speckle. Ground truth comes out exact by construction. The
degrader turns a ground-truth blob mask into the kind of coarse
probability mask a weak upstream model would produce, with one severity
knob controlling how bad things get.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import scipy.ndimage

from .errors import PhantomGeometryError
from .masks import BinaryMask, Image, SoftMask
from .raster_io import save_png, save_srf

logger = logging.getLogger(__name__)

_MIN_SEMIAXIS = 1.2
_EDGE_MARGIN = 3.0

# Training-fraction regimes (% of data an upstream model saw) mapped to the
# degradation severity used to emulate the resulting coarse-mask quality.
SEVERITY_BY_REGIME = {
    100: 0.1,
    60: 0.2,
    35: 0.3,
    25: 0.4,
    20: 0.5,
    15: 0.6,
    12: 0.7,
    8: 0.8,
    5: 0.9,
}


def severity_for_regime(fraction) -> float:
    """Degradation severity emulating an upstream model trained on fraction%."""
    key = int(fraction)
    if key != fraction or key not in SEVERITY_BY_REGIME:
        known = sorted(SEVERITY_BY_REGIME)
        raise ValueError(f"unknown training fraction {fraction!r}; known: {known}")
    return SEVERITY_BY_REGIME[key]


@dataclass(frozen=True)
class PhantomConfig:
    width: int = 64
    height: int = 256
    tendon_band: float = 0.10  # band height as a fraction of image height
    blob_range: tuple = (1, 3)  # inclusive range for the number of blobs
    pathology_area_fraction: float = 0.0109  # of total image area
    speckle: float = 0.06  # multiplicative noise amplitude
    background_level: float = 0.12
    tendon_level: float = 0.35
    pathology_level: float = 0.30
    seed: int = 0

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ValueError("phantom must be at least 32x32")
        if not (0.0 < self.tendon_band < 1.0):
            raise ValueError("tendon_band must lie in (0, 1)")
        if not (0.0 < self.pathology_area_fraction < 1.0):
            raise ValueError("pathology_area_fraction must lie in (0, 1)")
        lo, hi = self.blob_range
        if not (1 <= lo <= hi):
            raise ValueError("blob_range must satisfy 1 <= lo <= hi")
        for name in ("background_level", "tendon_level", "pathology_level"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")


def _rasterize_blobs(shape, blobs) -> np.ndarray:
    h, w = shape
    ys = np.arange(h, dtype=float)[:, None]
    xs = np.arange(w, dtype=float)[None, :]
    mask = np.zeros((h, w), dtype=bool)
    for cx, cy, a, b in blobs:
        mask |= ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0
    return mask


def generate_phantom(cfg: PhantomConfig):
    """Build one phantom; returns (image, tendon_mask, pathology_mask).

    Deterministic for a fixed config (including its seed). Raises
    PhantomGeometryError when the band is too thin or narrow to hold the
    requested blobs.
    """
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.width, cfg.height

    band_h = int(round(cfg.tendon_band * h))
    b_max = (band_h - 3) / 2.0
    if b_max < _MIN_SEMIAXIS:
        raise PhantomGeometryError(
            f"band height {band_h}px is too thin for blobs (need >= {int(2 * _MIN_SEMIAXIS + 3)}px)"
        )
    if band_h > h - 4:
        raise PhantomGeometryError(f"band height {band_h}px leaves no background margin")
    y_low, y_high = 2, h - band_h - 2
    jitter = min(h // 10, (y_high - y_low) // 2)
    y_center = (h - band_h) // 2
    y0 = int(rng.integers(max(y_low, y_center - jitter), min(y_high, y_center + jitter) + 1))

    tendon = np.zeros((h, w), dtype=bool)
    tendon[y0 : y0 + band_h, :] = True

    n_blobs = int(rng.integers(cfg.blob_range[0], cfg.blob_range[1] + 1))
    slot_w = (w - 2 * _EDGE_MARGIN) / n_blobs
    a_max = slot_w / 2.0 - 2.0
    if a_max < _MIN_SEMIAXIS:
        raise PhantomGeometryError(f"width {w}px cannot hold {n_blobs} separated blobs")

    total_target = cfg.pathology_area_fraction * w * h
    weights = rng.uniform(0.6, 1.4, n_blobs)
    areas = weights / weights.sum() * total_target

    blobs = []
    for i in range(n_blobs):
        # Draw a mild aspect ratio and let the band cap flatten it further
        # only when the area cannot fit otherwise.
        aspect = float(rng.uniform(1.0, 1.8))
        b_ideal = np.sqrt(areas[i] / (np.pi * aspect))
        b = float(np.clip(b_ideal, _MIN_SEMIAXIS, b_max))
        a = float(np.clip(areas[i] / (np.pi * b), _MIN_SEMIAXIS, a_max))
        slot_lo = _EDGE_MARGIN + i * slot_w
        cx = float(rng.uniform(slot_lo + a + 1.0, slot_lo + slot_w - a - 1.0))
        cy = float(rng.uniform(y0 + 1.0 + b, y0 + band_h - 1.0 - b))
        blobs.append((cx, cy, a, b))

    pathology = _rasterize_blobs((h, w), blobs)
    achieved = pathology.sum()
    if achieved > 0 and abs(achieved / total_target - 1.0) > 0.25:
        # One corrective pass: stretch or shrink horizontally toward target.
        factor = total_target / achieved
        blobs = [
            (cx, cy, float(np.clip(a * factor, _MIN_SEMIAXIS, a_max)), b)
            for cx, cy, a, b in blobs
        ]
        pathology = _rasterize_blobs((h, w), blobs)

    intensity = np.full((h, w), cfg.background_level)
    intensity[tendon] = cfg.tendon_level
    intensity[pathology] = cfg.pathology_level
    speckle = 1.0 + cfg.speckle * rng.standard_normal((h, w))
    intensity = np.clip(intensity * speckle, 0.0, 1.0)

    if not pathology.any():
        raise PhantomGeometryError("no pathology pixels were rasterized")
    assert not (pathology & ~tendon).any(), "blobs escaped the band"

    return Image(intensity), BinaryMask(tendon), BinaryMask(pathology)


@dataclass(frozen=True)
class DegradeConfig:
    """Coarse-mask corruption; severity 0 is a perfect pass-through."""

    severity: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.severity <= 1.0):
            raise ValueError("severity must lie in [0, 1]")

    @property
    def blur_sigma(self) -> float:
        return 1.0 + 6.0 * self.severity

    @property
    def amplitude(self) -> float:
        return 1.0 - 0.6 * self.severity

    @property
    def dropout(self) -> float:
        return 0.3 * self.severity

    @property
    def noise_sigma(self) -> float:
        return 0.05 * self.severity


def degrade_mask(gt: BinaryMask, cfg: DegradeConfig) -> SoftMask:
    """Corrupt a ground-truth mask into a plausible coarse prediction.

    Stages: whole-component dropout, Gaussian blur (reflected boundaries,
    kernel radius ceil(3 sigma)), amplitude scaling, additive Gaussian
    noise clipped to 3 sigma, final clamp to [0, 1]. Severity 0 bypasses
    everything and returns the exact indicator.
    """
    values = gt.bits.astype(float)
    if cfg.severity == 0.0:
        return SoftMask(values)

    rng = np.random.default_rng(cfg.seed)
    labels, n_components = scipy.ndimage.label(gt.bits)
    for c in range(1, n_components + 1):
        if rng.uniform() < cfg.dropout:
            values[labels == c] = 0.0

    sig = cfg.blur_sigma
    blurred = scipy.ndimage.gaussian_filter(
        values, sigma=sig, mode="reflect", radius=int(np.ceil(3.0 * sig))
    )
    scaled = blurred * cfg.amplitude
    ns = cfg.noise_sigma
    noise = np.clip(rng.normal(0.0, ns, scaled.shape), -3.0 * ns, 3.0 * ns)
    return SoftMask(np.clip(scaled + noise, 0.0, 1.0))


def write_dataset(out_dir, count: int, cfg: PhantomConfig, master_seed: int, severities=()):
    """Dump ``count`` phantoms under out_dir/phantom_<seed>/ plus a manifest.

    Each phantom directory holds image.png, tendon.png and pathology.png;
    for every requested severity a degraded coarse mask is stored as
    coarse_s<severity>.srf in the exact float format. Returns the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        seed = master_seed + i
        pcfg = replace(cfg, seed=seed)
        image, tendon, pathology = generate_phantom(pcfg)
        name = f"phantom_{seed:06d}"
        pdir = out / name
        pdir.mkdir(exist_ok=True)
        save_png(pdir / "image.png", image.intensity)
        save_png(pdir / "tendon.png", tendon.bits.astype(float))
        save_png(pdir / "pathology.png", pathology.bits.astype(float))
        for s in severities:
            dcfg = DegradeConfig(severity=s, seed=seed * 1000 + int(round(s * 100)))
            coarse = degrade_mask(pathology, dcfg)
            save_srf(pdir / f"coarse_s{s:g}.srf", coarse.values)
        entries.append({"id": name, "seed": seed})
    manifest = {
        "count": count,
        "master_seed": master_seed,
        "config": asdict(cfg),
        "severities": list(severities),
        "phantoms": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
