"""Synthetic ground-truth images and seeded one-pixel-at-a-time change series.

A ground truth is a white field with nested concentric disks of gray levels
(darker toward the center, the way a spreading focal infection looks). A
series replaces, one pixel per step, source-colored pixels inside a mask by
a target level, so image k differs from the ground truth in exactly k pixels.

All randomness goes through numpy's PCG64 generator (``np.random.default_rng``)
with explicit integer seeds, so a (spec, seed) pair reproduces a series
bit-for-bit. Eligible pixels are enumerated in row-major flat order before
sampling; that order is part of the reproducibility contract.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .raster import GrayLevel, Mask, Raster, circular_mask, load_image, save_image, u8_to_unit

__all__ = [
    "GroundTruthSpec",
    "ChangeSpec",
    "ManifestEntry",
    "SeriesManifest",
    "VerificationReport",
    "synthesize_ground_truth",
    "eligible_pixels",
    "select_replacements",
    "iter_series",
    "generate_series",
    "write_manifest",
    "read_manifest",
    "verify_series",
]


@dataclass(frozen=True)
class GroundTruthSpec:
    """Geometry and texture of the synthetic pre-change image.

    ring_radii are strictly decreasing; each pixel inside the largest circle
    takes the level of the innermost ring containing it. Per-region mottle
    textures jitter each pixel by a seeded uniform integer in [0, amplitude]
    8-bit steps, darkening regions at level >= 128 and lightening darker
    ones, so a region based at a level keeps that level as its extreme value
    (a perfectly flat image would let the map memorize every level exactly,
    which the photographic scene this stands in for never allows). An
    optional speckle then sprinkles exact `speckle_level` pixels uniformly
    inside the largest circle, which gives single-pixel control over the
    image mean.
    """

    width: int
    height: int
    cx: float
    cy: float
    ring_radii: tuple[float, ...]
    ring_levels: tuple[GrayLevel, ...]
    background: GrayLevel = GrayLevel.WHITE
    seed: int = 0
    ring_textures: tuple[int, ...] = ()
    background_texture: int = 0
    speckle_density: float = 0.0
    speckle_level: GrayLevel = GrayLevel.G242

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("ground truth dimensions must be >= 1")
        if len(self.ring_radii) != len(self.ring_levels):
            raise ValueError("ring_radii and ring_levels must have equal length")
        if self.ring_textures and len(self.ring_textures) != len(self.ring_radii):
            raise ValueError("ring_textures must be empty or match ring_radii in length")
        radii = list(self.ring_radii)
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ValueError("ring_radii must be strictly decreasing")
        limit = min(self.width, self.height) / 2
        if any(r > limit for r in radii):
            raise ValueError(f"ring radii must be <= min(width, height)/2 = {limit}")
        for amp in (*self.ring_textures, self.background_texture):
            if not 0 <= int(amp) <= 254:
                raise ValueError("texture amplitudes must lie in [0, 254]")
        if not 0.0 <= self.speckle_density < 1.0:
            raise ValueError("speckle_density must lie in [0, 1)")

    @property
    def outer_radius(self) -> float:
        return self.ring_radii[0] if self.ring_radii else 0.0


@dataclass(frozen=True)
class ChangeSpec:
    """One condition: replace `steps` source pixels by `target`, one per image."""

    source: GrayLevel
    target: GrayLevel
    steps: int
    seed: int
    mask: Mask | None = None
    direction_tag: str = "infection"  # metadata only: infection | recovery

    def validate(self) -> None:
        if self.source == self.target:
            raise ValueError("source and target levels must differ")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.direction_tag not in ("infection", "recovery"):
            raise ValueError("direction_tag must be 'infection' or 'recovery'")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    k: int
    source: GrayLevel
    target: GrayLevel
    seed: int
    condition: str


@dataclass
class SeriesManifest:
    """Ordered record of one generated series, persisted as CSV."""

    ground_truth: str
    condition: str
    entries: list[ManifestEntry] = field(default_factory=list)
    note: str = ""


@dataclass
class VerificationReport:
    steps_checked: int
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def synthesize_ground_truth(spec: GroundTruthSpec) -> Raster:
    """Render the spec: background field, nested disks, mottle, speckle.

    One generator seeded with spec.seed drives, in this order: the per-pixel
    texture draws (a full width x height array of uniform floats), then the
    speckle pixel picks. That order is part of the reproducibility contract.
    """
    spec.validate()
    base = np.full((spec.height, spec.width), spec.background.value, dtype=np.int16)
    amp = np.full((spec.height, spec.width), int(spec.background_texture), dtype=np.int16)
    textures = spec.ring_textures or (0,) * len(spec.ring_radii)
    for radius, level, texture in zip(spec.ring_radii, spec.ring_levels, textures):
        disk = circular_mask(spec.width, spec.height, spec.cx, spec.cy, radius)
        base[disk.bits] = level.value
        amp[disk.bits] = int(texture)
    rng = np.random.default_rng(spec.seed)
    jitter = np.floor(rng.random((spec.height, spec.width)) * (amp + 1)).astype(np.int16)
    value = np.where(base >= 128, base - jitter, base + jitter)
    u8 = np.clip(value, 0, 255).astype(np.uint8)[..., None].repeat(3, axis=-1)
    if spec.speckle_density > 0.0 and spec.ring_radii:
        region = circular_mask(spec.width, spec.height, spec.cx, spec.cy, spec.outer_radius)
        inside = np.flatnonzero(region.bits.reshape(-1))
        count = int(round(spec.speckle_density * inside.size))
        if count > 0:
            picked = rng.choice(inside, size=count, replace=False)
            u8.reshape(-1, 3)[picked] = spec.speckle_level.value
    return Raster._wrap(u8_to_unit(u8))


def eligible_pixels(ground_truth: Raster, source: GrayLevel, mask: Mask | None) -> np.ndarray:
    """Row-major flat indices of source-colored pixels inside the mask."""
    match = np.all(ground_truth.pixels == source.unit, axis=-1)
    if mask is not None:
        if (mask.height, mask.width) != (ground_truth.height, ground_truth.width):
            raise ValueError("mask dimensions do not match ground truth")
        match = match & mask.bits
    return np.flatnonzero(match.reshape(-1))


def select_replacements(ground_truth: Raster, spec: ChangeSpec) -> np.ndarray:
    """Seeded uniform sample, without replacement, of the pixels to flip.

    The returned array is in replacement order: image k applies the first k.
    """
    spec.validate()
    pool = eligible_pixels(ground_truth, spec.source, spec.mask)
    if pool.size < spec.steps:
        raise ValueError(
            f"insufficient eligible pixels: need {spec.steps} {spec.source.label} "
            f"pixels inside the mask, found {pool.size}"
        )
    rng = np.random.default_rng(spec.seed)
    return rng.choice(pool, size=spec.steps, replace=False)


def iter_series(ground_truth: Raster, spec: ChangeSpec) -> Iterator[tuple[int, Raster]]:
    """Yield (k, raster) for k = 1..steps without touching the filesystem."""
    chosen = select_replacements(ground_truth, spec)
    buf = ground_truth.pixels.copy()
    flat = buf.reshape(-1, 3)
    target = spec.target.unit
    for k, idx in enumerate(chosen, start=1):
        flat[idx] = target
        yield k, Raster._wrap(buf.copy())


def generate_series(
    ground_truth: Raster,
    spec: ChangeSpec,
    out_dir,
    condition: str,
    ground_truth_ref: str = "ground_truth.png",
    note: str = "",
) -> SeriesManifest:
    """Write the series PNGs under out_dir and return the manifest.

    Image paths in the manifest are relative to out_dir's parent so the
    manifest can live next to the series directory.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = SeriesManifest(ground_truth=ground_truth_ref, condition=condition, note=note)
    for k, raster in iter_series(ground_truth, spec):
        name = f"img_{k:03d}.png"
        save_image(raster, out_dir / name)
        manifest.entries.append(
            ManifestEntry(
                path=f"{out_dir.name}/{name}",
                k=k,
                source=spec.source,
                target=spec.target,
                seed=spec.seed,
                condition=condition,
            )
        )
    return manifest


def write_manifest(manifest: SeriesManifest, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# ground_truth: {manifest.ground_truth}\n")
        fh.write(f"# condition: {manifest.condition}\n")
        if manifest.note:
            fh.write(f"# note: {manifest.note}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image", "k", "source", "target", "seed", "condition"])
        for e in manifest.entries:
            writer.writerow([e.path, e.k, e.source.label, e.target.label, e.seed, e.condition])


def read_manifest(path) -> SeriesManifest:
    path = Path(path)
    ground_truth = ""
    condition = ""
    note = ""
    rows: list[ManifestEntry] = []
    with open(path, newline="", encoding="utf-8") as fh:
        header_seen = False
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                key = key.strip()
                if key == "ground_truth":
                    ground_truth = value.strip()
                elif key == "condition":
                    condition = value.strip()
                elif key == "note":
                    note = value.strip()
                continue
            cells = next(csv.reader([line]))
            if not header_seen:
                header_seen = True
                continue
            rows.append(
                ManifestEntry(
                    path=cells[0],
                    k=int(cells[1]),
                    source=GrayLevel.from_name(cells[2]),
                    target=GrayLevel.from_name(cells[3]),
                    seed=int(cells[4]),
                    condition=cells[5],
                )
            )
    return SeriesManifest(ground_truth=ground_truth, condition=condition, entries=rows, note=note)


def _pixel_delta(a: Raster, b: Raster) -> np.ndarray:
    return np.flatnonzero(np.any(a.pixels != b.pixels, axis=-1).reshape(-1))


def verify_series(manifest: SeriesManifest, base_dir) -> VerificationReport:
    """Check the manifest invariants against the images on disk.

    Per step: exactly one pixel differs from the predecessor, exactly k
    pixels differ from the ground truth, and every differing pixel went from
    the source level to the target level. Problems found at a step are
    merged into one violation naming that step.
    """
    base_dir = Path(base_dir)
    report = VerificationReport(steps_checked=len(manifest.entries))
    if not manifest.entries:
        return report
    ground_truth = load_image(base_dir / manifest.ground_truth)
    prev = ground_truth
    for entry in manifest.entries:
        problems = []
        current = load_image(base_dir / entry.path)
        step_delta = _pixel_delta(prev, current)
        if step_delta.size != 1:
            problems.append(f"expected 1 pixel changed from predecessor, found {step_delta.size}")
        cum_delta = _pixel_delta(ground_truth, current)
        if cum_delta.size != entry.k:
            problems.append(
                f"expected {entry.k} pixels changed from ground truth, found {cum_delta.size}"
            )
        gt_flat = ground_truth.flat()
        cur_flat = current.flat()
        for idx in cum_delta:
            if not np.array_equal(gt_flat[idx], entry.source.unit):
                problems.append(f"pixel {idx} was not {entry.source.label} in ground truth")
                break
        for idx in cum_delta:
            if not np.array_equal(cur_flat[idx], entry.target.unit):
                problems.append(f"pixel {idx} is not {entry.target.label} after replacement")
                break
        if problems:
            report.violations.append(f"step {entry.k} ({entry.path}): " + "; ".join(problems))
        prev = current
    return report
