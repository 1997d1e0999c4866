"""Self-organizing map: winner-take-all training and quantization error.

The map is a rows x cols rectangular grid of 3-component weight vectors.
Training is the classical online rule: one uniformly drawn pixel per
iteration, best-matching unit by Euclidean distance (ties to the lowest
row-major node index), and the update

    m_i <- m_i + alpha * h_ci * (x - m_i)

with a bubble kernel by default (h_ci = 1 for nodes within
`neighborhood_radius` grid-Euclidean units of the winner, 0 outside; on a
rectangular grid the default radius 1.2 updates the 4-neighbors and not the
diagonals). A Gaussian kernel and a linear decay schedule for alpha and the
radius are available behind the config.

Randomness: `SeedSequence(seed).spawn(2)` yields two PCG64 streams, the
first for weight initialization, the second for training-sample draws; the
whole sample index sequence is drawn up front with
``rng.integers(0, n_pixels, size=iterations)``. This is the documented
replay contract.

The quantization error of an image is the mean, over its pixels, of the
distance to each pixel's best-matching unit. The per-pixel minimum distances
are reduced in fixed blocks of `QE_BLOCK` pixels in row-major order, so the
result does not depend on traversal or parallelization choices.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .raster import Raster

__all__ = [
    "SomConfig",
    "SomModel",
    "QeRecord",
    "ModelFormatError",
    "ModelVersionError",
    "ModelIntegrityError",
    "init_model",
    "best_matching_unit",
    "train",
    "quantization_error",
    "node_occupancy",
    "save_model",
    "load_model",
    "QE_BLOCK",
    "MODEL_FORMAT_VERSION",
]

QE_BLOCK = 1 << 16
MODEL_FORMAT_VERSION = 1

MAX_RGB_DISTANCE = math.sqrt(3.0)  # white to black in unit channels


class ModelFormatError(Exception):
    """Model file is not valid."""


class ModelVersionError(ModelFormatError):
    """Model file was written by an incompatible format version."""


class ModelIntegrityError(ModelFormatError):
    """Model file checksum does not match its payload."""


@dataclass(frozen=True)
class SomConfig:
    rows: int = 4
    cols: int = 4
    iterations: int = 1000
    learning_rate: float = 0.2
    neighborhood_radius: float = 1.2
    schedule: str = "constant"  # constant | linear_decay
    kernel: str = "bubble"  # bubble | gaussian
    seed: int = 0

    def validate(self) -> None:
        if self.rows * self.cols < 1 or self.rows < 1 or self.cols < 1:
            raise ValueError("map must have at least one node")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.neighborhood_radius < 0.0:
            raise ValueError("neighborhood_radius must be >= 0")
        if self.schedule not in ("constant", "linear_decay"):
            raise ValueError("schedule must be 'constant' or 'linear_decay'")
        if self.kernel not in ("bubble", "gaussian"):
            raise ValueError("kernel must be 'bubble' or 'gaussian'")

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True, eq=False)
class SomModel:
    """Map weights plus the configuration that produced them. Immutable."""

    config: SomConfig
    weights: np.ndarray  # (rows * cols, 3) float64, row-major grid order
    trained: bool
    training_image_digest: str

    def __post_init__(self):
        arr = np.array(self.weights, dtype=np.float64, copy=True)
        if arr.shape != (self.config.n_nodes, 3):
            raise ValueError(
                f"weights must have shape ({self.config.n_nodes}, 3), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("weights must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)

    @property
    def n_nodes(self) -> int:
        return self.config.n_nodes


@dataclass(frozen=True)
class QeRecord:
    image_id: str
    qe: float
    n_pixels: int


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_ss, train_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(train_ss)


def _grid_sq_distances(rows: int, cols: int) -> np.ndarray:
    """(n, n) squared grid-Euclidean distances between node coordinates."""
    coords = np.array([(r, c) for r in range(rows) for c in range(cols)], dtype=np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    return (diff**2).sum(axis=-1)


def init_model(training: Raster, config: SomConfig) -> SomModel:
    """Initialize weights by seeded-uniform picks (with replacement) of training pixels."""
    config.validate()
    if training.n_pixels < 1:
        raise ValueError("training raster is empty")
    init_rng, _ = _streams(config.seed)
    picks = init_rng.integers(0, training.n_pixels, size=config.n_nodes)
    weights = training.flat()[picks].copy()
    return SomModel(
        config=config,
        weights=weights,
        trained=False,
        training_image_digest=training.digest(),
    )


def best_matching_unit(model: SomModel, x: np.ndarray) -> tuple[int, float]:
    """Node index with minimum Euclidean distance to x; ties to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    d2 = ((model.weights - x) ** 2).sum(axis=1)
    idx = int(np.argmin(d2))
    return idx, float(math.sqrt(d2[idx]))


def train(model: SomModel, training: Raster) -> SomModel:
    """Run the configured number of online updates; returns a new trained model."""
    if model.trained:
        raise ValueError("model is already trained")
    if training.n_pixels < 1:
        raise ValueError("training raster is empty")
    if training.digest() != model.training_image_digest:
        raise ValueError("training raster does not match the raster the model was initialized on")
    cfg = model.config
    _, train_rng = _streams(cfg.seed)
    sample_idx = train_rng.integers(0, training.n_pixels, size=cfg.iterations)
    flat = training.flat()
    weights = model.weights.copy()
    grid_d2 = _grid_sq_distances(cfg.rows, cfg.cols)
    total = cfg.iterations
    for t in range(total):
        x = flat[sample_idx[t]]
        d2 = ((weights - x) ** 2).sum(axis=1)
        winner = int(np.argmin(d2))
        if cfg.schedule == "linear_decay":
            decay = 1.0 - t / total
            alpha = cfg.learning_rate * decay
            radius = cfg.neighborhood_radius * decay
        else:
            alpha = cfg.learning_rate
            radius = cfg.neighborhood_radius
        if cfg.kernel == "bubble":
            hood = grid_d2[winner] <= radius * radius
            weights[hood] += alpha * (x - weights[hood])
        else:
            if radius > 0.0:
                h = np.exp(-grid_d2[winner] / (2.0 * radius * radius))
            else:
                h = (grid_d2[winner] == 0.0).astype(np.float64)
            weights += (alpha * h)[:, None] * (x - weights)
    return replace(model, weights=weights, trained=True)


def _min_distances(weights: np.ndarray, block: np.ndarray) -> np.ndarray:
    """Per-pixel distance to the nearest node for one block of pixels."""
    # |x - w|^2 = |x|^2 + |w|^2 - 2 x.w, computed as one matmul per block
    d2 = (
        (block**2).sum(axis=1)[:, None]
        + (weights**2).sum(axis=1)[None, :]
        - 2.0 * (block @ weights.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2.min(axis=1))


def quantization_error(model: SomModel, image: Raster, image_id: str = "") -> QeRecord:
    """Mean best-matching-unit distance over all pixels of the image.

    Requires a trained model. The sum is accumulated per fixed-size
    row-major block and the block sums are added in order, so the value is
    independent of how the work is scheduled.
    """
    if not model.trained:
        raise ValueError("model must be trained before scoring")
    if image.n_pixels < 1:
        raise ValueError("image is empty")
    flat = image.flat()
    n = flat.shape[0]
    block_sums = []
    for start in range(0, n, QE_BLOCK):
        block_sums.append(_min_distances(model.weights, flat[start : start + QE_BLOCK]).sum())
    qe = float(np.add.reduce(np.array(block_sums)) / n)
    return QeRecord(image_id=image_id, qe=qe, n_pixels=n)


def node_occupancy(model: SomModel, image: Raster) -> np.ndarray:
    """How many pixels of the image map to each node (empty-node diagnostic)."""
    flat = image.flat()
    counts = np.zeros(model.n_nodes, dtype=np.int64)
    w = model.weights
    for start in range(0, flat.shape[0], QE_BLOCK):
        block = flat[start : start + QE_BLOCK]
        d2 = (
            (block**2).sum(axis=1)[:, None]
            + (w**2).sum(axis=1)[None, :]
            - 2.0 * (block @ w.T)
        )
        counts += np.bincount(d2.argmin(axis=1), minlength=model.n_nodes)
    return counts


def _model_payload(model: SomModel) -> dict:
    cfg = model.config
    return {
        "format": "somqe-model",
        "version": MODEL_FORMAT_VERSION,
        "config": {
            "rows": cfg.rows,
            "cols": cfg.cols,
            "iterations": cfg.iterations,
            "learning_rate": cfg.learning_rate,
            "neighborhood_radius": cfg.neighborhood_radius,
            "schedule": cfg.schedule,
            "kernel": cfg.kernel,
            "seed": cfg.seed,
        },
        "trained": model.trained,
        "training_image_digest": model.training_image_digest,
        "weights": [[float(v) for v in row] for row in model.weights],
    }


def _payload_checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_model(model: SomModel, path) -> None:
    """Write the model as JSON; float weights use shortest round-trip repr."""
    payload = _model_payload(model)
    document = dict(payload)
    document["checksum"] = _payload_checksum(payload)
    Path(path).write_text(json.dumps(document, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> SomModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: cannot parse model file ({exc})") from exc
    if not isinstance(document, dict) or document.get("format") != "somqe-model":
        raise ModelFormatError(f"{path}: not a somqe model file")
    if document.get("version") != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: model format version {document.get('version')!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    stored_checksum = document.get("checksum")
    payload = {k: v for k, v in document.items() if k != "checksum"}
    if stored_checksum != _payload_checksum(payload):
        raise ModelIntegrityError(f"{path}: checksum mismatch, file was modified or corrupted")
    try:
        cfg = SomConfig(**payload["config"])
        model = SomModel(
            config=cfg,
            weights=np.array(payload["weights"], dtype=np.float64),
            trained=bool(payload["trained"]),
            training_image_digest=str(payload["training_image_digest"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model payload ({exc})") from exc
    return model
