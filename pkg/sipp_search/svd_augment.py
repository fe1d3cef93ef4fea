"""SVD energy-truncation augmentation of RGB images.

Each channel is decomposed once and rebuilt keeping the smallest number of singular
values whose squared sum reaches the requested energy fraction. Channels truncated at
different fractions are merged into |fractions|**3 images.
"""

import itertools
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import ConfigError, DataFormatError

logger = get_logger(__name__)

DEFAULT_FRACTIONS: tuple[float, ...] = (1.0, 0.95, 0.90, 0.85)

# relative slack on the energy target so that e.g. 0.8 * 5.0 still selects k=1 for (2, 1)
_ENERGY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ImageRGB:
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DataFormatError(
                f"RGB image must have shape (height, width, 3), got {pixels.shape}"
            )
        if pixels.dtype != np.uint8:
            if not np.issubdtype(pixels.dtype, np.integer):
                raise DataFormatError(
                    f"image intensities must be integers, got {pixels.dtype}"
                )
            if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
                raise DataFormatError("image intensities must be within [0, 255]")
            pixels = pixels.astype(np.uint8)
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_gray(cls, gray: np.ndarray) -> "ImageRGB":
        gray = np.asarray(gray)
        if gray.ndim != 2:
            raise DataFormatError(f"grayscale image must be 2-d, got {gray.shape}")
        return cls(np.repeat(gray[:, :, np.newaxis], 3, axis=2))

    @classmethod
    def from_channels(
        cls, red: np.ndarray, green: np.ndarray, blue: np.ndarray
    ) -> "ImageRGB":
        if not (red.shape == green.shape == blue.shape):
            raise DataFormatError(
                f"channel shapes differ: {red.shape}, {green.shape}, {blue.shape}"
            )
        return cls(np.stack([red, green, blue], axis=2))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def channel(self, index: int) -> np.ndarray:
        return self.pixels[:, :, index]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageRGB):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


@dataclass(frozen=True, eq=False)
class SvdChannel:
    """Thin SVD of one channel; `transposed` is set when the channel had fewer rows than columns."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray
    transposed: bool = False

    @property
    def rank_limit(self) -> int:
        return self.sigma.shape[0]


def svd_decompose(channel: np.ndarray) -> SvdChannel:
    matrix = np.asarray(channel, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise DataFormatError(f"channel must be a non-empty matrix, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DataFormatError("channel contains non-finite entries")
    transposed = matrix.shape[0] < matrix.shape[1]
    if transposed:
        matrix = matrix.T
    u, sigma, vt = np.linalg.svd(matrix, full_matrices=False)
    return SvdChannel(u=u, sigma=sigma, vt=vt, transposed=transposed)


def rank_for_energy(sigma: Sequence[float] | np.ndarray, fraction: float) -> int:
    values = np.asarray(sigma, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("sigma must be a non-empty sequence")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"energy fraction must be within (0, 1], got {fraction}")
    if np.any(values < 0):
        raise ValueError("singular values must be non-negative")
    if np.any(np.diff(values) > 0):
        raise ValueError("singular values must be sorted in non-increasing order")
    energy = np.cumsum(values * values)
    total = energy[-1]
    if total <= 0:
        raise ValueError("all singular values are zero, energy is undefined")
    target = fraction * total * (1.0 - _ENERGY_RTOL)
    k = int(np.searchsorted(energy, target, side="left")) + 1
    return min(k, values.size)


def reconstruct_truncated(svd: SvdChannel, k: int) -> np.ndarray:
    if not 1 <= k <= svd.rank_limit:
        raise ValueError(f"rank k must be within [1, {svd.rank_limit}], got {k}")
    matrix = (svd.u[:, :k] * svd.sigma[:k]) @ svd.vt[:k, :]
    return matrix.T if svd.transposed else matrix


def _validate_fractions(fractions: Sequence[float]) -> tuple[float, ...]:
    fractions = tuple(float(f) for f in fractions)
    if not fractions:
        raise ConfigError("at least one energy fraction is required")
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"energy fraction must be within (0, 1], got {fraction}")
    return fractions


def augment_combinations(
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> Iterator[tuple[int, int, int]]:
    """(i, j, k) fraction indices for R, G, B in the order augment_image emits images."""
    count = len(_validate_fractions(fractions))
    return itertools.product(range(count), repeat=3)


def _channel_variants(
    channel: np.ndarray, fractions: tuple[float, ...]
) -> list[np.ndarray]:
    svd = None
    variants = []
    for fraction in fractions:
        if fraction == 1.0:
            # identity fraction copies the input so the (1.0, 1.0, 1.0) image is bit-exact
            variants.append(channel.astype(np.float64))
            continue
        if svd is None:
            svd = svd_decompose(channel)
        if not np.any(svd.sigma > 0):
            variants.append(channel.astype(np.float64))
            continue
        k = rank_for_energy(svd.sigma, fraction)
        variants.append(reconstruct_truncated(svd, k))
    return variants


def _merge_channel(values: np.ndarray) -> np.ndarray:
    # round half up, then clamp into the valid intensity range
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def augment_image(
    img: ImageRGB, fractions: Sequence[float] = DEFAULT_FRACTIONS
) -> list[ImageRGB]:
    fractions = _validate_fractions(fractions)
    if img.width < 2 or img.height < 2:
        raise DataFormatError(
            f"image too small for augmentation: {img.width}x{img.height}"
        )
    merged = [
        [_merge_channel(v) for v in _channel_variants(img.channel(c), fractions)]
        for c in range(3)
    ]
    images = [
        ImageRGB.from_channels(merged[0][i], merged[1][j], merged[2][k])
        for i, j, k in augment_combinations(fractions)
    ]
    logger.debug(
        f"augmented {img.width}x{img.height} image into {len(images)} variants"
    )
    return images
