from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import DataFormatError
from sipp_search.svd_augment import ImageRGB

logger = get_logger(__name__)


def read_image(path: str | Path) -> ImageRGB:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"image file not found: {path}")
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode in ("L", "I", "I;16", "1"):
                gray = np.asarray(image.convert("L"), dtype=np.uint8)
                logger.debug(f"read grayscale image {path}, replicating channels")
                return ImageRGB.from_gray(gray)
            return ImageRGB(np.asarray(image.convert("RGB"), dtype=np.uint8))
    except (UnidentifiedImageError, OSError) as e:
        raise DataFormatError(f"failed to read image {path}: {e}")


def write_image(img: ImageRGB, path: str | Path) -> None:
    path = Path(path)
    try:
        Image.fromarray(img.pixels).save(path)
    except (KeyError, OSError, ValueError) as e:
        raise DataFormatError(f"failed to write image {path}: {e}")


def augmented_file_name(stem: str, i: int, j: int, k: int, ext: str) -> str:
    ext = ext.lstrip(".")
    return f"{stem}_i{i:02d}_j{j:02d}_k{k:02d}.{ext}"
