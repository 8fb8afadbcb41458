"""
Rasterization utilities for the image families (blobs and sprite shapes)
"""
import math
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

SHAPES = ("square", "ellipse", "heart")


@lru_cache(maxsize=16)
def gaussian_bump(size: int, center: Tuple[float, float], sigma: float) -> np.ndarray:
    """
    Isotropic Gaussian bump with unit peak on a size x size grid

    Args:
        size: Image side in pixels
        center: (row, col) of the peak
        sigma: Standard deviation in pixels

    Returns:
        Read-only float64 array of shape (size, size)
    """
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    d2 = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    bump = np.exp(-d2 / (2.0 * sigma * sigma))
    bump.setflags(write=False)
    return bump


def _heart_outline(points: int = 48) -> List[Tuple[float, float]]:
    """Heart curve normalized to fit the unit square centered at the origin"""
    xs, ys = [], []
    for k in range(points):
        t = 2.0 * math.pi * k / points
        xs.append(16.0 * math.sin(t) ** 3)
        ys.append(-(13.0 * math.cos(t) - 5.0 * math.cos(2 * t) - 2.0 * math.cos(3 * t) - math.cos(4 * t)))
    span = max(max(xs) - min(xs), max(ys) - min(ys))
    cx = (max(xs) + min(xs)) / 2.0
    cy = (max(ys) + min(ys)) / 2.0
    return [((x - cx) / span, (y - cy) / span) for x, y in zip(xs, ys)]


_HEART = _heart_outline()
_SQUARE = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
_ELLIPSE = [(0.5 * math.cos(2 * math.pi * k / 48), 0.3 * math.sin(2 * math.pi * k / 48)) for k in range(48)]


class ShapeRasterizer:
    """Draw filled, rotated, anti-aliased sprites on a square grayscale canvas"""

    def __init__(self, resolution: int = 64, supersample: int = 4, base_size: float = 0.4, margin: float = 0.125):
        """
        Args:
            resolution: Output side in pixels
            supersample: Drawing is done at resolution * supersample, then box-downsampled
            base_size: Sprite side at scale 1, as a fraction of the canvas
            margin: Border kept free of sprite centres, as a fraction of the canvas
        """
        self.resolution = resolution
        self.supersample = supersample
        self.base_size = base_size
        self.margin = margin

    def centre_pixel(self, pos: float) -> float:
        """Map a position in [0, 1] to a canvas coordinate (clipped to the drawable area)"""
        pos = min(max(float(pos), 0.0), 1.0)
        span = 1.0 - 2.0 * self.margin
        return (self.margin + span * pos) * self.resolution

    def render(self, shape: int, scale: float, orientation_deg: float, x_pos: float, y_pos: float) -> np.ndarray:
        """
        Rasterize one sprite

        Args:
            shape: Index into SHAPES
            scale: Size multiplier
            orientation_deg: Rotation in degrees
            x_pos: Horizontal position in [0, 1]
            y_pos: Vertical position in [0, 1] (0 = top)

        Returns:
            float64 image of shape (resolution, resolution) with values in [0, 1]
        """
        big = self.resolution * self.supersample
        canvas = Image.new("L", (big, big), 0)
        draw = ImageDraw.Draw(canvas)

        outline = (_SQUARE, _ELLIPSE, _HEART)[int(shape) % len(SHAPES)]
        side = self.base_size * float(scale) * big
        theta = math.radians(float(orientation_deg))
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        cx = self.centre_pixel(x_pos) * self.supersample
        cy = self.centre_pixel(y_pos) * self.supersample
        polygon = [
            (cx + side * (px * cos_t - py * sin_t), cy + side * (px * sin_t + py * cos_t))
            for px, py in outline
        ]
        draw.polygon(polygon, fill=255)

        small = canvas.resize((self.resolution, self.resolution), resample=Image.BOX)
        return np.asarray(small, dtype=np.float64) / 255.0


def save_preview(
    images: Sequence[np.ndarray],
    output_path: Path,
    labels: Iterable[str] = (),
    columns: int = 8,
    zoom: int = 3
) -> Path:
    """
    Save a labelled grid of sample images as PNG

    Args:
        images: Square grayscale images (any float range, rescaled per image)
        output_path: Destination PNG
        labels: Optional caption per image
        columns: Tiles per row
        zoom: Nearest-neighbour magnification

    Returns:
        Path to the saved preview
    """
    images = list(images)
    labels = list(labels)
    if not images:
        raise ValueError("save_preview: no images")
    side = images[0].shape[0] * zoom
    rows = int(math.ceil(len(images) / columns))
    sheet = Image.new("RGB", (columns * side, rows * side), (0, 0, 0))
    draw = ImageDraw.Draw(sheet)

    try:
        font = ImageFont.truetype("arial.ttf", 10)
    except OSError:
        font = ImageFont.load_default()

    for k, img in enumerate(images):
        lo, hi = float(np.min(img)), float(np.max(img))
        scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
        tile = Image.fromarray((scaled * 255).astype(np.uint8), mode="L").resize((side, side), Image.NEAREST)
        x, y = (k % columns) * side, (k // columns) * side
        sheet.paste(tile.convert("RGB"), (x, y))
        if k < len(labels):
            draw.text((x + 2, y + 2), labels[k], fill=(255, 0, 0), font=font)

    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    sheet.save(output_path)
    return output_path
