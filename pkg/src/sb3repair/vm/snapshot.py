"""Low-resolution stage rasterization used as image evidence."""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .. import kernels
from .interpreter import STAGE_H, STAGE_W, VmState

WIDTH = 120
HEIGHT = 90
SPRITE_SIZE = 8


@dataclass(frozen=True)
class StageSnapshot:
    width: int
    height: int
    pixels: bytes
    encoded: bytes
    tick: int

    @property
    def header_length(self) -> int:
        return len(self.encoded) - 3 * self.width * self.height

    def to_png(self) -> bytes:
        from PIL import Image

        img = Image.frombytes("RGB", (self.width, self.height), self.pixels)
        out = io.BytesIO()
        img.save(out, format="PNG", optimize=False)
        return out.getvalue()

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.encoded)
        return path


def sprite_color(name: str) -> tuple[int, int, int]:
    # halved channels keep every sprite visibly darker than the white stage
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return digest[0] // 2, digest[1] // 2, digest[2] // 2


def stage_to_pixel(x: float, y: float, width: int = WIDTH, height: int = HEIGHT) -> tuple[int, int]:
    px = math.floor((x + STAGE_W) * width / (2 * STAGE_W) + 0.5)
    py = math.floor((STAGE_H - y) * height / (2 * STAGE_H) + 0.5)
    return int(px), int(py)


def encode_ppm(width: int, height: int, pixels: bytes) -> bytes:
    return b"P6\n%d %d\n255\n" % (width, height) + pixels


def capture_snapshot(state: VmState, width: int = WIDTH, height: int = HEIGHT) -> StageSnapshot:
    rects = []
    for name, sprite in state.sprites.items():
        if not sprite.visible:
            continue
        px, py = stage_to_pixel(sprite.x, sprite.y, width, height)
        rects.append((px, py) + sprite_color(name))
    pixels = kernels.rasterize(width, height, rects, SPRITE_SIZE)
    return StageSnapshot(width, height, pixels, encode_ppm(width, height, pixels), state.tick)
