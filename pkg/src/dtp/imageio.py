"""Image files <-> float32 RGB arrays in [0, 1].

PNG (8- or 16-bit) goes through OpenCV; ASCII PPM (P3) is handled here so a
dependency-free path exists.  Integer codes map to [0, 1] by division by the
maximum code value.  Writes are atomic.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .io_utils import atomic_write_bytes, atomic_write_text

IMAGE_SUFFIXES = (".png", ".ppm")


class ImageError(ValueError):
    pass


def _to_rgb3(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.shape[2] == 4:
        img = img[..., :3]
    return img


def read_ppm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P3":
        raise ImageError(f"{path}: only ASCII PPM (P3) is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:4])
        vals = np.array(tokens[4:], dtype=np.int64)
    except ValueError:
        raise ImageError(f"{path}: malformed PPM header or data") from None
    if vals.size != w * h * 3 or maxval <= 0 or maxval > 65535:
        raise ImageError(f"{path}: expected {w * h * 3} samples with 0 < maxval <= 65535")
    return (vals.reshape(h, w, 3) / maxval).astype(np.float32)


def write_ppm(path, img, maxval: int = 255) -> None:
    img = np.asarray(img)
    codes = np.round(np.clip(img, 0, 1) * maxval).astype(np.int64)
    h, w = codes.shape[:2]
    rows = [" ".join(str(v) for v in row.ravel()) for row in codes]
    atomic_write_text(path, f"P3\n{w} {h}\n{maxval}\n" + "\n".join(rows) + "\n")


def read_image(path) -> np.ndarray:
    """H x W x 3 float32 in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ImageError(f"image not found: {path}")
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageError(f"cannot decode image {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageError(f"{path}: unsupported sample type {raw.dtype}")
    raw = _to_rgb3(raw)
    return (raw[..., ::-1] / scale).astype(np.float32)


def write_image(path, img, bits: int = 8) -> None:
    """Write an H x W x 3 (or H x W) image in [0, 1]; values are clipped."""
    path = Path(path)
    img = _to_rgb3(np.asarray(img, dtype=np.float64))
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"write_image needs H x W x 3, got {img.shape}")
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        write_ppm(path, img, 255 if bits == 8 else 65535)
        return
    if suffix != ".png":
        raise ImageError(f"unsupported image format {suffix!r}; use .png or .ppm")
    if bits not in (8, 16):
        raise ImageError(f"bits must be 8 or 16, got {bits}")
    maxval, dt = (255, np.uint8) if bits == 8 else (65535, np.uint16)
    codes = np.round(np.clip(img, 0, 1) * maxval).astype(dt)
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(codes[..., ::-1]))
    if not ok:
        raise ImageError(f"PNG encoding failed for {path}")
    atomic_write_bytes(path, buf.tobytes())


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
