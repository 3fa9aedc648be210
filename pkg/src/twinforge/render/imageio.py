"""8-bit/16-bit PNG and float32 PFM image files."""

from __future__ import annotations

import os

import numpy as np
from numpy.typing import NDArray
from PIL import Image


def to_uint8(image: NDArray[np.float64]) -> NDArray[np.uint8]:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: str | os.PathLike, image: NDArray) -> None:
    """Float images in [0, 1] are quantized to 8 bits; integer arrays are written as-is."""
    arr = np.asarray(image)
    if arr.dtype.kind == "f":
        arr = to_uint8(arr)
    Image.fromarray(arr).save(path, format="PNG", optimize=False)


def read_png(path: str | os.PathLike) -> NDArray[np.float64]:
    """RGB float image in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return arr.astype(np.float64) / 255.0


def write_mask_png(path: str | os.PathLike, mask: NDArray) -> None:
    """Class-id map as single-channel 16-bit PNG; -1 (unlabeled) is stored as 65535."""
    m = np.asarray(mask, dtype=np.int64)
    if m.min(initial=0) < -1 or m.max(initial=0) >= 65535:
        raise ValueError("mask ids must lie in [-1, 65534]")
    Image.fromarray(np.where(m < 0, 65535, m).astype(np.uint16)).save(path, format="PNG")


def read_mask_png(path: str | os.PathLike) -> NDArray[np.int64]:
    with Image.open(path) as im:
        arr = np.asarray(im).astype(np.int64)
    if arr.ndim != 2:
        raise ValueError(f"{path}: mask must be single-channel")
    return np.where(arr == 65535, -1, arr)


def write_pfm(path: str | os.PathLike, image: NDArray) -> None:
    arr = np.asarray(image, dtype="<f4")
    if arr.ndim == 2:
        kind = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        kind = b"PF"
    else:
        raise ValueError("PFM needs an (H, W) or (H, W, 3) image")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(kind + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path: str | os.PathLike) -> NDArray[np.float64]:
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise ValueError(f"{path}: not a PFM file")
        w, h = (int(x) for x in fh.readline().split())
        scale = float(fh.readline())
        dt = "<f4" if scale < 0 else ">f4"
        ch = 3 if kind == b"PF" else 1
        data = np.frombuffer(fh.read(w * h * ch * 4), dtype=dt)
    shape = (h, w, 3) if ch == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float64)


def read_image(path: str | os.PathLike) -> NDArray[np.float64]:
    """PNG or PFM by extension."""
    if str(path).lower().endswith(".pfm"):
        return read_pfm(path)
    return read_png(path)


def box_downsample(image: NDArray[np.float64]) -> NDArray[np.float64]:
    """2x2 box filter; a trailing odd row/column is dropped."""
    h, w = image.shape[0] // 2, image.shape[1] // 2
    im = image[: 2 * h, : 2 * w]
    return 0.25 * (im[0::2, 0::2] + im[1::2, 0::2] + im[0::2, 1::2] + im[1::2, 1::2])
