"""Raw rPPG extraction from face-cropped video frames.

Frames are ``(height, width, 3)`` uint8 RGB arrays. Each frame is area
downsampled to 72x72 and the green channel is averaged over a region mask
that, by default, drops a horizontal band covering the eyes.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .errors import EmptyInput, EmptyMask, FrameShapeMismatch, SourceTooSmall
from .signal_core import TimeSeries

logger = logging.getLogger(__name__)

GRID = 72
EYE_BAND_ROWS = (18, 32)  # inclusive
DEFAULT_FS = 60.0


def default_mask() -> np.ndarray:
    mask = np.ones((GRID, GRID), dtype=bool)
    mask[EYE_BAND_ROWS[0] : EYE_BAND_ROWS[1] + 1, :] = False
    return mask


def _area_weights(n_src: int, n_dst: int) -> np.ndarray:
    # row i of the result averages source cells overlapping [i*s, (i+1)*s)
    scale = n_src / n_dst
    edges = np.arange(n_dst + 1) * scale
    w = np.zeros((n_dst, n_src))
    for i in range(n_dst):
        lo, hi = edges[i], edges[i + 1]
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_src)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def downsample_frame(src: np.ndarray, width: int = GRID, height: int = GRID) -> np.ndarray:
    src = np.asarray(src)
    if src.ndim != 3 or src.shape[2] != 3:
        raise FrameShapeMismatch(f"expected (H, W, 3) frame, got {src.shape}")
    h, w, _ = src.shape
    if h < height or w < width:
        raise SourceTooSmall(f"source {w}x{h} is smaller than {width}x{height}")
    if (h, w) == (height, width):
        return src.astype(np.uint8, copy=True)
    wr = _area_weights(h, height)
    wc = _area_weights(w, width)
    out = np.einsum("ih,hwc,jw->ijc", wr, src.astype(float), wc)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (GRID, GRID):
        raise FrameShapeMismatch(f"mask must be {GRID}x{GRID}, got {mask.shape}")
    if not mask.any():
        raise EmptyMask("mask excludes every cell")
    return mask


def spatial_average_green(frame: np.ndarray, mask: np.ndarray | None = None) -> float:
    mask = default_mask() if mask is None else _check_mask(mask)
    frame = np.asarray(frame)
    if frame.shape != (GRID, GRID, 3):
        raise FrameShapeMismatch(f"expected ({GRID}, {GRID}, 3) frame, got {frame.shape}")
    return float(frame[:, :, 1][mask].astype(float).mean())


def extract_rgb_means(frames, mask: np.ndarray | None = None) -> np.ndarray:
    """Per-frame (R, G, B) means over the mask; shape ``(n_frames, 3)``.

    Only the green column feeds the pipeline; red and blue are exposed for
    inspection.
    """
    mask = default_mask() if mask is None else _check_mask(mask)
    stack = _stack(frames)
    return stack[:, mask, :].astype(float).mean(axis=1)


def extract_rppg(frames, fs: float = DEFAULT_FS, mask: np.ndarray | None = None) -> TimeSeries:
    mask = default_mask() if mask is None else _check_mask(mask)
    stack = _stack(frames)
    green = stack[:, :, :, 1][:, mask].astype(float).mean(axis=1)
    return TimeSeries(green, fs)


def _stack(frames) -> np.ndarray:
    frames = list(frames)
    if not frames:
        raise EmptyInput("no frames")
    for i, f in enumerate(frames):
        if np.shape(f) != (GRID, GRID, 3):
            raise FrameShapeMismatch(f"frame {i} has shape {np.shape(f)}; downsample to {GRID}x{GRID} first")
    return np.stack(frames)


# --- file formats -----------------------------------------------------------

def read_mask(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) != GRID or any(len(ln) != GRID or set(ln) - {"0", "1"} for ln in lines):
        raise FrameShapeMismatch(f"{path}: mask must be {GRID} lines of {GRID} '0'/'1' characters")
    return _check_mask(np.array([[c == "1" for c in ln] for ln in lines]))


def write_mask(path, mask: np.ndarray) -> None:
    mask = _check_mask(mask)
    Path(path).write_text("".join("".join("1" if v else "0" for v in row) + "\n" for row in mask))


def load_frame(path, width: int | None = None, height: int | None = None) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".rgb24":
        if width is None or height is None:
            raise ValueError(".rgb24 frames need width and height in the manifest")
        raw = np.fromfile(path, dtype=np.uint8)
        if raw.size != width * height * 3:
            raise FrameShapeMismatch(f"{path}: expected {width * height * 3} bytes, got {raw.size}")
        return raw.reshape(height, width, 3)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_frame(path, frame: np.ndarray) -> None:
    path = Path(path)
    frame = np.ascontiguousarray(frame, dtype=np.uint8)
    if path.suffix == ".rgb24":
        frame.tofile(path)
    else:
        from PIL import Image

        Image.fromarray(frame, "RGB").save(path)


def read_manifest(path):
    """Load the frames listed in a JSON manifest as ``(fs, frames)``, downsampled to 72x72."""
    path = Path(path)
    doc = json.loads(path.read_text())
    fs = float(doc.get("fs", DEFAULT_FS))
    width, height = doc.get("width"), doc.get("height")
    frames = []
    for name in doc["frames"]:
        f = load_frame(path.parent / name, width, height)
        if f.shape[:2] != (GRID, GRID):
            f = downsample_frame(f)
        frames.append(f)
    logger.info("loaded %d frames from %s", len(frames), path)
    return fs, frames


def write_manifest(path, names, fs: float = DEFAULT_FS, width: int | None = None, height: int | None = None) -> None:
    doc = {"fs": fs, "frames": list(names)}
    if width is not None:
        doc["width"] = width
        doc["height"] = height
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
