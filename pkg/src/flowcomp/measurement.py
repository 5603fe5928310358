"""Bead geometry, synthetic imaging, segmentation and scoring.

A bead printed at constant speed ``v`` with a rectangular cross-section of
width ``w`` and height ``h`` carries flow ``q = w * h * v``. Top-view masks
show the bead footprint (width across the path); side-view masks show its
height profile along the arc length.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ParseError
from .model import FlowProfile, _check_dt

VIEWS = ("top", "side")


@dataclass(frozen=True)
class BeadMask:
    """Binary raster (row 0 at the top) with its pixel scale."""

    pixels: np.ndarray
    mm_per_px: float
    view: str = "top"
    # mm coordinates of the lower-left image corner (x = columns, y = rows upward)
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise InvalidArgumentError("mask pixels must be a 2-D grid", "pixels")
        if px.size and not np.all((px == 0) | (px == 1)):
            raise InvalidArgumentError("mask pixels must be 0 or 1", "pixels")
        px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if not self.mm_per_px > 0:
            raise InvalidArgumentError("mm_per_px must be > 0", "mm_per_px")
        if self.view not in VIEWS:
            raise InvalidArgumentError(f"view must be one of {VIEWS}", "view")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]

    @property
    def area_mm2(self) -> float:
        return float(self.pixels.sum()) * self.mm_per_px ** 2


@dataclass(frozen=True)
class BeadProfile:
    dt: float
    v: float
    widths: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dt", _check_dt(self.dt))
        if not (math.isfinite(self.v) and self.v > 0):
            raise InvalidArgumentError("nozzle speed v must be > 0", "v")
        w = np.asarray(self.widths, dtype=float).reshape(-1)
        h = np.asarray(self.heights, dtype=float).reshape(-1)
        if w.shape != h.shape:
            raise InvalidArgumentError("widths and heights must have equal length")
        if np.any(~np.isfinite(w)) or np.any(~np.isfinite(h)) or np.any(w < 0) or np.any(h < 0):
            raise InvalidArgumentError("widths and heights must be finite and >= 0")
        for name, arr in (("widths", w), ("heights", h)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.widths.size


def flow_from_bead(profile: BeadProfile) -> FlowProfile:
    """Volumetric flow of a rectangular bead: ``q_k = w_k * h_k * v``."""
    return FlowProfile(profile.dt, profile.widths * profile.heights * profile.v, "bead-q")


def bead_from_flow(q: FlowProfile, v: float, aspect: float = 2.0 / 3.0) -> BeadProfile:
    """Bead whose cross-section carries ``q`` at speed ``v``; ``aspect = height / width``.

    Negative flow deposits nothing.
    """
    if not (math.isfinite(v) and v > 0):
        raise InvalidArgumentError("nozzle speed v must be > 0", "v")
    if not (math.isfinite(aspect) and aspect > 0):
        raise InvalidArgumentError("aspect must be > 0", "aspect")
    area = np.maximum(q.samples, 0.0) / v
    widths = np.sqrt(area / aspect)
    return BeadProfile(q.dt, v, widths, aspect * widths)


# -- rasterization ----------------------------------------------------------


def _sample_segments(path: np.ndarray):
    """Start/end point of the stretch of path laid down by each sample."""
    n = path.shape[0]
    ends = np.empty_like(path)
    ends[:-1] = path[1:]
    if n >= 2:
        ends[-1] = path[-1] + (path[-1] - path[-2])
    else:
        ends[-1] = path[-1]
    return path, ends


def default_extent(profile: BeadProfile, path, view: str, margin_mm: float = 0.5) -> tuple:
    """Frame ``(x0, y0, x1, y1)`` in mm that fits the bead drawn along ``path``."""
    path = np.asarray(path, dtype=float)
    starts, ends = _sample_segments(path)
    if view == "top":
        half = 0.5 * (float(profile.widths.max()) if len(profile) else 0.0) + margin_mm
        pts = np.vstack([starts, ends])
        lo, hi = pts.min(axis=0) - half, pts.max(axis=0) + half
        return (lo[0], lo[1], hi[0], hi[1])
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(ends - starts, axis=1))])
    top = (float(profile.heights.max()) if len(profile) else 0.0) + margin_mm
    return (-margin_mm, 0.0, arc[-1] + margin_mm, top)


def _frame(extent, mm_per_px):
    x0, y0, x1, y1 = (float(v) for v in extent)
    ncols = max(1, int(math.ceil((x1 - x0) / mm_per_px - 1e-9)))
    nrows = max(1, int(math.ceil((y1 - y0) / mm_per_px - 1e-9)))
    return x0, y0, nrows, ncols


def rasterize_bead(profile: BeadProfile, path, mm_per_px: float, view: str = "top", extent=None) -> BeadMask:
    """Draw the bead into a binary mask.

    ``path`` holds one planar point (mm) per sample; sample ``k`` covers the
    stretch from ``path[k]`` to ``path[k+1]`` (the last one repeats the previous
    step). A pixel is foreground when its centre lies inside the drawn shape:

    * ``top``: a rectangle of the sample's width centred on its stretch;
    * ``side``: a column block of the sample's height above the build plate,
      laid out along the cumulative arc length.

    ``extent = (x0, y0, x1, y1)`` fixes the frame in mm; pass the same extent
    when masks are to be compared pixel-for-pixel.
    """
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[0] == 0 or path.shape[1] != 2:
        raise InvalidArgumentError("path must be a non-empty (n, 2) array", "path")
    if path.shape[0] != len(profile):
        raise InvalidArgumentError(f"path has {path.shape[0]} points, profile {len(profile)} samples", "path")
    if not mm_per_px > 0:
        raise InvalidArgumentError("mm_per_px must be > 0", "mm_per_px")
    if view not in VIEWS:
        raise InvalidArgumentError(f"view must be one of {VIEWS}", "view")
    if extent is None:
        extent = default_extent(profile, path, view)
    x0, y0, nrows, ncols = _frame(extent, mm_per_px)
    s = mm_per_px
    grid = np.zeros((nrows, ncols), dtype=np.uint8)
    starts, ends = _sample_segments(path)
    # pixel centre of column c is x0 + (c + .5) s; of row r is y0 + (nrows - r - .5) s
    if view == "side":
        seg = np.linalg.norm(ends - starts, axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        col_x = x0 + (np.arange(ncols) + 0.5) * s
        owner = np.searchsorted(arc, col_x, side="right") - 1
        valid = (owner >= 0) & (owner < len(profile))
        heights = np.zeros(ncols)
        heights[valid] = profile.heights[owner[valid]]
        row_y = y0 + (nrows - np.arange(nrows) - 0.5) * s
        grid[:] = (row_y[:, None] < heights[None, :]) & valid[None, :]
        return BeadMask(grid, s, "side", (x0, y0))

    for k in range(len(profile)):
        w = profile.widths[k]
        if w <= 0:
            continue
        a, b = starts[k], ends[k]
        d = b - a
        length = math.hypot(d[0], d[1])
        if length == 0:
            continue
        t = d / length
        nrm = np.array([-t[1], t[0]])
        half = 0.5 * w
        corners = np.array([a + nrm * half, a - nrm * half, b + nrm * half, b - nrm * half])
        lo, hi = corners.min(axis=0), corners.max(axis=0)
        c0 = max(0, int(math.floor((lo[0] - x0) / s - 0.5)))
        c1 = min(ncols - 1, int(math.ceil((hi[0] - x0) / s - 0.5)))
        r_lo = max(0, int(math.floor((lo[1] - y0) / s - 0.5)))
        r_hi = min(nrows - 1, int(math.ceil((hi[1] - y0) / s - 0.5)))
        if c0 > c1 or r_lo > r_hi:
            continue
        cx = x0 + (np.arange(c0, c1 + 1) + 0.5) * s
        cy = y0 + (np.arange(r_lo, r_hi + 1) + 0.5) * s
        px = cx[None, :] - a[0]
        py = cy[:, None] - a[1]
        along = px * t[0] + py * t[1]
        across = px * nrm[0] + py * nrm[1]
        inside = (along >= 0) & (along < length) & (np.abs(across) <= half)
        rows = nrows - 1 - np.arange(r_lo, r_hi + 1)
        grid[rows[:, None], np.arange(c0, c1 + 1)[None, :]] |= inside.astype(np.uint8)
    return BeadMask(grid, s, "top", (x0, y0))


def readback_bead(top: BeadMask, side: BeadMask, dt: float, v: float, n: int, path_y: float | None = None) -> BeadProfile:
    """Recover per-sample width and height from masks of a straight bead printed along +x.

    Sample ``k`` is read at arc length ``(k + 0.5) v dt`` measured from the path
    start at ``x = 0``. Widths count foreground pixels in the top-view column,
    heights in the side-view column.
    """
    if not (v > 0):
        raise InvalidArgumentError("nozzle speed v must be > 0", "v")
    centers = (np.arange(n) + 0.5) * v * dt

    def column_counts(mask: BeadMask):
        cols = np.floor((centers - mask.origin[0]) / mask.mm_per_px).astype(np.int64)
        inside = (cols >= 0) & (cols < mask.width_px)
        counts = np.zeros(n)
        counts[inside] = mask.pixels[:, cols[inside]].sum(axis=0)
        return counts * mask.mm_per_px

    return BeadProfile(dt, v, column_counts(top), column_counts(side))


# -- images ------------------------------------------------------------------


def compose_photo(mask: BeadMask, fg=(200, 60, 40), bg=(128, 128, 128)) -> np.ndarray:
    """Synthetic RGB photo (uint8, rows x cols x 3) of a coloured bead on a grey plate."""
    img = np.empty(mask.pixels.shape + (3,), dtype=np.uint8)
    img[:] = np.asarray(bg, dtype=np.uint8)
    img[mask.pixels.astype(bool)] = np.asarray(fg, dtype=np.uint8)
    return img


def saturation(image) -> np.ndarray:
    """HSV saturation in [0, 1]: ``(max - min) / max`` per pixel, 0 where ``max == 0``."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise InvalidArgumentError("image must be a non-empty (rows, cols, 3) RGB array", "image")
    img = img.astype(float)
    hi = img.max(axis=2)
    lo = img.min(axis=2)
    return np.divide(hi - lo, hi, out=np.zeros_like(hi), where=hi > 0)


def segment_saturation(image, threshold: float, mm_per_px: float = 1.0, view: str = "top", origin=(0.0, 0.0)) -> BeadMask:
    """Foreground where HSV saturation exceeds ``threshold``."""
    if not (0.0 <= threshold <= 1.0):
        raise InvalidArgumentError("threshold must lie in [0, 1]", "threshold")
    return BeadMask((saturation(image) > threshold).astype(np.uint8), mm_per_px, view, origin)


# -- metrics -----------------------------------------------------------------


def rmse(a, b) -> float:
    a = np.asarray(a.samples if isinstance(a, FlowProfile) else a, dtype=float).reshape(-1)
    b = np.asarray(b.samples if isinstance(b, FlowProfile) else b, dtype=float).reshape(-1)
    if a.size != b.size:
        raise InvalidArgumentError(f"length mismatch ({a.size} vs {b.size})")
    if a.size == 0:
        raise InvalidArgumentError("empty profiles")
    d = np.abs(a - b)
    peak = d.max()
    if peak == 0.0:
        return 0.0
    # scale first so tiny differences do not underflow when squared
    return float(peak * np.sqrt(np.mean((d / peak) ** 2)))


def iou(s: BeadMask, t: BeadMask) -> float:
    """Intersection over union of two equally sized masks (1.0 when both are empty)."""
    sp = s.pixels if isinstance(s, BeadMask) else np.asarray(s)
    tp = t.pixels if isinstance(t, BeadMask) else np.asarray(t)
    if sp.shape != tp.shape:
        raise InvalidArgumentError(f"mask dimensions differ: {sp.shape} vs {tp.shape}")
    sb, tb = sp.astype(bool), tp.astype(bool)
    union = np.count_nonzero(sb | tb)
    if union == 0:
        return 1.0
    return np.count_nonzero(sb & tb) / union


# -- PGM / PPM ---------------------------------------------------------------

_META = re.compile(r"#\s*flowcomp\s+(.*)")


def write_pgm(mask: BeadMask, path) -> None:
    """Binary P5 graymap, 0/255, with the scale and view in a header comment."""
    meta = f"# flowcomp mm_per_px={mask.mm_per_px!r} view={mask.view} origin={mask.origin[0]!r},{mask.origin[1]!r}\n"
    header = f"P5\n{meta}{mask.width_px} {mask.height_px}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write((mask.pixels * 255).astype(np.uint8).tobytes())


def write_ppm(image, path) -> None:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidArgumentError("image must be (rows, cols, 3)", "image")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def _read_netpbm(path, magic: bytes):
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    tokens = []
    comments = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ParseError("truncated header", path)
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            end = len(data) if end < 0 else end
            comments.append(data[pos:end].decode("ascii", "replace"))
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace before raster
    if tokens[0] != magic:
        raise ParseError(f"expected {magic.decode()} file, got {tokens[0][:2]!r}", path)
    try:
        width, height, maxval = (int(tok) for tok in tokens[1:])
    except ValueError:
        raise ParseError("bad header numbers", path) from None
    if maxval != 255:
        raise ParseError("only 8-bit images are supported", path)
    return data[pos:], width, height, comments


def read_pgm(path, mm_per_px: float | None = None, view: str | None = None) -> BeadMask:
    raster, width, height, comments = _read_netpbm(path, b"P5")
    if len(raster) < width * height:
        raise ParseError("truncated raster", path)
    gray = np.frombuffer(raster[: width * height], dtype=np.uint8).reshape(height, width)
    meta = {}
    for c in comments:
        m = _META.match(c)
        if m:
            for item in m.group(1).split():
                key, _, value = item.partition("=")
                meta[key] = value
    scale = mm_per_px if mm_per_px is not None else float(meta.get("mm_per_px", 1.0))
    origin = tuple(float(v) for v in meta["origin"].split(",")) if "origin" in meta else (0.0, 0.0)
    return BeadMask((gray > 127).astype(np.uint8), scale, view or meta.get("view", "top"), origin)


def read_ppm(path) -> np.ndarray:
    raster, width, height, _ = _read_netpbm(path, b"P6")
    if len(raster) < width * height * 3:
        raise ParseError("truncated raster", path)
    return np.frombuffer(raster[: width * height * 3], dtype=np.uint8).reshape(height, width, 3).copy()
