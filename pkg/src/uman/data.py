"""Seeded synthetic lesion-on-background segmentation data, augmentation and file IO."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil
from pathlib import Path

import numpy as np

NORM_MEAN = 0.5
NORM_STD = 0.5


@dataclass
class SegmentationSample:
    image: np.ndarray  # [3,H,W] in [0,1] before normalization
    mask: np.ndarray  # [1,H,W] in {0,1}
    id: str

    def __post_init__(self):
        if self.image.shape[1:] != self.mask.shape[1:]:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} differ spatially")


@dataclass
class DatasetSpec:
    n_samples: int = 64
    size: int = 64
    family: str = "ellipse"
    noise: float = 0.05
    contrast: tuple[float, float] = (0.2, 0.4)
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 5:
            raise ValueError("n_samples must be >= 5")
        if self.size < 32:
            raise ValueError("size must be >= 32")
        if self.family not in ("ellipse", "blob"):
            raise ValueError(f"unknown shape family {self.family!r}")


@dataclass
class Shape:
    """Ellipse (``harmonics`` empty) or star-shaped blob, in pixel coordinates."""

    cy: float
    cx: float
    ry: float
    rx: float
    angle: float
    harmonics: list[tuple[int, float, float]] = field(default_factory=list)

    def contains(self, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        dy, dx = yy - self.cy, xx - self.cx
        c, s = np.cos(self.angle), np.sin(self.angle)
        u = c * dx + s * dy
        v = -s * dx + c * dy
        rho = np.sqrt((u / self.rx) ** 2 + (v / self.ry) ** 2)
        theta = np.arctan2(v / self.ry, u / self.rx)
        radius = np.ones_like(rho)
        for k, amp, phase in self.harmonics:
            radius = radius + amp * np.cos(k * theta + phase)
        return rho < radius


def _sample_shapes(rng: np.random.Generator, size: int, family: str) -> list[Shape]:
    shapes = []
    for _ in range(rng.integers(1, 4)):
        ry, rx = rng.uniform(0.1, 0.25, 2) * size
        harm = []
        if family == "blob":
            harm = [(int(k), float(rng.uniform(0.0, 0.15)), float(rng.uniform(0, 2 * np.pi))) for k in (2, 3, 5)]
        # the blob radius never exceeds 1.45 * max(r), keep it fully in frame
        reach = max(ry, rx) * (1.45 if harm else 1.0)
        cy, cx = rng.uniform(reach, size - reach, 2)
        shapes.append(Shape(cy, cx, ry, rx, float(rng.uniform(0, np.pi)), harm))
    return shapes


def render_mask(shapes: list[Shape], size: int) -> np.ndarray:
    centers = np.arange(size) + 0.5
    yy, xx = np.meshgrid(centers, centers, indexing="ij")
    mask = np.zeros((size, size), dtype=bool)
    for s in shapes:
        mask |= s.contains(yy, xx)
    return mask


def rotate_shapes(shapes: list[Shape], k: int, size: int) -> list[Shape]:
    """Shape parameters matching ``np.rot90(mask, k)`` of the rendered mask."""
    out = []
    for s in shapes:
        cy, cx, angle = s.cy, s.cx, s.angle
        for _ in range(k % 4):
            # np.rot90 moves pixel (y, x) to (size-1-x, y); with centers at +0.5
            # that maps point (y, x) to (size - x, y)
            cy, cx = size - cx, cy
            angle = angle - np.pi / 2
        out.append(Shape(cy, cx, s.ry, s.rx, angle, list(s.harmonics)))
    return out


def sample_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index])


def generate_sample(spec: DatasetSpec, index: int) -> SegmentationSample:
    rng = np.random.default_rng(sample_seed(spec.seed, index))
    shapes = _sample_shapes(rng, spec.size, spec.family)
    mask = render_mask(shapes, spec.size)
    background = rng.uniform(0.3, 0.7, 3)
    offset = rng.uniform(*spec.contrast) * rng.choice([-1.0, 1.0])
    image = np.broadcast_to(background[:, None, None], (3, spec.size, spec.size)).copy()
    image[:, mask] += offset
    if spec.noise > 0:
        image += rng.normal(0.0, spec.noise, image.shape)
    np.clip(image, 0.0, 1.0, out=image)
    return SegmentationSample(image, mask[None].astype(np.float64), f"{spec.family}_{spec.seed}_{index:05d}")


def generate_dataset(spec: DatasetSpec, workers: int = 1) -> list[SegmentationSample]:
    """All samples of ``spec``; each depends only on (seed, index)."""
    indices = range(spec.n_samples)
    if workers <= 1:
        return [generate_sample(spec, i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: generate_sample(spec, i), indices))


def split(samples: list, fraction: float = 0.8, seed: int = 0) -> tuple[list, list]:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(samples)
    if n < 2:
        raise ValueError("need at least 2 samples to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(ceil(fraction * n), n - 1)
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


def draw_transform(seed) -> tuple[int, bool, bool]:
    """(quarter turns, horizontal flip, vertical flip) for one augmentation."""
    rng = np.random.default_rng(seed)
    return int(rng.integers(4)), bool(rng.random() < 0.5), bool(rng.random() < 0.5)


def apply_transform(arr: np.ndarray, rot: int, hflip: bool, vflip: bool) -> np.ndarray:
    out = np.rot90(arr, rot, axes=(-2, -1))
    if hflip:
        out = out[..., ::-1]
    if vflip:
        out = out[..., ::-1, :]
    return np.ascontiguousarray(out)


def normalize(image: np.ndarray) -> np.ndarray:
    return (image - NORM_MEAN) / NORM_STD


def augment(sample: SegmentationSample, seed, geometric: bool = True) -> SegmentationSample:
    """Random 90-degree rotation and flips (shared by image and mask), then normalization."""
    image, mask = sample.image, sample.mask
    if geometric:
        t = draw_transform(seed)
        image, mask = apply_transform(image, *t), apply_transform(mask, *t)
    return SegmentationSample(normalize(image), mask.copy(), sample.id)


# -- PGM / PPM ----------------------------------------------------------------


class ImageFormatError(ValueError):
    pass


def _to_bytes(arr: np.ndarray) -> bytes:
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("pixel values must lie in [0, 1]")
    return np.round(arr * 255.0).astype(np.uint8).tobytes()


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[0]
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + _to_bytes(img))


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    c, h, w = img.shape
    if c != 3:
        raise ValueError(f"PPM needs 3 channels, got {c}")
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + _to_bytes(img.transpose(1, 2, 0)))


def _parse_header(raw: bytes, magic: bytes) -> tuple[int, int, int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated header")
        tokens.append(raw[start:pos])
    if tokens[0] != magic:
        raise ImageFormatError(f"expected magic {magic!r}, got {tokens[0]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"malformed header: {exc}") from None
    if maxval != 255 or w < 1 or h < 1:
        raise ImageFormatError(f"unsupported header {w}x{h} maxval {maxval}")
    return w, h, pos + 1


def _read(path, magic: bytes, channels: int) -> tuple[np.ndarray, int, int]:
    raw = Path(path).read_bytes()
    w, h, offset = _parse_header(raw, magic)
    need = w * h * channels
    payload = raw[offset : offset + need]
    if len(payload) != need:
        raise ImageFormatError(f"truncated payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0, h, w


def read_pgm(path) -> np.ndarray:
    data, h, w = _read(path, b"P5", 1)
    return data.reshape(h, w)


def read_ppm(path) -> np.ndarray:
    data, h, w = _read(path, b"P6", 3)
    return data.reshape(h, w, 3).transpose(2, 0, 1).copy()


def save_dataset(samples: list[SegmentationSample], root) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for s in samples:
        write_ppm(root / "images" / f"{s.id}.ppm", s.image)
        write_pgm(root / "masks" / f"{s.id}.pgm", s.mask)
    with open(root / "manifest.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{s.id}\n" for s in samples)


def load_dataset(root) -> list[SegmentationSample]:
    root = Path(root)
    ids = [line.strip() for line in (root / "manifest.txt").read_text(encoding="utf-8").splitlines() if line.strip()]
    samples = []
    for sid in ids:
        image = read_ppm(root / "images" / f"{sid}.ppm")
        mask = (read_pgm(root / "masks" / f"{sid}.pgm") >= 0.5).astype(np.float64)[None]
        samples.append(SegmentationSample(image, mask, sid))
    return samples
