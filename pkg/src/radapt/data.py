"""Synthetic quality-rated image domains plus on-disk dataset plumbing.

Two halves live here. The first generates procedurally textured image
patches with an analytic quality label: a per-sample distortion strength
drives blur, additive noise, and contrast loss, and a strictly monotone
map turns that strength into a mean opinion score on the rating scale.
A per-channel affine transform applied after distortion simulates a
covariate domain shift that leaves labels untouched.

The second half is format plumbing: manifest CSV + sidecar metadata,
raw float32 image blobs, label rescaling onto [1, 5], content-grouped
train/val/test splitting, cropping, and batch iteration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple

import numpy as np
from scipy import ndimage

from radapt.distmath import QualityLabel, RatingScale
from radapt.errors import ConfigError, DataError, ShapeError, SplitError

DEFAULT_LABEL_VARIANCE = 0.25  # on the [1, 5] scale, for unannotated datasets
SPLIT_TAGS = ("train", "val", "test")

_SIDECAR_KEYS = ("mos_min", "mos_max", "higher_is_better", "height", "width", "channels")


# ----------------------------------------------------------------- containers


@dataclass(frozen=True)
class Dataset:
    """In-memory image set with (mean, variance) labels on the rating scale.

    ``images`` is (N, C, H, W) float32; labels are float64 vectors. ``groups``
    optionally names the content group of each sample so splits can keep all
    crops of one source image together.
    """

    images: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    groups: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (N, C, H, W), got {self.images.shape}")
        if self.images.dtype != np.float32:
            raise DataError(f"images must be float32, got {self.images.dtype}")
        n = self.images.shape[0]
        for name, arr in (("means", self.means), ("variances", self.variances)):
            if arr.shape != (n,):
                raise ShapeError(f"{name} must be ({n},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contain non-finite values")
        if np.any(self.variances < 0):
            raise DataError("variances must be >= 0")
        if self.groups is not None and len(self.groups) != n:
            raise ShapeError(f"groups must have length {n}, got {len(self.groups)}")

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    def label(self, i: int) -> QualityLabel:
        return QualityLabel(float(self.means[i]), float(self.variances[i]))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        groups = None
        if self.groups is not None:
            groups = tuple(self.groups[int(i)] for i in idx)
        return Dataset(self.images[idx], self.means[idx], self.variances[idx], groups)


@dataclass(frozen=True)
class DomainData:
    """One domain's dataset split into train/val/test parts."""

    train: Dataset
    val: Dataset
    test: Dataset

    def part(self, tag: str) -> Dataset:
        if tag not in SPLIT_TAGS:
            raise ValueError(f"unknown split tag {tag!r}")
        return getattr(self, tag)


# ---------------------------------------------------------- synthetic domains


@dataclass(frozen=True)
class SyntheticDomainSpec:
    """Recipe for a procedurally generated, quality-labelled image domain.

    Each distortion field is an (at strength 0, at strength 1) endpoint pair,
    interpolated linearly in the per-sample strength s ~ U[0, 1]. The quality
    mean is ``quality_hi - (quality_hi - quality_lo) * s**quality_gamma``,
    strictly decreasing in s. ``shift_scale``/``shift_offset`` apply
    x' = a * x + b per channel after distortion, labels untouched.
    """

    seed: int = 0
    height: int = 32
    width: int = 32
    channels: int = 3
    generator: str = "gratings"
    blur_sigma: tuple[float, float] = (0.0, 2.2)
    noise_sigma: tuple[float, float] = (0.0, 0.10)
    contrast_scale: tuple[float, float] = (1.0, 0.45)
    quality_lo: float = 1.0
    quality_hi: float = 5.0
    quality_gamma: float = 1.0
    label_variance: float = 0.25
    shift_scale: tuple[float, ...] | float = 1.0
    shift_offset: tuple[float, ...] | float = 0.0

    def __post_init__(self) -> None:
        if min(self.height, self.width) < 4 or self.channels < 1:
            raise ConfigError(f"bad image dims {self.height}x{self.width}x{self.channels}")
        if self.generator not in _GENERATORS:
            raise ConfigError(
                f"unknown generator {self.generator!r}; have {sorted(_GENERATORS)}"
            )
        for name, pair, lo_ok in (
            ("blur_sigma", self.blur_sigma, 0.0),
            ("noise_sigma", self.noise_sigma, 0.0),
            ("contrast_scale", self.contrast_scale, 1e-6),
        ):
            if len(pair) != 2 or not all(np.isfinite(v) for v in pair):
                raise ConfigError(f"{name} must be two finite endpoints, got {pair}")
            if min(pair) < lo_ok:
                raise ConfigError(f"{name} endpoints must be >= {lo_ok}, got {pair}")
        if not (np.isfinite(self.quality_lo) and np.isfinite(self.quality_hi)):
            raise ConfigError("quality endpoints must be finite")
        if not self.quality_lo < self.quality_hi:
            raise ConfigError(
                f"need quality_lo < quality_hi, got {self.quality_lo}, {self.quality_hi}"
            )
        if not (np.isfinite(self.quality_gamma) and self.quality_gamma > 0):
            raise ConfigError(f"quality_gamma must be > 0, got {self.quality_gamma}")
        if not (np.isfinite(self.label_variance) and self.label_variance >= 0):
            raise ConfigError(f"label_variance must be >= 0, got {self.label_variance}")
        for name, val in (("shift_scale", self.shift_scale), ("shift_offset", self.shift_offset)):
            arr = np.atleast_1d(np.asarray(val, dtype=np.float64))
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} must be finite, got {val}")
            if arr.size not in (1, self.channels):
                raise ConfigError(
                    f"{name} must be scalar or per-channel ({self.channels}), got {arr.size}"
                )

    def _per_channel(self, val) -> np.ndarray:
        arr = np.atleast_1d(np.asarray(val, dtype=np.float64))
        if arr.size == 1:
            arr = np.repeat(arr, self.channels)
        return arr.reshape(self.channels, 1, 1)


def quality_from_strength(spec: SyntheticDomainSpec, s) -> np.ndarray:
    """Map distortion strength in [0, 1] to the label mean (vectorized)."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0) or np.any(s > 1):
        raise ValueError("strength must lie in [0, 1]")
    return spec.quality_hi - (spec.quality_hi - spec.quality_lo) * s**spec.quality_gamma


def _lerp(pair: tuple[float, float], s: float) -> float:
    return pair[0] + s * (pair[1] - pair[0])


def _gratings(rng: np.random.Generator, c: int, h: int, w: int) -> np.ndarray:
    """Sum of random oriented sinusoids, squashed into [0, 1] around 0.5."""
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    n_waves = int(rng.integers(2, 5))
    img = np.zeros((c, h, w))
    for _ in range(n_waves):
        freq = rng.uniform(0.06, 0.45)
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.4, 1.0, size=(c, 1, 1))
        carrier = np.sin(2.0 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img += amp * carrier
    # |img| <= n_waves, so this keeps pixels strictly inside [0, 1]
    return 0.5 + img / (2.0 * n_waves)


def _fields(rng: np.random.Generator, c: int, h: int, w: int) -> np.ndarray:
    """Smoothed Gaussian random field, standardized around mid-gray."""
    u = rng.normal(0.0, 1.0, size=(c, h, w))
    f = ndimage.gaussian_filter(u, sigma=(0.0, 2.0, 2.0))
    f -= f.mean(axis=(1, 2), keepdims=True)
    sd = f.std(axis=(1, 2), keepdims=True)
    return 0.5 + 0.2 * f / (sd + 1e-12)


_GENERATORS = {"gratings": _gratings, "fields": _fields}


def generate_domain(spec: SyntheticDomainSpec, n: int) -> Dataset:
    """Produce n labelled samples, deterministic in ``spec.seed``.

    Pipeline per sample: texture, contrast loss, blur, additive noise, then
    the per-channel affine domain shift. The shift consumes no randomness,
    so two specs differing only in (scale, offset) yield samples that are
    exact affines of each other.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(spec.seed)
    c, h, w = spec.channels, spec.height, spec.width
    make_texture = _GENERATORS[spec.generator]
    strengths = rng.uniform(0.0, 1.0, size=n)
    images = np.empty((n, c, h, w), dtype=np.float64)
    for i in range(n):
        s = float(strengths[i])
        x = make_texture(rng, c, h, w)
        k = _lerp(spec.contrast_scale, s)
        center = x.mean(axis=(1, 2), keepdims=True)
        x = center + k * (x - center)
        sigma = _lerp(spec.blur_sigma, s)
        x = ndimage.gaussian_filter(x, sigma=(0.0, sigma, sigma))
        x = x + _lerp(spec.noise_sigma, s) * rng.normal(0.0, 1.0, size=(c, h, w))
        images[i] = x
    a = spec._per_channel(spec.shift_scale)
    b = spec._per_channel(spec.shift_offset)
    images = images * a[None] + b[None]
    means = quality_from_strength(spec, strengths)
    variances = np.full(n, float(spec.label_variance))
    return Dataset(images.astype(np.float32), means, variances, groups=None)


# ------------------------------------------------------------ label rescaling


def rescale_labels(
    mos: float,
    mos_min: float,
    mos_max: float,
    higher_is_better: bool,
    variance: float | None = None,
    target: RatingScale = RatingScale(),
) -> QualityLabel:
    """Affine-map a rating onto the target scale, flipping lower-is-better.

    The flip happens inside the native range first, then the affine map; the
    variance scales by the squared slope. A missing variance falls back to
    ``DEFAULT_LABEL_VARIANCE`` on the target scale (not slope-scaled).
    """
    if not np.isfinite(mos_min) or not np.isfinite(mos_max) or mos_max <= mos_min:
        raise ConfigError(f"empty rating range [{mos_min}, {mos_max}]")
    if not np.isfinite(mos) or mos < mos_min or mos > mos_max:
        raise DataError(f"mos {mos} outside declared range [{mos_min}, {mos_max}]")
    if not higher_is_better:
        mos = mos_min + mos_max - mos
    slope = (target.upper - target.lower) / (mos_max - mos_min)
    mean = target.lower + slope * (mos - mos_min)
    if variance is None:
        return QualityLabel(mean, DEFAULT_LABEL_VARIANCE)
    if variance < 0:
        raise DataError(f"variance must be >= 0, got {variance}")
    return QualityLabel(mean, variance * slope**2)


# ----------------------------------------------------------------- splitting


def _check_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError(f"need three ratios >= 0, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)}")
    return ratios


def split_indices(
    n: int,
    ratios=(0.8, 0.1, 0.1),
    seed: int = 0,
    groups: tuple | None = None,
) -> dict[str, np.ndarray]:
    """Deterministic train/val/test index split, optionally group-aware.

    Without groups, a shuffled split of sizes floor(r_train*n)/floor(r_val*n)
    with the remainder in test. With groups, the same floor allocation is
    applied to the shuffled list of distinct groups, so every sample of one
    group lands in a single split.
    """
    ratios = _check_ratios(ratios)
    if n < 1:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    if groups is None:
        perm = rng.permutation(n)
        n_train, n_val = int(ratios[0] * n), int(ratios[1] * n)
        parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    else:
        if len(groups) != n:
            raise ShapeError(f"groups must have length {n}, got {len(groups)}")
        uniq = sorted(set(groups))
        order = rng.permutation(len(uniq))
        g_train, g_val = int(ratios[0] * len(uniq)), int(ratios[1] * len(uniq))
        buckets = (order[:g_train], order[g_train:g_train + g_val], order[g_train + g_val:])
        largest = max(np.bincount([uniq.index(g) for g in groups]))
        capacity = max(int(r * n) for r in ratios if r > 0)
        if largest > capacity:
            raise SplitError(
                f"a content group of {largest} samples exceeds the largest "
                f"split capacity of {capacity}"
            )
        tag_of = {}
        for tag_idx, bucket in enumerate(buckets):
            for gi in bucket:
                tag_of[uniq[int(gi)]] = tag_idx
        parts = tuple(
            np.array([i for i, g in enumerate(groups) if tag_of[g] == t], dtype=np.intp)
            for t in range(3)
        )
    out = dict(zip(SPLIT_TAGS, parts))
    for tag, ratio, idx in zip(SPLIT_TAGS, ratios, parts):
        if ratio > 0 and len(idx) == 0:
            raise SplitError(f"split {tag!r} (ratio {ratio}) received no samples")
    return out


def split_dataset(
    dataset: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0
) -> DomainData:
    """Split a Dataset into DomainData, honouring its content groups."""
    parts = split_indices(dataset.n, ratios, seed, dataset.groups)
    return DomainData(*(dataset.subset(parts[tag]) for tag in SPLIT_TAGS))


# ------------------------------------------------------------------- cropping


def crop(image: np.ndarray, size, mode: str = "center", rng=None) -> np.ndarray:
    """Crop one (C, H, W) image to (h, w), centered or at a random offset."""
    if image.ndim != 3:
        raise ShapeError(f"expected (C, H, W), got {image.shape}")
    h, w = (size, size) if np.isscalar(size) else tuple(size)
    _, H, W = image.shape
    if h > H or w > W:
        raise ShapeError(f"crop {h}x{w} larger than image {H}x{W}")
    if mode == "center":
        top, left = (H - h) // 2, (W - w) // 2
    elif mode == "random":
        if rng is None:
            raise ValueError("random crop needs an rng")
        top = int(rng.integers(0, H - h + 1))
        left = int(rng.integers(0, W - w + 1))
    else:
        raise ValueError(f"unknown crop mode {mode!r}")
    return image[:, top:top + h, left:left + w]


# ------------------------------------------------------------------- batching


class Batch(NamedTuple):
    images: np.ndarray  # (B, C, H, W) float32
    means: np.ndarray  # (B,)
    variances: np.ndarray  # (B,)


def batches(
    dataset: Dataset,
    batch_size: int,
    train: bool = False,
    shuffle: bool | None = None,
    seed: int = 0,
) -> Iterator[Batch]:
    """Yield batches in a deterministic order given the seed.

    Train mode drops the final partial batch (normalisation statistics need
    full batches); eval mode keeps it. ``shuffle`` defaults to the mode.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if dataset.n == 0:
        raise DataError("cannot iterate an empty dataset")
    if shuffle is None:
        shuffle = train
    order = np.arange(dataset.n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(dataset.n)
    stop = (dataset.n // batch_size) * batch_size if train else dataset.n
    if train and stop == 0:
        raise DataError(
            f"dataset of {dataset.n} samples yields no full batch of {batch_size}"
        )
    for start in range(0, stop, batch_size):
        idx = order[start:start + batch_size]
        yield Batch(dataset.images[idx], dataset.means[idx], dataset.variances[idx])


# ----------------------------------------------------------- manifest formats


@dataclass(frozen=True)
class ManifestRecord:
    """One image entry: blob path, native-scale rating, optional extras."""

    path: str
    mos: float
    variance: float | None = None
    split: str = ""
    group: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    """Image records plus the scale and geometry metadata of a dataset."""

    records: tuple[ManifestRecord, ...]
    mos_min: float
    mos_max: float
    higher_is_better: bool
    height: int
    width: int
    channels: int

    def __post_init__(self) -> None:
        if self.mos_max <= self.mos_min:
            raise DataError(f"empty rating range [{self.mos_min}, {self.mos_max}]")
        if min(self.height, self.width, self.channels) < 1:
            raise DataError("image dims must be positive")
        seen = set()
        for rec in self.records:
            if rec.path in seen:
                raise DataError(f"duplicate path {rec.path!r}")
            seen.add(rec.path)
            if not (self.mos_min <= rec.mos <= self.mos_max):
                raise DataError(
                    f"{rec.path}: mos {rec.mos} outside [{self.mos_min}, {self.mos_max}]"
                )
            if rec.variance is not None and rec.variance < 0:
                raise DataError(f"{rec.path}: variance {rec.variance} < 0")
            if rec.split not in ("",) + SPLIT_TAGS:
                raise DataError(f"{rec.path}: unknown split tag {rec.split!r}")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


def _sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta")


def write_manifest(manifest: DatasetManifest, csv_path) -> None:
    """Write the record CSV plus the key=value sidecar next to it."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "mos", "variance", "split", "group"])
        for rec in manifest.records:
            var = "" if rec.variance is None else repr(rec.variance)
            writer.writerow([rec.path, repr(rec.mos), var, rec.split, rec.group])
    meta = {
        "mos_min": repr(manifest.mos_min),
        "mos_max": repr(manifest.mos_max),
        "higher_is_better": "true" if manifest.higher_is_better else "false",
        "height": str(manifest.height),
        "width": str(manifest.width),
        "channels": str(manifest.channels),
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        for key in _SIDECAR_KEYS:
            fh.write(f"{key}={meta[key]}\n")


def _parse_sidecar(path: Path) -> dict[str, str]:
    if not path.exists():
        raise DataError(f"missing sidecar metadata file {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _SIDECAR_KEYS:
            raise DataError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    missing = [k for k in _SIDECAR_KEYS if k not in values]
    if missing:
        raise DataError(f"{path}: missing keys {missing}")
    return values


def read_manifest(csv_path) -> DatasetManifest:
    """Read a manifest CSV and its sidecar back into a DatasetManifest."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise DataError(f"missing manifest file {csv_path}")
    meta = _parse_sidecar(_sidecar_path(csv_path))
    flag = meta["higher_is_better"].lower()
    if flag not in ("true", "false"):
        raise DataError(f"higher_is_better must be true/false, got {flag!r}")
    records = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["path", "mos", "variance", "split", "group"]
        if reader.fieldnames != expected:
            raise DataError(f"manifest header must be {expected}, got {reader.fieldnames}")
        for row in reader:
            try:
                mos = float(row["mos"])
                variance = float(row["variance"]) if row["variance"] else None
            except ValueError as exc:
                raise DataError(f"{csv_path}: bad numeric field in row {row}") from exc
            records.append(
                ManifestRecord(row["path"], mos, variance, row["split"], row["group"])
            )
    try:
        return DatasetManifest(
            records=tuple(records),
            mos_min=float(meta["mos_min"]),
            mos_max=float(meta["mos_max"]),
            higher_is_better=flag == "true",
            height=int(meta["height"]),
            width=int(meta["width"]),
            channels=int(meta["channels"]),
        )
    except ValueError as exc:
        raise DataError(f"{csv_path}: bad sidecar value ({exc})") from exc


def write_blob(path, image: np.ndarray) -> None:
    """Write one (C, H, W) image as little-endian float32, channel-major."""
    if image.ndim != 3:
        raise ShapeError(f"expected (C, H, W), got {image.shape}")
    Path(path).write_bytes(np.ascontiguousarray(image, dtype="<f4").tobytes())


def read_blob(path, shape: tuple[int, int, int]) -> np.ndarray:
    """Read one image blob back; the expected shape comes from the manifest."""
    data = Path(path).read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(data) != expected:
        raise DataError(f"{path}: expected {expected} bytes for {shape}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(shape)


def load_dataset(
    manifest: DatasetManifest,
    root,
    split: str | None = None,
    target: RatingScale = RatingScale(),
) -> Dataset:
    """Load blobs for one split (or all records) with labels rescaled.

    Ratings are mapped onto the target scale using the manifest's range and
    orientation; absent variances get the documented default.
    """
    root = Path(root)
    recs = [r for r in manifest.records if split is None or r.split == split]
    if not recs:
        raise DataError(f"no records for split {split!r}")
    images = np.empty((len(recs),) + manifest.image_shape, dtype=np.float32)
    means = np.empty(len(recs))
    variances = np.empty(len(recs))
    for i, rec in enumerate(recs):
        images[i] = read_blob(root / rec.path, manifest.image_shape)
        label = rescale_labels(
            rec.mos, manifest.mos_min, manifest.mos_max,
            manifest.higher_is_better, rec.variance, target,
        )
        means[i], variances[i] = label.mean, label.variance
    groups = tuple(r.group for r in recs)
    if all(g == "" for g in groups):
        groups = None
    return Dataset(images, means, variances, groups)


def save_domain_data(data: Mapping[str, Dataset] | DomainData, directory) -> Path:
    """Materialize datasets as blobs plus a tagged manifest; returns the CSV path.

    Labels are stored as-is with the rating scale [1, 5] declared in the
    sidecar, so loading them back is an identity rescale.
    """
    if isinstance(data, DomainData):
        data = {tag: data.part(tag) for tag in SPLIT_TAGS}
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scale = RatingScale()
    shape = None
    records = []
    counter = 0
    for tag, dataset in data.items():
        if tag not in SPLIT_TAGS:
            raise ConfigError(f"unknown split tag {tag!r}")
        if shape is None:
            shape = dataset.image_shape
        elif dataset.image_shape != shape:
            raise DataError(f"mixed image shapes {shape} vs {dataset.image_shape}")
        for i in range(dataset.n):
            rel = f"img_{counter:06d}.bin"
            write_blob(directory / rel, dataset.images[i])
            group = dataset.groups[i] if dataset.groups is not None else ""
            records.append(
                ManifestRecord(rel, float(dataset.means[i]), float(dataset.variances[i]),
                               tag, group)
            )
            counter += 1
    if shape is None or not records:
        raise DataError("nothing to save")
    manifest = DatasetManifest(
        records=tuple(records),
        mos_min=scale.lower,
        mos_max=scale.upper,
        higher_is_better=True,
        height=shape[1],
        width=shape[2],
        channels=shape[0],
    )
    csv_path = directory / "manifest.csv"
    write_manifest(manifest, csv_path)
    return csv_path


def load_domain_data(csv_path, target: RatingScale = RatingScale()) -> DomainData:
    """Load a tagged manifest directory back into DomainData."""
    csv_path = Path(csv_path)
    manifest = read_manifest(csv_path)
    root = csv_path.parent
    return DomainData(*(load_dataset(manifest, root, tag, target) for tag in SPLIT_TAGS))
