"""Tiling, train/test splitting, sequence assembly and the dataset manifest.

Manifest format (JSON lines, UTF-8). Line 1 is a header object::

    {"format": "groundsynth-manifest", "version": 1, "origin": [lon0, lat0],
     "tile_size_m": 600.0, "extent": [min_x, min_y, max_x, max_y]}

Every following line is one object with a ``"kind"`` of ``"tile"``,
``"record"`` or ``"sequence"``. Floats are written with shortest round-trip
repr, so a write/read cycle is bit-exact. Paths are relative to the
directory holding the manifest; the conventional layout is
``tiles/<row>_<col>/<sample-id>/``.

Local planar coordinates come from an equirectangular projection about the
stored origin: ``x = R * dlon * cos(lat0)``, ``y = R * dlat`` (radians,
``R`` = mean Earth radius), x east and y north in meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence as Seq

import numpy as np

from .errors import InputIOError, ManifestParseError, ParameterError
from .spherical import STANDARD_VIEW_LABELS

EARTH_RADIUS_M = 6_371_008.8
DEFAULT_TILE_M = 600.0
SPLITS = ("train", "test", "unassigned")
MANIFEST_FORMAT = "groundsynth-manifest"
MANIFEST_VERSION = 1
SEQUENCE_LENGTH = 5
MIN_GAP_M = 3.0
MAX_GAP_M = 10.0
# Slack on the gap bounds so spacings exact in meters survive the lon/lat round trip.
GAP_TOL_M = 1e-6


@dataclass(frozen=True)
class GeoExtent:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        for name in ("min_x", "min_y", "max_x", "max_y"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.min_x, self.min_y, self.max_x, self.max_y)
        if not all(math.isfinite(v) for v in vals):
            raise ParameterError("extent bounds must be finite")
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise ParameterError(f"degenerate extent {vals}")

    def as_list(self) -> list:
        return [self.min_x, self.min_y, self.max_x, self.max_y]


@dataclass(frozen=True)
class Tile:
    row: int
    col: int
    bounds: GeoExtent
    split: str = "unassigned"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ParameterError(f"unknown split {self.split!r}")

    @property
    def index(self) -> tuple[int, int]:
        return (self.row, self.col)

    @property
    def key(self) -> str:
        return f"{self.row}_{self.col}"


@dataclass
class SampleRecord:
    id: str
    lon: float
    lat: float
    elevation_m: float
    heading_deg: float
    tile: tuple[int, int]
    pano: str = ""
    views: dict = field(default_factory=dict)
    satapp: dict = field(default_factory=dict)
    depth: dict = field(default_factory=dict)
    vertical_offset_m: float = 0.0

    def paths(self) -> list[str]:
        out = [self.pano] if self.pano else []
        for group in (self.views, self.satapp, self.depth):
            out += [group[k] for k in sorted(group)]
        return out


@dataclass
class Sequence:
    ids: list
    spacings_m: list

    @property
    def length(self) -> int:
        return len(self.ids)


@dataclass
class DatasetManifest:
    origin: tuple[float, float]
    extent: GeoExtent
    tile_size_m: float = DEFAULT_TILE_M
    tiles: list = field(default_factory=list)
    records: list = field(default_factory=list)
    sequences: list = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.tile_size_m = float(self.tile_size_m)

    def projection(self) -> "LocalProjection":
        return LocalProjection(*self.origin)

    def split_of(self) -> dict:
        return {t.index: t.split for t in self.tiles}


# --- projection and tiling ----------------------------------------------------


@dataclass(frozen=True)
class LocalProjection:
    lon0: float
    lat0: float

    @classmethod
    def about_centroid(cls, lons: Iterable[float], lats: Iterable[float]) -> "LocalProjection":
        lons, lats = np.asarray(list(lons), float), np.asarray(list(lats), float)
        if lons.size == 0:
            raise ParameterError("cannot take the centroid of no positions")
        return cls(float(lons.mean()), float(lats.mean()))

    def forward(self, lon, lat) -> np.ndarray:
        k = math.pi / 180.0
        x = EARTH_RADIUS_M * (np.asarray(lon, float) - self.lon0) * k * math.cos(self.lat0 * k)
        y = EARTH_RADIUS_M * (np.asarray(lat, float) - self.lat0) * k
        return np.stack([x, y], axis=-1)

    def inverse(self, x, y) -> np.ndarray:
        k = math.pi / 180.0
        lon = self.lon0 + np.asarray(x, float) / (EARTH_RADIUS_M * math.cos(self.lat0 * k) * k)
        lat = self.lat0 + np.asarray(y, float) / (EARTH_RADIUS_M * k)
        return np.stack([lon, lat], axis=-1)


def tile_extent(extent: GeoExtent, tile_size_m: float = DEFAULT_TILE_M) -> list[Tile]:
    """Row-major grid of square tiles anchored at the extent's minimum corner."""
    if not tile_size_m > 0:
        raise ParameterError(f"tile_size_m must be positive, got {tile_size_m}")
    cols = math.ceil((extent.max_x - extent.min_x) / tile_size_m)
    rows = math.ceil((extent.max_y - extent.min_y) / tile_size_m)
    tiles = []
    for r in range(rows):
        for c in range(cols):
            x0 = extent.min_x + c * tile_size_m
            y0 = extent.min_y + r * tile_size_m
            tiles.append(Tile(r, c, GeoExtent(x0, y0, x0 + tile_size_m, y0 + tile_size_m)))
    return tiles


def tile_index_of(x: float, y: float, extent: GeoExtent, tile_size_m: float = DEFAULT_TILE_M) -> tuple[int, int]:
    """Tile holding a planar position; cells are half-open except on the outer max edge."""
    if not (extent.min_x <= x <= extent.max_x and extent.min_y <= y <= extent.max_y):
        raise ParameterError(f"position ({x}, {y}) lies outside the extent")
    cols = math.ceil((extent.max_x - extent.min_x) / tile_size_m)
    rows = math.ceil((extent.max_y - extent.min_y) / tile_size_m)
    c = min(int((x - extent.min_x) // tile_size_m), cols - 1)
    r = min(int((y - extent.min_y) // tile_size_m), rows - 1)
    return (r, c)


def split_counts(n_tiles: int, train_frac: float, test_frac: float) -> tuple[int, int]:
    """Absolute tile counts from fractions, each rounded down."""
    if train_frac < 0 or test_frac < 0 or train_frac + test_frac > 1 + 1e-12:
        raise ParameterError("split fractions must be non-negative and sum to at most 1")
    train = int(math.floor(n_tiles * train_frac + 1e-9))
    test = min(int(math.floor(n_tiles * test_frac + 1e-9)), n_tiles - train)
    return train, test


def split_tiles(tiles: Seq[Tile], train_count: int = 70, test_count: int = 20, seed: int = 0) -> list[Tile]:
    """Seeded shuffle: first ``train_count`` to train, next ``test_count`` to test."""
    if train_count < 0 or test_count < 0:
        raise ParameterError("split counts must be non-negative")
    if train_count + test_count > len(tiles):
        raise ParameterError(f"{train_count} + {test_count} tiles requested but only {len(tiles)} exist")
    order = np.random.default_rng(seed).permutation(len(tiles))
    split = ["unassigned"] * len(tiles)
    for rank, k in enumerate(order):
        if rank < train_count:
            split[k] = "train"
        elif rank < train_count + test_count:
            split[k] = "test"
    return [replace(t, split=s) for t, s in zip(tiles, split)]


# --- sequences ----------------------------------------------------------------


def _greedy_chains(xy: np.ndarray, length: int, min_gap: float, max_gap: float) -> list[list[int]]:
    chains, i, n = [], 0, len(xy)
    while i < n:
        chain = [i]
        while len(chain) < length and chain[-1] + 1 < n:
            j = chain[-1]
            d = float(np.hypot(*(xy[j + 1] - xy[j])))
            if not (min_gap - GAP_TOL_M <= d <= max_gap + GAP_TOL_M):
                break
            chain.append(j + 1)
        if len(chain) == length:
            chains.append(chain)
            i = chain[-1] + 1
        else:
            i += 1
    return chains


def build_sequences(
    records: Seq[SampleRecord],
    length: int = SEQUENCE_LENGTH,
    min_gap_m: float = MIN_GAP_M,
    max_gap_m: float = MAX_GAP_M,
    projection: Optional[LocalProjection] = None,
    tile_splits: Optional[dict] = None,
) -> list[Sequence]:
    """Greedy chaining along capture order.

    A chain starts at each unconsumed record and grows while the next record
    lies within ``[min_gap_m, max_gap_m]``; chains reaching ``length`` are
    emitted and consume their records. With ``tile_splits`` given, emitted
    chains whose members fall in tiles of different splits are dropped.
    """
    if length < 1:
        raise ParameterError("sequence length must be at least 1")
    if not 0 <= min_gap_m <= max_gap_m:
        raise ParameterError("need 0 <= min_gap_m <= max_gap_m")
    if not records:
        return []
    proj = projection or LocalProjection.about_centroid([r.lon for r in records], [r.lat for r in records])
    xy = proj.forward([r.lon for r in records], [r.lat for r in records])
    out = []
    for chain in _greedy_chains(xy, length, min_gap_m, max_gap_m):
        if tile_splits is not None:
            splits = {tile_splits.get(tuple(records[k].tile)) for k in chain}
            if len(splits) > 1:
                continue
        gaps = [float(np.hypot(*(xy[b] - xy[a]))) for a, b in zip(chain, chain[1:])]
        out.append(Sequence([records[k].id for k in chain], gaps))
    return out


# --- manifest I/O -------------------------------------------------------------


def record_dir(record: SampleRecord) -> str:
    return f"tiles/{record.tile[0]}_{record.tile[1]}/{record.id}"


def default_record_paths(record: SampleRecord) -> SampleRecord:
    """Fill in the conventional per-sample file layout."""
    base = record_dir(record)
    return replace(
        record,
        pano=f"{base}/pano.png",
        views={k: f"{base}/{k}.png" for k in STANDARD_VIEW_LABELS},
        satapp={k: f"{base}/satapp_{k}.png" for k in STANDARD_VIEW_LABELS},
        depth={k: f"{base}/depth_{k}.npy" for k in STANDARD_VIEW_LABELS},
    )


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _tile_obj(t: Tile) -> dict:
    return {"kind": "tile", "row": t.row, "col": t.col, "bounds": t.bounds.as_list(), "split": t.split}


def _record_obj(r: SampleRecord) -> dict:
    return {
        "kind": "record",
        "id": r.id,
        "lon": r.lon,
        "lat": r.lat,
        "elevation_m": r.elevation_m,
        "heading_deg": r.heading_deg,
        "tile": list(r.tile),
        "pano": r.pano,
        "views": r.views,
        "satapp": r.satapp,
        "depth": r.depth,
        "vertical_offset_m": r.vertical_offset_m,
    }


def manifest_lines(m: DatasetManifest) -> list[str]:
    header = {
        "format": MANIFEST_FORMAT,
        "version": m.version,
        "origin": list(m.origin),
        "tile_size_m": m.tile_size_m,
        "extent": m.extent.as_list(),
    }
    lines = [_dumps(header)]
    lines += [_dumps(_tile_obj(t)) for t in m.tiles]
    lines += [_dumps(_record_obj(r)) for r in m.records]
    lines += [_dumps({"kind": "sequence", "ids": s.ids, "spacings_m": s.spacings_m}) for s in m.sequences]
    return lines


def write_manifest(path, manifest: DatasetManifest) -> None:
    Path(path).write_text("\n".join(manifest_lines(manifest)) + "\n", encoding="utf-8")


def _need(obj: dict, key: str, types, lineno: int):
    if key not in obj:
        raise ManifestParseError("missing field", lineno, key)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, types):
        raise ManifestParseError(f"expected {types}, got {type(val).__name__}", lineno, key)
    return val


_NUM = (int, float)


def _parse_extent(vals, lineno, key) -> GeoExtent:
    if not isinstance(vals, list) or len(vals) != 4 or not all(isinstance(v, _NUM) for v in vals):
        raise ManifestParseError("expected four numbers", lineno, key)
    try:
        return GeoExtent(*(float(v) for v in vals))
    except ParameterError as exc:
        raise ManifestParseError(str(exc), lineno, key) from exc


def _str_map(obj, key, lineno) -> dict:
    val = _need(obj, key, dict, lineno)
    if not all(isinstance(v, str) for v in val.values()):
        raise ManifestParseError("expected a mapping of strings", lineno, key)
    return dict(val)


def parse_manifest(text: str) -> DatasetManifest:
    lines = text.splitlines()
    if not lines:
        raise ManifestParseError("empty manifest", 1)
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"invalid JSON: {exc.msg}", 1) from exc
    if not isinstance(head, dict) or head.get("format") != MANIFEST_FORMAT:
        raise ManifestParseError("not a groundsynth manifest header", 1, "format")
    version = _need(head, "version", int, 1)
    if version != MANIFEST_VERSION:
        raise ManifestParseError(f"unsupported version {version}", 1, "version")
    origin = _need(head, "origin", list, 1)
    if len(origin) != 2 or not all(isinstance(v, _NUM) for v in origin):
        raise ManifestParseError("expected [lon, lat]", 1, "origin")
    manifest = DatasetManifest(
        origin=(float(origin[0]), float(origin[1])),
        extent=_parse_extent(head.get("extent"), 1, "extent"),
        tile_size_m=float(_need(head, "tile_size_m", _NUM, 1)),
        version=version,
    )
    for lineno, raw in enumerate(lines[1:], 2):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(f"invalid JSON: {exc.msg}", lineno) from exc
        if not isinstance(obj, dict):
            raise ManifestParseError("expected an object", lineno)
        kind = _need(obj, "kind", str, lineno)
        if kind == "tile":
            split = _need(obj, "split", str, lineno)
            if split not in SPLITS:
                raise ManifestParseError(f"unknown split {split!r}", lineno, "split")
            manifest.tiles.append(
                Tile(
                    _need(obj, "row", int, lineno),
                    _need(obj, "col", int, lineno),
                    _parse_extent(obj.get("bounds"), lineno, "bounds"),
                    split,
                )
            )
        elif kind == "record":
            tile = _need(obj, "tile", list, lineno)
            if len(tile) != 2 or not all(isinstance(v, int) for v in tile):
                raise ManifestParseError("expected [row, col]", lineno, "tile")
            manifest.records.append(
                SampleRecord(
                    id=_need(obj, "id", str, lineno),
                    lon=float(_need(obj, "lon", _NUM, lineno)),
                    lat=float(_need(obj, "lat", _NUM, lineno)),
                    elevation_m=float(_need(obj, "elevation_m", _NUM, lineno)),
                    heading_deg=float(_need(obj, "heading_deg", _NUM, lineno)),
                    tile=(tile[0], tile[1]),
                    pano=_need(obj, "pano", str, lineno),
                    views=_str_map(obj, "views", lineno),
                    satapp=_str_map(obj, "satapp", lineno),
                    depth=_str_map(obj, "depth", lineno),
                    vertical_offset_m=float(_need(obj, "vertical_offset_m", _NUM, lineno)),
                )
            )
        elif kind == "sequence":
            ids = _need(obj, "ids", list, lineno)
            gaps = _need(obj, "spacings_m", list, lineno)
            if not all(isinstance(v, str) for v in ids):
                raise ManifestParseError("expected a list of ids", lineno, "ids")
            if not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in gaps):
                raise ManifestParseError("expected a list of numbers", lineno, "spacings_m")
            manifest.sequences.append(Sequence(list(ids), [float(v) for v in gaps]))
        else:
            raise ManifestParseError(f"unknown kind {kind!r}", lineno, "kind")
    return manifest


def read_manifest(path) -> DatasetManifest:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputIOError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(text)


# --- validation ---------------------------------------------------------------


def validate_manifest(
    manifest: DatasetManifest,
    root=None,
    expect_train: Optional[int] = None,
    expect_test: Optional[int] = None,
) -> list[str]:
    """Every invariant violation as a human-readable warning; empty means valid.

    File checks run only when ``root`` (the manifest directory) is given.
    """
    warn = []
    s = manifest.tile_size_m
    seen = set()
    for t in manifest.tiles:
        if t.index in seen:
            warn.append(f"tile {t.key}: duplicate index")
        seen.add(t.index)
        b = t.bounds
        if not (math.isclose(b.max_x - b.min_x, s) and math.isclose(b.max_y - b.min_y, s)):
            warn.append(f"tile {t.key}: edge length differs from {s} m")
    expected = {t.index for t in tile_extent(manifest.extent, s)}
    if manifest.tiles and seen != expected:
        warn.append(f"tiles do not cover the extent exactly ({len(seen)} present, {len(expected)} expected)")

    counts = {k: sum(t.split == k for t in manifest.tiles) for k in SPLITS}
    if expect_train is not None and counts["train"] != expect_train:
        warn.append(f"train tiles: {counts['train']} (expected {expect_train})")
    if expect_test is not None and counts["test"] != expect_test:
        warn.append(f"test tiles: {counts['test']} (expected {expect_test})")

    splits = manifest.split_of()
    by_id = {}
    proj = manifest.projection()
    for r in manifest.records:
        if r.id in by_id:
            warn.append(f"record {r.id}: duplicate id")
        by_id[r.id] = r
        if tuple(r.tile) not in splits and manifest.tiles:
            warn.append(f"record {r.id}: unknown tile {r.tile[0]}_{r.tile[1]}")
        x, y = proj.forward(r.lon, r.lat)
        try:
            if tile_index_of(float(x), float(y), manifest.extent, s) != tuple(r.tile):
                warn.append(f"record {r.id}: position lies outside tile {r.tile[0]}_{r.tile[1]}")
        except ParameterError:
            warn.append(f"record {r.id}: position lies outside the extent")
        if r.views and set(r.views) != set(STANDARD_VIEW_LABELS):
            warn.append(f"record {r.id}: view labels {sorted(r.views)} differ from {sorted(STANDARD_VIEW_LABELS)}")
        if root is not None:
            for p in r.paths():
                if not (Path(root) / p).exists():
                    warn.append(f"record {r.id}: missing file {p}")

    for k, seq in enumerate(manifest.sequences):
        tag = f"sequence {k}"
        if len(seq.spacings_m) != max(0, seq.length - 1):
            warn.append(f"{tag}: {len(seq.spacings_m)} spacings for {seq.length} records")
        if any(not (MIN_GAP_M - GAP_TOL_M <= g <= MAX_GAP_M + GAP_TOL_M) for g in seq.spacings_m):
            warn.append(f"{tag}: spacing outside [{MIN_GAP_M}, {MAX_GAP_M}] m")
        missing = [i for i in seq.ids if i not in by_id]
        if missing:
            warn.append(f"{tag}: unknown record ids {missing}")
            continue
        member_splits = {splits.get(tuple(by_id[i].tile)) for i in seq.ids}
        if len(member_splits) > 1:
            warn.append(f"{tag}: straddles splits {sorted(map(str, member_splits))}")
    return warn


def split_summary(manifest: DatasetManifest) -> dict:
    return {k: sum(t.split == k for t in manifest.tiles) for k in SPLITS}
