"""``groundsynth`` command-line entry point.

Every subcommand delegates to one module operation. Settings come from, in
increasing priority: built-in defaults, a config file (``--config`` or the
``GROUNDSYNTH_CONFIG`` environment variable), then explicit flags. The
config file holds ``key = value`` lines using the long flag names with
dashes or underscores; ``#`` starts a comment and ``[section]`` lines are
ignored.

Exit codes: 0 success, 2 usage, 3 input I/O, 4 contract violation,
5 validation failure. Failures print one line, ``error: <Class>: <message>``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataset as ds
from . import fileio, geometry, metrics, renderer, sampler, spherical
from .errors import InputIOError, ParameterError, PipelineError, ValidationFailure

CONFIG_ENV = "GROUNDSYNTH_CONFIG"


class UsageError(ParameterError):
    exit_code = 2


@dataclass
class PipelineConfig:
    """Resolved settings shared across subcommands (paths plus numeric knobs)."""

    mesh: Optional[str] = None
    cameras: Optional[str] = None
    manifest: Optional[str] = None
    out: Optional[str] = None
    fov: float = renderer.DEFAULT_FOV
    size: int = renderer.DEFAULT_SIZE
    steps: int = sampler.DEFAULT_INFERENCE_STEPS
    cfg_scale: float = 1.0
    cfg_drop: str = sampler.CfgDrop.BOTH.value
    seed: int = 0
    train_steps: int = sampler.DEFAULT_TRAIN_STEPS
    beta_start: float = sampler.DEFAULT_BETA_START
    beta_end: float = sampler.DEFAULT_BETA_END
    codec: str = "identity"
    metrics: str = "psnr,ssim,warp"
    jobs: int = 1

    def __post_init__(self):
        if not 0 < self.fov < 180:
            raise ParameterError(f"fov must lie in (0, 180), got {self.fov}")
        if self.size < 1:
            raise ParameterError("size must be positive")
        if not 1 <= self.steps <= self.train_steps:
            raise ParameterError(f"steps must lie in [1, {self.train_steps}], got {self.steps}")
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ParameterError("need 0 < beta_start <= beta_end < 1")
        if not math.isfinite(self.cfg_scale):
            raise ParameterError("cfg_scale must be finite")
        if self.cfg_drop not in {d.value for d in sampler.CfgDrop}:
            raise ParameterError(f"cfg_drop must be one of sat, motion, both, got {self.cfg_drop!r}")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")
        if self.jobs < 1:
            raise ParameterError("jobs must be >= 1")
        unknown = set(self.metric_list()) - {"psnr", "ssim", "warp"}
        if unknown:
            raise ParameterError(f"unknown metrics {sorted(unknown)}")
        sampler.codec_from_name(self.codec)

    def metric_list(self) -> list[str]:
        return [m for m in self.metrics.split(",") if m]

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "PipelineConfig":
        vals = vars(ns)
        return cls(**{f.name: vals[f.name] for f in fields(cls) if vals.get(f.name) is not None})

    def schedule(self) -> sampler.NoiseSchedule:
        return sampler.make_schedule(self.train_steps, self.beta_start, self.beta_end)


# --- config handling ------------------------------------------------------------


def read_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputIOError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val.strip("\"'")
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _apply_config(parser: argparse.ArgumentParser, config: dict) -> None:
    """Install config values as defaults on whichever (sub)parsers know the key."""
    known = set()
    stack = [parser]
    while stack:
        p = stack.pop()
        dests = {a.dest for a in p._actions}
        hits = {k: v for k, v in config.items() if k in dests}
        if hits:
            for a in p._actions:
                if a.dest in hits and isinstance(a, argparse._StoreTrueAction):
                    hits[a.dest] = hits[a.dest].lower() in ("1", "true", "yes", "on")
            p.set_defaults(**hits)
            known |= set(hits)
        for a in p._actions:
            if isinstance(a, argparse._SubParsersAction):
                stack.extend(a.choices.values())
    unknown = set(config) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")


# --- helpers ----------------------------------------------------------------------


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{what}: expected {n} comma-separated numbers") from exc
    if len(vals) != n:
        raise UsageError(f"{what}: expected {n} comma-separated numbers, got {len(vals)}")
    return vals


def _ints(text: str, what: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{what}: expected comma-separated integers") from exc


def _satellite_views(cams_path) -> list:
    cams = fileio.read_cameras(cams_path)
    views = [(name, c) for name, c in cams.items() if isinstance(c, geometry.SatelliteView)]
    if not views:
        raise InputIOError(f"{cams_path}: no satellite cameras")
    return views


def _ground_cameras(cams_path) -> list:
    cams = fileio.read_cameras(cams_path, load_images=False)
    out = [c for c in cams.values() if isinstance(c, renderer.GroundCamera)]
    if not out:
        raise InputIOError(f"{cams_path}: no ground cameras")
    return out


def _numbered(directory, suffix: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise InputIOError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix == suffix)


def _fmt(x: float) -> str:
    return "inf" if x == math.inf else ("nan" if math.isnan(x) else repr(float(x)))


def _condition(ns, cfg: PipelineConfig) -> sampler.ConditionBundle:
    if not getattr(ns, "condition", None):
        return sampler.ConditionBundle()
    frames = [fileio.read_image(p) for p in _numbered(ns.condition, ".png")]
    feats = sampler.stand_in_features(frames, sampler.codec_from_name(cfg.codec).factor)
    return sampler.ConditionBundle(sat_features=feats, motion_features=feats, ground_views=frames)


def _predictor(ns, cfg: PipelineConfig, steps):
    if ns.predictor == "zero":
        return sampler.ZeroDenoiser()
    if not ns.predictions:
        raise UsageError("--predictor file needs --predictions")
    return sampler.FilePredictor(ns.predictions, steps)


def _write_latent_frames(out: Path, z: np.ndarray, codec) -> None:
    fileio.write_tensor(out / "latent.tensor", z)
    for k in range(z.shape[0]):
        img = codec.decode(z[k : k + 1])
        fileio.write_image(out / f"frame_{k:04d}.png", fileio.from_unit(np.clip(img, 0, 1)))


# --- subcommands ------------------------------------------------------------------


def cmd_resample_pano(ns, cfg):
    pixels = fileio.read_image(ns.pano)
    heading = ns.heading
    if ns.manifest and ns.record:
        rec = {r.id: r for r in ds.read_manifest(ns.manifest).records}.get(ns.record)
        if rec is None:
            raise ParameterError(f"record {ns.record!r} not in manifest")
        heading = rec.heading_deg
    pano = spherical.Panorama(pixels, heading % 360.0)
    out = _out_dir(ns.out)
    for label, spec in spherical.standard_view_specs(cfg.size).items():
        spec = spherical.PerspectiveSpec(spec.theta_deg, spec.phi_deg, cfg.fov, cfg.size, cfg.size)
        img = spherical.resample_perspective(pano, spec, relative_to_heading=ns.relative_to == "north")
        fileio.write_image(out / f"{label}.png", img)


def cmd_fuse(ns, cfg):
    clouds = []
    for name, view in _satellite_views(ns.cameras):
        depth = geometry.DepthMap(fileio.read_depth(fileio.satellite_depth_path(ns.cameras, name)))
        clouds.append(geometry.unproject_depth(depth, view))
    stage = geometry.identity_stage
    if ns.outlier_k:
        stage = geometry.StatisticalOutlierRemoval(ns.outlier_k, ns.outlier_std)
    fused = geometry.fuse_point_clouds([geometry.refine_points(c, stage) for c in clouds], ns.voxel)
    Path(ns.out).parent.mkdir(parents=True, exist_ok=True)
    fileio.write_point_cloud(ns.out, fused)


def cmd_mesh(ns, cfg):
    parts = []
    for name, view in _satellite_views(ns.cameras):
        depth = geometry.DepthMap(fileio.read_depth(fileio.satellite_depth_path(ns.cameras, name)))
        parts.append(geometry.triangulate_grid(depth, view, ns.max_edge, ns.max_depth_ratio))
    mesh = geometry.merge_meshes(parts)
    problems = geometry.mesh_validate(mesh)
    if problems:
        raise ValidationFailure("; ".join(problems))
    Path(ns.out).parent.mkdir(parents=True, exist_ok=True)
    fileio.write_mesh(ns.out, mesh)


def cmd_texture(ns, cfg):
    mesh = fileio.read_mesh(cfg.mesh)
    views = [v for _, v in _satellite_views(ns.cameras)]
    Path(ns.out).parent.mkdir(parents=True, exist_ok=True)
    fileio.write_mesh(ns.out, geometry.compute_texture_coords(mesh, views))


def cmd_render(ns, cfg):
    mesh = fileio.read_mesh(cfg.mesh)
    out = _out_dir(ns.out)
    if ns.cameras:
        cams = _ground_cameras(ns.cameras)
        traj = renderer.Trajectory(cams, ns.spacing if ns.spacing else _mean_spacing(cams))
    else:
        if ns.start is None:
            raise UsageError("render needs --cameras or --start")
        template = renderer.GroundCamera.looking(
            [0, 0, 0], ns.heading, ns.pitch, fov_deg=cfg.fov, width_px=cfg.size, height_px=cfg.size
        )
        traj = renderer.make_trajectory(_floats(ns.start, 3, "--start"), ns.heading, ns.spacing or 10.0, ns.count, template)
    fileio.write_cameras(out / "cameras.cams", {f"view{k:04d}": c for k, c in enumerate(traj.cameras)})
    for k, fb in enumerate(renderer.render_sequence(mesh, traj, jobs=cfg.jobs)):
        fileio.write_image(out / f"frame_{k:04d}.png", fb.color)
        fileio.write_depth(out / f"depth_{k:04d}.npy", fb.depth)


def _mean_spacing(cams) -> float:
    if len(cams) < 2:
        return 1.0
    return float(np.linalg.norm(cams[1].center - cams[0].center))


def cmd_sample(ns, cfg):
    sched = cfg.schedule()
    steps = sampler.inference_timesteps(cfg.steps, sched)
    shape = _ints(ns.shape, "--shape")
    codec = sampler.codec_from_name(cfg.codec)
    z = sampler.sample_guided(
        _predictor(ns, cfg, steps), _condition(ns, cfg), shape, cfg.steps, cfg.cfg_scale, cfg.seed, sched, cfg.cfg_drop
    )
    _write_latent_frames(_out_dir(ns.out), z, codec)


def cmd_sample_temporal(ns, cfg):
    sched = cfg.schedule()
    steps = sampler.inference_timesteps(cfg.steps, sched)
    codec = sampler.codec_from_name(cfg.codec)
    z_init = codec.encode(fileio.to_unit(fileio.read_image(ns.init)))
    z = sampler.sample_temporal(
        _predictor(ns, cfg, steps),
        z_init,
        _condition(ns, cfg),
        ns.views,
        None,
        cfg.steps,
        cfg.cfg_scale,
        cfg.seed,
        sched,
        cfg.cfg_drop,
    )
    _write_latent_frames(_out_dir(ns.out), z, codec)


def cmd_metrics(ns, cfg):
    refs = _numbered(ns.reference, ".png")
    cands = _numbered(ns.candidate, ".png")
    if len(refs) != len(cands) or not refs:
        raise ValidationFailure(f"frame counts differ or are zero ({len(refs)} vs {len(cands)})")
    ref_imgs = [fileio.read_image(p) for p in refs]
    cand_imgs = [fileio.read_image(p) for p in cands]
    scores: dict[str, str] = {"frames": str(len(refs))}
    report = [f"frames: {len(refs)}"]
    for name in cfg.metric_list():
        if name in ("psnr", "ssim"):
            ev = metrics.sequence_scores(ref_imgs, cand_imgs, getattr(metrics, name))
            for k, s in enumerate(ev.scores):
                scores[f"{name}_{k:04d}"] = _fmt(s)
            scores[f"{name}_mean"] = _fmt(ev.mean)
            report.append(f"{name}: mean {_fmt(ev.mean)} over {ev.count} frames")
        elif name == "warp" and ns.depths and ns.cameras:
            depths = [fileio.read_depth(p) for p in _numbered(ns.depths, ".npy")]
            cams = _ground_cameras(ns.cameras)
            ev = metrics.warp_consistency(cand_imgs, depths, cams)
            for k, (s, c) in enumerate(zip(ev.scores, ev.coverage)):
                scores[f"warp_psnr_{k:04d}"] = _fmt(s)
                scores[f"warp_coverage_{k:04d}"] = _fmt(c)
            scores["warp_psnr_mean"] = _fmt(ev.mean)
            report.append(f"warp consistency: mean masked PSNR {_fmt(ev.mean)} over {ev.count} pairs")
    out = _out_dir(ns.out)
    (out / "scores.txt").write_text("".join(f"{k}={v}\n" for k, v in scores.items()))
    (out / "report.txt").write_text("\n".join(report) + "\n")
    print("\n".join(report))


def cmd_dataset_tile(ns, cfg):
    records, origin = [], None
    if ns.records:
        records = _read_records_csv(ns.records)
    if ns.origin:
        origin = tuple(_floats(ns.origin, 2, "--origin"))
    elif records:
        p = ds.LocalProjection.about_centroid([r.lon for r in records], [r.lat for r in records])
        origin = (p.lon0, p.lat0)
    else:
        origin = (0.0, 0.0)
    proj = ds.LocalProjection(*origin)
    if ns.extent:
        extent = ds.GeoExtent(*_floats(ns.extent, 4, "--extent"))
    elif records:
        xy = proj.forward([r.lon for r in records], [r.lat for r in records])
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        extent = ds.GeoExtent(float(lo[0]), float(lo[1]), float(max(hi[0], lo[0] + 1)), float(max(hi[1], lo[1] + 1)))
    else:
        raise UsageError("dataset tile needs --extent or --records")
    tiles = ds.tile_extent(extent, ns.tile_size)
    placed = []
    for r in records:
        x, y = proj.forward(r.lon, r.lat)
        r.tile = ds.tile_index_of(float(x), float(y), extent, ns.tile_size)
        placed.append(ds.default_record_paths(r))
    ds.write_manifest(cfg.manifest, ds.DatasetManifest(origin, extent, ns.tile_size, tiles, placed))
    print(f"tiles: {len(tiles)}")


def _read_records_csv(path) -> list:
    import csv

    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputIOError(f"cannot read records {path}: {exc}") from exc
    out = []
    for k, row in enumerate(rows, 2):
        try:
            out.append(
                ds.SampleRecord(
                    row["id"],
                    float(row["lon"]),
                    float(row["lat"]),
                    float(row.get("elevation_m") or 0.0),
                    float(row.get("heading_deg") or 0.0),
                    (0, 0),
                    vertical_offset_m=float(row.get("vertical_offset_m") or 0.0),
                )
            )
        except (KeyError, ValueError) as exc:
            from .errors import ManifestParseError

            raise ManifestParseError(f"bad record row: {exc}", k) from exc
    return out


def cmd_dataset_split(ns, cfg):
    m = ds.read_manifest(cfg.manifest)
    train, test = ns.train, ns.test
    if ns.ratio:
        train, test = ds.split_counts(len(m.tiles), *_floats(ns.ratio, 2, "--ratio"))
    m.tiles = ds.split_tiles(m.tiles, train, test, cfg.seed)
    ds.write_manifest(ns.out or cfg.manifest, m)
    s = ds.split_summary(m)
    print(f"train: {s['train']} test: {s['test']} unassigned: {s['unassigned']}")


def cmd_dataset_sequences(ns, cfg):
    m = ds.read_manifest(cfg.manifest)
    m.sequences = ds.build_sequences(
        m.records, ns.length, ns.min_gap, ns.max_gap, m.projection(), m.split_of() if m.tiles else None
    )
    ds.write_manifest(ns.out or cfg.manifest, m)
    print(f"sequences: {len(m.sequences)}")


def cmd_dataset_validate(ns, cfg):
    m = ds.read_manifest(cfg.manifest)
    root = Path(cfg.manifest).parent if ns.check_files else None
    warnings = ds.validate_manifest(m, root, ns.expect_train, ns.expect_test)
    s = ds.split_summary(m)
    print(f"tiles: {len(m.tiles)} train: {s['train']} test: {s['test']} unassigned: {s['unassigned']}")
    print(f"records: {len(m.records)} sequences: {len(m.sequences)}")
    for w in warnings:
        print(f"warning: {w}")
    if warnings:
        raise ValidationFailure(f"{len(warnings)} validation warning(s)")


# --- parser -----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"key=value config file (default: ${CONFIG_ENV})")
    p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    p.add_argument("--jobs", type=int, help="worker cap for parallel stages")


def _sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--cfg-scale", type=float)
    p.add_argument("--cfg-drop", choices=[d.value for d in sampler.CfgDrop])
    p.add_argument("--train-steps", type=int)
    p.add_argument("--beta-start", type=float)
    p.add_argument("--beta-end", type=float)
    p.add_argument("--codec", help="identity or downscale[:N]")
    p.add_argument("--predictor", choices=["file", "zero"], default="file")
    p.add_argument("--predictions", help="noise-prediction tensor container")
    p.add_argument("--condition", help="directory of conditioning frames")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    # Shared flags live on the leaf parsers only, so a parent default never
    # overwrites a value given to a subcommand.
    parser = _Parser(prog="groundsynth", description="Satellite-to-ground synthesis pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("resample-pano", help="equirectangular panorama -> LR/LF/RF/RR views")
    _common(p)
    p.add_argument("pano")
    p.add_argument("--out", required=True)
    p.add_argument("--heading", type=float, default=0.0, help="panorama heading, degrees clockwise from north")
    p.add_argument("--manifest", help="take the heading from this manifest ...")
    p.add_argument("--record", help="... for this record id")
    p.add_argument("--relative-to", choices=["pano", "north"], default="pano")
    p.add_argument("--fov", type=float)
    p.add_argument("--size", type=int)
    p.set_defaults(func=cmd_resample_pano)

    p = sub.add_parser("fuse", help="satellite depth maps -> fused point cloud (PLY)")
    _common(p)
    p.add_argument("--cameras", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--voxel", type=float, default=geometry.DEFAULT_VOXEL_M)
    p.add_argument("--outlier-k", type=int, default=0)
    p.add_argument("--outlier-std", type=float, default=2.0)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("mesh", help="satellite depth maps -> triangle mesh (OBJ)")
    _common(p)
    p.add_argument("--cameras", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-edge", type=float, default=5.0)
    p.add_argument("--max-depth-ratio", type=float, default=1.5)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("texture", help="texture a mesh from the satellite views")
    _common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_texture)

    p = sub.add_parser("render", help="render ground views of a textured mesh")
    _common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--cameras", help="camera file with ground cameras")
    p.add_argument("--start", help="x,y,z of the first camera (trajectory mode)")
    p.add_argument("--heading", type=float, default=0.0)
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--spacing", type=float, help="meters between cameras (default 10)")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--fov", type=float)
    p.add_argument("--size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("sample", help="satellite-guided DDIM sampling")
    _common(p)
    _sampler_flags(p)
    p.add_argument("--shape", required=True, help="views,channels,h,w")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sample-temporal", help="satellite-temporal DDIM sampling")
    _common(p)
    _sampler_flags(p)
    p.add_argument("--init", required=True, help="image of the initial view")
    p.add_argument("--views", type=int, default=5)
    p.set_defaults(func=cmd_sample_temporal)

    p = sub.add_parser("metrics", help="PSNR / SSIM / warp consistency between frame directories")
    _common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--depths", help="directory of depth_*.npy for the candidate frames")
    p.add_argument("--cameras", help="camera file with the candidate frames' ground cameras")
    p.add_argument("--metrics", help="comma list from psnr,ssim,warp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dataset", help="tiling, splitting and manifest tools")
    dsub = p.add_subparsers(dest="dataset_command", required=True, parser_class=_Parser)

    q = dsub.add_parser("tile", help="create a tiled manifest")
    _common(q)
    q.add_argument("--manifest", required=True)
    q.add_argument("--extent", help="min_x,min_y,max_x,max_y in local meters")
    q.add_argument("--records", help="CSV with id,lon,lat[,elevation_m,heading_deg,vertical_offset_m]")
    q.add_argument("--origin", help="lon,lat of the local projection (default: record centroid)")
    q.add_argument("--tile-size", type=float, default=ds.DEFAULT_TILE_M)
    q.set_defaults(func=cmd_dataset_tile)

    q = dsub.add_parser("split", help="assign tiles to train/test")
    _common(q)
    q.add_argument("--manifest", required=True)
    q.add_argument("--train", type=int, default=70)
    q.add_argument("--test", type=int, default=20)
    q.add_argument("--ratio", help="train,test fractions (overrides counts)")
    q.add_argument("--seed", type=int)
    q.add_argument("--out", help="output manifest (default: in place)")
    q.set_defaults(func=cmd_dataset_split)

    q = dsub.add_parser("sequences", help="chain records into sequences")
    _common(q)
    q.add_argument("--manifest", required=True)
    q.add_argument("--length", type=int, default=ds.SEQUENCE_LENGTH)
    q.add_argument("--min-gap", type=float, default=ds.MIN_GAP_M)
    q.add_argument("--max-gap", type=float, default=ds.MAX_GAP_M)
    q.add_argument("--out", help="output manifest (default: in place)")
    q.set_defaults(func=cmd_dataset_sequences)

    q = dsub.add_parser("validate", help="check manifest invariants")
    _common(q)
    q.add_argument("--manifest", required=True)
    q.add_argument("--expect-train", type=int)
    q.add_argument("--expect-test", type=int)
    q.add_argument("--check-files", action="store_true")
    q.set_defaults(func=cmd_dataset_validate)
    return parser


def _config_path(argv: list[str]) -> Optional[str]:
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return os.environ.get(CONFIG_ENV) or None


def run(argv: list[str]) -> int:
    parser = build_parser()
    cfg_path = _config_path(argv)
    if cfg_path:
        _apply_config(parser, read_config(cfg_path))
    ns = parser.parse_args(argv)
    cfg = PipelineConfig.from_namespace(ns)
    if ns.print_config:
        resolved = {k: v for k, v in sorted(vars(ns).items()) if k not in ("func", "print_config", "config")}
        resolved.update(asdict(cfg))
        for k in sorted(resolved):
            print(f"{k}={resolved[k]}")
        return 0
    ns.func(ns, cfg)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return InputIOError.exit_code


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
