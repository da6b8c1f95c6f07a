"""On-disk formats.

Tensor container (``.tensor``)
    8-byte magic ``b"GSTENSOR"``, little-endian ``uint32`` version (1),
    ``uint32`` rank, ``rank`` x ``uint64`` dims, then the row-major
    little-endian IEEE-754 float64 payload.

Camera file (``.cams``), one camera per line, whitespace separated,
``#`` starts a comment::

    sat    <name> <width> <height> <fx> <fy> <cx> <cy> <r00..r22> <tx> <ty> <tz>
    ground <name> <width> <height> <fov_deg> <near> <far> <r00..r22> <cx> <cy> <cz>

Rotations are world->camera, row-major. Satellite cameras carry the
translation ``t`` of ``X_cam = R X + t``; ground cameras carry their center.
A satellite camera's image and depth are found next to the camera file as
``<name>.png`` and ``<name>.npy``.

Meshes are Wavefront OBJ with one ``vt`` per face corner and an MTL file
whose ``map_Kd`` names the atlas PNG. Point clouds are ASCII PLY.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import InputIOError, ManifestParseError
from .geometry import PointCloud, SatelliteView, TriangleMesh
from .renderer import GroundCamera

TENSOR_MAGIC = b"GSTENSOR"
TENSOR_VERSION = 1


def write_tensor(path, array: np.ndarray) -> None:
    a = np.asarray(array, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", TENSOR_VERSION, a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputIOError(f"cannot read tensor {path}: {exc}") from exc
    if data[:8] != TENSOR_MAGIC:
        raise InputIOError(f"{path}: not a tensor container")
    version, ndim = struct.unpack_from("<II", data, 8)
    if version != TENSOR_VERSION:
        raise InputIOError(f"{path}: unsupported tensor version {version}")
    shape = struct.unpack_from(f"<{ndim}Q", data, 16)
    offset = 16 + 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(data) - offset != 8 * count:
        raise InputIOError(f"{path}: payload size does not match shape {shape}")
    return np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)


# --- rasters ---------------------------------------------------------------


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except OSError as exc:
        raise InputIOError(f"cannot read image {path}: {exc}") from exc


def write_image(path, pixels: np.ndarray) -> None:
    # Fixed encoder settings keep PNG bytes reproducible.
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG", optimize=False, compress_level=6)


def read_depth(path) -> np.ndarray:
    try:
        return np.load(path, allow_pickle=False).astype(np.float64)
    except (OSError, ValueError) as exc:
        raise InputIOError(f"cannot read depth raster {path}: {exc}") from exc


def write_depth(path, depth: np.ndarray) -> None:
    np.save(path, np.asarray(depth, dtype=np.float64), allow_pickle=False)


def to_unit(pixels: np.ndarray) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / 255.0


def from_unit(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x) * 255.0), 0, 255).astype(np.uint8)


# --- cameras -----------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def format_camera(name: str, cam) -> str:
    r = " ".join(_fmt(v) for v in np.asarray(cam.rotation).ravel())
    if isinstance(cam, SatelliteView):
        t = " ".join(_fmt(v) for v in cam.translation)
        return f"sat {name} {cam.width} {cam.height} {_fmt(cam.fx)} {_fmt(cam.fy)} {_fmt(cam.cx)} {_fmt(cam.cy)} {r} {t}"
    c = " ".join(_fmt(v) for v in cam.center)
    return (
        f"ground {name} {cam.width_px} {cam.height_px} {_fmt(cam.fov_deg)} "
        f"{_fmt(cam.near_m)} {_fmt(cam.far_m)} {r} {c}"
    )


def write_cameras(path, cameras: dict) -> None:
    lines = ["# groundsynth camera file v1"]
    lines += [format_camera(name, cam) for name, cam in cameras.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_cameras(path, load_images: bool = True) -> dict:
    """Parse a camera file; satellite entries get their ``<name>.png`` image."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputIOError(f"cannot read camera file {path}: {exc}") from exc
    cams = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind, name = tok[0], tok[1] if len(tok) > 1 else None
        try:
            if kind == "sat" and len(tok) == 20:
                w, h = int(tok[2]), int(tok[3])
                fx, fy, cx, cy = map(float, tok[4:8])
                rot = np.array(tok[8:17], dtype=np.float64).reshape(3, 3)
                t = np.array(tok[17:20], dtype=np.float64)
                img_path = path.parent / f"{name}.png"
                if load_images:
                    image = read_image(img_path)
                    if image.shape[:2] != (h, w):
                        raise ManifestParseError(f"image {img_path} is not {w}x{h}", lineno)
                else:
                    image = np.zeros((h, w, 3), np.uint8)
                cams[name] = SatelliteView(image, fx, fy, cx, cy, rot, t)
            elif kind == "ground" and len(tok) == 19:
                w, h = int(tok[2]), int(tok[3])
                fov, near, far = map(float, tok[4:7])
                rot = np.array(tok[7:16], dtype=np.float64).reshape(3, 3)
                c = np.array(tok[16:19], dtype=np.float64)
                cams[name] = GroundCamera(rot, c, fov, w, h, near, far)
            else:
                raise ManifestParseError(f"unrecognised camera record ({len(tok)} fields)", lineno, kind)
        except ValueError as exc:
            if isinstance(exc, ManifestParseError):
                raise
            raise ManifestParseError(str(exc), lineno) from exc
    return cams


def satellite_depth_path(camera_file, name: str) -> Path:
    return Path(camera_file).parent / f"{name}.npy"


# --- meshes -----------------------------------------------------------------


def write_mesh(path, mesh: TriangleMesh) -> None:
    path = Path(path)
    lines = []
    if mesh.atlas is not None:
        atlas_name = path.stem + "_atlas.png"
        write_image(path.parent / atlas_name, mesh.atlas)
        (path.parent / (path.stem + ".mtl")).write_text(f"newmtl atlas\nmap_Kd {atlas_name}\n")
        lines += [f"mtllib {path.stem}.mtl", "usemtl atlas"]
    lines += [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices]
    if mesh.face_uvs is not None:
        lines += [f"vt {_fmt(u)} {_fmt(v)}" for u, v in mesh.face_uvs.reshape(-1, 2)]
        for k, (a, b, c) in enumerate(mesh.faces + 1):
            t = 3 * k + 1
            lines.append(f"f {a}/{t} {b}/{t + 1} {c}/{t + 2}")
    else:
        lines += [f"f {a} {b} {c}" for a, b, c in mesh.faces + 1]
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriangleMesh:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputIOError(f"cannot read mesh {path}: {exc}") from exc
    verts, texcoords, faces, face_t = [], [], [], []
    atlas: Optional[np.ndarray] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        tok = raw.split()
        if not tok or tok[0].startswith("#"):
            continue
        try:
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "vt":
                texcoords.append([float(x) for x in tok[1:3]])
            elif tok[0] == "f":
                if len(tok) != 4:
                    raise ManifestParseError("only triangular faces are supported", lineno, "f")
                parts = [p.split("/") for p in tok[1:]]
                faces.append([int(p[0]) - 1 for p in parts])
                if all(len(p) > 1 and p[1] for p in parts):
                    face_t.append([int(p[1]) - 1 for p in parts])
            elif tok[0] == "mtllib":
                atlas = _read_mtl_atlas(path.parent / tok[1])
        except ValueError as exc:
            if isinstance(exc, ManifestParseError):
                raise
            raise ManifestParseError(str(exc), lineno, tok[0]) from exc
    face_uvs = None
    if face_t and len(face_t) == len(faces):
        face_uvs = np.asarray(texcoords, dtype=np.float64)[np.asarray(face_t)]
    return TriangleMesh(
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        face_uvs,
        atlas,
    )


def _read_mtl_atlas(mtl_path: Path) -> Optional[np.ndarray]:
    try:
        text = mtl_path.read_text()
    except OSError as exc:
        raise InputIOError(f"cannot read material file {mtl_path}: {exc}") from exc
    for raw in text.splitlines():
        tok = raw.split()
        if tok and tok[0] == "map_Kd":
            return read_image(mtl_path.parent / tok[1])
    return None


# --- point clouds ----------------------------------------------------------


def write_point_cloud(path, cloud: PointCloud) -> None:
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if cloud.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    rows = []
    for k, p in enumerate(cloud.points):
        row = " ".join(_fmt(v) for v in p)
        if cloud.colors is not None:
            row += " " + " ".join(str(int(c)) for c in cloud.colors[k])
        rows.append(row)
    Path(path).write_text("\n".join(header + rows) + "\n")


def read_point_cloud(path) -> PointCloud:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputIOError(f"cannot read point cloud {path}: {exc}") from exc
    if not lines or lines[0] != "ply":
        raise ManifestParseError("not an ASCII PLY file", 1)
    n, has_color, k = 0, False, 1
    while lines[k] != "end_header":
        tok = lines[k].split()
        if tok[:2] == ["element", "vertex"]:
            n = int(tok[2])
        if tok[:1] == ["property"] and tok[-1] == "red":
            has_color = True
        k += 1
    body = [ln.split() for ln in lines[k + 1 : k + 1 + n]]
    pts = np.array([[float(v) for v in row[:3]] for row in body], dtype=np.float64).reshape(-1, 3)
    colors = None
    if has_color:
        colors = np.array([[int(v) for v in row[3:6]] for row in body], dtype=np.uint8).reshape(-1, 3)
    return PointCloud(pts, colors)
