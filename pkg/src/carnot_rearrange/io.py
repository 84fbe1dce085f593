"""Field and profile files.

Two field layouts are supported:

* CSV, one node per row: coordinates, value and (optionally) density, with
  ``#`` comment lines carrying ``key=value`` metadata (group, shape, config hash).
* Binary: ``b"CRGF"`` magic, little-endian header ``(version, n, dims[n],
  box[n][2], spacing[n], has_density)`` followed by row-major float64 values
  (and densities if present).

Every writer accepts a ``config_hash`` that ends up in the header.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import InputError
from .fields import GridField, make_axes
from .groups import get_group
from .rearrange import RearrangementProfile

MAGIC = b"CRGF"
VERSION = 1


class FieldIOError(InputError):
    """A field or profile file is missing, unreadable or malformed."""


def _check_exists(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FieldIOError(f"no such file: {p}")
    return p


def _header_lines(meta: dict) -> list[str]:
    return [f"# {k}={v}" for k, v in meta.items()]


def write_field_csv(field: GridField, path, config_hash: str = "") -> Path:
    path = Path(path)
    pts = field.points().reshape(-1, field.group.n)
    cols = [pts, field.values.reshape(-1, 1)]
    names = [f"x{i + 1}" for i in range(field.group.n)] + ["value"]
    if field.density is not None:
        cols.append(field.density.reshape(-1, 1))
        names.append("density")
    meta = {"config_hash": config_hash, "group": field.group.name,
            "shape": "x".join(str(k) for k in field.shape)}
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(_header_lines(meta)) + "\n")
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, np.hstack(cols), delimiter=",", fmt="%.17g")
    return path


def read_field_csv(path, group=None) -> GridField:
    """Read a node-per-row CSV; group and shape come from the header unless given."""
    path = _check_exists(path)
    meta = {}
    names = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            else:
                names = [c.strip() for c in line.split(",")]
                break
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FieldIOError(f"{path}: {exc}") from None
    if group is None:
        if "group" not in meta:
            raise FieldIOError(f"{path}: no group given and no '# group=' header")
        group = get_group(meta["group"])
    n = group.n
    if names is None or data.shape[1] not in (n + 1, n + 2):
        raise FieldIOError(f"{path}: expected {n} coordinates, value[, density]")
    coords = data[:, :n]
    axes = tuple(np.unique(coords[:, i]) for i in range(n))
    shape = tuple(len(a) for a in axes)
    if "shape" in meta and tuple(int(k) for k in meta["shape"].split("x")) != shape:
        raise FieldIOError(f"{path}: header shape {meta['shape']} does not match the nodes")
    if int(np.prod(shape)) != len(data):
        raise FieldIOError(f"{path}: nodes do not form a full tensor grid")
    idx = tuple(np.searchsorted(a, coords[:, i]) for i, a in enumerate(axes))
    values = np.zeros(shape)
    values[idx] = data[:, n]
    density = None
    if data.shape[1] == n + 2:
        density = np.zeros(shape)
        density[idx] = data[:, n + 1]
    axes = make_axes([(a[0], a[-1]) for a in axes], shape)
    return GridField(group, axes, values, density)


def write_field_binary(field: GridField, path, config_hash: str = "") -> Path:
    path = Path(path)
    n = field.group.n
    name = field.group.name.encode()
    hsh = config_hash.encode()
    head = MAGIC + struct.pack("<II", VERSION, n)
    head += struct.pack(f"<{n}Q", *field.shape)
    head += struct.pack(f"<{2 * n}d", *[c for ab in field.box for c in ab])
    head += struct.pack(f"<{n}d", *field.spacing)
    head += struct.pack("<B", field.density is not None)
    head += struct.pack("<H", len(name)) + name + struct.pack("<H", len(hsh)) + hsh
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
        if field.density is not None:
            fh.write(np.ascontiguousarray(field.density, dtype="<f8").tobytes())
    return path


def read_field_binary(path) -> GridField:
    path = _check_exists(path)
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise FieldIOError(f"{path}: not a field file (bad magic)")
    try:
        off = 4
        version, n = struct.unpack_from("<II", buf, off)
        off += 8
        if version != VERSION:
            raise FieldIOError(f"{path}: unsupported version {version}")
        dims = struct.unpack_from(f"<{n}Q", buf, off)
        off += 8 * n
        box = struct.unpack_from(f"<{2 * n}d", buf, off)
        off += 16 * n
        off += 8 * n  # spacing is implied by box and dims
        (has_density,) = struct.unpack_from("<B", buf, off)
        off += 1
        (ln,) = struct.unpack_from("<H", buf, off)
        name = buf[off + 2:off + 2 + ln].decode()
        off += 2 + ln
        (lh,) = struct.unpack_from("<H", buf, off)
        off += 2 + lh
        count = int(np.prod(dims))
        values = np.frombuffer(buf, "<f8", count, off).reshape(dims).astype(float)
        off += 8 * count
        density = None
        if has_density:
            density = np.frombuffer(buf, "<f8", count, off).reshape(dims).astype(float)
    except (struct.error, ValueError) as exc:
        raise FieldIOError(f"{path}: truncated or corrupt ({exc})") from None
    axes = make_axes([(box[2 * i], box[2 * i + 1]) for i in range(n)], dims)
    return GridField(get_group(name), axes, values, density)


def read_field(path, group=None) -> GridField:
    """Dispatch on extension: ``.csv`` or the binary layout (anything else)."""
    path = _check_exists(path)
    if path.suffix.lower() == ".csv":
        return read_field_csv(path, group)
    return read_field_binary(path)


def write_profile_csv(profile: RearrangementProfile, path, config_hash: str = "") -> Path:
    """Columns ``r, nu_tilde, volume``; an empty profile writes only the header."""
    path = Path(path)
    r = np.asarray(profile.radii, dtype=float)
    vals = np.asarray(profile.profile, dtype=float)
    if not np.any(vals > 0):
        r, vals = r[:0], vals[:0]
    vol = profile.volume(r) if profile.volume is not None else np.full(r.shape, np.nan)
    rows = np.column_stack([r, vals, vol])
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write("r,nu_tilde,volume\n")
        if rows.size:
            np.savetxt(fh, rows, delimiter=",", fmt="%.17g")
    return path


def read_profile_csv(path) -> np.ndarray:
    path = _check_exists(path)
    rows = [ln for ln in path.read_text().splitlines()[2:] if ln.strip()]
    if not rows:
        return np.zeros((0, 3))
    return np.loadtxt(rows, delimiter=",", ndmin=2).reshape(-1, 3)


def write_perimeter_csv(thresholds, perimeters, path, config_hash: str = "") -> Path:
    """Columns ``t, perimeter``: the horizontal perimeter of ``{u > t}``."""
    path = Path(path)
    rows = np.column_stack([np.asarray(thresholds, float), np.asarray(perimeters, float)])
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write("t,perimeter\n")
        if rows.size:
            np.savetxt(fh, rows, delimiter=",", fmt="%.17g")
    return path


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file so a crash never leaves half a report."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path
