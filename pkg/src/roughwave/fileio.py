"""Binary ("RWLD1") and CSV serialization of grid arrays."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .fracspace import Field, Grid, GridFunction

MAGIC = b"RWLD1"
HEADER_LEN = 80


def _header(meta: dict) -> bytes:
    body = json.dumps(meta, separators=(",", ":"), sort_keys=True).encode()
    head = MAGIC + body
    if len(head) > HEADER_LEN:
        raise ValueError("metadata does not fit in the 80-byte header")
    return head.ljust(HEADER_LEN, b" ")


def write_array(path, arr: np.ndarray, grid: Grid, kind: str = "field") -> Path:
    """Write a 1-D or 2-D float array with grid metadata; data are little-endian float64."""
    arr = np.atleast_2d(np.asarray(arr, dtype="<f8"))
    rows, cols = arr.shape
    meta = {"L": grid.L, "nx": grid.nx, "T": grid.T, "nt": grid.nt, "r": rows, "c": cols,
            "k": kind[:8]}
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_header(meta))
        fh.write(np.ascontiguousarray(arr).tobytes())
    return path


def read_array(path) -> tuple[np.ndarray, Grid, str]:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not an RWLD1 file")
    meta = json.loads(raw[len(MAGIC):HEADER_LEN].decode().strip())
    grid = Grid(meta["L"], meta["nx"], meta["T"], meta["nt"])
    data = np.frombuffer(raw[HEADER_LEN:], dtype="<f8")
    if data.size != meta["r"] * meta["c"]:
        raise ValueError(f"{path}: truncated data block")
    return data.reshape(meta["r"], meta["c"]).astype(float), grid, meta.get("k", "field")


def write_field(path, u: Field | GridFunction) -> Path:
    kind = "field" if isinstance(u, Field) else "gridfun"
    return write_array(path, u.values, u.grid, kind)


def read_field(path) -> Field | GridFunction:
    arr, grid, kind = read_array(path)
    if kind == "gridfun":
        return GridFunction(arr[0], grid)
    return Field(arr, grid)


def write_csv(path, arr: np.ndarray, grid: Grid) -> Path:
    arr = np.atleast_2d(arr)
    path = Path(path)
    head = "# " + json.dumps(grid.to_dict(), sort_keys=True)
    np.savetxt(path, arr, delimiter=",", header=head[2:], comments="# ", fmt="%.17g")
    return path


def read_csv(path) -> tuple[np.ndarray, Grid]:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing metadata row")
    grid = Grid(**json.loads(first[1:].strip()))
    return np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#")), grid


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
