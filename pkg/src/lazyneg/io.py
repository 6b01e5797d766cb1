"""On-disk formats for states and MPS.

Both formats are a directory holding ``manifest.json`` plus raw binary files
of little-endian complex doubles, real and imaginary parts interleaved,
row-major. An MPS stores one file per site in ``(left, phys, right)`` order;
a dense state stores a single ``state.bin`` of ``p**L`` amplitudes.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .mps import Mps
from .pts import PureState

FORMAT_VERSION = 1
MPS_FORMAT = "lazyneg-mps"
STATE_FORMAT = "lazyneg-state"
_DTYPE = np.dtype("<c16")


class FormatError(ValueError):
    pass


def _write_raw(path: Path, a: np.ndarray):
    np.ascontiguousarray(a, dtype=_DTYPE).tofile(path)


def _read_raw(path: Path, shape) -> np.ndarray:
    n = math.prod(shape)
    if not path.is_file():
        raise FormatError(f"missing data file {path}")
    size = path.stat().st_size
    if size != n * _DTYPE.itemsize:
        raise FormatError(f"{path.name}: {size} bytes, expected {n * _DTYPE.itemsize}")
    return np.fromfile(path, dtype=_DTYPE).astype(np.complex128).reshape(shape)


def _write_manifest(d: Path, manifest: dict):
    with open(d / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_manifest(path) -> tuple[Path, dict]:
    path = Path(path)
    d = path.parent if path.name == "manifest.json" else path
    mf = d / "manifest.json"
    if not mf.is_file():
        raise FormatError(f"no manifest.json in {d}")
    try:
        with open(mf, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest: {exc}") from exc
    for key in ("format", "version", "L", "p", "scalar_type", "endianness"):
        if key not in manifest:
            raise FormatError(f"manifest lacks {key!r}")
    if manifest["version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {manifest['version']}")
    if manifest["scalar_type"] != "complex128" or manifest["endianness"] != "little":
        raise FormatError("only little-endian complex128 data is supported")
    if not (isinstance(manifest["L"], int) and manifest["L"] >= 1
            and isinstance(manifest["p"], int) and manifest["p"] >= 1):
        raise FormatError("L and p must be positive integers")
    return d, manifest


def save_mps(m: Mps, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for i, t in enumerate(m.tensors):
        name = f"site_{i:05d}.bin"
        _write_raw(d / name, t)
        files.append(name)
    _write_manifest(d, {
        "format": MPS_FORMAT, "version": FORMAT_VERSION, "L": m.L, "p": m.p,
        "boundary": m.boundary, "bond_dims": m.bond_dims,
        "scalar_type": "complex128", "endianness": "little", "files": files,
    })
    return d


def load_mps(path) -> Mps:
    d, mf = _read_manifest(path)
    if mf["format"] != MPS_FORMAT:
        raise FormatError(f"{d} holds {mf['format']!r}, not an MPS")
    L, p = mf["L"], mf["p"]
    bonds = mf.get("bond_dims")
    files = mf.get("files")
    if mf.get("boundary") not in ("open", "periodic"):
        raise FormatError(f"bad boundary {mf.get('boundary')!r}")
    if not isinstance(bonds, list) or len(bonds) != L + 1 or any(
            not isinstance(b, int) or b < 1 for b in bonds):
        raise FormatError("bond_dims must list L+1 positive integers")
    if mf["boundary"] == "open" and (bonds[0] != 1 or bonds[-1] != 1):
        raise FormatError("open chains need edge bonds of dim 1")
    if mf["boundary"] == "periodic" and bonds[0] != bonds[-1]:
        raise FormatError("periodic chains need matching first and last bonds")
    if not isinstance(files, list) or len(files) != L:
        raise FormatError("files must list one entry per site")
    tensors = [_read_raw(d / files[i], (bonds[i], p, bonds[i + 1])) for i in range(L)]
    return Mps(tensors, mf["boundary"])


def save_state(psi: PureState, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_raw(d / "state.bin", psi.vector)
    _write_manifest(d, {
        "format": STATE_FORMAT, "version": FORMAT_VERSION, "L": psi.L, "p": psi.p,
        "scalar_type": "complex128", "endianness": "little", "files": ["state.bin"],
    })
    return d


def load_state(path) -> PureState:
    d, mf = _read_manifest(path)
    if mf["format"] != STATE_FORMAT:
        raise FormatError(f"{d} holds {mf['format']!r}, not a dense state")
    files = mf.get("files") or ["state.bin"]
    v = _read_raw(d / files[0], (mf["p"] ** mf["L"],))
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise FormatError("state has zero norm")
    return PureState.from_vector(v / norm, mf["L"], mf["p"])
