"""Binary and text file formats.

Matrix file (``.lcv``), little-endian::

    b"LCV1" | rows: u32 | cols: u32 | rows*cols float32, row-major

Template file (``.lct``), little-endian::

    b"LCT1" | strategy tag: u8 | K: u32 | T: u32 | B: u32 | C: u32
    | K indexes: u32 | K values: float32 | label length: u32 | label: UTF-8

Protocol file: UTF-8 text, one ``role,sample_id,identity_label,path_or_row``
record per line, ``#`` starts a comment line.

Readers validate every size field against the real file length and a byte
cap before allocating anything.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import FormatError, NonFiniteError, ProtocolError
from .locos import GalleryTemplate, IndexSelection, Strategy
from .protocol import ROLES, Sample, VerificationProtocol

__all__ = [
    "MATRIX_MAGIC",
    "TEMPLATE_MAGIC",
    "DEFAULT_MAX_BYTES",
    "read_matrix",
    "write_matrix",
    "read_template",
    "write_template",
    "read_protocol",
    "write_protocol",
    "load_role_vectors",
]

MATRIX_MAGIC = b"LCV1"
TEMPLATE_MAGIC = b"LCT1"
DEFAULT_MAX_BYTES = 2 * 1024**3

_HEADER = struct.Struct("<4sII")
_TEMPLATE_HEADER = struct.Struct("<4sBIIII")
_F32 = np.dtype("<f4")
_U32 = np.dtype("<u4")

_TAGS = {Strategy.FIRST_K: 0, Strategy.TOP_K: 1, Strategy.TOP_BOTTOM: 2, Strategy.PROBE_TOP_K: 3}
_KINDS = {v: k for k, v in _TAGS.items()}


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _to_f32(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite values")
    with np.errstate(over="ignore"):
        out = arr.astype(_F32)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{what} has values outside the float32 range")
    return out


def _first_nonfinite(m: np.ndarray) -> tuple:
    bad = np.argwhere(~np.isfinite(m))[0]
    return int(bad[0]), int(bad[1])


def write_matrix(matrix, path) -> None:
    m = np.asarray(matrix)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise FormatError(f"only 2-d matrices can be written, got shape {m.shape}")
    rows, cols = m.shape
    if rows >= 2**32 or cols >= 2**32:
        raise FormatError(f"matrix shape {m.shape} does not fit u32 size fields")
    payload = _to_f32(m, "matrix")
    _atomic_write(path, _HEADER.pack(MATRIX_MAGIC, rows, cols) + payload.tobytes(order="C"))


def read_matrix(path, dtype=np.float64, max_bytes: int = DEFAULT_MAX_BYTES) -> np.ndarray:
    """Read a matrix file; values are returned in ``dtype`` (float64 by default)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MATRIX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
        nbytes = rows * cols * 4
        if nbytes > max_bytes:
            raise FormatError(f"{path}: declared payload of {nbytes} bytes exceeds the cap of {max_bytes}")
        actual = os.fstat(fh.fileno()).st_size - _HEADER.size
        if actual < nbytes:
            raise FormatError(f"{path}: truncated payload, {actual} of {nbytes} bytes present")
        if actual > nbytes:
            raise FormatError(f"{path}: {actual - nbytes} trailing bytes after the payload")
        data = np.fromfile(fh, dtype=_F32, count=rows * cols)
    m = data.reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        r, c = _first_nonfinite(m)
        raise NonFiniteError(f"{path}: non-finite value at row {r}, col {c}")
    return m.astype(dtype, copy=False) if m.dtype != dtype else m


def write_template(template: GalleryTemplate, path, num_classes: Optional[int] = None) -> None:
    sel = template.selection
    C = num_classes or template.num_classes
    if C is None:
        C = int(sel.indexes.max()) + 1
    label = str(template.label).encode("utf-8")
    head = _TEMPLATE_HEADER.pack(TEMPLATE_MAGIC, _TAGS[template.kind], sel.K, sel.T, sel.B, C)
    body = (
        sel.indexes.astype(_U32).tobytes()
        + _to_f32(template.values, "template values").tobytes()
        + struct.pack("<I", len(label))
        + label
    )
    _atomic_write(path, head + body)


def read_template(path, max_bytes: int = DEFAULT_MAX_BYTES) -> GalleryTemplate:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _TEMPLATE_HEADER.size:
        raise FormatError(f"{path}: truncated template header")
    magic, tag, K, T, B, C = _TEMPLATE_HEADER.unpack_from(raw)
    if magic != TEMPLATE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {TEMPLATE_MAGIC!r}")
    if tag not in _KINDS:
        raise FormatError(f"{path}: unknown strategy tag {tag}")
    if 8 * K > max_bytes:
        raise FormatError(f"{path}: declared K={K} exceeds the byte cap")
    off = _TEMPLATE_HEADER.size
    need = off + 8 * K + 4
    if len(raw) < need:
        raise FormatError(f"{path}: truncated template body")
    idx = np.frombuffer(raw, dtype=_U32, count=K, offset=off).astype(np.int64)
    vals = np.frombuffer(raw, dtype=_F32, count=K, offset=off + 4 * K)
    (n,) = struct.unpack_from("<I", raw, off + 8 * K)
    if len(raw) != need + n:
        raise FormatError(f"{path}: label length {n} does not match the file size")
    try:
        label = raw[need:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: label is not valid UTF-8") from exc
    if K and int(idx.max()) >= C:
        raise FormatError(f"{path}: index {int(idx.max())} out of range for C={C}")
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError(f"{path}: non-finite template value")
    try:
        sel = IndexSelection(idx, T, B)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return GalleryTemplate(sel, vals.astype(np.float64), label, _KINDS[tag], C)


def _parse_protocol(text: str, origin: str) -> VerificationProtocol:
    by_role: Dict[str, list] = {r: [] for r in ROLES}
    lines = [ln for ln in text.splitlines()]
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 4:
            raise ProtocolError(f"{origin}:{lineno}: expected 4 fields, got {len(row)}")
        role, sid, label, ref = (f.strip() for f in row)
        if role not in by_role:
            raise ProtocolError(f"{origin}:{lineno}: unknown role {role!r}")
        by_role[role].append(Sample(sid, label, ref))
    if not any(by_role.values()):
        raise ProtocolError(f"{origin}: protocol is empty")
    return VerificationProtocol(
        by_role["gallery"], by_role["probe"], by_role["cohort_gallery"], by_role["cohort_probe"]
    )


def read_protocol(path) -> VerificationProtocol:
    path = Path(path)
    return _parse_protocol(path.read_text(encoding="utf-8"), str(path))


def write_protocol(protocol: VerificationProtocol, path) -> None:
    buf = io.StringIO()
    buf.write("# role,sample_id,identity_label,path_or_row\n")
    w = csv.writer(buf, lineterminator="\n")
    for role in ROLES:
        for s in protocol.samples(role):
            w.writerow([role, s.sample_id, s.label, s.ref])
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def load_role_vectors(
    protocol: VerificationProtocol,
    role: str,
    base_dir,
    matrix=None,
    dtype=np.float64,
) -> np.ndarray:
    """Stack the vectors of every sample in ``role``.

    A numeric ``ref`` is a row of ``matrix`` (default: ``<base_dir>/<role>.lcv``);
    anything else is a path, relative to ``base_dir``, of a one-row matrix file.
    """
    base_dir = Path(base_dir)
    samples = protocol.samples(role)
    if matrix is None and any(s.ref.isdigit() for s in samples):
        default = base_dir / f"{role}.lcv"
        if not default.exists():
            raise ProtocolError(f"{role} uses row references but {default} does not exist")
        matrix = read_matrix(default, dtype=dtype)
    rows = []
    for s in samples:
        if s.ref.isdigit():
            r = int(s.ref)
            if r >= matrix.shape[0]:
                raise ProtocolError(f"{role} sample {s.sample_id!r}: row {r} outside matrix of {matrix.shape[0]} rows")
            rows.append(np.asarray(matrix[r], dtype=dtype))
        else:
            m = read_matrix(base_dir / s.ref, dtype=dtype)
            if m.shape[0] != 1:
                raise ProtocolError(f"{role} sample {s.sample_id!r}: {s.ref} holds {m.shape[0]} rows, expected 1")
            rows.append(m[0])
    if not rows:
        raise ProtocolError(f"protocol has no {role} samples")
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise ProtocolError(f"{role} vectors have inconsistent dimensions {sorted(dims)}")
    return np.stack(rows)
