"""Binary weight archive.

Layout (all integers little-endian)::

    b"CNFW" | u16 version | u32 header length | JSON header (UTF-8) | payload

The payload is raw ``<f8`` data, in order: weights ``(h, d, m, 3H+1)``,
handoff values ``(h, d)``, final costs ``(h,)``, subdomain edges ``(h+1,)``
and initial values ``(d,)``. Keeping every float in the payload makes the
round trip bit-exact.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .fragmentation import FragmentedSolution, fragmentation_from_edges
from .neural_form import VARIANTS, WeightMatrix

__all__ = ["ArchiveError", "ArchiveSchemaError", "save_weights", "load_weights"]

MAGIC = b"CNFW"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class ArchiveError(ValueError):
    """Malformed archive; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class ArchiveSchemaError(ArchiveError):
    """Payload does not match the dimensions declared in the header."""


def _header_for(sol: FragmentedSolution, kind: str) -> dict:
    return {
        "kind": kind,
        "d": sol.dim,
        "h": sol.frag.h,
        "n": sol.frag.n,
        "m": sol.m,
        "H": sol.H,
        "variant": sol.variant,
        "failed_at": sol.failed_at,
        "problem": sol.problem_name,
    }


def _blocks(h: int, d: int, m: int, H: int) -> list[tuple]:
    return [(h, d, m, 3 * H + 1), (h, d), (h,), (h + 1,), (d,)]


def save_weights(obj: Union[FragmentedSolution, Sequence[WeightMatrix]], path) -> Path:
    """Write ``obj`` atomically to ``path``.

    A bare list of weight matrices (one per component) is stored as a
    single-subdomain archive without domain information.
    """
    if isinstance(obj, FragmentedSolution):
        sol, kind = obj, "fragmented"
    else:
        mats = list(obj)
        if not mats or len({(P.m, P.H) for P in mats}) != 1:
            raise ValueError("need a non-empty list of weight matrices of equal shape")
        m, H = mats[0].m, mats[0].H
        d = len(mats)
        frag = fragmentation_from_edges(np.array([0.0, 1.0]), 1)
        sol = FragmentedSolution(frag, VARIANTS[0], m, H, np.zeros(d),
                                 np.stack([P.data for P in mats])[None], np.zeros((1, d)),
                                 np.zeros(1))
        kind = "matrices"
    header = json.dumps(_header_for(sol, kind), sort_keys=True).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for a in (sol.weights, sol.handoffs, sol.final_costs, sol.frag.edges, sol.u0)
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".cnfw")
    with os.fdopen(fd, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)
    return path


def load_weights(path) -> Union[FragmentedSolution, list[WeightMatrix]]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise ArchiveError("file shorter than the archive prefix", len(data))
    magic, version, hlen = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise ArchiveError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ArchiveError(f"unsupported archive version {version}", 4)
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise ArchiveError("truncated JSON header", len(data))
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", getattr(exc, "start", 0))
        raise ArchiveError(f"malformed JSON header: {exc}", start + pos) from None
    try:
        h, d, m, H = (int(header[k]) for k in ("h", "d", "m", "H"))
        n = int(header["n"])
        variant = header["variant"]
        kind = header["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ArchiveSchemaError(f"header missing or invalid field: {exc}", start) from None
    if min(h, d, m, H, n) < 1 or variant not in VARIANTS or kind not in ("fragmented", "matrices"):
        raise ArchiveSchemaError("header declares invalid dimensions or variant", start)
    offset = start + hlen
    arrays = []
    for shape in _blocks(h, d, m, H):
        nbytes = 8 * int(np.prod(shape))
        if len(data) < offset + nbytes:
            raise ArchiveSchemaError(
                f"payload ends before block of shape {shape} declared by (h={h}, d={d}, m={m}, H={H})",
                len(data))
        arrays.append(np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset)
                      .reshape(shape).astype(np.float64))
        offset += nbytes
    if offset != len(data):
        raise ArchiveSchemaError(f"{len(data) - offset} trailing bytes after declared payload", offset)
    weights, handoffs, costs, edges, u0 = arrays
    if kind == "matrices":
        return [WeightMatrix(weights[0, c]) for c in range(d)]
    frag = fragmentation_from_edges(edges, n)
    failed = header.get("failed_at")
    return FragmentedSolution(frag, variant, m, H, u0, weights, handoffs, costs,
                              failed_at=None if failed is None else int(failed),
                              problem_name=str(header.get("problem", "")))
