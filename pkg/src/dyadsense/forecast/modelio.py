"""Binary model files.

Layout (little-endian; i32 = 32-bit int, f64 = 64-bit float)::

    b"PPGB"  i32 major  i32 minor
    i32 name_len  name_len bytes of UTF-8 target name
    f64 learning_rate  i32 max_depth  f64 base_score  i32 tree_count
    -- minor >= 1 --
    f64 horizon_s  i32 n_features
    -- per tree --
    i32 node_count, then per node in preorder: i32 kind (1 split, 0 leaf),
    i32 feature (-1 for leaves), f64 threshold or leaf value

Readers accept any minor version of their major version; fields added in a
later minor version take their defaults when absent.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

from .gbt import GbtEnsemble, RegressionTree

MAGIC = b"PPGB"
VERSION = (1, 1)
DEFAULT_HORIZON_S = 30.0
DEFAULT_N_FEATURES = 44


class ModelFormatError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ModelFormatError(f"truncated model file at byte {self.pos}")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out if len(out) > 1 else out[0]

    def raw(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise ModelFormatError(f"truncated model file at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def dumps(ensemble: GbtEnsemble, version: tuple[int, int] = VERSION) -> bytes:
    major, minor = version
    name = ensemble.target.encode("utf-8")
    parts = [MAGIC, struct.pack("<ii", major, minor), struct.pack("<i", len(name)), name,
             struct.pack("<didi", ensemble.learning_rate, ensemble.max_depth, ensemble.base_score,
                         len(ensemble.trees))]
    if minor >= 1:
        parts.append(struct.pack("<di", ensemble.horizon_s, ensemble.n_features))
    for tree in ensemble.trees:
        nodes = tree.preorder()
        parts.append(struct.pack("<i", len(nodes)))
        parts.extend(struct.pack("<iid", kind, feat, num) for kind, feat, num in nodes)
    return b"".join(parts)


def loads(data: bytes) -> GbtEnsemble:
    r = _Reader(data)
    if r.raw(4) != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)")
    major, minor = r.take("<ii")
    if major != VERSION[0]:
        raise ModelFormatError(f"unsupported model format version {major}.{minor} (reader is {VERSION[0]}.x)")
    name = r.raw(r.take("<i")).decode("utf-8")
    eta, depth, base, n_trees = r.take("<didi")
    horizon, n_features = DEFAULT_HORIZON_S, DEFAULT_N_FEATURES
    if minor >= 1:
        horizon, n_features = r.take("<di")
    if n_trees < 0:
        raise ModelFormatError("negative tree count")
    trees = []
    for _ in range(n_trees):
        n_nodes = r.take("<i")
        if n_nodes <= 0:
            raise ModelFormatError("tree with no nodes")
        nodes = [r.take("<iid") for _ in range(n_nodes)]
        try:
            tree = RegressionTree.from_preorder(nodes)
        except ValueError as exc:
            raise ModelFormatError(str(exc)) from exc
        if (tree.feature >= n_features).any():
            raise ModelFormatError("split feature index out of range")
        trees.append(tree)
    if r.pos != len(data):
        raise ModelFormatError(f"{len(data) - r.pos} trailing bytes after the last tree")
    return GbtEnsemble(name, base, eta, depth, trees, horizon, n_features)


def save_model(ensemble: GbtEnsemble, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_bytes(dumps(ensemble))
    return path


def load_model(path: str | os.PathLike) -> GbtEnsemble:
    return loads(Path(path).read_bytes())


def model_filename(target: str) -> str:
    return f"{target.lower()}.ppgb"
