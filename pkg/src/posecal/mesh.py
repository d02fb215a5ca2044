"""Triangle mesh container and minimal Wavefront OBJ reader/writer (v/f only)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray = field(repr=False)
    faces: np.ndarray = field(repr=False)
    body_model: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise SchemaError(f"vertices must be (N, 3), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise SchemaError("mesh has non-finite vertex coordinates")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise SchemaError(f"face index out of range [0, {len(v)})")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def with_vertices(self, vertices) -> "Mesh":
        return Mesh(vertices, self.faces, self.body_model)


def load_obj(path: str | Path) -> Mesh:
    """Read ``v`` and ``f`` records. Faces with more than three corners are fanned."""
    verts, faces = [], []
    body_model = ""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                if len(parts) >= 3 and parts[1] == "body_model":
                    body_model = parts[2]
                continue
            try:
                if parts[0] == "v":
                    if len(parts) < 4:
                        raise ValueError("vertex needs 3 coordinates")
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                    if len(idx) < 3:
                        raise ValueError("face needs at least 3 vertices")
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
    try:
        return Mesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64), body_model)
    except SchemaError as e:
        raise SchemaError(f"{path}: {e}") from None


def save_obj(path: str | Path, mesh: Mesh) -> None:
    lines = []
    if mesh.body_model:
        lines.append(f"# body_model {mesh.body_model}")
    lines.extend("v {!r} {!r} {!r}".format(*map(float, v)) for v in mesh.vertices)
    lines.extend("f {} {} {}".format(*(int(i) + 1 for i in f)) for f in mesh.faces)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
