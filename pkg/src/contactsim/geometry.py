"""Planar triangle meshes with labelled boundary parts and the contact curve.

The boundary of the body is split into three parts: ``Gamma1`` (clamped),
``Gamma2`` (prescribed traction) and ``Gamma3`` (contact).  The contact part
is extracted as an arc-length parameterised curve, which is where the wear
field lives.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GAMMA1, GAMMA2, GAMMA3 = "Gamma1", "Gamma2", "Gamma3"
LABELS = (GAMMA1, GAMMA2, GAMMA3)
_FILE_LABELS = {"G1": GAMMA1, "G2": GAMMA2, "G3": GAMMA3}
_LABEL_TAGS = {v: k for k, v in _FILE_LABELS.items()}

SIDES = ("left", "right", "bottom", "top")


class MeshError(ValueError):
    """Raised for malformed mesh files or meshes violating an invariant."""


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Counterclockwise P1 triangulation with labelled boundary edges.

    ``boundary_edges`` is an ``(n, 2)`` integer array and ``boundary_labels``
    holds one of :data:`LABELS` per edge.  Construction validates the mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: tuple[str, ...]
    _edge_owner: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        for name, arr in (("vertices", vertices), ("triangles", triangles), ("boundary_edges", edges)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "boundary_labels", tuple(self.boundary_labels))
        object.__setattr__(self, "_edge_owner", {})
        self._validate()

    def _validate(self) -> None:
        nv = len(self.vertices)
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= nv:
            raise MeshError("triangle references a vertex index out of range")
        areas = _signed_areas(self.vertices, self.triangles)
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} is not counterclockwise (signed area {areas[bad[0]]:.3g})")
        if len(self.boundary_labels) != len(self.boundary_edges):
            raise MeshError("one label is required per boundary edge")
        for i, lab in enumerate(self.boundary_labels):
            if lab not in LABELS:
                raise MeshError(f"boundary edge {i}: unknown label {lab!r}")

        # every geometric boundary edge (edge used by one triangle) needs exactly one label
        count: dict[tuple[int, int], int] = defaultdict(int)
        owner: dict[tuple[int, int], tuple[int, int, int]] = {}
        for t, tri in enumerate(self.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                count[key] += 1
                owner[key] = (t, int(a), int(b))
        geometric = {k for k, c in count.items() if c == 1}
        seen: set[tuple[int, int]] = set()
        for i, (a, b) in enumerate(self.boundary_edges):
            key = (min(a, b), max(a, b))
            if count.get(key, 0) != 1:
                raise MeshError(f"boundary edge {i} ({a}, {b}) does not belong to exactly one triangle")
            if key in seen:
                raise MeshError(f"boundary edge {i} ({a}, {b}) is labelled more than once")
            seen.add(key)
        missing = geometric - seen
        if missing:
            raise MeshError(f"boundary edge {sorted(missing)[0]} has no label")
        if GAMMA1 not in self.boundary_labels:
            raise MeshError("Gamma1 empty")
        self._edge_owner.update({k: owner[k] for k in geometric})

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    def oriented_edge(self, a: int, b: int) -> tuple[int, int]:
        """Return the boundary edge ``{a, b}`` oriented counterclockwise (interior on the left)."""
        _, i, j = self._edge_owner[(min(a, b), max(a, b))]
        return i, j

    def edges_with_label(self, label: str) -> np.ndarray:
        mask = np.array([lab == label for lab in self.boundary_labels], dtype=bool)
        return self.boundary_edges[mask] if mask.any() else np.zeros((0, 2), dtype=np.int64)

    def nodes_with_label(self, label: str) -> np.ndarray:
        return np.unique(self.edges_with_label(label))

    def boundary_loop_area(self) -> float:
        """Domain area from the shoelace formula over oriented boundary edges."""
        total = 0.0
        for a, b in self.boundary_edges:
            i, j = self.oriented_edge(int(a), int(b))
            (x0, y0), (x1, y1) = self.vertices[i], self.vertices[j]
            total += x0 * y1 - x1 * y0
        return 0.5 * total

    def label_length(self, label: str) -> float:
        e = self.edges_with_label(label)
        if len(e) == 0:
            return 0.0
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


@dataclass(frozen=True)
class CurveMesh:
    """Ordered chain of contact nodes.

    ``arc_length[i]`` is the cumulative length up to node ``i``; for a closed
    curve the last node is *not* repeated and ``closed_length`` closes the loop.
    """

    node_ids: np.ndarray
    arc_length: np.ndarray
    endpoint_flags: np.ndarray
    closed_length: float = 0.0

    @property
    def closed(self) -> bool:
        return not bool(self.endpoint_flags.any())

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def length(self) -> float:
        return self.closed_length if self.closed else float(self.arc_length[-1])

    def segment_lengths(self) -> np.ndarray:
        h = np.diff(self.arc_length)
        if self.closed:
            h = np.append(h, self.closed_length - self.arc_length[-1])
        return h

    def segments(self) -> np.ndarray:
        """Local node pairs ``(i, i+1)`` of every curve segment."""
        n = self.n_nodes
        idx = np.arange(n - 1)
        pairs = np.column_stack([idx, idx + 1])
        if self.closed:
            pairs = np.vstack([pairs, [n - 1, 0]])
        return pairs

    def nodal_weights(self) -> np.ndarray:
        """Lumped curve measure per node: half of each adjacent segment."""
        w = np.zeros(self.n_nodes)
        for (i, j), h in zip(self.segments(), self.segment_lengths()):
            w[i] += 0.5 * h
            w[j] += 0.5 * h
        return w


@dataclass(frozen=True)
class BoundaryFrame:
    """Unit outward normal and tangent at every contact node (rows match the curve)."""

    normals: np.ndarray
    tangents: np.ndarray


def generate_rect_mesh(nx: int, ny: int, labels: dict[str, str]) -> Mesh2D:
    """Structured mesh of the unit square with ``2*nx*ny`` triangles.

    Cell diagonals alternate in a checkerboard pattern.  ``labels`` maps each
    of ``left``, ``right``, ``bottom`` and ``top`` to a boundary label (either
    ``Gamma1``-style names or the file tags ``G1``/``G2``/``G3``).
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    missing = [s for s in SIDES if s not in labels]
    if missing:
        raise ValueError(f"labels must cover all four sides; missing {missing}")
    lab = {s: _FILE_LABELS.get(labels[s], labels[s]) for s in SIDES}

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]

    edges, elabels = [], []
    for i in range(nx):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        elabels.append(lab["bottom"])
    for j in range(ny):
        edges.append((vid(nx, j), vid(nx, j + 1)))
        elabels.append(lab["right"])
    for i in range(nx, 0, -1):
        edges.append((vid(i, ny), vid(i - 1, ny)))
        elabels.append(lab["top"])
    for j in range(ny, 0, -1):
        edges.append((vid(0, j), vid(0, j - 1)))
        elabels.append(lab["left"])
    return Mesh2D(vertices, np.array(tris), np.array(edges), tuple(elabels))


def load_mesh(path: str | Path) -> Mesh2D:
    """Parse the ``mesh2d v1`` text format."""
    vertices, triangles, edges, labels = [], [], [], []
    header_seen = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if not header_seen:
                if tok != ["mesh2d", "v1"]:
                    raise MeshError(f"line {lineno}: expected header 'mesh2d v1'")
                header_seen = True
                continue
            try:
                if tok[0] == "v" and len(tok) == 3:
                    vertices.append((float(tok[1]), float(tok[2])))
                elif tok[0] == "t" and len(tok) == 4:
                    triangles.append(tuple(int(x) for x in tok[1:]))
                elif tok[0] == "b" and len(tok) == 4:
                    if tok[3] not in _FILE_LABELS:
                        raise MeshError(f"line {lineno}: unknown boundary label {tok[3]!r}")
                    edges.append((int(tok[1]), int(tok[2])))
                    labels.append(_FILE_LABELS[tok[3]])
                else:
                    raise MeshError(f"line {lineno}: cannot parse {line!r}")
            except ValueError as exc:
                if isinstance(exc, MeshError):
                    raise
                raise MeshError(f"line {lineno}: {exc}") from None
    if not header_seen:
        raise MeshError("empty mesh file")
    return Mesh2D(np.array(vertices), np.array(triangles), np.array(edges), tuple(labels))


def save_mesh(mesh: Mesh2D, path: str | Path) -> None:
    """Write ``mesh`` in the ``mesh2d v1`` format; floats use shortest round-trip repr."""
    lines = ["mesh2d v1"]
    lines += [f"v {x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += ["t %d %d %d" % tuple(t) for t in mesh.triangles.tolist()]
    lines += [f"b {a} {b} {_LABEL_TAGS[lab]}" for (a, b), lab in zip(mesh.boundary_edges.tolist(), mesh.boundary_labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def extract_curve(mesh: Mesh2D) -> CurveMesh:
    """Order the ``Gamma3`` edges into a single chain following the boundary orientation."""
    raw = mesh.edges_with_label(GAMMA3)
    if len(raw) == 0:
        raise MeshError("Gamma3 is empty")
    succ: dict[int, int] = {}
    pred: dict[int, int] = {}
    for a, b in raw:
        i, j = mesh.oriented_edge(int(a), int(b))
        if i in succ or j in pred:
            raise MeshError("Gamma3 not a single chain (branching)")
        succ[i] = j
        pred[j] = i
    starts = [i for i in succ if i not in pred]
    if len(starts) > 1:
        raise MeshError("Gamma3 not a single chain")
    closed = not starts
    start = min(succ) if closed else starts[0]

    order = [start]
    node = start
    while node in succ:
        node = succ[node]
        if node == start:
            break
        order.append(node)
    n_edges = len(order) if closed else len(order) - 1
    if n_edges != len(raw):
        raise MeshError("Gamma3 not a single chain")

    pts = mesh.vertices[order]
    seg = np.hypot(*np.diff(pts, axis=0).T)
    arc = np.zeros(len(order))
    for k, h in enumerate(seg):  # node order summation
        arc[k + 1] = arc[k] + h
    flags = np.zeros(len(order), dtype=bool)
    closed_length = 0.0
    if closed:
        closed_length = arc[-1] + float(np.hypot(*(pts[0] - pts[-1])))
    else:
        flags[[0, -1]] = True
    return CurveMesh(np.array(order, dtype=np.int64), arc, flags, closed_length)


def boundary_frame(mesh: Mesh2D, curve: CurveMesh) -> BoundaryFrame:
    """Nodal outward normals as the renormalised sum of adjacent edge normals.

    The tangent is the normal rotated by -90 degrees.
    """
    pts = mesh.vertices[curve.node_ids]
    acc = np.zeros((curve.n_nodes, 2))
    for i, j in curve.segments():
        d = pts[j] - pts[i]
        h = np.hypot(d[0], d[1])
        if h == 0.0:
            raise MeshError(f"degenerate contact edge at nodes {curve.node_ids[i]}, {curve.node_ids[j]}")
        n = np.array([d[1], -d[0]]) / h  # interior lies to the left of (i -> j)
        acc[i] += n
        acc[j] += n
    norm = np.hypot(acc[:, 0], acc[:, 1])
    if np.any(norm == 0.0):
        raise MeshError("contact curve folds back on itself")
    normals = acc / norm[:, None]
    tangents = np.column_stack([normals[:, 1], -normals[:, 0]])
    return BoundaryFrame(normals, tangents)


def split_normal_tangential(vec, normal, tangent) -> tuple[float, float]:
    """Return ``(vec . normal, vec . tangent)``."""
    v = np.asarray(vec, dtype=float)
    return float(v @ np.asarray(normal)), float(v @ np.asarray(tangent))
