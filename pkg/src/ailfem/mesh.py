"""Conforming 2D triangulations with newest-vertex-bisection (NVB) refinement.

A triangulation stores vertex coordinates, vertex-index triples per element,
and a designated reference edge per element.  Local edge ``i`` of element
``(v0, v1, v2)`` joins vertices ``(v_i, v_{i+1 mod 3})``.  Bisection inserts
the midpoint of the reference edge; the midpoint becomes the newest vertex of
both children, whose reference edges are the edges opposite to it.  Marked
elements have all three edges bisected; conformity closure bisects further
elements as needed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

EDGE_LOCAL = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(Exception):
    """Structural mesh failure: degenerate element, runaway closure, bad input."""


@dataclass(frozen=True)
class EdgeTable:
    """Unique-edge connectivity rebuilt per mesh (O(1) neighbor lookup)."""

    vertices: np.ndarray       # (ne, 2) sorted endpoint indices
    of_element: np.ndarray     # (nelem, 3) edge id of local edge i
    element_of: np.ndarray     # (ne, 2) adjacent element ids, -1 if none
    local_of: np.ndarray       # (ne, 2) local edge index within adjacent element
    boundary: np.ndarray       # (ne,) bool, single-incidence edges

    @property
    def count(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class Geometry:
    """Closed-form per-element geometry."""

    area: np.ndarray           # (nelem,)
    diameter: np.ndarray       # (nelem,) longest edge, used as h_T
    edge_length: np.ndarray    # (nelem, 3)
    normal: np.ndarray         # (nelem, 3, 2) outward unit normal of local edge i
    neighbor: np.ndarray       # (nelem, 3) element across local edge i, -1 on boundary


class Triangulation:
    """Immutable conforming triangulation with NVB bookkeeping.

    Refinement produces a new triangulation carrying ``parent`` (element id in
    the refined-from mesh) and a reference to that mesh, so nested-space
    prolongation can chase ancestry.
    """

    def __init__(self, vertices, elements, ref_edge, generation=None,
                 parent=None, parent_mesh=None):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        elements = np.ascontiguousarray(elements, dtype=np.int64)
        ref_edge = np.ascontiguousarray(ref_edge, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        if elements.ndim != 2 or elements.shape[1] != 3:
            raise MeshError("elements must be an (m, 3) array")
        if ref_edge.shape != (len(elements),):
            raise MeshError("one reference edge index per element required")
        if ref_edge.size and (ref_edge.min() < 0 or ref_edge.max() > 2):
            raise MeshError("reference edge index must be in {0, 1, 2}")
        self.vertices = vertices
        self.elements = elements
        self.ref_edge = ref_edge
        self.generation = (np.zeros(len(elements), dtype=np.int64)
                           if generation is None else np.asarray(generation, dtype=np.int64))
        self.parent = None if parent is None else np.asarray(parent, dtype=np.int64)
        self.parent_mesh = parent_mesh
        for arr in (self.vertices, self.elements, self.ref_edge, self.generation):
            arr.setflags(write=False)
        if self.parent is not None:
            self.parent.setflags(write=False)
        self._check_orientation()

    # -- basic queries ----------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    def _check_orientation(self):
        if self.num_elements == 0:
            raise MeshError("empty triangulation")
        p = self.vertices[self.elements]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(area2 <= 0):
            bad = int(np.argmax(area2 <= 0))
            raise MeshError(f"element {bad} is degenerate or negatively oriented")

    @cached_property
    def edges(self) -> EdgeTable:
        nv = self.num_vertices
        pairs = self.elements[:, EDGE_LOCAL]                      # (m, 3, 2)
        key = pairs.min(-1) * nv + pairs.max(-1)                  # (m, 3)
        uniq, inverse = np.unique(key.ravel(), return_inverse=True)
        of_element = inverse.reshape(self.num_elements, 3)
        edge_vertices = np.column_stack([uniq // nv, uniq % nv])
        ne = len(uniq)
        counts = np.bincount(of_element.ravel(), minlength=ne)
        if counts.max() > 2:
            raise MeshError("edge shared by more than two elements")
        element_of = np.full((ne, 2), -1, dtype=np.int64)
        local_of = np.full((ne, 2), -1, dtype=np.int64)
        order = np.argsort(of_element.ravel(), kind="stable")
        elem_ids = order // 3
        local_ids = order % 3
        slot = np.zeros(len(order), dtype=np.int64)
        sorted_edges = of_element.ravel()[order]
        slot[1:] = sorted_edges[1:] == sorted_edges[:-1]
        element_of[sorted_edges, slot] = elem_ids
        local_of[sorted_edges, slot] = local_ids
        return EdgeTable(vertices=edge_vertices, of_element=of_element,
                         element_of=element_of, local_of=local_of,
                         boundary=counts == 1)

    @cached_property
    def geom(self) -> Geometry:
        p = self.vertices[self.elements]                          # (m, 3, 2)
        tangent = p[:, [1, 2, 0]] - p[:, [0, 1, 2]]               # edge i vector
        length = np.linalg.norm(tangent, axis=-1)
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(area <= 0):
            raise MeshError("degenerate element encountered in geometry")
        # CCW traversal: outward normal is the tangent rotated clockwise
        normal = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1)
        normal /= length[..., None]
        edges = self.edges
        neighbor = np.where(
            edges.element_of[edges.of_element, 0] == np.arange(self.num_elements)[:, None],
            edges.element_of[edges.of_element, 1],
            edges.element_of[edges.of_element, 0],
        )
        return Geometry(area=area, diameter=length.max(axis=1),
                        edge_length=length, normal=normal, neighbor=neighbor)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Bool mask of vertices lying on a boundary edge."""
        mask = np.zeros(self.num_vertices, dtype=bool)
        mask[self.edges.vertices[self.edges.boundary].ravel()] = True
        return mask

    def dump(self) -> str:
        """Plain-text debug dump: VERTICES block then ELEMENTS block."""
        lines = [f"VERTICES {self.num_vertices}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append(f"ELEMENTS {self.num_elements}")
        lines += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(self.elements, self.ref_edge)]
        return "\n".join(lines) + "\n"


def _longest_edge_assignment(vertices, elements):
    """Reference edge = longest edge, ties broken by lowest global edge index."""
    p = vertices[elements]
    length = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [0, 1, 2]], axis=-1)
    nv = len(vertices)
    pairs = elements[:, EDGE_LOCAL]
    global_id = pairs.min(-1) * nv + pairs.max(-1)
    near_max = length >= length.max(axis=1, keepdims=True) - 1e-12 * length.max(axis=1, keepdims=True)
    tie_break = np.where(near_max, global_id, np.iinfo(np.int64).max)
    return np.argmin(tie_break, axis=1).astype(np.int64)


def initial_mesh(domain_spec: str) -> Triangulation:
    """Built-in initial triangulations of the unit square.

    ``unit_square``: criss-cross mesh, 5 vertices / 4 elements.
    ``goal``: 8-element mesh whose edges align with the lines x1+x2 = 1/2 and
    x1+x2 = 3/2, so the characteristic-function data of the goal problem is
    constant on every element.
    """
    if domain_spec == "unit_square":
        vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
                             [0.5, 0.5]])
        elements = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    elif domain_spec == "goal":
        xs = [0.0, 0.5, 1.0]
        vertices = np.array([[x, y] for y in xs for x in xs])
        idx = lambda i, j: 3 * j + i  # noqa: E731
        elements = []
        for i in range(2):
            for j in range(2):
                a, b = idx(i, j), idx(i + 1, j)
                c, d = idx(i + 1, j + 1), idx(i, j + 1)
                # split along the anti-diagonal (b-d), which lies on x1+x2 = const
                elements.append([a, b, d])
                elements.append([b, c, d])
        elements = np.array(elements)
    else:
        raise MeshError(f"unknown domain {domain_spec!r}")
    ref_edge = _longest_edge_assignment(vertices, elements)
    return Triangulation(vertices, elements, ref_edge)


def refine_nvb(mesh: Triangulation, marked) -> Triangulation:
    """Conforming NVB refinement where every marked element is fully bisected.

    All three edges of a marked element are bisected (its four subtriangles
    appear in the result); closure iteratively bisects reference edges of
    further elements until the mesh is conforming.  ``marked`` empty returns
    ``mesh`` itself.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.num_elements:
        raise MeshError("marked element id out of range")

    edges = mesh.edges
    nelem = mesh.num_elements
    edge_marked = np.zeros(edges.count, dtype=bool)
    edge_marked[edges.of_element[marked].ravel()] = True

    ref_ids = edges.of_element[np.arange(nelem), mesh.ref_edge]
    cap = 10 * nelem + 10
    for _ in range(cap):
        need = edge_marked[edges.of_element].any(axis=1) & ~edge_marked[ref_ids]
        if not need.any():
            break
        edge_marked[ref_ids[need]] = True
    else:
        raise MeshError("conformity closure did not terminate")

    # new vertices at midpoints of marked edges
    marked_edge_ids = np.flatnonzero(edge_marked)
    midpoint_id = np.full(edges.count, -1, dtype=np.int64)
    midpoint_id[marked_edge_ids] = mesh.num_vertices + np.arange(len(marked_edge_ids))
    midpoints = mesh.vertices[edges.vertices[marked_edge_ids]].mean(axis=1)
    new_vertices = np.vstack([mesh.vertices, midpoints])

    # rotate each element so its reference edge comes first
    r = mesh.ref_edge
    rot = np.stack([r, (r + 1) % 3, (r + 2) % 3], axis=1)
    rows = np.arange(nelem)[:, None]
    verts_rot = mesh.elements[rows, rot]                     # (A, B, C)
    edges_rot = edges.of_element[rows, rot]                  # (AB, BC, CA)
    m0, m1, m2 = edge_marked[edges_rot].T
    if np.any(~m0 & (m1 | m2)):
        raise MeshError("closure invariant violated")

    a, b, c = verts_rot.T
    mid0 = midpoint_id[edges_rot[:, 0]]
    mid1 = midpoint_id[edges_rot[:, 1]]
    mid2 = midpoint_id[edges_rot[:, 2]]

    counts = 1 + m0.astype(np.int64) + m1 + m2               # 1, 2, 3 or 4 children
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = offsets[-1]
    new_elements = np.empty((total, 3), dtype=np.int64)
    new_ref = np.zeros(total, dtype=np.int64)
    new_gen = np.empty(total, dtype=np.int64)
    new_parent = np.empty(total, dtype=np.int64)

    def emit(mask, slot, tri, gen_inc):
        ids = np.flatnonzero(mask)
        pos = offsets[ids] + slot
        new_elements[pos] = np.column_stack(tri)[ids]
        new_gen[pos] = mesh.generation[ids] + gen_inc
        new_parent[pos] = ids

    keep = ~m0
    ids = np.flatnonzero(keep)
    pos = offsets[ids]
    new_elements[pos] = mesh.elements[ids]
    new_ref[pos] = mesh.ref_edge[ids]
    new_gen[pos] = mesh.generation[ids]
    new_parent[pos] = ids

    bisec1 = m0 & ~m1 & ~m2
    emit(bisec1, 0, (c, a, mid0), 1)
    emit(bisec1, 1, (b, c, mid0), 1)

    bisec2l = m0 & ~m1 & m2          # reference edge plus edge (C, A)
    emit(bisec2l, 0, (mid0, c, mid2), 2)
    emit(bisec2l, 1, (a, mid0, mid2), 2)
    emit(bisec2l, 2, (b, c, mid0), 1)

    bisec2r = m0 & m1 & ~m2          # reference edge plus edge (B, C)
    emit(bisec2r, 0, (c, a, mid0), 1)
    emit(bisec2r, 1, (mid0, b, mid1), 2)
    emit(bisec2r, 2, (c, mid0, mid1), 2)

    bisec3 = m0 & m1 & m2
    emit(bisec3, 0, (mid0, c, mid2), 2)
    emit(bisec3, 1, (a, mid0, mid2), 2)
    emit(bisec3, 2, (mid0, b, mid1), 2)
    emit(bisec3, 3, (c, mid0, mid1), 2)

    return Triangulation(new_vertices, new_elements, new_ref,
                         generation=new_gen, parent=new_parent, parent_mesh=mesh)


def uniform_refine(mesh: Triangulation) -> Triangulation:
    """Bisect every element fully (all elements marked; 4 children each)."""
    return refine_nvb(mesh, np.arange(mesh.num_elements))


def geometry(mesh: Triangulation) -> Geometry:
    """Per-element areas, diameters h_T, edge lengths, normals, neighbors."""
    return mesh.geom


def ancestor_chain(fine: Triangulation, coarse: Triangulation) -> np.ndarray:
    """Map each fine element to its ancestor element id in ``coarse``.

    Raises MeshError if ``fine`` does not descend from ``coarse`` via the
    parent chain.
    """
    chain = np.arange(fine.num_elements)
    current = fine
    while current is not coarse:
        if current.parent is None or current.parent_mesh is None:
            raise MeshError("meshes are unrelated")
        chain = current.parent[chain]
        current = current.parent_mesh
    return chain
