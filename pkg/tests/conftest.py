import numpy as np
import pytest

from ailfem.mesh import Triangulation, _longest_edge_assignment


def make_mesh(vertices, elements, ref_edge=None):
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    if ref_edge is None:
        ref_edge = _longest_edge_assignment(vertices, elements)
    return Triangulation(vertices, elements, ref_edge)


@pytest.fixture
def two_element_square():
    return make_mesh([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                     [[0, 1, 2], [0, 2, 3]])


@pytest.fixture
def reference_triangle():
    return make_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def conformity_scan(mesh, boundary_tol=1e-12):
    """Independent conformity oracle built from raw vertex/element arrays.

    Checks positive orientation, at most two elements per edge, and that
    single-incidence edges lie on the boundary of the unit square (a hanging
    node would leave an interior edge with a single incidence).
    """
    verts = np.asarray(mesh.vertices)
    elems = np.asarray(mesh.elements)
    p = verts[elems]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    assert np.all(areas > 0), "non-positive element orientation"

    pairs = np.concatenate([elems[:, [0, 1]], elems[:, [1, 2]], elems[:, [2, 0]]])
    pairs = np.sort(pairs, axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    assert counts.max() <= 2, "edge shared by more than two elements"

    single = uniq[counts == 1]
    mids = 0.5 * (verts[single[:, 0]] + verts[single[:, 1]])
    on_boundary = ((np.abs(mids) < boundary_tol) | (np.abs(mids - 1.0) < boundary_tol)).any(axis=1)
    assert np.all(on_boundary), "hanging node: interior edge with one incidence"
    return float(areas.sum())
