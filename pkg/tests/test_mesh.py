import numpy as np
import pytest

from ailfem.mesh import (MeshError, ancestor_chain, geometry, initial_mesh,
                         refine_nvb, uniform_refine)
from conftest import conformity_scan, make_mesh


def min_angle(mesh):
    p = mesh.vertices[mesh.elements]
    angles = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = (a * b).sum(-1) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))
        angles.append(np.arccos(np.clip(cosang, -1, 1)))
    return np.min(angles)


def test_initial_unit_square():
    mesh = initial_mesh("unit_square")
    assert mesh.num_vertices == 5
    assert mesh.num_elements == 4
    assert mesh.edges.boundary.sum() == 4
    # all four boundary edges are flagged, interior spokes are not
    bverts = mesh.edges.vertices[mesh.edges.boundary]
    assert not np.any(bverts == 4), "center vertex must not lie on a boundary edge"
    conformity_scan(mesh)


def test_initial_goal_mesh_alignment():
    mesh = initial_mesh("goal")
    for line in (0.5, 1.5):
        s = mesh.vertices[mesh.elements].sum(axis=-1) - line
        below = (s <= 1e-12).all(axis=1)
        above = (s >= -1e-12).all(axis=1)
        assert np.all(below | above)
    conformity_scan(mesh)


def test_unknown_domain():
    with pytest.raises(MeshError):
        initial_mesh("pentagon")


def test_refine_empty_marking_is_identity():
    mesh = initial_mesh("unit_square")
    assert refine_nvb(mesh, []) is mesh


def test_refine_out_of_range():
    mesh = initial_mesh("unit_square")
    with pytest.raises(MeshError):
        refine_nvb(mesh, [7])


def test_marked_elements_are_gone(two_element_square):
    refined = refine_nvb(two_element_square, [0])
    conformity_scan(refined)
    # closure bisects the unmarked neighbour through the shared diagonal
    assert refined.num_elements == 6
    assert np.all(np.sort(np.unique(refined.parent)) == [0, 1])
    # no child equals a parent element: both originals disappear
    old = {tuple(sorted(e)) for e in two_element_square.elements}
    new = {tuple(sorted(e)) for e in refined.elements}
    assert not (old & new)


def test_mark_all_quadruples_each_round():
    mesh = initial_mesh("unit_square")
    for _ in range(4):
        refined = refine_nvb(mesh, np.arange(mesh.num_elements))
        assert refined.num_elements == 4 * mesh.num_elements
        conformity_scan(refined)
        mesh = refined


def test_uniform_refine_counts_and_nesting():
    mesh = initial_mesh("unit_square")
    fine = uniform_refine(mesh)
    assert fine.num_elements == 16
    # full bisection advances every element by two bisection generations
    assert np.all(fine.generation == mesh.generation[fine.parent] + 2)
    conformity_scan(fine)
    # each child's centroid lies in its parent
    centroids = fine.vertices[fine.elements].mean(axis=1)
    pv = mesh.vertices[mesh.elements[fine.parent]]
    B = np.stack([pv[:, 1] - pv[:, 0], pv[:, 2] - pv[:, 0]], axis=-1)
    rhs = centroids - pv[:, 0]
    lam = np.linalg.solve(B, rhs[..., None])[..., 0]
    assert np.all(lam >= -1e-12) and np.all(lam.sum(axis=1) <= 1 + 1e-12)


def test_random_marking_rounds_stay_conforming():
    rng = np.random.default_rng(42)
    mesh = initial_mesh("unit_square")
    for _ in range(200):
        count = rng.integers(1, 4)
        marked = rng.choice(mesh.num_elements, size=min(count, mesh.num_elements),
                            replace=False)
        mesh = refine_nvb(mesh, marked)
        area = conformity_scan(mesh)
        assert abs(area - 1.0) <= 1e-12


def test_monotone_element_counts(two_element_square):
    refined = refine_nvb(two_element_square, [1])
    assert refined.num_elements > two_element_square.num_elements


def test_shape_regularity_stabilizes():
    mesh = initial_mesh("unit_square")
    angles = [min_angle(mesh)]
    for _ in range(5):
        mesh = uniform_refine(mesh)
        angles.append(min_angle(mesh))
    for later in angles[3:]:
        assert abs(later - angles[2]) < 1e-12


def test_geometry_reference_triangle(reference_triangle):
    geo = geometry(reference_triangle)
    assert geo.area[0] == pytest.approx(0.5, abs=1e-15)
    assert geo.diameter[0] == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_geometry_normals_antisymmetric(two_element_square):
    geo = geometry(two_element_square)
    edges = two_element_square.edges
    interior = np.flatnonzero(~edges.boundary)
    for e in interior:
        (t0, t1), (l0, l1) = edges.element_of[e], edges.local_of[e]
        assert np.allclose(geo.normal[t0, l0] + geo.normal[t1, l1], 0.0, atol=1e-14)


def test_geometry_area_conservation_under_refinement():
    mesh = initial_mesh("goal")
    for _ in range(3):
        mesh = refine_nvb(mesh, np.arange(0, mesh.num_elements, 3))
        assert geometry(mesh).area.sum() == pytest.approx(1.0, abs=1e-12)


def test_degenerate_element_rejected():
    with pytest.raises(MeshError):
        make_mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], ref_edge=[0])


def test_ancestor_chain_multilevel():
    mesh = initial_mesh("unit_square")
    lvl1 = refine_nvb(mesh, [0])
    lvl2 = refine_nvb(lvl1, [0, 1])
    chain = ancestor_chain(lvl2, mesh)
    direct = lvl1.parent[lvl2.parent]
    assert np.array_equal(chain, direct)
    with pytest.raises(MeshError):
        ancestor_chain(mesh, lvl2)


def test_dump_golden():
    mesh = initial_mesh("unit_square")
    expected = (
        "VERTICES 5\n"
        "0 0\n"
        "1 0\n"
        "1 1\n"
        "0 1\n"
        "0.5 0.5\n"
        "ELEMENTS 4\n"
        "0 1 4 0\n"
        "1 2 4 0\n"
        "2 3 4 0\n"
        "3 0 4 0\n"
    )
    assert mesh.dump() == expected
