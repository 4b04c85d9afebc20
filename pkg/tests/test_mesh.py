import numpy as np
import pytest

from nonlocfem.mesh import (MeshSize, build_lagrange_space,
                            uniform_interval_mesh, uniform_square_mesh)


def test_single_interval_element():
    m = uniform_interval_mesh(0.0, 1.0, 1)
    assert m.n_elements == 1
    assert m.h == 1.0
    np.testing.assert_array_equal(m.vertices.ravel(), [0.0, 1.0])


def test_interval_h_matches_reference_resolution():
    m = uniform_interval_mesh(0.0, 1.0, 100)
    assert m.h == pytest.approx(1e-2, abs=0.0)


def test_interval_vertices_and_boundary_flags():
    m = uniform_interval_mesh(0.0, 1.0, 4)
    np.testing.assert_allclose(m.vertices.ravel(), [0.0, 0.25, 0.5, 0.75, 1.0])
    assert m.boundary_vertex_flags[0] and m.boundary_vertex_flags[-1]
    assert not m.boundary_vertex_flags[1:-1].any()


def test_interval_invalid_inputs():
    with pytest.raises(ValueError):
        uniform_interval_mesh(1.0, 0.0, 4)
    with pytest.raises(ValueError):
        uniform_interval_mesh(0.0, 1.0, 0)


def test_interval_lengths_sum_to_domain():
    m = uniform_interval_mesh(-2.0, 3.0, 7)
    total = m.element_measures().sum()
    assert abs(total - 5.0) <= 1e-14 * 5.0


def test_smallest_square_mesh():
    m = uniform_square_mesh(1)
    assert m.n_elements == 2
    assert len(m.vertices) == 4
    assert m.boundary_vertex_flags.all()


def test_square_mesh_h():
    m = uniform_square_mesh(16)
    assert m.h == pytest.approx(np.sqrt(2.0) / 16, rel=1e-15)
    assert m.size().h == pytest.approx(m.h, rel=1e-15)


def test_square_mesh_interior_vertex():
    m = uniform_square_mesh(2)
    assert m.n_elements == 8
    interior = m.vertices[~m.boundary_vertex_flags]
    assert interior.shape == (1, 2)
    np.testing.assert_allclose(interior[0], [0.5, 0.5])


def test_square_invalid_count():
    with pytest.raises(ValueError):
        uniform_square_mesh(0)


def test_square_areas_sum_to_one():
    for n in (1, 3, 8):
        total = uniform_square_mesh(n).element_measures().sum()
        assert abs(total - 1.0) <= 1e-12


def test_all_elements_have_positive_measure():
    assert (uniform_square_mesh(5).element_measures() > 0).all()
    assert (uniform_interval_mesh(0, 1, 5).element_measures() > 0).all()


def test_mesh_size_requires_positive_h():
    with pytest.raises(ValueError):
        MeshSize(h=0.0)


def test_lagrange_counts_1d():
    m = uniform_interval_mesh(0.0, 1.0, 4)
    s1 = build_lagrange_space(m, 1)
    assert s1.n_nodes == 5 and s1.n_free == 3
    s3 = build_lagrange_space(m, 3)
    assert s3.n_nodes == 13 and s3.n_free == 11


def test_lagrange_counts_2d():
    s = build_lagrange_space(uniform_square_mesh(2), 1)
    assert s.n_nodes == 9 and s.n_free == 1
    s3 = build_lagrange_space(uniform_square_mesh(2), 3)
    assert s3.n_nodes == (3 * 2 + 1) ** 2


def test_invalid_degree():
    with pytest.raises(ValueError):
        build_lagrange_space(uniform_interval_mesh(0, 1, 4), 0)


def test_nodes_equally_spaced_within_elements():
    m = uniform_interval_mesh(0.0, 1.0, 3)
    s = build_lagrange_space(m, 3)
    for e in range(m.n_elements):
        xs = s.nodes[s.element_dofs[e], 0]
        np.testing.assert_allclose(np.diff(xs), 1.0 / 9.0, rtol=1e-13)


def test_shared_faces_share_node_indices_2d():
    # C0 conformity: the total node count equals the fine-lattice count,
    # which is only possible if every shared face was merged exactly
    for n, k in [(2, 2), (3, 3), (4, 1)]:
        s = build_lagrange_space(uniform_square_mesh(n), k)
        assert s.n_nodes == (n * k + 1) ** 2
        # and every fine-lattice point appears exactly once
        seen = {tuple(p) for p in s.node_lattice}
        assert len(seen) == s.n_nodes


def test_rebuild_is_idempotent():
    m = uniform_square_mesh(3)
    a = build_lagrange_space(m, 2)
    b = build_lagrange_space(m, 2)
    np.testing.assert_array_equal(a.nodes, b.nodes)
    np.testing.assert_array_equal(a.element_dofs, b.element_dofs)
    np.testing.assert_array_equal(a.free_node_indices, b.free_node_indices)


def test_free_nodes_strictly_interior():
    for dim_space in (build_lagrange_space(uniform_interval_mesh(0, 1, 6), 2),
                      build_lagrange_space(uniform_square_mesh(3), 2)):
        nodes = dim_space.nodes
        free = set(dim_space.free_node_indices.tolist())
        for i, x in enumerate(nodes):
            on_boundary = bool(np.any((x == 0.0) | (x == 1.0)))
            assert dim_space.boundary_node_flags[i] == on_boundary
            assert (i not in free) == on_boundary


def test_mesh_arrays_immutable():
    m = uniform_square_mesh(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
