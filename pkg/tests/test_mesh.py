import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgwave.mesh import build_interval_mesh, build_scaling, build_unit_square_mesh, partition_structured


def test_square_mesh_counts():
    m = build_unit_square_mesh(4, 3)
    assert m.n_nodes == 20 and m.n_elements == 24
    assert len(m.dirichlet_nodes) == 2 * (5 + 4) - 4
    assert m.h == pytest.approx(np.sqrt(2) / 3)
    assert m.summary()["n_boundary"] == 14


def test_interval_mesh():
    m = build_interval_mesh(10, 2.0)
    assert m.n_nodes == 11 and list(m.dirichlet_nodes) == [0]
    assert m.h == pytest.approx(0.2)


@pytest.mark.parametrize("args", [(1, 4), (4, 1)])
def test_mesh_rejects_too_coarse(args):
    with pytest.raises(ValueError):
        build_unit_square_mesh(*args)


def test_partition_rejects_too_many_subdomains():
    with pytest.raises(ValueError):
        partition_structured(build_unit_square_mesh(4, 4), 5, 1)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(4, 12), ny=st.integers(4, 12), px=st.integers(1, 4), py=st.integers(1, 4))
def test_partition_invariants(nx, ny, px, py):
    mesh = build_unit_square_mesh(nx, ny)
    part = partition_structured(mesh, px, py)
    free = set(mesh.free_nodes().tolist())
    interior = [set(v.tolist()) for v in part.interior_nodes]
    gamma = set(part.global_interface.tolist())
    # every free node is interior to exactly one subdomain or on the interface
    seen = set()
    for s in interior:
        assert not (s & seen)
        seen |= s
    assert not (seen & gamma)
    assert seen | gamma == free
    # corners and remaining split the interface
    corner = set(part.corner_nodes.tolist())
    assert corner | set(part.remaining_nodes.tolist()) == gamma
    assert not corner & set(part.remaining_nodes.tolist())
    # multiplicity > 2 implies corner
    for g, k in zip(part.global_interface, part.multiplicity):
        assert k >= 2
        if k > 2:
            assert int(g) in corner
    # D scaling is a partition of unity on the interface
    D = build_scaling(part)
    acc = np.zeros(part.n_interface)
    for s in range(part.n_sub):
        part.restriction(s).scatter(D[s], acc)
    np.testing.assert_allclose(acc, 1.0)


def test_restriction_gather_scatter_adjoint():
    part = partition_structured(build_unit_square_mesh(8, 8), 2, 2)
    R = part.restriction(1)
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(part.n_interface), rng.standard_normal(len(R.index))
    assert R.gather(x) @ y == pytest.approx(x @ R.scatter(y))
    np.testing.assert_array_equal(R.matrix() @ x, R.gather(x))


def test_corner_maps_consistent():
    part = partition_structured(build_unit_square_mesh(8, 8), 2, 2)
    # single cross point in the middle plus the interface-edge ends next to the boundary
    mid = 4 * 9 + 4
    assert mid in part.corner_nodes
    for s in range(part.n_sub):
        rr, rc = part.local_split(s)
        assert len(rr.index) + len(rc.index) == len(part.interface_nodes[s])
        B = part.corner_restriction(s)
        np.testing.assert_array_equal(part.corner_nodes[B.index], part.interface_nodes[s][rc.index])


def test_two_strips_have_edge_end_corners():
    part = partition_structured(build_unit_square_mesh(8, 8), 2, 1)
    assert part.n_corner == 2
    assert set(part.multiplicity.tolist()) == {2}


def test_1d_partition():
    part = partition_structured(build_interval_mesh(10), 2)
    assert part.n_interface == 1 and part.n_corner == 1


def test_export_csv(tmp_path):
    part = partition_structured(build_unit_square_mesh(4, 4), 2, 2)
    p = tmp_path / "nodes.csv"
    part.export_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "node_id,class,multiplicity"
    assert len(lines) - 1 == 9
