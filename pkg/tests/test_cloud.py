import io

import numpy as np
import pytest

from equicheck import (
    CoincidentPointsError,
    DecoratedPointCloud,
    GroupElement,
    XYZParseError,
    act,
    pairwise_edges,
    random_group_element,
    read_xyz,
    write_xyz,
)


@pytest.fixture
def cloud(rng):
    return DecoratedPointCloud(
        rng.normal(size=(5, 3)),
        {"species": np.array([6.0, 1.0, 9.0, 17.0, 35.0])},
        {"dipole": rng.normal(size=(5, 3))},
    )


class TestDecoratedPointCloud:
    def test_requires_points(self):
        with pytest.raises(ValueError):
            DecoratedPointCloud(np.zeros((0, 3)))

    def test_attribute_lengths_checked(self):
        with pytest.raises(ValueError):
            DecoratedPointCloud(np.zeros((2, 3)), {"species": np.zeros(3)})
        with pytest.raises(ValueError):
            DecoratedPointCloud(np.zeros((2, 3)), vector_attrs={"v": np.zeros((2, 2))})


class TestAct:
    def test_identity_is_noop(self, cloud):
        out = act(GroupElement.identity(), cloud)
        assert np.array_equal(out.positions, cloud.positions)
        assert np.array_equal(out.vector_attrs["dipole"], cloud.vector_attrs["dipole"])

    def test_inversion_about_centroid(self):
        x = DecoratedPointCloud(np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]))
        out = act(GroupElement.inversion(), x)
        assert np.allclose(out.positions, [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])

    def test_isometry(self, cloud, rng):
        for _ in range(10):
            g = random_group_element(rng, include_parity=True)
            out = act(g, cloud)
            d0 = np.linalg.norm(cloud.positions[:, None] - cloud.positions[None], axis=-1)
            d1 = np.linalg.norm(out.positions[:, None] - out.positions[None], axis=-1)
            assert np.max(np.abs(d0 - d1)) < 1e-12

    def test_homomorphism(self, cloud, rng):
        g = random_group_element(rng, include_parity=True)
        h = random_group_element(rng, include_parity=True)
        a = act(g, act(h, cloud))
        b = act(g.compose(h), cloud)
        assert np.max(np.abs(a.positions - b.positions)) < 1e-12
        assert np.max(np.abs(a.vector_attrs["dipole"] - b.vector_attrs["dipole"])) < 1e-12

    def test_scalars_and_info_unchanged(self, cloud, rng):
        g = random_group_element(rng, include_parity=True)
        out = act(g, cloud)
        assert np.array_equal(out.scalar_attrs["species"], cloud.scalar_attrs["species"])


class TestPairwiseEdges:
    def test_counts_and_cutoff(self):
        x = DecoratedPointCloud(np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]))
        assert len(pairwise_edges(x, 4.5)) == 2
        assert len(pairwise_edges(x, 2.0)) == 0

    def test_coincident_points(self):
        x = DecoratedPointCloud(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
        with pytest.raises(CoincidentPointsError) as err:
            pairwise_edges(x, 1.0)
        assert err.value.pair == (0, 1)

    def test_commutes_with_action(self, cloud, rng):
        g = random_group_element(rng, include_parity=True)
        e0 = pairwise_edges(cloud, 10.0)
        e1 = pairwise_edges(act(g, cloud), 10.0)
        M = g.matrix()
        assert [(i, j) for i, j, _, _ in e0] == [(i, j) for i, j, _, _ in e1]
        for (_, _, r0, _), (_, _, r1, _) in zip(e0, e1):
            assert np.max(np.abs(M @ r0 - r1)) < 1e-12

    def test_translation_invariance(self, cloud):
        shifted = DecoratedPointCloud(cloud.positions + 17.5)
        e0 = pairwise_edges(cloud, 10.0)
        e1 = pairwise_edges(shifted, 10.0)
        for (_, _, r0, _), (_, _, r1, _) in zip(e0, e1):
            assert np.max(np.abs(r0 - r1)) < 1e-10

    def test_minimum_image_orthorhombic(self):
        x = DecoratedPointCloud(
            np.array([[0.1, 0.0, 0.0], [9.9, 0.0, 0.0]]), cell=np.diag([10.0, 10.0, 10.0])
        )
        edges = pairwise_edges(x, 1.0)
        assert len(edges) == 2
        assert edges[0][3] == pytest.approx(0.2)

    def test_general_cell_rejected(self):
        cell = np.diag([10.0, 10.0, 10.0])
        cell[0, 1] = 2.0
        x = DecoratedPointCloud(np.zeros((1, 3)) + 1.0, cell=cell)
        with pytest.raises(ValueError):
            pairwise_edges(x, 1.0)


class TestXYZ:
    def test_round_trip_positions_exact(self, cloud):
        text = write_xyz([cloud])
        back = read_xyz(text)
        assert len(back) == 1
        assert np.array_equal(back[0].positions, cloud.positions)
        assert np.array_equal(back[0].scalar_attrs["species"], cloud.scalar_attrs["species"])

    def test_empty_file(self):
        assert read_xyz(io.StringIO("")) == []

    def test_vector_column_round_trip_and_covariance(self, cloud, rng):
        back = read_xyz(write_xyz([cloud]))[0]
        assert np.max(np.abs(back.vector_attrs["dipole"] - cloud.vector_attrs["dipole"])) == 0.0
        g = random_group_element(rng)
        rot = act(g, back)
        assert np.max(
            np.abs(rot.vector_attrs["dipole"] - cloud.vector_attrs["dipole"] @ g.rotation.T)
        ) < 1e-12

    def test_info_round_trip(self):
        x = DecoratedPointCloud(np.zeros((1, 3)), info={"Q": -3.25})
        back = read_xyz(write_xyz([x]))[0]
        assert back.info["Q"] == -3.25

    def test_parse_error_carries_line_number(self):
        with pytest.raises(XYZParseError, match="line 1"):
            read_xyz(io.StringIO("not_a_count\nsome comment\n"))

    def test_truncated_body(self):
        with pytest.raises(XYZParseError):
            read_xyz(io.StringIO("3\ncomment\nC 0 0 0\n"))

    def test_multi_frame(self, cloud):
        text = write_xyz([cloud, cloud])
        assert len(read_xyz(text)) == 2
