import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partlift.core import (
    BBox2D,
    Detection,
    LabelSchema,
    Partition,
    PointCloud,
    SegmentationResult,
    View,
    validate,
)


def make_cloud(n=4):
    rng = np.random.default_rng(0)
    return PointCloud.create(
        rng.normal(size=(n, 3)), rng.random((n, 3)), rng.normal(size=(n, 3))
    )


def make_view(width=64, height=64):
    return View(50.0, 50.0, 32.0, 32.0, width, height, np.eye(4))


SCHEMA = LabelSchema(("seat", "leg"), "chair")


class TestValidate:
    def test_well_formed_inputs_ok(self):
        cloud = make_cloud()
        det = Detection(0, 1, BBox2D(0, 0, 10, 10), 0.5)
        report = validate(cloud, [make_view()], [det], SCHEMA)
        assert report.ok, report.messages()

    def test_degenerate_box(self):
        cloud = make_cloud()
        det = Detection(0, 0, BBox2D(5, 0, 5, 10), 0.5)
        report = validate(cloud, [make_view()], [det], SCHEMA)
        assert not report.ok
        assert any("degenerate box at detection index 0" in m for m in report.messages())

    def test_zero_normal_reported(self):
        cloud = make_cloud()
        normals = cloud.normals.copy()
        normals[2] = 0.0
        bad = PointCloud(cloud.positions, cloud.colors, normals)
        report = validate(bad, [], [], SCHEMA)
        assert any("zero normal at point 2" in m for m in report.messages())

    def test_non_unit_normal_reported(self):
        cloud = make_cloud()
        normals = cloud.normals.copy()
        normals[1] *= 1.5
        bad = PointCloud(cloud.positions, cloud.colors, normals)
        report = validate(bad, [], [], SCHEMA)
        assert any("non-unit normal at point 1" in m for m in report.messages())

    def test_idempotent(self):
        cloud = make_cloud()
        det = Detection(0, 0, BBox2D(0, 0, 10, 10), 0.5)
        r1 = validate(cloud, [make_view()], [det], SCHEMA)
        r2 = validate(cloud, [make_view()], [det], SCHEMA)
        assert r1.messages() == r2.messages()

    def test_bad_rotation(self):
        ext = np.eye(4)
        ext[0, 1] = 0.5
        view = View(50.0, 50.0, 32.0, 32.0, 64, 64, ext)
        report = validate(make_cloud(), [view], [], SCHEMA)
        assert any("orthonormal" in m for m in report.messages())

    def test_view_index_and_category_range(self):
        det = Detection(3, 9, BBox2D(0, 0, 5, 5), 0.5)
        report = validate(make_cloud(), [make_view()], [det], SCHEMA)
        msgs = "\n".join(report.messages())
        assert "view index 3" in msgs and "category 9" in msgs

    def test_box_outside_image(self):
        det = Detection(0, 0, BBox2D(100, 100, 200, 200), 0.5)
        report = validate(make_cloud(), [make_view()], [det], SCHEMA)
        assert any("does not intersect" in m for m in report.messages())

    def test_duplicate_schema_names(self):
        schema = LabelSchema(("leg", "leg"), "chair")
        report = validate(make_cloud(), [], [], schema)
        assert any("unique" in m for m in report.messages())


class TestPointCloud:
    def test_create_renormalizes(self):
        cloud = PointCloud.create([[0, 0, 0]], [[1, 0, 0]], [[0, 0, 5.0]])
        assert np.allclose(cloud.normals[0], [0, 0, 1])

    def test_create_rejects_zero_normal(self):
        with pytest.raises(ValueError, match="zero normal at point 0"):
            PointCloud.create([[0, 0, 0]], [[1, 0, 0]], [[0, 0, 0]])

    def test_create_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            PointCloud.create([[np.nan, 0, 0]], [[1, 0, 0]], [[0, 0, 1]])

    @settings(max_examples=50, deadline=None)
    @given(
        st.tuples(
            st.floats(-10, 10),
            st.floats(-10, 10),
            st.floats(-10, 10),
        ).filter(lambda v: sum(x * x for x in v) > 1e-12)
    )
    def test_renormalization_preserves_direction(self, n):
        cloud = PointCloud.create([[0, 0, 0]], [[0.5, 0.5, 0.5]], [list(n)])
        expect = np.asarray(n) / np.linalg.norm(n)
        assert np.abs(cloud.normals[0] - expect).max() < 1e-12

    def test_immutable(self):
        cloud = make_cloud()
        with pytest.raises(ValueError):
            cloud.positions[0, 0] = 1.0


class TestSchema:
    def test_unlabeled_is_one_past_last(self):
        assert SCHEMA.unlabeled == 2
        assert SCHEMA.num_categories == 2


class TestPartition:
    def test_requires_dense_nonempty_ids(self):
        with pytest.raises(ValueError):
            Partition(np.array([0, 2]), np.zeros((3, 1)))

    def test_from_assignment_means(self):
        feats = np.array([[0.0], [2.0], [4.0]])
        part = Partition.from_assignment(np.array([0, 0, 1]), feats)
        assert np.allclose(part.means, [[1.0], [4.0]])
        assert list(part.members(0)) == [0, 1]
        assert part.sizes.tolist() == [2, 1]


class TestSegmentationResult:
    def test_counts(self):
        res = SegmentationResult(
            np.array([0, 0, 1]),
            np.array([0, 0, 1]),
            np.array([0, 1]),
            np.array([1.0, 0.5]),
            np.array([2, 1]),
        )
        assert res.num_instances == 2


class TestBBox2D:
    def test_closed_membership(self):
        box = BBox2D(0, 0, 10, 10)
        assert box.contains(10, 5)
        assert not box.contains(11, 5)
