import json

import numpy as np
import pytest

from elastopoint import (
    ParseError,
    PointCloud,
    build_query_set,
    build_tet_mesh,
    delaunay3d,
    load_displacement_field,
    load_point_cloud,
    load_query_set,
    load_tet_mesh,
    save_displacement_field,
    save_point_cloud,
    save_query_set,
    save_tet_mesh,
    tet_mesh_roundtrip,
)
from elastopoint.io import dumps_17g, fmt17

RIGHT_CORNER = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


class TestFmt17:
    def test_round_trips_awkward_floats(self):
        for x in (0.1, 1 / 3, np.pi, 1e-300, -7.25, 2.0**52 + 1):
            assert float(fmt17(x)) == x

    def test_dumps_17g_nested(self):
        blob = dumps_17g({"a": [0.1, {"b": (1, 2.5)}], "c": None, "d": True})
        parsed = json.loads(blob)
        assert parsed["a"][0] == 0.1
        assert parsed["a"][1]["b"] == [1, 2.5]
        assert parsed["c"] is None
        assert parsed["d"] is True


class TestPointCloudIO:
    def test_xyz_four_point_file(self, tmp_path):
        p = tmp_path / "t.xyz"
        p.write_text("0 0 0\n1 0 0\n0 1 0\n0 0 1\n")
        pc = load_point_cloud(p)
        np.testing.assert_array_equal(pc.points, RIGHT_CORNER)
        assert pc.source_id == "t"

    def test_parse_error_names_line(self, tmp_path):
        p = tmp_path / "bad.xyz"
        p.write_text("0 0 0\na b c\n1 1 1\n2 2 2\n")
        with pytest.raises(ParseError) as err:
            load_point_cloud(p)
        assert err.value.line == 2

    def test_too_few_points_rejected(self, tmp_path):
        p = tmp_path / "small.xyz"
        p.write_text("0 0 0\n1 1 1\n")
        with pytest.raises(ParseError, match="degenerate cloud"):
            load_point_cloud(p)

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        pc = PointCloud(rng.normal(size=(1024, 3)), label="sphere", source_id="s9")
        path = tmp_path / "cloud.xyz"
        save_point_cloud(pc, path)
        back = load_point_cloud(path)
        np.testing.assert_array_equal(back.points, pc.points)
        assert back.label == "sphere"
        assert back.source_id == "s9"

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        p = tmp_path / "c.xyz"
        p.write_text("# header\n\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n")
        assert load_point_cloud(p).n == 4

    def test_ascii_ply(self, tmp_path):
        p = tmp_path / "c.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 4\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
        )
        pc = load_point_cloud(p)
        np.testing.assert_array_equal(pc.points, RIGHT_CORNER)

    def test_binary_ply_rejected(self, tmp_path):
        p = tmp_path / "c.ply"
        p.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n")
        with pytest.raises(ParseError, match="ASCII"):
            load_point_cloud(p)

    def test_truncated_ply_body(self, tmp_path):
        p = tmp_path / "c.ply"
        p.write_text("ply\nformat ascii 1.0\nelement vertex 9\nend_header\n0 0 0\n")
        with pytest.raises(ParseError, match="truncated"):
            load_point_cloud(p)


class TestTetMeshIO:
    def test_single_tet_header_and_roundtrip(self, tmp_path):
        mesh = build_tet_mesh(RIGHT_CORNER, np.array([[0, 1, 2, 3]]))
        path = tmp_path / "one.tet"
        back = tet_mesh_roundtrip(mesh, path)
        assert path.read_text().splitlines()[0] == "tet 4 1"
        np.testing.assert_array_equal(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.cells, mesh.cells)
        np.testing.assert_array_equal(back.retained_map, mesh.retained_map)

    def test_large_mesh_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        mesh = delaunay3d(rng.normal(size=(60, 3)))
        assert mesh.n_cells > 200
        back = tet_mesh_roundtrip(mesh, tmp_path / "m.tet")
        np.testing.assert_array_equal(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.cells, mesh.cells)
        np.testing.assert_array_equal(back.retained_map, mesh.retained_map)

    def test_cell_index_out_of_range(self, tmp_path):
        p = tmp_path / "bad.tet"
        p.write_text("tet 4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 4\n")
        with pytest.raises(ParseError) as err:
            load_tet_mesh(p)
        assert err.value.line == 6
        assert "out of range" in str(err.value)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.tet"
        p.write_text("mesh 4 1\n")
        with pytest.raises(ParseError, match="header"):
            load_tet_mesh(p)

    def test_truncated_file(self, tmp_path):
        p = tmp_path / "bad.tet"
        p.write_text("tet 4 1\n0 0 0\n1 0 0\n")
        with pytest.raises(ParseError, match="truncated"):
            load_tet_mesh(p)


class TestFieldIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        u = rng.normal(size=(37, 3))
        path = tmp_path / "u.bin"
        save_displacement_field(u, path)
        np.testing.assert_array_equal(load_displacement_field(path), u)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "u.bin"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 8)
        with pytest.raises(ParseError, match="magic"):
            load_displacement_field(p)

    def test_size_mismatch(self, tmp_path):
        p = tmp_path / "u.bin"
        save_displacement_field(np.zeros((3, 3)), p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ParseError, match="bytes"):
            load_displacement_field(p)

    def test_rejects_wrong_shape(self, tmp_path):
        with pytest.raises(ValueError, match="shape"):
            save_displacement_field(np.zeros((5, 2)), tmp_path / "u.bin")


class TestQuerySetIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        pc = PointCloud(rng.uniform(-0.7, 0.7, size=(100, 3)))
        qs = build_query_set(pc, k=64, seed=9)
        path = tmp_path / "q.bin"
        save_query_set(qs, path)
        back = load_query_set(path)
        np.testing.assert_array_equal(back.positions, qs.positions)
        np.testing.assert_array_equal(back.distances, qs.distances)
        assert back.seed == qs.seed
        assert back.strategy == qs.strategy

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "q.bin"
        p.write_bytes(b"WRONG!!!" + b"\x00" * 40)
        with pytest.raises(ParseError, match="magic"):
            load_query_set(p)
