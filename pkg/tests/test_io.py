import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from kinedict import quat
from kinedict.errors import DataError
from kinedict.io import PoseDataset, dump_json, export, ingest, load_json


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestIngest:
    def test_axis_angle_row(self, tmp_path):
        ds = ingest(write(tmp_path, "a.csv", "0,0,0,1.5708\n"), "csv-axisangle")
        assert_allclose(ds.frames[0, 0], [0.7071, 0, 0, 0.7071], atol=1e-4)
        assert ds.frame_ids == ["0"]

    def test_negative_identity_canonicalized(self, tmp_path):
        ds = ingest(write(tmp_path, "q.csv", "f0,-1,0,0,0\n"), "csv-quat")
        assert_array_equal(ds.frames[0, 0], [1.0, 0, 0, 0])

    def test_header_names(self, tmp_path):
        text = "frame,hip_w,hip_x,hip_y,hip_z,knee_w,knee_x,knee_y,knee_z\n1,1,0,0,0,0,1,0,0\n"
        ds = ingest(write(tmp_path, "h.csv", text), "csv-quat")
        assert ds.joint_names == ["hip", "knee"]
        assert_array_equal(ds.joint("knee")[0], [0, 1.0, 0, 0])

    def test_jsonl(self, tmp_path):
        lines = [
            json.dumps({"frame": 0, "quat": {"a": [0, 0, 0, -2.0], "b": [1, 0, 0, 0]}}),
            json.dumps({"frame": 1, "rotvec": {"a": [0, 0, np.pi / 2], "b": [0, 0, 0]}}),
        ]
        ds = ingest(write(tmp_path, "d.jsonl", "\n".join(lines) + "\n"), "jsonl")
        assert_array_equal(ds.frames[0, 0], [0, 0, 0, 1.0])
        assert_allclose(ds.frames[1, 0], [np.sqrt(0.5), 0, 0, np.sqrt(0.5)], atol=1e-15)
        assert ds.joint_names == ["a", "b"]

    def test_bad_number_reports_line_and_column(self, tmp_path):
        p = write(tmp_path, "bad.csv", "0,1,0,0,0\n1,1,0,x,0\n")
        with pytest.raises(DataError) as exc:
            ingest(p, "csv-quat")
        assert exc.value.line == 2 and exc.value.column == 4
        assert str(exc.value).endswith("bad.csv:2:4: cannot parse 'x' as a number")

    def test_ragged_row(self, tmp_path):
        with pytest.raises(DataError) as exc:
            ingest(write(tmp_path, "r.csv", "0,1,0,0,0\n1,1,0,0\n"), "csv-quat")
        assert exc.value.line == 2

    def test_wrong_width(self, tmp_path):
        with pytest.raises(DataError):
            ingest(write(tmp_path, "w.csv", "0,1,0,0\n"), "csv-quat")

    def test_zero_quaternion(self, tmp_path):
        with pytest.raises(DataError) as exc:
            ingest(write(tmp_path, "z.csv", "0,1,0,0,0,0,0,0,0\n"), "csv-quat")
        assert exc.value.column == 6

    @pytest.mark.parametrize("text", ["", "\n\n"])
    def test_empty(self, tmp_path, text):
        with pytest.raises(DataError):
            ingest(write(tmp_path, "e.csv", text), "csv-quat")

    def test_missing_file_and_format(self, tmp_path):
        with pytest.raises(DataError):
            ingest(tmp_path / "nope.csv")
        with pytest.raises(DataError):
            ingest(write(tmp_path, "x.csv", "0,1,0,0,0\n"), "xml")

    def test_jsonl_errors(self, tmp_path):
        with pytest.raises(DataError) as exc:
            ingest(write(tmp_path, "j.jsonl", '{"quat": {"a": [1,0,0,0]}}\n{"quat": \n'), "jsonl")
        assert exc.value.line == 2
        with pytest.raises(DataError):
            ingest(write(tmp_path, "k.jsonl", '{"quat": {"a": [1,0,0]}}\n'), "jsonl")
        with pytest.raises(DataError):
            ingest(write(tmp_path, "m.jsonl", '{"quat": {"a": [1,0,0,0]}}\n{"quat": {"b": [1,0,0,0]}}\n'), "jsonl")


class TestRoundTrip:
    @pytest.mark.parametrize("fmt", ["csv-quat", "jsonl"])
    def test_lossless(self, tmp_path, rng, fmt):
        ds = PoseDataset(quat.random_uniform(rng, (20, 3)), ["a", "b", "c"], [str(i) for i in range(20)], fmt)
        export(ds, tmp_path / "out", fmt)
        back = ingest(tmp_path / "out", fmt)
        assert back.frames.tobytes() == ds.frames.tobytes()
        assert back.joint_names == ds.joint_names and back.frame_ids == ds.frame_ids
        export(back, tmp_path / "out2", fmt)
        assert (tmp_path / "out").read_bytes() == (tmp_path / "out2").read_bytes()

    def test_axis_angle(self, tmp_path, rng):
        ds = PoseDataset(quat.random_uniform(rng, (10, 2)), ["a", "b"], list("0123456789"), "csv-axisangle")
        export(ds, tmp_path / "aa.csv")
        back = ingest(tmp_path / "aa.csv", "csv-axisangle")
        assert np.max(quat.geodesic_distance(back.frames, ds.frames)) < 1e-12
        assert back.joint_names == ["a", "b"]

    def test_vectors(self, tmp_path, rng):
        ds = PoseDataset(rng.normal(size=(5, 10)), [f"b{i}" for i in range(10)], list("abcde"), "csv-vector")
        export(ds, tmp_path / "v.csv")
        back = ingest(tmp_path / "v.csv", "csv-vector")
        assert back.frames.tobytes() == ds.frames.tobytes()


def test_dump_json_deterministic(tmp_path):
    dump_json({"b": [0.1, 1 / 3], "a": {"z": 1, "y": 2}}, tmp_path / "a.json")
    dump_json({"a": {"y": 2, "z": 1}, "b": [0.1, 1 / 3]}, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert load_json(tmp_path / "a.json")["b"][1] == 1 / 3
    with pytest.raises(ValueError):
        dump_json({"x": float("nan")}, tmp_path / "c.json")
    (tmp_path / "d.json").write_text("{\n  oops\n}")
    with pytest.raises(DataError) as exc:
        load_json(tmp_path / "d.json")
    assert exc.value.line == 2
