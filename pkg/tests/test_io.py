"""Artifact serialization: CSV round trips, JSON schema, determinism."""

import json

import numpy as np
import pytest

from posctrl.equilibrium import closed_loop_equilibrium
from posctrl.io import read_trajectory_csv, write_report_json, write_trajectory_csv
from posctrl.model import Scenario
from posctrl.sim import integrate
from posctrl.verify import SampleDomain, check_h2

from test_sim import make_trajectory


class TestTrajectoryCsv:
    def test_header_and_line_count(self, tmp_path):
        tr = make_trajectory([0.0, 1.0, 2.0], [[1.0], [1.0], [1.0]])
        path = tmp_path / "tiny.csv"
        write_trajectory_csv(tr, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "t,x1,u"

    def test_lf_endings(self, tmp_path):
        tr = make_trajectory([0.0, 1.0, 2.0], [[1.0], [1.0], [1.0]])
        path = tmp_path / "tiny.csv"
        write_trajectory_csv(tr, path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")

    def test_roundtrip_exact(self, s3, tmp_path):
        tr = integrate(s3, Scenario.open_loop(1.0), [1.0, 1.0, 1.0], 0.0, 10.0)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(tr, path)
        times, states, inputs = read_trajectory_csv(path)
        np.testing.assert_array_equal(times, tr.times)
        np.testing.assert_array_equal(states, tr.states)
        np.testing.assert_array_equal(inputs, tr.inputs)

    def test_switched_input_column(self, s2, tmp_path):
        tr = integrate(s2, Scenario.switched(1.0, 2.0, 40.0), [0.5, 0.5, 0.5],
                       0.0, 50.0)
        path = tmp_path / "sw.csv"
        write_trajectory_csv(tr, path)
        times, states, inputs = read_trajectory_csv(path)
        assert np.all(inputs[times < 40.0] == 1.0)
        expected_after = np.array([2.0 * s2.psi(x) for x in states[times >= 40.0]])
        np.testing.assert_array_equal(inputs[times >= 40.0], expected_after)


class TestReportJson:
    def test_verification_schema(self, s3, tmp_path):
        rep = check_h2(s3, SampleDomain.cube(3, 10.0, random_count=50),
                       betas=[2.0, 5.0])
        path = tmp_path / "report.json"
        write_report_json(rep, path)
        data = json.loads(path.read_text())
        assert data["schema_version"] == 1
        assert data["kind"] == "verification"
        assert data["model"] == "S3"
        assert abs(data["beta_m"] - 1.7125047093879509) < 1e-12
        assert data["passed"] is True
        assert [c["id"] for c in data["checks"]] == [
            "H2-1", "H2-2", "H2-3", "H2-4", "H2-5", "H2-6"]

    def test_infeasible_beta_m_encoding(self, tmp_path):
        from posctrl.expr import parse_model_file

        m = parse_model_file(
            "system z\ndim 1\nf1 = 0*x1 - 1\nc = [0]\npsi = 1\n")
        rep = check_h2(m, SampleDomain.cube(1, 5.0, random_count=10))
        path = tmp_path / "rep.json"
        write_report_json(rep, path)
        data = json.loads(path.read_text())
        assert data["beta_m"] == "infeasible"
        assert not data["passed"]

    def test_counterexamples_are_arrays(self, tmp_path):
        from posctrl.expr import parse_model_file

        m = parse_model_file(
            "system bad\ndim 2\nf1 = 0*x1 - 1\nf2 = -x2\nc = [1, 1]\npsi = 1\n")
        rep = check_h2(m, SampleDomain.cube(2, 5.0, random_count=10))
        path = tmp_path / "rep.json"
        write_report_json(rep, path)
        data = json.loads(path.read_text())
        ces = [c["counterexamples"] for c in data["checks"] if c["id"] == "H2-2"][0]
        assert isinstance(ces[0]["x"], list)

    def test_equilibrium_report(self, s1, tmp_path):
        res = closed_loop_equilibrium(s1, 0.25)
        path = tmp_path / "eq.json"
        write_report_json(res, path, model="S1",
                          input={"mode": "closed_loop", "gamma": 0.25})
        data = json.loads(path.read_text())
        np.testing.assert_allclose(data["x_star"], [1.0, 4.0], atol=1e-10)
        assert data["residual"] <= 1e-10 * 2.0
        assert data["method"] == "newton"

    def test_byte_identical_across_writes(self, s3, tmp_path):
        rep = check_h2(s3, SampleDomain.cube(3, 10.0, random_count=50),
                       betas=[2.0])
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_report_json(rep, p1)
        rep2 = check_h2(s3, SampleDomain.cube(3, 10.0, random_count=50),
                        betas=[2.0])
        write_report_json(rep2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unserializable_rejected(self, tmp_path):
        with pytest.raises(TypeError):
            write_report_json(object(), tmp_path / "x.json")
