import json
import os

import pandas as pd
import pytest

from scripts.fes import main
from scripts.filename import create_file_name
from utils.process_flags import get_parser, manage_experiment_configuration


def run(tmp_path, *argv):
    out = str(tmp_path / "run")
    code = main(list(argv) + ["--out", out])
    return code, out


def read(path):
    with open(path) as f:
        return json.load(f)


def test_check_compatible(tmp_path):
    code, out = run(tmp_path, "check", "--mesh", "triangle", "--order", "2")
    assert code == 0
    report = read(out + ".json")
    assert report["compatible"] is True
    assert report["failing_cells"] == []


def test_check_counterexample(tmp_path):
    code, out = run(tmp_path, "check", "--mesh", "counterexample_triangle")
    assert code == 1
    assert read(out + ".json")["failing_cells"] == ["0-1-2"]


def test_malformed_mesh(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    code, _ = run(tmp_path, "check", "--mesh", str(path))
    assert code == 2


def test_configuration_errors(tmp_path):
    assert run(tmp_path, "check")[0] == 2
    assert run(tmp_path, "eig", "--mesh", "triangle", "--k", "5")[0] == 2
    assert run(tmp_path, "tensor-check", "--mesh", "triangle")[0] == 2
    assert run(tmp_path, "check", "--mesh", "triangle", "--threads", "0")[0] == 2


def test_unknown_flag():
    with pytest.raises(SystemExit) as err:
        main(["check", "--mesh", "triangle", "--no-such-flag"])
    assert err.value.code == 2


def test_betti(tmp_path):
    code, out = run(tmp_path, "betti", "--mesh", "annulus")
    assert code == 0
    report = read(out + ".json")
    assert report["betti"] == [1, 1, 0]
    assert report["discrete"]["verdict"] is True


def test_basis_with_dofs(tmp_path):
    code, out = run(tmp_path, "basis", "--mesh", "triangle", "--order", "2", "--k", "1")
    assert code == 0
    report = read(out + ".json")
    assert report["bases"]["1"]["dim"] == 8
    assert len(read(out + "_dofs.json")) == 8


def test_dual(tmp_path):
    code, out = run(tmp_path, "dual", "--mesh", "two_triangles")
    assert code == 0
    assert os.path.exists(out + "_dual_mesh.json")
    bases = read(out + "_harmonic_basis.json")
    report = read(out + ".json")
    assert [bases[str(k)]["dim"] for k in range(3)] == report["dual_counts"]
    assert all(report["rho_identity"].values())


def test_eig(tmp_path):
    code, out = run(tmp_path, "eig", "--mesh", "square2", "--k", "1", "--count", "3")
    assert code == 0
    table = pd.read_csv(out + ".csv")
    assert len(table) == 3
    assert (table["eigenvalue"] > 0).all()
    assert os.path.exists(out + "_mass.txt")


def test_interp_test(tmp_path):
    code, out = run(tmp_path, "interp-test", "--mesh", "two_triangles", "--order", "2")
    assert code == 0
    report = read(out + ".json")
    assert report["faithful"] and report["verdict"]


def test_tensor_check(tmp_path):
    code, out = run(tmp_path, "tensor-check", "--mesh", "interval_x_interval", "--order", "2")
    assert code == 0
    assert all(read(out + ".json")["verdict"].values())


def test_smooth_test(tmp_path):
    code, out = run(tmp_path, "smooth-test", "--mesh", "square2")
    assert code == 0
    report = read(out + ".json")
    assert report["residuals"]["locality"] == 0.0
    assert len(report["scale_bounds"]) == 2
    assert os.path.exists(out + "_kernel.csv")


def test_outputs_are_deterministic(tmp_path):
    first = str(tmp_path / "first")
    second = str(tmp_path / "second")
    assert main(["check", "--mesh", "annulus", "--out", first]) == 0
    assert main(["check", "--mesh", "annulus", "--threads", "4", "--out", second]) == 0
    with open(first + ".json") as a, open(second + ".json") as b:
        assert a.read() == b.read()


def test_default_file_name():
    args = get_parser().parse_args(["eig", "--mesh", "triangle", "--k", "1", "--seed", "3"])
    args = manage_experiment_configuration(args)
    assert args.out == os.path.join("results", "eig_mesh=triangle_trimmed=1_k=1_count=6_seed=3")
    assert create_file_name(args) == args.out
