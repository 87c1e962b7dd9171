import csv

import pytest

from lidarpp.cli import main

SCENE = "[scene]\nname = two_surface\nn_rows = 9\nn_cols = 9\nn_bins = 600\nattack = 8\ndecay = 30\n"


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ini = root / "scene.ini"
    ini.write_text(SCENE)
    assert main(["generate", "--config", str(ini), "--seed", "1", "--out", str(root / "gen")]) == 0
    return root


def reconstruct(root, name, *extra):
    gen = root / "gen"
    return main(["reconstruct", str(gen / "cube.txt"), str(gen / "irf.txt"), "--seed", "4",
                 "--iters", "1500", "--out", str(root / name), *extra])


def test_generate_writes_inputs_and_truth(generated):
    names = {p.name for p in (generated / "gen").iterdir()}
    assert names == {"cube.txt", "irf.txt", "truth_points.csv", "truth_background.csv", "config.ini"}


def test_reconstruct_then_evaluate(generated, capsys):
    assert reconstruct(generated, "rec", "--export-ply", "--export-diagnostics") == 0
    rec = generated / "rec"
    for f in ("points.csv", "points.ply", "background.csv", "k_return.csv", "config.ini",
              "diagnostics.csv", "trace.csv"):
        assert (rec / f).exists(), f
    assert not any(p.name.startswith(".staging") for p in rec.iterdir())
    assert main(["evaluate", str(rec), str(generated / "gen"), "--gate", "0", "300",
                 "--out", str(generated / "ev")]) == 0
    with open(generated / "ev" / "metrics.csv") as fh:
        metrics = {r["metric"]: float(r["value"]) for r in csv.DictReader(fh)}
    assert set(metrics) == {"n_truth", "n_estimate", "nmse_background", "nmse_target"}
    assert metrics["n_estimate"] > 0
    assert "F_true(20)" in capsys.readouterr().out


def test_config_echo_reproduces_run(generated):
    assert reconstruct(generated, "a") == 0
    gen = generated / "gen"
    assert main(["reconstruct", str(gen / "cube.txt"), str(gen / "irf.txt"),
                 "--config", str(generated / "a" / "config.ini"), "--out", str(generated / "b")]) == 0
    for f in ("points.csv", "background.csv", "k_return.csv"):
        assert (generated / "a" / f).read_bytes() == (generated / "b" / f).read_bytes(), f


def test_zero_iterations_fails_without_output(generated, capsys):
    assert reconstruct(generated, "zero", "--iters", "0") == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error: ValueError: ")
    assert not (generated / "zero").exists()


def test_bad_input_reports_one_error_line(tmp_path, capsys):
    bad = tmp_path / "cube.txt"
    bad.write_text("not a cube\n")
    assert main(["reconstruct", str(bad), str(bad), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ")


def test_output_directory_from_environment(generated, tmp_path, monkeypatch):
    monkeypatch.setenv("LIDARPP_OUT", str(tmp_path / "env"))
    gen = generated / "gen"
    assert main(["baseline", str(gen / "cube.txt"), str(gen / "irf.txt")]) == 0
    assert (tmp_path / "env" / "points.csv").exists()
