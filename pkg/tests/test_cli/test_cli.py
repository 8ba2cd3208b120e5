import json

from infoprop.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, main


def test_simulate_writes_outputs(tmp_path, minimal_path, capsys):
    out = tmp_path / "run"

    code = main(
        ["simulate", "--scenario", str(minimal_path), "--mode", "distributed", "--out", str(out)]
    )

    assert code == EXIT_OK
    for name in ("output.json", "events.log", "sensors.csv", "travel_times.csv", "summary.json"):
        assert (out / name).exists()
    assert json.loads((out / "summary.json").read_text())["mode"] == "distributed"
    assert "minimal:" in capsys.readouterr().out


def test_validate(minimal_path, tmp_path, capsys):
    assert main(["validate", "--scenario", str(minimal_path)]) == EXIT_OK
    assert "valid" in capsys.readouterr().out

    broken = tmp_path / "broken.json"
    broken.write_text("{}")
    assert main(["validate", "--scenario", str(broken)]) == EXIT_ERROR


def test_usage_errors():
    assert main(["teleport"]) == EXIT_USAGE
    assert main(["simulate"]) == EXIT_USAGE
    assert main(["validate", "--scenario", "x.json", "--bogus"]) == EXIT_USAGE


def test_metrics_between_runs(tmp_path, minimal_path, capsys):
    main(["simulate", "--scenario", str(minimal_path), "--out", str(tmp_path / "a")])
    main(["simulate", "--scenario", str(minimal_path), "--out", str(tmp_path / "b")])
    capsys.readouterr()

    code = main(["metrics", "--ref", str(tmp_path / "a"), "--sim", str(tmp_path / "b")])

    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "RMSE" in printed and "counts" in printed


def experiment(out, minimal_path, *extra) -> int:
    return main(
        [
            "experiment",
            "--scenario", str(minimal_path),
            "--kind", "scale",
            "--levels", "0.8", "1.0",
            "--workers", "1",
            "--out", str(out),
            *extra,
        ]
    )


def test_experiment_runs_against_the_base(tmp_path, minimal_path, capsys):
    out = tmp_path / "exp"

    assert experiment(out, minimal_path) == EXIT_OK

    assert sorted(p.name for p in (out / "scenarios").iterdir()) == [
        "minimal-scale-0.8.json",
        "minimal-scale-1.json",
    ]
    for name in ("minimal", "minimal-scale-0.8", "minimal-scale-1"):
        assert (out / "runs" / name / "output.json").exists()
    assert (out / "metrics_scale.csv").exists()
    assert "scale:" in capsys.readouterr().out


def test_experiment_against_reference_runs(tmp_path, minimal_path):
    first = tmp_path / "first"
    experiment(first, minimal_path)

    second = experiment(tmp_path / "second", minimal_path, "--reference-dir", str(first / "runs"))
    missing = experiment(tmp_path / "third", minimal_path, "--reference-dir", str(tmp_path))

    assert second == EXIT_OK
    assert missing == EXIT_ERROR
