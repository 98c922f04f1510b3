import json
import math

import pytest

from ncergodic import cli
from ncergodic.cli import ConfigError, ExperimentConfig, RunManifest, main, read_csv, report, run, write_csv

SMALL = {"algebra": {"blocks": [{"dim": 2, "weight": 1.0}]}, "seed_count": 3, "n_max": 2000}


def csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".json") and p.name != "manifest.json"}


def test_identities_smoke(tmp_path):
    code = main(["identities", "--dim", "2", "--seeds", "0:3", "--nmax", "2000", "--out", str(tmp_path)])
    assert code == 0
    for name in ("equivalence.csv", "abel.csv", "decomposition.csv", "manifest.json"):
        assert (tmp_path / name).exists()
    rows = read_csv(tmp_path / "abel.csv")
    assert {int(r["seed"]) for r in rows} == {0, 1, 2}


def test_same_config_gives_identical_outputs(tmp_path):
    outs = []
    for k in range(2):
        cfg = ExperimentConfig(experiment="converge", out=str(tmp_path / f"r{k}"), **SMALL)
        run(cfg)
        outs.append(csv_bytes(tmp_path / f"r{k}"))
    assert outs[0] == outs[1] and "trajectory.csv" in outs[0]


def test_manifest_contents(tmp_path):
    cfg = ExperimentConfig(experiment="gamma", out=str(tmp_path), seed_count=2, ngrid=[64, 256])
    manifest = run(cfg)
    loaded = RunManifest.load(tmp_path)
    assert loaded.config_hash == cfg.config_hash() == manifest.config_hash
    assert {f["path"] for f in loaded.files} == {"gamma.csv"}
    assert loaded.verdicts["net guarantee"]["passed"]


def test_config_hash_ignores_output_location():
    a = ExperimentConfig(out="a", workers=1)
    b = ExperimentConfig(out="b", workers=3)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seed_count=7).config_hash()


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(alpha=[1.2])
    with pytest.raises(ConfigError):
        ExperimentConfig(seed_count=0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(algebra={"blocks": [{"dim": 0}]})


def test_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig(experiment="bau", alpha=[0.3, 0.7], seed_count=4)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg


def test_checkpoints_include_early_index():
    cps = ExperimentConfig(n_max=100_000, ratio=10).checkpoints(100_000)
    assert cps == [1, 10, 100, 1000, 10_000, 100_000]
    assert 100 in ExperimentConfig(ratio=3).checkpoints(5000)


def test_crash_isolation(tmp_path, monkeypatch):
    original = cli._JOBS["identities"]

    def flaky(cfg, seed, alpha):
        if seed == 1:
            raise RuntimeError("injected")
        return original(cfg, seed, alpha)

    monkeypatch.setitem(cli._JOBS, "identities", flaky)
    manifest = run(ExperimentConfig(experiment="identities", out=str(tmp_path), **SMALL))
    assert [f["seed"] for f in manifest.failures] == [1]
    assert not manifest.passed
    assert {int(r["seed"]) for r in read_csv(tmp_path / "abel.csv")} == {0, 2}


def test_csv_rejects_non_finite(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ["a"], [(math.nan,)])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ["a"], [(math.inf,)])


def test_written_numbers_are_finite(tmp_path):
    run(ExperimentConfig(experiment="converge", out=str(tmp_path), **SMALL))
    for row in read_csv(tmp_path / "trajectory.csv"):
        assert math.isfinite(float(row["residual"]))


def test_empty_run_report(tmp_path):
    RunManifest({"experiment": "converge", "alpha": [0.5], "p": [2.0]}, "0", "0", [], {}, [], {}, {}).write(tmp_path)
    rep = report(tmp_path)
    assert rep["rows"] == 0 and rep["passed"]


def test_converge_report_fractions(tmp_path):
    run(ExperimentConfig(experiment="converge", out=str(tmp_path), **SMALL))
    rep = report(tmp_path)
    fractions = rep["tables"]["decrease_fraction"]
    assert len(fractions) == 6
    assert all(0.0 <= f["fraction"] <= 1.0 for f in fractions)
    assert {f["check"] for f in fractions} == set(rep["verdicts"])


def test_bau_report_sorted(tmp_path):
    run(ExperimentConfig(experiment="bau", out=str(tmp_path), eps=0.3, **SMALL))
    rows = report(tmp_path)["tables"]["certificates"]
    assert len(rows) == 6
    defects = [float(r["trace_defect_rel"]) for r in rows]
    assert defects == sorted(defects)
    certs = json.loads((tmp_path / "certificates.json").read_text())
    assert {"eps", "lambda", "trace_defect", "window", "sup_bound", "projection_rank_per_block"} <= set(certs[0])


def test_report_detects_missing_files(tmp_path):
    run(ExperimentConfig(experiment="gamma", out=str(tmp_path), seed_count=1, ngrid=[64, 128]))
    (tmp_path / "gamma.csv").unlink()
    with pytest.raises(FileNotFoundError):
        report(tmp_path)
    assert main(["report", "--out", str(tmp_path)]) == 1


def test_exit_codes(tmp_path, capsys):
    assert main(["identities", "--alpha", "1.5", "--out", str(tmp_path)]) == 1
    assert main(["converge", "--dim", "2", "--seeds", "0:2", "--nmax", "150", "--out", str(tmp_path / "c")]) in (0, 2)
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1


def test_report_cli_json(tmp_path, capsys):
    main(["gamma", "--seed", "4", "--ngrid", "64", "128", "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["experiment"] == "gamma"


def test_generic_run_subcommand(tmp_path):
    assert main(["run", "--experiment", "interp", "--seed", "0", "--ngrid", "128", "--p", "1.5", "2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "interp.csv")
    assert [float(r["p"]) for r in rows] == [1.5, 2.0]


def test_parallel_workers_match_serial(tmp_path):
    base = dict(experiment="identities", algebra=SMALL["algebra"], seed_count=3, n_max=500)
    run(ExperimentConfig(out=str(tmp_path / "serial"), **base))
    run(ExperimentConfig(out=str(tmp_path / "pool"), workers=2, **base))
    assert csv_bytes(tmp_path / "serial") == csv_bytes(tmp_path / "pool")


def test_sample_and_tails_experiments(tmp_path):
    run(ExperimentConfig(experiment="sample", out=str(tmp_path / "s"), seed_count=2, n_max=300))
    assert (tmp_path / "s" / "hits_a0.5_s1.json").exists()
    m = run(ExperimentConfig(experiment="tails", out=str(tmp_path / "t"), trials=100, ngrid=[64, 256], seed_count=20, n_max=5000))
    assert m.verdicts["tail tallies consistent"]["passed"]
    tails = json.loads((tmp_path / "t" / "tails.json").read_text())
    assert set(tails["0.5"]["boundedness_N1"]) == {"0.2", "0.5", "1"}


def test_report_detects_corrupted_files(tmp_path):
    run(ExperimentConfig(experiment="gamma", out=str(tmp_path), seed_count=1, ngrid=[64, 128]))
    assert report(tmp_path)["rows"] == len(read_csv(tmp_path / "gamma.csv")) > 0
    with open(tmp_path / "gamma.csv", "a") as fh:
        fh.write("0,0,0\n")
    with pytest.raises(ValueError):
        report(tmp_path)
    assert main(["report", "--out", str(tmp_path)]) == 1
