import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from irlsnet.cli import main
from irlsnet.scenarios import OUTPUT_FILES, ScenarioConfig, ScenarioError, rep_seed, run

QUICK = ["--epochs", "15", "--reps", "2"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_rerun_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "fig3_variance", "--seed", "7", *QUICK, "--out", str(tmp_path / d)]) == 0
    for name in OUTPUT_FILES:
        if name != "config.json":  # records its own output path
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_outputs(tmp_path):
    main(["run", "fig1_hetero_baseline", "--seed", "1", *QUICK, "--out", str(tmp_path / "a")])
    main(["run", "fig1_hetero_baseline", "--seed", "2", *QUICK, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "predictions.csv").read_bytes() != (tmp_path / "b" / "predictions.csv").read_bytes()


def test_fig1_predictions_layout(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "fig1_hetero_proposed", "--epochs", "5", "--reps", "10", "--out", str(out)]) == 0
    rows = read_csv(out / "predictions.csv")
    header = rows[0]
    assert header[:4] == ["x", "actual", "true_mean", "true_sigma"]
    assert [f"proposed_rep{i}" for i in range(10)] == [h for h in header if "_rep" in h]
    assert "proposed_avg" in header and "proposed_sigma_avg" in header
    assert len(rows) == 1001
    data = np.array(rows[1:], dtype=float)
    reps = data[:, [header.index(f"proposed_rep{i}") for i in range(10)]]
    np.testing.assert_allclose(reps.mean(axis=1), data[:, header.index("proposed_avg")], rtol=1e-12)


def test_resolved_config_written(tmp_path):
    out = tmp_path / "o"
    main(["run", "fig1_homo", *QUICK, "--out", str(out)])
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["noise_mode"] == "homoskedastic" and cfg["train_fraction"] == 0.05 and cfg["epochs"] == 15
    assert len(list((out / "traces").iterdir())) == 2


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"epochs": 4, "reps": 3, "seed": 5, "lr": 0.01}))
    out = tmp_path / "o"
    assert main(["run", "fig3_variance", "--config", str(conf), "--reps", "2", "--out", str(out)]) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert (cfg["epochs"], cfg["reps"], cfg["seed"], cfg["lr"]) == (4, 2, 5, 0.01)


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"epoch": 4}))
    assert main(["run", "fig3_variance", "--config", str(conf), "--out", str(tmp_path / "o")]) == 2
    assert "unknown config keys" in capsys.readouterr().err
    with pytest.raises(ScenarioError):
        ScenarioConfig.from_dict({"scenario": "fig3_variance", "lerning_rate": 1})


def test_missing_va_data_names_schema(tmp_path, capsys):
    assert main(["run", "table1_va", "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "va_gan2018.json" in err and "--synthetic" in err
    assert not (tmp_path / "o").exists()


def test_table1_synthetic_and_plot(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"synthetic_n": 3000, "synthetic_d": 6, "epochs": 3, "reps": 2, "mc_passes": 3}))
    out = tmp_path / "o"
    assert main(["run", "table1_va", "--synthetic", "--optimizer", "rmsprop", "--config", str(conf),
                 "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert [r["model"] for r in doc["reports"]] == ["proposed", "baseline", "mc_dropout"]
    assert all(r["optimizer"] == "rmsprop" and len(r["runs"]) == 2 for r in doc["reports"])
    header = read_csv(out / "predictions.csv")[0]
    assert header[0] == "row" and not any("_rep" in h for h in header)
    assert main(["plot", str(out)]) == 0
    ET.parse(out / "portfolio.svg")


def test_plot_fig3(tmp_path):
    out = tmp_path / "o"
    main(["run", "fig3_variance", *QUICK, "--out", str(out)])
    assert main(["plot", str(out)]) == 0
    root = ET.parse(out / "sigma.svg").getroot()
    assert root.tag.endswith("svg")
    text = ET.tostring(root, encoding="unicode")
    assert "true sigma" in text and "predicted sigma" in text
    ET.parse(out / "fit.svg")


def test_plot_empty_predictions(tmp_path, capsys):
    out = tmp_path / "o"
    main(["run", "fig3_variance", *QUICK, "--out", str(out)])
    (out / "predictions.csv").write_text("")
    assert main(["plot", str(out)]) == 2
    assert not list(out.glob("*.svg"))


def test_plot_missing_dir(tmp_path, capsys):
    assert main(["plot", str(tmp_path / "nope")]) == 2
    assert "predictions.csv" in capsys.readouterr().err


def test_validate_data(tmp_path, capsys):
    schema = tmp_path / "s.json"
    schema.write_text(json.dumps({"columns": {"a": "numeric", "g": "categorical", "y": "target"}}))
    good = tmp_path / "good.csv"
    good.write_text("a,g,y\n1,x,2\n3,z,4\n")
    assert main(["validate-data", str(good), "--schema", str(schema)]) == 0
    assert "2 rows" in capsys.readouterr().out
    bad = tmp_path / "bad.csv"
    bad.write_text("a,g,y\n1,x,2\nfoo,z,4\n")
    assert main(["validate-data", str(bad), "--schema", str(schema)]) == 2
    assert "row 3" in capsys.readouterr().err


def test_training_abort_exit_code(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"lr": 1e6, "optimizer": "sgdm", "epochs": 50, "reps": 1}))
    assert main(["run", "fig1_hetero_baseline", "--config", str(conf), "--out", str(tmp_path / "o")]) == 3
    assert "epoch" in capsys.readouterr().err


def test_rep_seeds_stable_under_rep_count():
    assert [rep_seed(3, i) for i in range(5)] == [rep_seed(3, i) for i in range(10)][:5]
    assert rep_seed(3, 0) != rep_seed(4, 0)
    a = run(ScenarioConfig("fig1_homo", reps=2, epochs=5, out="unused"))
    b = run(ScenarioConfig("fig1_homo", reps=3, epochs=5, out="unused"))
    for i in range(2):
        assert a.reports[0].runs[i] == b.reports[0].runs[i]
        np.testing.assert_array_equal(a.predictions[f"baseline_rep{i}"], b.predictions[f"baseline_rep{i}"])


def test_out_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("IRLSNET_OUT", str(tmp_path))
    assert ScenarioConfig("fig3_variance").resolved().out == str(tmp_path / "fig3_variance")
