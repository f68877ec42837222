import json
from dataclasses import replace

import pytest

from lossdfl.cli import cell_name, run_cli, sweep_configs
from lossdfl.config import config_to_dict, parse_config
from lossdfl.engine import ClientEntry, ExperimentConfig, RoundRecord, run_experiment
from lossdfl.errors import ConfigError
from lossdfl.results import CSV_COLUMNS, read_rounds_csv, summary_table, write_rounds_csv

from oracles import mean_std

FAST = ["--rounds", "3", "--dim", "6", "--spread", "2"]


def test_empty_config_gives_defaults(tmp_path):
    (tmp_path / "empty.cfg").write_text("# nothing set\n")
    config = parse_config(tmp_path / "empty.cfg")
    assert config == ExperimentConfig()
    assert (config.clients, config.epochs, config.batch_size, config.rounds) == (6, 1, 16, 50)
    assert (config.learning_rate, config.lam, config.n_best) == (0.01, 0.25, 1)
    assert (config.loss_source, config.model) == ("val", "softmax")
    assert parse_config() == ExperimentConfig()


def test_flags_override_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("lambda = 0.25\nrounds = 7\nhidden = 8,4\nsharing = false\n")
    config = parse_config(path, {"lambda": 0.75})
    assert config.lam == 0.75 and config.rounds == 7
    assert config.hidden == (8, 4) and config.sharing is False


@pytest.mark.parametrize(
    "text, key",
    [
        ("lambda = 1.5\n", "lambda"),
        ("colour = red\n", "colour"),
        ("rounds = many\n", "rounds"),
        ("n_best = 0\n", "n_best"),
        ("sharing = maybe\n", "sharing"),
    ],
)
def test_config_errors_name_the_key(tmp_path, text, key):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.key == key
    assert key in str(info.value)


def test_cli_reports_config_errors(tmp_path, capsys):
    assert run_cli(["run", "--lambda", "1.5", "--out", str(tmp_path)]) == 2
    assert "lambda" in capsys.readouterr().err


def records_fixture():
    e = lambda cid, recv: ClientEntry(cid, 0.5 + cid, 0.25, 0.75, recv, 0.9, 0.8, 0.7, 1 / 3)
    return [RoundRecord(1, (e(1, (0,)), e(0, ())))]


def test_write_rounds_csv_format(tmp_path):
    path = tmp_path / "rounds.csv"
    write_rounds_csv(records_fixture(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[0] == "round,client,train_loss,val_loss,adjusted_loss,received_count,received_from,accuracy,precision,recall,f1"
    assert lines[1:] == [
        "1,0,0.500000,0.250000,0.750000,0,,0.900000,0.800000,0.700000,0.333333",
        "1,1,1.500000,0.250000,0.750000,1,0,0.900000,0.800000,0.700000,0.333333",
    ]
    with pytest.raises(ValueError):
        write_rounds_csv([], path)


def test_csv_round_trip(tmp_path):
    config = ExperimentConfig(rounds=3, dim=6, spread=2.0, n_best=5)
    records = run_experiment(config)
    path = tmp_path / "rounds.csv"
    write_rounds_csv(records, path)
    back = read_rounds_csv(path)
    assert len(path.read_text().splitlines()) == 1 + 3 * 6
    for a, b in zip(records, back):
        assert a.round == b.round
        for x, y in zip(a.entries, b.entries):
            assert x.client_id == y.client_id and x.received_from == y.received_from
            for name in ("train_loss", "val_loss", "adjusted_loss", "accuracy", "precision", "recall", "f1"):
                assert round(getattr(x, name), 6) == getattr(y, name)
    # summary from the CSV equals the summary of the printed values, and the
    # in-memory summary to printed precision
    table = summary_table(back)
    printed = [round(e.f1, 6) for e in records[-1].entries]
    assert (table["f1"]["mean"], table["f1"]["std"]) == pytest.approx(mean_std(printed), rel=1e-12)
    full = summary_table(records)
    for name in ("accuracy", "f1", "val_loss"):
        assert table[name]["mean"] == pytest.approx(full[name]["mean"], abs=1e-6)


def test_run_twice_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run_cli(["run", "--seed", "7", *FAST, "--out", str(tmp_path), "--name", name]) == 0
    a, b = ((tmp_path / n / "rounds.csv").read_bytes() for n in ("a", "b"))
    assert a == b
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 7 and manifest["config"]["lambda"] == 0.25
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["round"] == 3 and summary["clients"] == 6


def test_rerun_from_manifest(tmp_path):
    assert run_cli(["run", "--seed", "5", "--n-best", "5", *FAST, "--out", str(tmp_path), "--name", "orig"]) == 0
    manifest = tmp_path / "orig" / "manifest.json"
    assert run_cli(["run", "--config", str(manifest), "--out", str(tmp_path), "--name", "again"]) == 0
    assert (tmp_path / "orig" / "rounds.csv").read_bytes() == (tmp_path / "again" / "rounds.csv").read_bytes()
    stored = json.loads(manifest.read_text())["config"]
    assert parse_config(manifest) == parse_config(None, stored)
    assert stored == config_to_dict(parse_config(manifest))


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DFL_OUT", str(tmp_path / "envroot"))
    assert run_cli(["run", *FAST]) == 0
    assert (tmp_path / "envroot" / "lambda0.25_nbest1_clients6" / "rounds.csv").exists()


def test_unwritable_output_fails(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_cli(["run", *FAST, "--out", str(blocker)]) == 1
    assert "error" in capsys.readouterr().err


def test_default_sweep_grid():
    configs = sweep_configs(ExperimentConfig())
    assert len(configs) == 16
    cells = {(c.lam, c.n_best, c.clients) for c in configs}
    assert cells == {(l, n, c) for l in (0.0, 0.25, 0.5, 0.75) for n in (1, 5) for c in (6, 18)}
    assert len({cell_name(c) for c in configs}) == 16


def test_sweep_runs_and_resumes(tmp_path, capsys):
    args = ["sweep", *FAST, "--lambdas", "0,0.5", "--n-best-values", "1", "--client-values", "6", "--out", str(tmp_path)]
    assert run_cli(args) == 0
    cells = sorted(p.name for p in tmp_path.iterdir())
    assert cells == ["lambda0.5_nbest1_clients6", "lambda0_nbest1_clients6"]
    before = (tmp_path / cells[0] / "rounds.csv").read_bytes()
    capsys.readouterr()
    assert run_cli(args) == 0
    assert capsys.readouterr().out.count("skipping") == 2
    # a cell re-run on its own matches its in-sweep output
    assert run_cli(["run", *FAST, "--lambda", "0.5", "--out", str(tmp_path / "solo")]) == 0
    assert (tmp_path / "solo" / cells[0] / "rounds.csv").read_bytes() == before


def test_summarize_command(tmp_path, capsys):
    assert run_cli(["run", *FAST, "--out", str(tmp_path), "--name", "one"]) == 0
    capsys.readouterr()
    assert run_cli(["summarize", str(tmp_path / "one"), "--json"]) == 0
    table = json.loads(capsys.readouterr().out)
    records = read_rounds_csv(tmp_path / "one" / "rounds.csv")
    f1 = [e.f1 for e in records[-1].entries]
    assert (table["f1"]["mean"], table["f1"]["std"]) == pytest.approx(mean_std(f1), rel=1e-12)
    assert table["round"] == 3 and table["grouping"] == "clients"
    assert run_cli(["summarize", str(tmp_path)]) == 0
    assert "f1" in capsys.readouterr().out
    assert run_cli(["summarize", str(tmp_path / "missing")]) == 1


def test_csv_datasets_via_config(tmp_path):
    lines = ["a,b,label"] + [f"{i % 5}.0,{(i * 7) % 3}.5,{i % 2}" for i in range(40)]
    for name in ("p", "q"):
        (tmp_path / f"{name}.csv").write_text("\n".join(lines) + "\n")
    datasets = f"{tmp_path / 'p.csv'},{tmp_path / 'q.csv'}"
    config = parse_config(None, {"datasets": datasets, "clients": 4, "rounds": 2})
    records = run_experiment(config)
    assert len(records) == 2 and len(records[0].entries) == 4


def test_mlp_run(tmp_path):
    config = replace(ExperimentConfig(rounds=2, dim=6, spread=2.0), model="mlp", hidden=(8,))
    records = run_experiment(config)
    assert len(records[-1].entries) == 6
