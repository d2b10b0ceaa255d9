import csv
import hashlib
import json
from pathlib import Path

import pytest

from driftsync.cli import RUN_LOG_COLUMNS, SWEEP_COLUMNS, main
from driftsync.config import ConfigError, dump_config, load_config, parse_config

MINIMAL = """\
m = 1
T = 10
stream.kind = rotating_hyperplane
learner.model = linear
strategy.kind = none
"""

SMALL_DYNAMIC = """\
# 4 learners, short dynamic run used for golden checksums
m = 4
T = 200
seed = 11
stream.kind = gaussian_xor
stream.cluster_sd = 0.7
learner.model = kernel
learner.learn_rate = 0.5
learner.reg = 0.01
learner.compression = truncate
learner.budget = 30
kernel.kind = gaussian
kernel.bandwidth = 1.0
strategy.kind = dynamic
strategy.delta = 0.5
"""

# sha256 of the files written by `run` on SMALL_DYNAMIC, generated once by the reference run
GOLDEN = {
    "run_log.csv": "926b2f77abe461ca1d42ee607cf9fb9c8b2b438732a0cb968926268987faa553",
    "summary.txt": "a69397e45dd6cbd2af75823cd107f12f445641fc418e6344286ae4f26e39ff2a",
    "series.dat": "a334b8a510515272bf0c1fe7428f7bef0da097b057444c749450317feb4b8466",
}


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# config parsing

def test_parse_minimal():
    cfg = parse_config(MINIMAL)
    assert cfg.m == 1 and cfg.T == 10 and cfg.linear and cfg.strategy.kind == "none"


@pytest.mark.parametrize("text, line, key", [
    (MINIMAL + "strategy.delta = abc\n", 6, "strategy.delta"),
    (MINIMAL + "bogus.key = 1\n", 6, "bogus.key"),
    (MINIMAL + "m = 2\n", 6, "m"),
    ("m = 1\nT 10\n", 2, None),
])
def test_parse_errors_have_lines(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert info.value.key == key
    assert f"line {line}" in str(info.value)


def test_missing_required_key_is_named():
    with pytest.raises(ConfigError, match="learner.model"):
        parse_config(MINIMAL.replace("learner.model = linear\n", ""))
    with pytest.raises(ConfigError, match="strategy.delta"):
        parse_config(MINIMAL.replace("none", "dynamic"))
    with pytest.raises(ConfigError, match="learner.budget"):
        parse_config(SMALL_DYNAMIC.replace("learner.budget = 30\n", ""))


def test_invalid_values_point_at_section():
    with pytest.raises(ConfigError) as info:
        parse_config(SMALL_DYNAMIC.replace("strategy.delta = 0.5", "strategy.delta = -1"))
    assert info.value.line is not None


def test_csv_costs_need_explicit_sizes():
    text = MINIMAL.replace("rotating_hyperplane", "csv") + "stream.path = x.csv\ncosts.bytes_per_coeff = 4\n"
    with pytest.raises(ConfigError, match="bytes_per_sv"):
        parse_config(text)


def test_dump_round_trip():
    for text in (MINIMAL, SMALL_DYNAMIC):
        cfg = parse_config(text)
        assert parse_config(dump_config(cfg)) == cfg


def test_reference_config_loads():
    cfg = load_config(Path(__file__).parents[1] / "configs" / "reference.cfg")
    assert cfg.m == 4 and cfg.T == 1000 and cfg.strategy.kind == "dynamic"


# cli

def test_run_minimal_has_zero_communication(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, MINIMAL), "--out", str(out)]) == 0
    assert "cum_bytes = 0" in capsys.readouterr().out
    rows = read_csv(out / "run_log.csv")
    assert list(rows[0].keys()) == list(RUN_LOG_COLUMNS)
    assert len(rows) == 10


def test_run_outputs_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write(tmp_path, SMALL_DYNAMIC), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    names = {a["file"] for a in manifest["artifacts"]}
    assert names == {"run_log.csv", "summary.txt", "series.dat"}
    for a in manifest["artifacts"]:
        assert hashlib.sha256((out / a["file"]).read_bytes()).hexdigest() == a["sha256"]
    rows = read_csv(out / "run_log.csv")
    assert len(rows) == 200
    # round trip: every column parses back to the documented types
    for r in rows:
        int(r["t"]), int(r["theta"]), int(r["violations"]), int(r["bytes_up"]), int(r["bytes_down"])
        float(r["cum_loss"]), int(r["cum_error"]), float(r["mean_sv_count"]), float(r["divergence_at_check"])
    summary = (out / "summary.txt").read_text()
    total = sum(int(r["bytes_up"]) + int(r["bytes_down"]) for r in rows)
    assert f"cum_bytes = {total}" in summary
    assert "FAIL" not in summary


def test_run_golden_checksums(tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", write(tmp_path, SMALL_DYNAMIC, "small.cfg"), "--out", str(out)])
    got = {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in GOLDEN}
    assert got == GOLDEN


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, SMALL_DYNAMIC)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "12"])
    assert (tmp_path / "a" / "run_log.csv").read_bytes() != (tmp_path / "b" / "run_log.csv").read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = write(tmp_path, MINIMAL.replace("learner.model = linear\n", ""))
    assert main(["run", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "learner.model" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["sweep", "--config", write(tmp_path, MINIMAL, "m.cfg"), "--axis", "delta",
                 "--values", "1", "--out", str(tmp_path / "o")]) == 2
    assert main(["sweep", "--config", write(tmp_path, SMALL_DYNAMIC, "d.cfg"), "--axis", "delta",
                 "--values", "x", "--out", str(tmp_path / "o")]) == 2


def test_numeric_failure_exit_3(tmp_path, capsys):
    text = MINIMAL + "learner.loss = squared\nlearner.learn_rate = 1e200\n"
    text = text.replace("T = 10", "T = 50")
    assert main(["run", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 3
    assert "round" in capsys.readouterr().err


def test_single_value_sweep_matches_run(tmp_path):
    cfg = write(tmp_path, SMALL_DYNAMIC)
    main(["run", "--config", cfg, "--out", str(tmp_path / "r")])
    main(["sweep", "--config", cfg, "--axis", "delta", "--values", "0.5", "--out", str(tmp_path / "s")])
    (row,) = read_csv(tmp_path / "s" / "sweep.csv")
    assert list(row.keys()) == list(SWEEP_COLUMNS)
    summary = dict(line.split(" = ", 1) for line in (tmp_path / "r" / "summary.txt").read_text().splitlines())
    for col in ("cum_loss", "cum_error", "cum_bytes", "violations", "quiescence_round"):
        assert row[col] == summary[col]


def test_sweep_threads_do_not_change_output(tmp_path, monkeypatch):
    cfg = write(tmp_path, SMALL_DYNAMIC)
    args = ["sweep", "--config", cfg, "--axis", "delta", "--values", "2,0.1,0.5"]
    monkeypatch.setenv("DRIFTSYNC_THREADS", "1")
    main(args + ["--out", str(tmp_path / "a")])
    monkeypatch.setenv("DRIFTSYNC_THREADS", "3")
    main(args + ["--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    assert [r["value"] for r in read_csv(tmp_path / "a" / "sweep.csv")] == ["2", "0.1", "0.5"]


def test_tau_sweep_compression_error_shrinks(tmp_path):
    cfg = write(tmp_path, SMALL_DYNAMIC.replace("learner.reg = 0.01", "learner.reg = 0.1"))
    assert main(["sweep", "--config", cfg, "--axis", "tau", "--values", "10,20,50",
                 "--out", str(tmp_path / "s")]) == 0
    errs = [float(r["mean_compression_error"]) for r in read_csv(tmp_path / "s" / "sweep.csv")]
    assert errs[0] >= errs[1] >= errs[2]


def test_period_sweep(tmp_path):
    text = SMALL_DYNAMIC.replace("strategy.kind = dynamic\nstrategy.delta = 0.5\n",
                                 "strategy.kind = periodic\nstrategy.period = 1\n")
    main(["sweep", "--config", write(tmp_path, text), "--axis", "period", "--values", "1,5,25",
          "--out", str(tmp_path / "s")])
    rows = read_csv(tmp_path / "s" / "sweep.csv")
    b = [int(r["cum_bytes"]) for r in rows]
    assert b[0] >= b[1] >= b[2] > 0
    assert (tmp_path / "s" / "sweep.dat").read_text().startswith("# value")


def test_verify_none_strategy_passes(tmp_path, capsys):
    assert main(["verify", "--config", write(tmp_path, MINIMAL)]) == 0
    out = capsys.readouterr().out
    assert "PASS no communication: 0 <= 0" in out


def test_verify_dynamic_passes(tmp_path, capsys):
    assert main(["verify", "--config", write(tmp_path, SMALL_DYNAMIC)]) == 0
    out = capsys.readouterr().out
    assert "PASS loss bound" in out and "FAIL" not in out


def test_verify_corrupted_ledger_fails(tmp_path, capsys):
    assert main(["verify", "--config", write(tmp_path, SMALL_DYNAMIC), "--corrupt-ledger"]) == 1
    out = capsys.readouterr().out
    assert "FAIL ledger replay" in out
    assert "lhs = " in out and "rhs = " in out
