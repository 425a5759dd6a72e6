"""Config parsing, serialization round-trips, and the command-line surface."""

import json

import pytest

from aircomp.cli import (
    ConfigError,
    ExperimentSpec,
    main,
    parse_config,
    serialize_config,
)
from aircomp.simulator import SimConfig


def test_empty_config_yields_one_default_experiment():
    for text in ("", "\n\n", "# just a comment\n"):
        spec = parse_config(text)
        assert list(spec.experiments) == ["default"]
        assert spec.experiments["default"] == SimConfig()


def test_parse_reads_sections_keys_and_comments():
    spec = parse_config(
        """
        [global]
        out = results  # directory for CSVs
        verbose = true

        [low_snr]
        scheme = proposed
        trials = 500   # fast
        snr_db_grid = -10, -5, 0
        seed = 9
        """
    )
    assert spec.out == "results"
    assert spec.verbose is True
    config = spec.experiments["low_snr"]
    assert config.trials == 500
    assert config.snr_db_grid == (-10.0, -5.0, 0.0)
    assert config.seed == 9


def test_parse_rejects_shrinking_power_ratio_with_line_number():
    with pytest.raises(ConfigError) as err:
        parse_config("[x]\npower_mode = geometric\nvarpi = 0.5\n")
    assert "line 3" in str(err.value)
    assert "varpi" in str(err.value)


def test_parse_rejects_unknown_key_with_line_number():
    with pytest.raises(ConfigError) as err:
        parse_config("[x]\ntrials = 10\nno_such_knob = 1\n")
    assert "line 3" in str(err.value)
    assert "no_such_knob" in str(err.value)


def test_parse_rejects_plane_subcarrier_mismatch():
    with pytest.raises(ConfigError) as err:
        parse_config("[x]\nbit_depth = 8\nnum_subcarriers = 4\n")
    assert "[x]" in str(err.value)
    assert "num_subcarriers" in str(err.value)


def test_parse_rejects_empty_snr_grid():
    with pytest.raises(ConfigError) as err:
        parse_config("[x]\nsnr_db_grid =\n")
    assert "line 2" in str(err.value)


def test_parse_rejects_structural_mistakes():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("trials = 10\n")
    with pytest.raises(ConfigError, match="duplicate section"):
        parse_config("[x]\n[x]\n")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config("[x]\ntrials = 1\ntrials = 2\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("[x]\nwhat is this\n")
    with pytest.raises(ConfigError, match="expected an integer"):
        parse_config("[x]\ntrials = soon\n")


def test_binary_ml_config_defaults_to_ml_detection():
    spec = parse_config("[x]\nscheme = binary_ml\n")
    assert spec.experiments["x"].detector == "ml"
    with pytest.raises(ConfigError):
        parse_config("[x]\nscheme = binary_ml\ndetector = lmmse\n")


def test_serialize_parse_round_trip():
    spec = ExperimentSpec(
        experiments={
            "a": SimConfig(trials=123, snr_db_grid=(0.0, 5.0)),
            "b": SimConfig(
                scheme="analog",
                analog_threshold=0.02,
                num_subcarriers=8,
                trials=50,
            ),
        },
        out="outdir",
        verbose=True,
    )
    text = serialize_config(spec)
    assert parse_config(text) == spec


def test_round_trip_covers_optional_fields():
    spec = ExperimentSpec(
        experiments={
            "g": SimConfig(source="gaussian", source_std=0.25, clamp=True)
        }
    )
    again = parse_config(serialize_config(spec))
    assert again.experiments["g"].source_std == 0.25
    assert again.experiments["g"].clamp is True
    assert again == spec


def test_sweep_command_reports_missing_config(capsys):
    rc = main(["sweep", "/no/such/file.ini"])
    assert rc == 1
    assert "not found" in capsys.readouterr().err


def test_sweep_command_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\nvarpi = 0.5\n")
    rc = main(["sweep", str(bad)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "line 2" in err


def test_sweep_command_writes_csv_per_experiment(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(
        "[first]\ntrials = 300\nsnr_db_grid = 0\n"
        "[second]\ntrials = 300\nsnr_db_grid = 10\n"
    )
    rc = main(["sweep", str(cfg), "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert (tmp_path / "first.csv").exists()
    assert (tmp_path / "second.csv").exists()
    assert "wrote" in out
    header = (tmp_path / "first.csv").read_text().splitlines()[1]
    assert header == "scheme,snr_db,nmse,stderr,mean_active,mean_p,trials,seed"


def test_sweep_command_is_reproducible(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[only]\ntrials = 400\nsnr_db_grid = 0 5\nseed = 2\n")
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["sweep", str(cfg), "--out", str(a)]) == 0
    assert main(["sweep", str(cfg), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep_flag_overrides_trials_and_seed(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[only]\ntrials = 400\nsnr_db_grid = 0\nseed = 2\n")
    out = tmp_path / "r.csv"
    assert main(["sweep", str(cfg), "--out", str(out), "--trials", "100", "--seed", "7"]) == 0
    meta = json.loads(out.read_text().splitlines()[0][2:])
    assert meta["trials"] == 100
    assert meta["seed"] == 7


def test_environment_variables_mirror_flags(tmp_path, monkeypatch):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[only]\ntrials = 400\nsnr_db_grid = 0\n")
    out_env = tmp_path / "env.csv"
    monkeypatch.setenv("AIRCOMP_TRIALS", "150")
    monkeypatch.setenv("AIRCOMP_SEED", "11")
    monkeypatch.setenv("AIRCOMP_OUT", str(out_env))
    assert main(["sweep", str(cfg)]) == 0
    meta = json.loads(out_env.read_text().splitlines()[0][2:])
    assert meta["trials"] == 150
    assert meta["seed"] == 11
    # explicit flags beat the environment
    out_flag = tmp_path / "flag.csv"
    assert main(["sweep", str(cfg), "--out", str(out_flag), "--trials", "60"]) == 0
    meta = json.loads(out_flag.read_text().splitlines()[0][2:])
    assert meta["trials"] == 60
    assert meta["seed"] == 11


def test_quick_flag_caps_trials(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[only]\ntrials = 100000\nsnr_db_grid = 0\n")
    out = tmp_path / "q.csv"
    assert main(["sweep", str(cfg), "--out", str(out), "--quick"]) == 0
    meta = json.loads(out.read_text().splitlines()[0][2:])
    assert meta["trials"] == 2000


def test_verify_quick_passes(capsys):
    rc = main(["verify", "--quick"])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.count("PASS") == 3
    assert "FAIL" not in out


def test_demo_prints_trace(capsys):
    rc = main(["demo", "--seed", "1", "--k", "3", "--b", "4"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "3 devices" in out
    assert "codewords" in out
    assert "decoded sum" in out
    # one row per subcarrier
    assert out.count("\n") > 8


def test_demo_analog_scheme(capsys):
    rc = main(["demo", "--scheme", "analog", "--k", "4", "--b", "4"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "estimate" in out
