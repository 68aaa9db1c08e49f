import csv
import io

import pytest

from aerosim import __version__
from aerosim.harness.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from aerosim.harness.config import (
    SCHEMA,
    ConfigError,
    default_config,
    format_config,
    parse_config,
    parse_config_text,
)
from aerosim.harness.presets import COLUMNS, PRESETS, run_preset, task_seed, worker_count

SMALL = """\
estimation.n_seeds = 2
estimation.pilot_overhead_pct = 10.0, 20.0
beams.snr_grid_db = 0.0, 12.0
beams.n_bits = 400
beams.frames_per_flight = 2
channel.pass_points = 11
access.snr_grid_db = 0.0
access.n_draws = 3
rl.sigma_m = 0.0
rl.episodes = 20
rl.n_checkpoints = 2
rl.n_seeds = 2
rl.n_eval = 2
run.threads = 1
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    cfg = parse_config(p)
    assert cfg == default_config()
    text = format_config(cfg)
    for f in SCHEMA:
        assert f"{f.key} = " in text


def test_print_parse_round_trip():
    cfg = default_config()
    assert parse_config_text(format_config(cfg)) == cfg
    small = parse_config_text(SMALL)
    assert parse_config_text(format_config(small)) == small


def test_cp_len_equal_fft_size_names_key():
    with pytest.raises(ConfigError) as e:
        parse_config_text("ofdm.cp_len = 64\n")
    assert e.value.key == "ofdm.cp_len"
    assert "ofdm.cp_len" in str(e.value)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as e:
        parse_config_text("# comment\n\nofdm.bogus = 3\n")
    assert e.value.line == 3 and e.value.key == "ofdm.bogus"


def test_malformed_line_reports_line():
    with pytest.raises(ConfigError) as e:
        parse_config_text("ofdm.fft_size = 64\nnot a setting\n")
    assert e.value.line == 2


def test_bad_value_and_duplicate_key():
    with pytest.raises(ConfigError):
        parse_config_text("ofdm.fft_size = sixty\n")
    with pytest.raises(ConfigError):
        parse_config_text("ofdm.fft_size = 64\nofdm.fft_size = 64\n")


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.cfg")


def test_task_seeds_are_deterministic_and_distinct():
    a = [task_seed(7, i) for i in range(100)]
    assert a == [task_seed(7, i) for i in range(100)]
    assert len(set(a)) == 100
    assert task_seed(8, 0) != task_seed(7, 0)


def test_thread_cap_from_environment(monkeypatch):
    cfg = default_config().replace(run__threads=8)
    monkeypatch.setenv("AEROSIM_THREADS", "2")
    assert worker_count(cfg, 100) == 2
    monkeypatch.delenv("AEROSIM_THREADS")
    assert worker_count(cfg, 3) == 3


@pytest.mark.parametrize("name", PRESETS)
def test_preset_columns_and_determinism(name, small_cfg, tmp_path):
    cfg = parse_config(small_cfg)
    csv1, meta = run_preset(name, cfg, 11, tmp_path / "a")
    csv2, _ = run_preset(name, cfg, 11, tmp_path / "b")
    data = csv1.read_bytes()
    assert data == csv2.read_bytes()
    assert b"\r" not in data
    rows = list(csv.reader(io.StringIO(data.decode())))
    assert tuple(rows[0]) == COLUMNS[name]
    assert len(rows) > 1 and all(len(r) == len(rows[0]) for r in rows)
    m = meta.read_text()
    assert "# seed = 11" in m and f"# version = {__version__}" in m
    assert parse_config_text(m) == cfg


def test_documented_columns():
    assert COLUMNS["nmse-vs-pilot"] == ("pilot_overhead_pct", "nmse_db_gmmv", "nmse_db_lmmse", "seeds")
    assert COLUMNS["ber-vs-snr"] == ("snr_db", "ber_ao", "ber_pgd", "ber_sshb", "bits")
    assert COLUMNS["robust-rl"] == ("episode", "var_dqn", "var_sac", "var_drsac")


def test_row_count_follows_grid(small_cfg, tmp_path):
    path, _ = run_preset("nmse-vs-pilot", parse_config(small_cfg), 0, tmp_path)
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert [r[0] for r in rows[1:]] == ["10", "20"]
    assert all(r[3] == "2" for r in rows[1:])


def test_unknown_preset_raises(tmp_path):
    with pytest.raises(KeyError):
        run_preset("nope", default_config(), 0, tmp_path)


def test_cli_version(capsys):
    assert main(["version"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == __version__


def test_cli_print_default_config(capsys):
    assert main(["print-default-config"]) == EXIT_OK
    assert parse_config_text(capsys.readouterr().out) == default_config()


def test_cli_run_success(small_cfg, tmp_path, capsys):
    code = main(["run", "--preset", "track-pass", "--config", str(small_cfg), "--seed", "5", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "track-pass.csv").exists() and (tmp_path / "track-pass.meta").exists()
    assert capsys.readouterr().out.strip().endswith("track-pass.csv")


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("ofdm.cp_len = 64\n")
    assert main(["run", "--preset", "track-pass", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_usage_error_exit_code():
    assert main(["run", "--preset", "track-pass"]) == EXIT_CONFIG
    assert main(["run", "--preset", "unknown", "--out", "x"]) == EXIT_CONFIG
    assert main(["run", "--preset", "track-pass", "--seed", "-1", "--out", "x"]) == EXIT_CONFIG


def test_cli_runtime_failure_on_unwritable_output(small_cfg, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["run", "--preset", "track-pass", "--config", str(small_cfg), "--out", str(blocker / "sub")])
    assert code == EXIT_RUNTIME


def test_output_independent_of_worker_count(small_cfg, tmp_path):
    cfg = parse_config(small_cfg)
    a, _ = run_preset("sumrate-access", cfg, 3, tmp_path / "one")
    b, _ = run_preset("sumrate-access", cfg.replace(run__threads=2), 3, tmp_path / "two")
    assert a.read_bytes() == b.read_bytes()
