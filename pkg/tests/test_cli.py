import json
import subprocess
import sys

import pytest

from qkdrelay import RelayConfig, link_metrics
from qkdrelay.cli import inclusive_grid, main, parse_sections


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def csv_rows(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


# ------------------------------------------------------------------- helpers

def test_parse_sections_forms():
    assert parse_sections("1..4") == [1, 2, 3, 4]
    assert parse_sections("4,5,6") == [4, 5, 6]
    assert parse_sections("7") == [7]


@pytest.mark.parametrize("spec", ["0..3", "3..1", "a", "1,0", ""])
def test_parse_sections_rejects_bad_specs(spec):
    from qkdrelay import InvalidParameterError
    with pytest.raises(InvalidParameterError):
        parse_sections(spec)


def test_inclusive_grid():
    assert inclusive_grid(0.0, 2.0, 1.0) == [0.0, 1.0, 2.0]
    assert inclusive_grid(5.0, 4.0, 1.0) == []
    assert len(inclusive_grid(0.02, 0.30, 0.01)) == 29


# ---------------------------------------------------------------- visibility

def test_visibility_csv_matches_model(capsys):
    code, out, _ = run_cli(capsys, "visibility", "--sections", "1..2",
                           "--dmin", "0", "--dmax", "2", "--dstep", "1")
    assert code == 0
    assert out.splitlines()[0] == "# alpha=0.25 eta=0.3 dark=0.0001 vopt=0.99"
    header, rows = csv_rows(out)
    assert header == ["n", "distance_km", "v_ab"]
    assert len(rows) == 6
    for n_s, d_s, v_s in rows:
        lm = link_metrics(RelayConfig(int(n_s), float(d_s)))
        assert float(v_s) == pytest.approx(lm.v_ab, rel=1e-9)


def test_visibility_intercepts_near_optics_power(capsys):
    code, out, _ = run_cli(capsys, "visibility", "--sections", "1..10",
                           "--dmin", "0", "--dmax", "0", "--dstep", "1")
    assert code == 0
    _, rows = csv_rows(out)
    for n_s, _, v_s in rows:
        assert float(v_s) == pytest.approx(0.99 ** int(n_s), abs=2e-2)


def test_visibility_empty_range_gives_header_only(capsys):
    code, out, _ = run_cli(capsys, "visibility", "--sections", "1..3",
                           "--dmin", "10", "--dmax", "0", "--dstep", "1")
    assert code == 0
    header, rows = csv_rows(out)
    assert header == ["n", "distance_km", "v_ab"]
    assert rows == []


def test_visibility_json_carries_params(capsys):
    code, out, _ = run_cli(capsys, "visibility", "--format", "json",
                           "--sections", "1", "--dmin", "0", "--dmax", "1",
                           "--dstep", "1")
    assert code == 0
    doc = json.loads(out)
    assert doc["params"] == {"alpha": 0.25, "eta": 0.3, "dark": 0.0001,
                             "vopt": 0.99}
    assert len(doc["rows"]) == 2


# ------------------------------------------------------------------- keyrate

def test_keyrate_columns_and_reverse_dominance(capsys):
    args = ["keyrate", "--sections", "1", "--dmin", "0", "--dmax", "100",
            "--dstep", "20"]
    code_f, out_f, _ = run_cli(capsys, *args, "--reconciliation", "forward")
    code_r, out_r, _ = run_cli(capsys, *args, "--reconciliation", "reverse")
    assert code_f == code_r == 0
    header, rows_f = csv_rows(out_f)
    _, rows_r = csv_rows(out_r)
    assert header == ["n", "distance_km", "rate_bits_per_pulse", "i_ab",
                      "i_ae", "i_be", "p_total"]
    for row_f, row_r in zip(rows_f, rows_r):
        assert float(row_r[2]) >= float(row_f[2])


def test_keyrate_reverse_needs_single_section(capsys):
    code, _, err = run_cli(capsys, "keyrate", "--sections", "1..2",
                           "--reconciliation", "reverse")
    assert code == 2
    assert "reverse" in err


def test_keyrate_empty_range_gives_header_only(capsys):
    code, out, _ = run_cli(capsys, "keyrate", "--sections", "1..5",
                           "--dmin", "50", "--dmax", "10", "--dstep", "5")
    assert code == 0
    header, rows = csv_rows(out)
    assert header == ["n", "distance_km", "rate_bits_per_pulse", "i_ab",
                      "i_ae", "i_be", "p_total"]
    assert rows == []


# ------------------------------------------------------------------- maxdist

def test_maxdist_both_methods(capsys):
    code, out, _ = run_cli(capsys, "maxdist", "--sections", "1..3",
                           "--method", "both")
    assert code == 0
    header, rows = csv_rows(out)
    assert header == ["n", "d_max_exact_km", "d_max_approx_km"]
    assert float(rows[0][1]) == pytest.approx(158.2, abs=0.5)
    assert float(rows[0][2]) == pytest.approx(99.09, abs=0.05)
    assert any(line.startswith("# summary:") for line in out.splitlines())


def test_maxdist_approx_only_leaves_exact_blank(capsys):
    code, out, _ = run_cli(capsys, "maxdist", "--sections", "1",
                           "--method", "approx")
    assert code == 0
    _, rows = csv_rows(out)
    assert rows[0][1] == ""
    assert float(rows[0][2]) == pytest.approx(99.09, abs=0.05)


def test_maxdist_json_summary(capsys):
    code, out, _ = run_cli(capsys, "maxdist", "--format", "json",
                           "--sections", "16..20", "--method", "exact")
    assert code == 0
    doc = json.loads(out)
    assert 16 <= doc["summary"]["n_star"] <= 20
    assert 600.0 <= doc["summary"]["d_max_km"] <= 700.0


def test_maxdist_poor_visibility_gives_zero_rows(capsys):
    code, out, _ = run_cli(capsys, "maxdist", "--vopt", "0.5",
                           "--sections", "1..2", "--method", "exact")
    assert code == 0
    _, rows = csv_rows(out)
    assert [float(r[1]) for r in rows] == [0.0, 0.0]


# ------------------------------------------------------------- detector sweep

def test_detector_sweep_custom_equals_preset(capsys):
    base = ["detector-sweep", "--distance", "400", "--sections", "4",
            "--eta-min", "0.1", "--eta-max", "0.2", "--eta-step", "0.02"]
    code_p, out_p, _ = run_cli(capsys, *base, "--line", "good")
    code_c, out_c, _ = run_cli(capsys, *base, "--line", "custom",
                               "--line-a", "6.1e-7", "--line-b", "17")
    assert code_p == code_c == 0
    assert out_p == out_c


def test_detector_sweep_single_section_all_zero(capsys):
    code, out, _ = run_cli(capsys, "detector-sweep", "--distance", "400",
                           "--sections", "1")
    assert code == 0
    _, rows = csv_rows(out)
    assert rows and all(float(r[3]) == 0.0 for r in rows)


def test_detector_sweep_out_of_model_grid_fails(capsys):
    code, _, err = run_cli(capsys, "detector-sweep", "--sections", "4",
                           "--eta-min", "0.5", "--eta-max", "0.9",
                           "--eta-step", "0.1")
    assert code == 2
    assert "0.5" in err


def test_detector_sweep_custom_requires_coefficients(capsys):
    code, _, err = run_cli(capsys, "detector-sweep", "--sections", "4",
                           "--line", "custom")
    assert code == 2


def test_detector_sweep_json_best(capsys):
    code, out, _ = run_cli(capsys, "detector-sweep", "--format", "json",
                           "--distance", "400", "--sections", "4,5,6")
    assert code == 0
    doc = json.loads(out)
    assert 0.14 <= doc["best"]["4"]["eta"] <= 0.22
    assert doc["best"]["4"]["rate"] >= doc["best"]["5"]["rate"]


# ------------------------------------------------------------------------ mc

def test_mc_small_run_passes(capsys):
    code, out, _ = run_cli(capsys, "mc", "--sections", "1", "--distance",
                           "50", "--trials", "200000", "--seed", "7")
    assert code == 0
    doc = json.loads(out)
    assert doc["pass"] is True
    assert doc["z_scores"]["degenerate_sample"] == []
    assert abs(doc["z_scores"]["p_total"]) <= 4.0
    assert abs(doc["z_scores"]["v_ab"]) <= 4.0
    assert doc["generator"]["algorithm"].startswith("philox")
    assert doc["config"]["seed"] == 7


def test_mc_single_trial_marks_degenerate_when_nothing_accepted(capsys):
    code, out, _ = run_cli(capsys, "mc", "--sections", "1", "--distance",
                           "0", "--trials", "1", "--seed", "3")
    assert code == 0
    doc = json.loads(out)
    assert doc["estimate"]["accepted"] == 0
    assert doc["z_scores"]["degenerate_sample"] == ["p_total", "v_ab"]
    assert doc["z_scores"]["v_ab"] is None
    assert doc["z_scores"]["p_total"] is not None  # count-only consistency


def test_mc_single_trial_marks_degenerate_when_one_accepted(capsys):
    code, out, _ = run_cli(capsys, "mc", "--sections", "1", "--distance",
                           "0", "--trials", "1", "--seed", "0")
    assert code == 0
    doc = json.loads(out)
    assert doc["estimate"]["accepted"] == 1
    assert "v_ab" in doc["z_scores"]["degenerate_sample"]
    assert doc["z_scores"]["v_ab"] is not None  # analytic-SE score still valid


def test_mc_validation_failure_exits_one(monkeypatch, capsys):
    from qkdrelay import McEstimate
    from qkdrelay import cli as cli_mod

    def skewed_simulate(trial, workers=1):
        half = trial.trials // 2
        return McEstimate(trial.trials, half, half, 0.5, 1.0, 1e-3, 1e-3)

    monkeypatch.setattr(cli_mod.montecarlo, "simulate", skewed_simulate)
    code, out, _ = run_cli(capsys, "mc", "--sections", "1", "--distance",
                           "100", "--trials", "10000", "--seed", "1")
    assert code == 1
    doc = json.loads(out)
    assert doc["pass"] is False


# -------------------------------------------------------------- source penalty

def test_source_penalty_csv(capsys):
    code, out, _ = run_cli(capsys, "source-penalty", "--sources", "1")
    assert code == 0
    header, rows = csv_rows(out)
    assert header == ["m_sources", "emission_prob", "rate_factor",
                      "distance_loss_km"]
    assert rows[0] == ["1", "0.1", "0.1", "40"]


def test_source_penalty_honors_alpha_override(capsys):
    code, out, _ = run_cli(capsys, "source-penalty", "--sources", "1",
                           "--alpha", "0.2", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["distance_loss_km"] == pytest.approx(50.0)


# ------------------------------------------------- parameters, files, plumbing

def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "params.cfg"
    cfg.write_text("# overrides\nalpha=0.35\nvopt=0.98\n", encoding="utf-8")
    code, out, _ = run_cli(capsys, "source-penalty", "--sources", "1",
                           "--config", str(cfg), "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["params"]["alpha"] == 0.35      # file beats default
    assert doc["params"]["vopt"] == 0.98
    code, out, _ = run_cli(capsys, "source-penalty", "--sources", "1",
                           "--config", str(cfg), "--alpha", "0.2",
                           "--format", "json")
    doc = json.loads(out)
    assert doc["params"]["alpha"] == 0.2       # flag beats file
    assert doc["params"]["vopt"] == 0.98


def test_config_file_unknown_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("gamma=1\n", encoding="utf-8")
    code, _, err = run_cli(capsys, "visibility", "--config", str(cfg))
    assert code == 2
    assert "gamma" in err


def test_missing_config_file_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "visibility", "--config", "/nonexistent")
    assert code == 2


def test_output_file_byte_identical_across_runs(tmp_path, capsys):
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    args = ["mc", "--sections", "2", "--distance", "40", "--trials", "50000",
            "--seed", "12345"]
    assert main(args + ["--out", str(out1)]) in (0, 1)
    assert main(args + ["--out", str(out2)]) in (0, 1)
    capsys.readouterr()
    assert out1.read_bytes() == out2.read_bytes()


def test_csv_output_byte_identical_across_runs(tmp_path, capsys):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    args = ["keyrate", "--sections", "1..3", "--dmin", "0", "--dmax", "50",
            "--dstep", "10"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    capsys.readouterr()
    assert out1.read_bytes() == out2.read_bytes()


def test_bad_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["keyrate", "--no-such-flag"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_invalid_parameter_exits_two(capsys):
    code, _, err = run_cli(capsys, "visibility", "--eta", "1.5")
    assert code == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "qkdrelay", "source-penalty", "--sources",
         "2", "--format", "json"],
        capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["rate_factor"] == pytest.approx(0.01)
    assert doc["distance_loss_km"] == pytest.approx(80.0)
