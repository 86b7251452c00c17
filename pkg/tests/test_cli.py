import json

import pytest

from ntfp import analytics as an
from ntfp.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main, parse_count, parse_size, upper_bound_suite
from ntfp.core import TransformParams


def run(capsys, *argv):
    code = main(["--json", *argv])
    out = capsys.readouterr().out
    return code, [json.loads(line) for line in out.splitlines() if line.strip()]


class TestParsing:
    def test_size(self):
        assert parse_size("64KiB") == 65536
        assert parse_size("1MiB") == 1 << 20
        assert parse_size("512") == 512

    def test_count(self):
        assert parse_count("1e6") == 10**6

    @pytest.mark.parametrize("argv", [
        ["predict", "--method", "xnorm", "-n", "3"],
        ["predict", "--method", "snorm", "-n", "15", "--theta", "9"],
        ["predict", "--method", "dnorm", "-n", "32"],
        ["predict", "--method", "snorm", "-n", "15", "-m", "4"],
        ["simulate", "--trials", "0"],
        ["simulate", "--ber", "1.5"],
        ["validate"],
        ["search", "--ber", "0.1", "--size", "-3"],
    ])
    def test_usage_errors(self, capsys, argv):
        # argparse rejections exit directly; semantic ones come back as a return code
        try:
            code = main(argv)
        except SystemExit as exc:
            code = exc.code
        assert code == EXIT_USAGE

    def test_usage_error_return_code(self, capsys):
        assert main(["predict", "--method", "dnorm", "-n", "32"]) == EXIT_USAGE
        assert "error" in capsys.readouterr().err


class TestPredict:
    def test_nordic_row(self, capsys):
        code, [rec] = run(capsys, "predict", "--method", "dnorm", "-n", "32", "-m", "16", "--theta", "16",
                          "--ber", "0.0609", "-k", "128")
        assert code == EXIT_OK
        assert f"{rec['ber_F']:.2e}" == "5.09e-09"
        assert f"{rec['p_key_fail']:.2e}" == "6.52e-07"

    def test_snorm_theta_zero(self, capsys):
        _, [rec] = run(capsys, "predict", "--method", "snorm", "-n", "15", "--theta", "0")
        assert round(rec["eta_bit_per_kib"], 2) == 546.13

    def test_efficiency_table(self, capsys):
        code, rows = run(capsys, "predict", "--table", "efficiency")
        snorm = [r for r in rows if r["method"] == "snorm"]
        assert code == EXIT_OK and len(rows) == 14
        assert [r["published"] for r in snorm] == [0.0012, 0.0029, 0.0043]
        assert all(abs(r["rel_diff"]) <= 0.05 for r in snorm)

    @pytest.mark.parametrize("table", ["lowest-pfail", "mmr"])
    def test_other_tables(self, capsys, table):
        code, rows = run(capsys, "predict", "--table", table)
        assert code == EXIT_OK and len(rows) == 6

    def test_theta_sweep(self, capsys):
        _, rows = run(capsys, "predict", "--method", "dnorm", "-n", "32", "-m", "16", "--ber", "0.0609",
                      "--theta-sweep", "4")
        assert [r["theta"] for r in rows] == [0, 1, 2, 3, 4]

    def test_human_table(self, capsys):
        assert main(["predict", "--method", "snorm", "-n", "15", "--theta", "0"]) == EXIT_OK
        header, values = capsys.readouterr().out.splitlines()[:2]
        assert "eta_bit_per_kib" in header and "546.1" in values


class TestSimulate:
    def test_zero_noise(self, capsys):
        code, [rec] = run(capsys, "simulate", "--size", "64KiB", "--ber", "0", "--trials", "5", "--seed", "1")
        assert code == EXIT_OK and rec["errors"] == 0 and rec["bit_evaluations"] > 0

    def test_deterministic(self, capsys):
        argv = ["simulate", "--ber", "0.0609", "--trials", "20", "--seed", "4", "--size", "16KiB"]
        assert run(capsys, *argv) == run(capsys, *argv)

    def test_keyfail(self, capsys):
        _, [rec] = run(capsys, "simulate", "--keyfail", "--theta", "6", "--trials", "200", "--seed", "2")
        assert rec["trials"] == 200 and 0 <= rec["empirical_rate"] <= 1


class TestValidate:
    def test_efficiency_suite(self, capsys):
        code, rows = run(capsys, "validate", "--suite", "efficiency", "--size", "1MiB")
        assert code == EXIT_OK and all(r["pass"] for r in rows)

    def test_keyfail_small(self, capsys):
        code, rows = run(capsys, "validate", "--suite", "keyfail", "--trials", "300", "--theta-max", "2")
        assert code == EXIT_OK and len(rows) == 2

    def test_violation_exit_code(self, capsys, monkeypatch):
        monkeypatch.setattr(an, "ber", lambda tp, b: 0.0)
        code, _ = run(capsys, "validate", "--suite", "upper-bound", "--trials", "2000", "--size", "16KiB")
        assert code == EXIT_VALIDATION

    def test_suite_rows(self):
        rows = upper_bound_suite(0.0609, 64 * 8192, 5000, configs=[TransformParams.dnorm(32, 4, 3)])
        assert rows[0]["evaluations"] >= 5000 and rows[0]["pass"]


class TestExtractAndAttest:
    def test_extract_then_attest(self, capsys, tmp_path):
        mask, key = tmp_path / "m.bin", tmp_path / "k.hex"
        code, [rec] = run(capsys, "extract", "--seed", "5", "--mask-out", str(mask), "--key-out", str(key), "--mac")
        assert code == EXIT_OK and rec["mask_bytes"] == 16 + 128 * 6 + 16
        code, rows = run(capsys, "attest-demo", "--seed", "5", "--mask", str(mask), "--key", str(key))
        assert code == EXIT_OK and rows[0]["verdict"] == "accepted"

    def test_extract_shortfall(self, capsys):
        code, _ = run(capsys, "extract", "--theta", "20", "--size", "8KiB")
        assert code == EXIT_DATA

    def test_extract_from_dataset(self, capsys, tmp_path):
        from ntfp.chipsim import new_chip
        from ntfp.ingest import export_sim_dataset

        path = export_sim_dataset(tmp_path / "ds", new_chip(48 * 8192, 0.01, 3, chip_id="c3"), 1)
        code, [rec] = run(capsys, "extract", "--dataset", str(path), "--chip", "c3")
        assert code == EXIT_OK and rec["k"] == 128

    def test_missing_dataset(self, capsys, tmp_path):
        code, _ = run(capsys, "extract", "--dataset", str(tmp_path / "none.json"))
        assert code == EXIT_DATA

    def test_demo_tamper(self, capsys):
        code, rows = run(capsys, "attest-demo", "--provers", "2", "--tamper")
        assert code == EXIT_OK
        assert [r["verdict"] for r in rows] == ["rejected", "accepted"]

    def test_demo_socket_noisy(self, capsys):
        code, rows = run(capsys, "attest-demo", "--transport", "socket", "--ber", "0.02", "--rounds", "5")
        assert code == EXIT_OK and all(r["verdict"] == "accepted" for r in rows)

    def test_demo_db_conflict(self, capsys, tmp_path):
        db = str(tmp_path / "db.jsonl")
        assert run(capsys, "attest-demo", "--db", db)[0] == EXIT_OK
        assert run(capsys, "attest-demo", "--db", db)[0] == EXIT_USAGE


class TestSearch:
    def test_nordic(self, capsys):
        code, [rec] = run(capsys, "search", "--ber", "0.0609", "--size", "64KiB", "--mode", "lowest-pfail")
        assert code == EXIT_OK and rec["feasible"] and rec["expected_yield_bits"] >= 128

    def test_zero_noise(self, capsys):
        _, [rec] = run(capsys, "search", "--ber", "0", "--size", "64KiB")
        assert (rec["n"], rec["m"], rec["theta"]) == (8, 8, 1) and rec["p_key_fail"] == 0

    def test_infeasible(self, capsys):
        code, [rec] = run(capsys, "search", "--ber", "0.45", "--size", "1KiB", "--mode", "max-yield")
        assert code == EXIT_DATA and not rec["feasible"]

    def test_human_mode_counts_optima(self, capsys):
        main(["search", "--ber", "0", "--size", "64KiB"])
        assert capsys.readouterr().out.splitlines()[1].split()[-1].isdigit()

    def test_dataset_yields(self, capsys, tmp_path):
        from ntfp.chipsim import new_chip
        from ntfp.ingest import export_sim_dataset

        path = export_sim_dataset(tmp_path, new_chip(64 * 8192, 0.0609, 8, chip_id="n"), 0)
        code, [rec] = run(capsys, "search", "--ber", "0.0609", "--dataset", str(path))
        assert code == EXIT_OK and rec["expected_yield_bits"] >= 128
