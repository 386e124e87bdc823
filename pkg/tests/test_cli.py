"""Command-line interface: subcommands, config files, exit codes, atomicity."""
import subprocess
import sys

import pytest

from frapop.cli import (
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    parse_and_dispatch,
)

RUN_ARGS = ["run", "--model", "cell-division", "--T", "1", "--dt", "0.25",
            "--epsilon", "0.25", "--dx", "0.25"]


class TestRunSubcommand:
    def test_writes_dump_and_trace(self, tmp_path, capsys):
        out = tmp_path / "out.particles"
        trace = tmp_path / "trace.csv"
        code = parse_and_dispatch(RUN_ARGS + ["--out", str(out), "--trace", str(trace)])
        assert code == EXIT_OK
        assert out.read_text().startswith("# particles ")
        lines = trace.read_text().splitlines()
        assert lines[0] == "k,t,count,mass,wall_ms"
        assert len(lines) == 5  # header + 4 steps
        assert "particles" in capsys.readouterr().out

    def test_identical_invocations_bit_identical(self, tmp_path):
        a = tmp_path / "a.particles"
        b = tmp_path / "b.particles"
        assert parse_and_dispatch(RUN_ARGS + ["--out", str(a)]) == EXIT_OK
        assert parse_and_dispatch(RUN_ARGS + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_no_partial_file_left_on_failure(self, tmp_path):
        # a non-integral step count aborts before any output is written
        code = parse_and_dispatch(
            ["run", "--dt", "0.3", "--epsilon", "0.25",
             "--out", str(tmp_path / "x.particles")])
        assert code == EXIT_INVARIANT
        assert list(tmp_path.iterdir()) == []

    def test_missing_required_flag(self):
        assert parse_and_dispatch(["run"]) == EXIT_USAGE

    def test_negative_dt_rejected(self):
        assert parse_and_dispatch(["run", "--dt", "-0.1", "--epsilon", "0.25"]) == EXIT_USAGE

    def test_unknown_model_rejected(self):
        assert parse_and_dispatch(
            ["run", "--model", "nonexistent", "--dt", "0.25", "--epsilon", "0.25"]
        ) == EXIT_USAGE

    def test_model_file(self, tmp_path, capsys):
        model = tmp_path / "model.txt"
        model.write_text(
            "r = 1\nx_lo = 0.0\nx_hi = 1.0\nM = 1.0\n"
            "b = poly 0.05\nc = poly 0.1\nbeta1 = poly 0.2\n"
            "f1 = poly 0 0.5\nmu0 = poly 0 1\n")
        code = parse_and_dispatch(
            ["run", "--model-file", str(model), "--T", "1", "--dt", "0.5",
             "--epsilon", "0.5"])
        assert code == EXIT_OK
        assert "particles" in capsys.readouterr().out


class TestConfigFile:
    def test_flags_from_config(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dt = 0.25\nepsilon = 0.25\n# comment\nall-newborns = true\n")
        code = parse_and_dispatch(["run", "--config", str(cfg)])
        assert code == EXIT_OK
        capsys.readouterr()

    def test_explicit_flag_overrides_config(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dt = 0.125\nepsilon = 0.25\n")
        code = parse_and_dispatch(["run", "--config", str(cfg), "--dt", "0.5"])
        assert code == EXIT_OK
        assert "steps 2 " in capsys.readouterr().out

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dt = 0.25\nepsilon = 0.25\nbogus = 1\n")
        assert parse_and_dispatch(["run", "--config", str(cfg)]) == EXIT_USAGE

    def test_malformed_config_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dt 0.25\n")
        assert parse_and_dispatch(["run", "--config", str(cfg)]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        code = parse_and_dispatch(
            ["run", "--config", str(tmp_path / "nope.cfg"), "--dt", "0.25",
             "--epsilon", "0.25"])
        assert code == EXIT_RUNTIME


class TestDistanceSubcommand:
    def test_prints_both_metrics(self, tmp_path, capsys):
        out = tmp_path / "a.particles"
        assert parse_and_dispatch(RUN_ARGS + ["--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        code = parse_and_dispatch(["distance", str(out), str(out)])
        assert code == EXIT_OK
        text = capsys.readouterr().out
        assert "rho 0" in text
        assert "w1_normalized 0" in text

    def test_missing_file(self, tmp_path):
        missing = str(tmp_path / "gone.particles")
        assert parse_and_dispatch(["distance", missing, missing]) == EXIT_RUNTIME


class TestFraInspect:
    def test_table_and_deviation(self, capsys):
        code = parse_and_dispatch(
            ["fra-inspect", "--epsilon", "0.25", "--cap", "1", "--samples", "1000"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("J 4")
        assert len([l for l in lines if l.strip().startswith(("1", "2", "3", "4"))]) >= 4
        assert "sup deviation" in lines[-1]

    def test_custom_map(self, capsys):
        code = parse_and_dispatch(
            ["fra-inspect", "--map", "poly 0 0.25", "--epsilon", "0.5", "--cap", "2"])
        assert code == EXIT_OK
        assert capsys.readouterr().out.startswith("J 4")

    def test_superlinear_map_rejected(self, capsys):
        code = parse_and_dispatch(
            ["fra-inspect", "--map", "poly 0 3", "--epsilon", "0.5", "--cap", "2"])
        assert code == EXIT_INVARIANT


class TestValidateModel:
    def test_built_in_clean(self, capsys):
        assert parse_and_dispatch(["validate-model"]) == EXIT_OK
        assert capsys.readouterr().out.strip().endswith("ok")

    def test_violating_model_file(self, tmp_path, capsys):
        model = tmp_path / "bad.txt"
        model.write_text(
            "r = 1\nx_lo = 0.0\nx_hi = 1.0\nM = 1.0\n"
            "b = poly 0.05\nc = poly 0.1\nbeta1 = poly 0.2\n"
            "f1 = poly 0 2\n")  # f(y) = 2y exceeds its argument
        code = parse_and_dispatch(["validate-model", "--model-file", str(model)])
        assert code == EXIT_INVARIANT
        assert "SublinearityViolated" in capsys.readouterr().out


class TestConvergenceSubcommand:
    def test_tiny_ladder_with_outputs(self, tmp_path, capsys):
        csv_path = tmp_path / "ladder.csv"
        table_path = tmp_path / "ladder.txt"
        plot_path = tmp_path / "ladder.dat"
        ref_args = ["convergence", "--T", "1", "--dt-max", "0.5", "--halvings", "1",
                    "--epsilon", "0.25", "--cache-dir", str(tmp_path / "cache"),
                    "--out-csv", str(csv_path), "--out-table", str(table_path),
                    "--out-plot", str(plot_path)]
        # shrink the reference to desk scale is still too slow here; monkey
        # layer: use a coarse private reference through the cache directory
        import frapop.harness as harness
        orig = harness.DESK_REFERENCE
        try:
            harness.DESK_REFERENCE = (0.125, 0.25, 0.125)
            import frapop.cli as cli
            orig_cli = cli.DESK_REFERENCE
            cli.DESK_REFERENCE = harness.DESK_REFERENCE
            try:
                assert parse_and_dispatch(ref_args) == EXIT_OK
            finally:
                cli.DESK_REFERENCE = orig_cli
        finally:
            harness.DESK_REFERENCE = orig
        out = capsys.readouterr().out
        assert "dt" in out and "Err" in out
        assert csv_path.read_text().startswith("dt,err,q\n")
        assert len(table_path.read_text().splitlines()) == 3
        assert len(plot_path.read_text().splitlines()) == 2

    def test_bad_halvings(self):
        assert parse_and_dispatch(["convergence", "--halvings", "0"]) == EXIT_USAGE


class TestEntryPoint:
    def test_help_exits_zero(self):
        proc = subprocess.run([sys.executable, "-m", "frapop.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "SUBCOMMAND" in proc.stdout

    @pytest.mark.parametrize("sub", ["run", "convergence", "distance",
                                     "fra-inspect", "validate-model"])
    def test_subcommand_help(self, sub):
        proc = subprocess.run([sys.executable, "-m", "frapop.cli", sub, "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "--" in proc.stdout or sub == "distance"

    def test_no_subcommand_is_usage_error(self):
        assert parse_and_dispatch([]) == EXIT_USAGE
