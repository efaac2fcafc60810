import numpy as np
import pytest

from savflows.cli import main
from savflows.config import ConfigError, parse_config

MINIMAL_RUN = """\
model.name = allen-cahn
model.alpha = 1e-4
grid.n = 16 16
grid.l = 1 1
init.name = star
init.alpha = 1e-4
scheme.variant = r-gsav
scheme.order = 2
scheme.dt = 0.01
scheme.t_final = 0.1
output.snapshot_times = 0 0.1
seed = 1
"""

CONVERGENCE = """\
model.name = allen-cahn
model.alpha = 1e-3
grid.n = 24 24
grid.l = 2 2
forcing.manufactured = true
convergence.variants = r-gsav
convergence.orders = 1 2
convergence.dts = 0.05 0.025 0.0125
convergence.t_final = 0.25
convergence.norm = l2
"""

COMPARE = """\
model.name = allen-cahn
model.alpha = 1e-4
grid.n = 16 16
grid.l = 1 1
init.name = star
init.alpha = 1e-4
compare.variants = gsav r-gsav
compare.dts = 0.05
compare.ref_dt = 0.005
compare.t_final = 0.2
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestParsing:
    def test_round_trip(self):
        cfg = parse_config(MINIMAL_RUN)
        from savflows.config import config_to_text
        assert parse_config(config_to_text(cfg)) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="scheme.tf"):
            parse_config(MINIMAL_RUN + "scheme.tf = 2\n")

    def test_unknown_model_param_rejected(self):
        with pytest.raises(ConfigError, match="model.m0"):
            parse_config(MINIMAL_RUN + "model.m0 = 0.1\n")

    def test_nonpositive_dt_names_field(self):
        bad = MINIMAL_RUN.replace("scheme.dt = 0.01", "scheme.dt = -0.5")
        with pytest.raises(ConfigError, match="scheme.dt"):
            parse_config(bad)

    def test_missing_required_key(self):
        bad = MINIMAL_RUN.replace("model.alpha = 1e-4\n", "")
        with pytest.raises(ConfigError, match="model.'?alpha"):
            parse_config(bad)

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(MINIMAL_RUN + "seed = 2\n")

    def test_comments_and_blank_lines(self):
        text = "# comment\n\n" + MINIMAL_RUN + "   # trailing\n"
        assert parse_config(text).seed == 1


class TestRunCommand:
    def test_minimal_run(self, tmp_path, capsys):
        cfg = write(tmp_path, MINIMAL_RUN)
        code = main(["--out", str(tmp_path / "out"), "run", cfg])
        assert code == 0
        trace = (tmp_path / "out" / "trace.csv").read_text().splitlines()
        assert trace[0].startswith("step,t,E,R")
        rs = [float(line.split(",")[3]) for line in trace[1:]]
        assert all(b <= a for a, b in zip(rs, rs[1:]))

    def test_replay_is_byte_identical(self, tmp_path):
        cfg = write(tmp_path, MINIMAL_RUN)
        main(["--quiet", "--out", str(tmp_path / "a"), "run", cfg])
        main(["--quiet", "--out", str(tmp_path / "b"), "run", cfg])
        a = (tmp_path / "a" / "trace.csv").read_bytes()
        b = (tmp_path / "b" / "trace.csv").read_bytes()
        assert a == b

    def test_manifest_reproduces_run(self, tmp_path):
        cfg = write(tmp_path, MINIMAL_RUN)
        main(["--quiet", "--out", str(tmp_path / "a"), "run", cfg])
        manifest = str(tmp_path / "a" / "manifest.txt")
        main(["--quiet", "--out", str(tmp_path / "c"), "run", manifest])
        a = (tmp_path / "a" / "trace.csv").read_bytes()
        c = (tmp_path / "c" / "trace.csv").read_bytes()
        assert a == c

    def test_validation_failure_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, MINIMAL_RUN.replace("scheme.dt = 0.01",
                                                  "scheme.dt = 0"))
        code = main(["run", cfg])
        assert code == 2
        assert "scheme.dt" in capsys.readouterr().err

    def test_divergence_exit_code(self, tmp_path, capsys):
        bad = """\
model.name = cahn-hilliard
model.alpha = 0.01
model.m0 = 0.1
model.c0 = 1
grid.n = 64 64
grid.l = 1 1
init.name = star
init.alpha = 0.01
scheme.variant = r-gsav
scheme.order = 1
scheme.dt = 0.001
scheme.t_final = 0.4
output.figures = false
"""
        cfg = write(tmp_path, bad)
        with np.errstate(over="ignore", invalid="ignore"):
            code = main(["--quiet", "--out", str(tmp_path / "d"), "run", cfg])
        assert code == 1
        err = capsys.readouterr().err
        assert "non-finite" in err and "last finite trace row" in err


class TestStudyCommands:
    def test_convergence_command(self, tmp_path, capsys):
        cfg = write(tmp_path, CONVERGENCE)
        code = main(["--out", str(tmp_path / "conv"), "convergence", cfg])
        assert code == 0
        out = capsys.readouterr().out
        assert "variant" in out and "r-gsav" in out
        assert (tmp_path / "conv" / "errors.csv").exists()
        assert (tmp_path / "conv" / "convergence.png").exists()

    def test_compare_command(self, tmp_path, capsys):
        cfg = write(tmp_path, COMPARE)
        code = main(["--out", str(tmp_path / "cmp"), "compare", cfg])
        assert code == 0
        lines = (tmp_path / "cmp" / "errors.csv").read_text().splitlines()
        assert lines[0] == "variant,dt,error"
        assert len(lines) == 3

    def test_convergence_needs_section(self, tmp_path, capsys):
        cfg = write(tmp_path, MINIMAL_RUN)
        assert main(["convergence", cfg]) == 2

    def test_compare_needs_section(self, tmp_path):
        cfg = write(tmp_path, MINIMAL_RUN)
        assert main(["compare", cfg]) == 2


class TestOtherCommands:
    def test_validate_echoes_normalized_config(self, tmp_path, capsys):
        cfg = write(tmp_path, MINIMAL_RUN)
        assert main(["validate", cfg]) == 0
        out = capsys.readouterr().out
        assert "model.name = allen-cahn" in out
        assert "scheme.gamma = 0.95" in out  # default materialized

    def test_validate_rejects_bad_config(self, tmp_path, capsys):
        cfg = write(tmp_path, MINIMAL_RUN + "bogus = 1\n")
        assert main(["validate", cfg]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_unknown_showcase(self, capsys):
        assert main(["showcase", "no-such-scenario"]) == 2
        assert "unknown scenario" in capsys.readouterr().err

    def test_missing_config_file(self, capsys):
        assert main(["run", "/nonexistent/path.cfg"]) == 2
