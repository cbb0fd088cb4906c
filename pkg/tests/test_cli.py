import json

import pytest

from strip_homog.cli import main
from strip_homog.config import build_study_config, parse_eps_list, read_config_file
from strip_homog.errors import ConfigError


def _ini(tmp_path, body):
    p = tmp_path / "study.ini"
    p.write_text("[study]\n" + body)
    return str(p)


def test_read_config(tmp_path):
    vals = read_config_file(_ini(tmp_path, "case = delta\neps = 0.4, 0.2, 0.1\neta_law = exp:1,0\n"
                                           "corrected = true\nh_far = 0.2\nthreads = 1\n"))
    cfg = build_study_config(vals)
    assert cfg.case == "delta" and cfg.eps == (0.4, 0.2, 0.1)
    assert cfg.corrected and cfg.rho == 1.0 and cfg.h_far == 0.2 and cfg.eta_law.kind == "exp"


@pytest.mark.parametrize("body", ["case = delta\ncolour = red\n", "h_far = wide\n"])
def test_bad_config_values(tmp_path, body):
    with pytest.raises(ConfigError):
        read_config_file(_ini(tmp_path, body))


def test_missing_section_and_file(tmp_path):
    p = tmp_path / "x.ini"
    p.write_text("[other]\na = 1\n")
    with pytest.raises(ConfigError):
        read_config_file(p)
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "absent.ini")


def test_eps_list_parse():
    assert parse_eps_list("0.2, 0.1;0.05") == (0.2, 0.1, 0.05)
    with pytest.raises(ConfigError):
        parse_eps_list("0.2,abc")


def test_study_command(tmp_path, capsys):
    code = main(["study", "--case", "robin", "--eps", "0.4,0.2,0.1", "--eta-law", "const:0.5", "--a", "1",
                 "--out", str(tmp_path), "--assert"])
    assert code == 0
    assert (tmp_path / "report.csv").exists()
    assert json.loads((tmp_path / "report.json").read_text())["config"]["case"] == "robin"
    assert "PASS" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path):
    assert main(["study", "--case", "dirichlet", "--eps", "0.1,0.2,0.05", "--out", str(tmp_path)]) == 2
    assert main(["study", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_code(tmp_path):
    # eta = 0.7 leaves no room for the hole in the cell
    assert main(["cell", "--kind", "D", "--eta", "0.7", "--out", str(tmp_path)]) == 3


def test_assert_failure_exit_code(tmp_path):
    # eta = 1 without a hole condition: the error barely decays, far below the steep window
    code = main(["study", "--case", "none", "--eta-law", "const:1", "--eps", "0.4,0.2,0.1",
                 "--out", str(tmp_path), "--assert"])
    assert code == 4
    assert json.loads((tmp_path / "report.json").read_text())["fits"]["h1"]["slope"] < 1.3


def test_cell_command(tmp_path, capsys):
    assert main(["cell", "--kind", "D", "--eta", "0.1", "--out", str(tmp_path), "--assert"]) == 0
    rows = json.loads((tmp_path / "cell_constants.json").read_text())
    assert rows[0]["c_plus"] == pytest.approx(rows[0]["closed_form"], rel=0.02)


def test_mesh_and_solve_commands(tmp_path):
    assert main(["mesh", "--case", "dirichlet", "--eps", "0.4", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "perforated.mesh").exists()
    assert main(["solve", "--case", "dirichlet", "--eps", "0.4", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "u_eps.csv").read_text().startswith("node_id,x,y,re,im")


def test_spectrum_command(tmp_path):
    assert main(["spectrum", "--case", "dirichlet", "--eps", "0.4,0.2,0.1", "--k", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "spectrum.csv").exists()
