import json
import shutil
import subprocess

import pytest

from romforge.cli import main


@pytest.fixture
def fe_copy(fe_bundle, tmp_path):
    dst = tmp_path / "b"
    shutil.copytree(fe_bundle, dst)
    return dst


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_online_ok(fe_copy, capsys):
    assert main(["online", "--bundle", str(fe_copy), "--mu", "275", "--variant", "offline-online+sup", "--truth"]) == 0
    row = json.loads(capsys.readouterr().out)
    assert row["mu"] == 275.0 and row["err_u"] < 0.1 and row["newton_iters"] >= 0


def test_invalid_config_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", "study.branch = cavity-fe\nsampling = 3\nfe.colour = blue\n")
    assert main(["offline", "--config", cfg, "--output", str(tmp_path / "out")]) == 2
    assert "invalid-config" in capsys.readouterr().err
    assert main(["offline", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_fom_divergence_exit_3(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", "study.branch = cavity-fe\nsampling = 2\nfe.mesh_n = 6\nfe.picard_max = 1\n")
    assert main(["offline", "--config", cfg, "--output", str(tmp_path / "out")]) == 3
    assert not (tmp_path / "out").exists() and not (tmp_path / "out.partial").exists()
    assert "fom-diverged" in capsys.readouterr().err


def test_rom_divergence_exit_4(fe_copy, capsys):
    code = main(["online", "--bundle", str(fe_copy), "--mu", "455", "--variant", "offline-online", "--newton-max", "0"])
    assert code == 4
    assert "newton-diverged" in capsys.readouterr().err


def test_incomplete_bundle_exit_5(fe_copy, tmp_path):
    (fe_copy / "mesh.romf").unlink()
    assert main(["info", "--bundle", str(fe_copy)]) == 5
    assert main(["online", "--bundle", str(tmp_path / "none"), "--mu", "200", "--variant", "offline-online"]) == 5


def test_outside_box_exit_2(fe_copy):
    assert main(["online", "--bundle", str(fe_copy), "--mu", "900", "--variant", "offline-online"]) == 2


def test_validate_prints_summary(fe_copy, tmp_path, capsys):
    plan = write(tmp_path, "p.plan", "plan.points = 205\nplan.variants = offline-online+sup, offline-only+sup\n")
    assert main(["validate", "--bundle", str(fe_copy), "--plan", plan]) == 0
    out = capsys.readouterr().out
    assert "mean_err_u" in out and "offline-only+sup" in out and "table.csv" in out


def test_info(fe_copy, capsys):
    assert main(["info", "--bundle", str(fe_copy)]) == 0
    out = capsys.readouterr().out
    assert "cumulative energy" in out and '"format": "romforge-bundle/1"' in out and "offline_total" in out


def test_console_script(fe_copy):
    r = subprocess.run(["romforge", "info", "--bundle", str(fe_copy / "nope")], capture_output=True, text=True)
    assert r.returncode == 5 and "incomplete-bundle" in r.stderr
