import subprocess
import sys

import pytest

from robust_mccfr.cli import main


def test_enumerate(capsys):
    assert main(["enumerate", "--domain", "kuhn"]) == 0
    assert "kuhn: 12 information sets (6 + 6)" in capsys.readouterr().out
    assert main(["enumerate", "--domain", "leduc"]) == 0
    assert "leduc: 936 information sets (468 + 468)" in capsys.readouterr().out


def test_enumerate_list(capsys):
    main(["enumerate", "--list"])
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 13 and "0|0|-|" in lines


def test_run_then_eval_checkpoint(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("width = 16\nbatch_size = 16\niters = 999\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--iters", "150", "--seed", "2", "--preset", "minimal", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "preset=minimal seed=2 iterations=150" in text
    reported = float(text.split("(average strategy): ")[1].split()[0])
    assert main(["eval-checkpoint", str(out / "checkpoint")]) == 0
    text = capsys.readouterr().out
    assert f"{reported:.6f}" in text
    assert "g_target:" in text


def test_ablate_and_sweep(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("width = 8\nbatch_size = 8\n")
    assert main(["ablate", "--config", str(cfg), "--iters", "30", "--seeds", "0", "--out", str(tmp_path / "a")]) == 0
    assert "no_baseline_subtraction" in capsys.readouterr().out
    assert main(["sweep", "--config", str(cfg), "--param", "tau_target", "--values", "50", "100", "--iters", "30", "--seeds", "0"]) == 0
    assert "tau_target=50" in capsys.readouterr().out


def test_bad_config_reports_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_argparse_rejects_unknown_preset():
    with pytest.raises(SystemExit):
        main(["run", "--preset", "everything"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "robust_mccfr", "enumerate"], capture_output=True, text=True, check=True)
    assert "12 information sets" in out.stdout
