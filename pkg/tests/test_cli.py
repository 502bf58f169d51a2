import argparse
import hashlib
import json

import numpy as np
import pytest

from octorl.cli import build_parser, main
from octorl.env import read_log_csv
from octorl.ppo import PolicyParameters, save_checkpoint

# a small network and short episodes keep training runs to seconds
SMALL = """
[RL]
hidden = 16
steps = 64
batch size = 32
[Episode]
max time = 3
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return str(p)


def run(*argv):
    return main(["--quiet" if a == "-q" else a for a in argv])


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_help_lists_every_flag(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    assert set(sub.choices) == {"tune", "train", "fly", "eval", "plot"}
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
        # every documented flag is accepted by the parser
        for flag in [f for a in sp._actions for f in a.option_strings if f.startswith("--")]:
            assert sp._option_string_actions[flag]


@pytest.mark.parametrize("argv", [
    ["tune", "--trials", "0", "--out", "X"],
    ["train", "--episodes", "-1", "--out", "X"],
    ["fly", "--mode", "bogus", "--out", "X"],
])
def test_bad_flags_exit_2(argv, tmp_path, capsys):
    argv = [str(tmp_path / "o") if a == "X" else a for a in argv]
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2
    assert not (tmp_path / "o").exists()


def test_usage_errors_exit_2_without_output(tmp_path, capsys):
    out = tmp_path / "o"
    assert run("fly", "--mode", "rl", "--out", str(out)) == 2
    assert run("train", "--wind", "5@400", "--out", str(out)) == 2
    assert run("fly", "--trajectory", "nowhere.txt", "--out", str(out)) == 2
    assert run("fly", "--config", "missing.ini", "--out", str(out)) == 2
    assert run("plot", str(tmp_path / "none.csv"), "--out", str(out)) == 2
    assert run("eval", "--study", "symmetry", "--out", str(out)) == 2
    bad = tmp_path / "space.txt"
    bad.write_text("position.k_p = uniform 1 2\nwhat = uniform 1 2\n")
    assert run("tune", "--space", str(bad), "--out", str(out)) == 2
    assert "space.txt:2:" in capsys.readouterr().err
    assert not out.exists()


def test_fly_square_nominal_and_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("fly", "--trajectory", "square", "--seed", "0", "--out", str(d), "-q") == 0
    assert files(a)["flight_log.csv"] == files(b)["flight_log.csv"]
    summary = json.loads((a / "summary.json").read_text())
    assert summary["completion"] == 1.0
    header, rows = read_log_csv((a / "flight_log.csv").read_text())
    ticks = sum(round(s["flight_time"] / 0.01) for s in summary["segments"])
    assert len(rows) == ticks
    manifest = json.loads((a / "manifest.json").read_text())
    arts = {x["path"]: x for x in manifest["artifacts"]}
    assert set(arts) == {"flight_log.csv", "summary.json"}
    assert arts["flight_log.csv"]["sha256"] == hashlib.sha256(files(a)["flight_log.csv"]).hexdigest()
    assert arts["flight_log.csv"]["seed"] == 0


def test_zero_policy_rl_equals_pid(tmp_path):
    ckpt = tmp_path / "zero.ckpt"
    ckpt.write_bytes(save_checkpoint(PolicyParameters.zeros()))
    pid, rl = tmp_path / "pid", tmp_path / "rl"
    assert run("fly", "--wind", "5@90", "--out", str(pid), "-q") == 0
    assert run("fly", "--wind", "5@90", "--mode", "rl", "--policy", str(ckpt), "--out", str(rl), "-q") == 0
    assert (pid / "flight_log.csv").read_bytes() == (rl / "flight_log.csv").read_bytes()


def test_train_determinism_and_curve_rows(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("train", "--config", small_cfg, "--wind", "5@90", "--episodes", "6",
                   "--seed", "7", "--out", str(d), "-q") == 0
    assert (a / "policy.ckpt").read_bytes() == (b / "policy.ckpt").read_bytes()
    header, curve = read_log_csv((a / "curve.csv").read_text())
    assert curve[-1, header.index("episodes")] >= 6
    assert curve.shape[0] == curve[-1, header.index("update")] + 1  # updates count from 0
    # the written config reproduces the run
    c = tmp_path / "c"
    assert run("train", "--config", str(a / "config.ini"), "--episodes", "6", "--seed", "7",
               "--out", str(c), "-q") == 0
    assert (c / "policy.ckpt").read_bytes() == (a / "policy.ckpt").read_bytes()


def test_train_zero_episodes_writes_initial_checkpoint(tmp_path, small_cfg):
    d = tmp_path / "z"
    assert run("train", "--config", small_cfg, "--episodes", "0", "--out", str(d), "-q") == 0
    assert (d / "curve.csv").read_text().count("\n") == 1
    assert run("fly", "--config", small_cfg, "--mode", "rl", "--policy", str(d / "policy.ckpt"),
               "--out", str(tmp_path / "f"), "-q") == 0
    # a checkpoint of another width is a usage error, not a crash
    assert run("fly", "--mode", "rl", "--policy", str(d / "policy.ckpt"),
               "--out", str(tmp_path / "g"), "-q") == 2


def test_tune_outputs_and_byte_identical_rerun(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("tune", "--config", small_cfg, "--trials", "3", "--top", "2", "--out", str(d), "-q") == 0
    assert files(a) == files(b)
    assert len((a / "trials.jsonl").read_text().splitlines()) == 3
    assert {"trials.jsonl", "best.ini", "top_table.csv", "summary.json", "manifest.json"} <= set(files(a))
    # rerunning into the same directory resumes the log
    assert run("tune", "--config", small_cfg, "--trials", "4", "--top", "2", "--out", str(a), "-q") == 0
    lines = (a / "trials.jsonl").read_text().splitlines()
    assert len(lines) == 4 and lines[:3] == (b / "trials.jsonl").read_text().splitlines()
    # best.ini is a loadable config
    assert run("fly", "--config", str(a / "best.ini"), "--out", str(tmp_path / "f"), "-q") == 0


def test_eval_heading_and_zero_magnitude(tmp_path, small_cfg):
    d = tmp_path / "e"
    assert run("eval", "--config", small_cfg, "--study", "heading", "--seeds", "1",
               "--out", str(d), "-q") == 0
    _, rows = read_log_csv_text((d / "heading_sweep.csv").read_text())
    assert [float(r[3]) for r in rows] == [0, 45, 90, 135, 180, 225, 270, 315]
    m = tmp_path / "m"
    assert run("eval", "--config", small_cfg, "--study", "magnitude", "--magnitudes", "0",
               "--seeds", "2", "--out", str(m), "-q") == 0
    f = tmp_path / "f"
    assert run("eval", "--config", small_cfg, "--study", "density", "--runs", "2",
               "--wind", "0", "--out", str(f), "-q") == 0
    _, sweep = read_log_csv_text((m / "magnitude_sweep.csv").read_text())
    _, runs = read_log_csv_text((f / "density_runs.csv").read_text())
    nominal = [float(r[3]) for r in runs if r[1] == "nominal"]
    assert float(sweep[0][4]) == pytest.approx(np.mean(nominal), abs=1e-9)


def test_eval_symmetry(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    a.write_bytes(save_checkpoint(PolicyParameters.initial(1)))
    b.write_bytes(save_checkpoint(PolicyParameters.initial(2)))
    d = tmp_path / "s"
    assert run("eval", "--study", "symmetry", "--policy", str(a), "--policy-b", str(b),
               "--out", str(d), "-q") == 0
    _, rows = read_log_csv_text((d / "symmetry.csv").read_text())
    assert len(rows) == 36
    assert float(rows[0][2]) == pytest.approx(1.0)
    _, hist = read_log_csv_text((d / "action_histograms.csv").read_text())
    assert sum(int(r[1]) for r in hist) == 1000


def test_plot_is_deterministic_and_rejects_empty(tmp_path):
    fl = tmp_path / "f"
    assert run("fly", "--out", str(fl), "-q") == 0
    p1, p2 = tmp_path / "p1", tmp_path / "p2"
    for d in (p1, p2):
        assert run("plot", str(fl / "flight_log.csv"), "--out", str(d), "-q") == 0
    svg = (p1 / "flight_log.svg").read_bytes()
    assert svg == (p2 / "flight_log.svg").read_bytes()
    assert svg.count(b'id="reference-segment-') == 4
    empty = tmp_path / "empty.csv"
    empty.write_text((fl / "flight_log.csv").read_text().splitlines()[0] + "\n")
    assert run("plot", str(empty), "--out", str(tmp_path / "p3"), "-q") == 2


def read_log_csv_text(text):
    lines = text.strip().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]
