import numpy as np
import pytest

from cmflow.cli import build_parser, main, read_config_file
from cmflow.io import read_flo


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["synth", "--out-dir", str(out), "--num-events", "3000", "--seed", "2"]) == 0
    return out


def estimate_args(scene, out, *extra):
    return [
        "estimate", "--events", str(scene / "events.txt"), "--width", "64", "--height", "64",
        "--num-events", "1500", "--scales", "2", "--max-iters", "5", "--out-dir", str(out), *extra,
    ]


def rows(text):
    lines = [l.split("\t") for l in text.strip().splitlines()]
    return [dict(zip(lines[0], l)) for l in lines[1:]]


def test_synth_outputs(scene, capsys):
    assert (scene / "events.txt").exists()
    gt = read_flo(scene / "gt.flo")
    assert np.allclose(gt.u, 8.0) and np.allclose(gt.v, 0.0)


def test_estimate_writes_every_output(scene, tmp_path, capsys):
    code = main(estimate_args(scene, tmp_path, "--emit-iwe", "--emit-color", "--gt", str(scene / "gt.flo"),
                              "--gt-dt", "1.0"))
    out = capsys.readouterr()
    assert code == 0
    table = rows(out.out)
    assert [r["slice"] for r in table] == ["0", "1"]
    assert all(float(r["f"]) > 1 and float(r["aee"]) < 1.0 for r in table)
    for i in range(2):
        assert (tmp_path / f"flow_{i:05d}.flo").exists()
        assert (tmp_path / f"iwe_{i:05d}.pgm").exists()
        assert (tmp_path / f"color_{i:05d}.ppm").exists()
    assert "event=done" in out.err


def test_outputs_are_deterministic(scene, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(estimate_args(scene, a)) == 0
    assert main(estimate_args(scene, b)) == 0
    assert (a / "flow_00001.flo").read_bytes() == (b / "flow_00001.flo").read_bytes()


def test_config_file_and_flag_precedence(scene, tmp_path):
    from cmflow.cli import _apply_config

    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nscales = 1\nlambda=0.01\ntime-aware=upwind\nemit-iwe = true\n")
    assert read_config_file(cfg)["time_aware"] == "upwind"
    argv = estimate_args(scene, tmp_path, "--config", str(cfg))
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(parser, args._subparsers["estimate"], argv, args)
    assert args.scales == 2  # the flag beats the file
    assert (args.lam, args.time_aware, args.emit_iwe) == (0.01, "upwind", True)
    assert main(argv) == 0
    assert (tmp_path / "iwe_00000.pgm").exists()


def test_bad_config_key(scene, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("sclaes = 3\n")
    with pytest.raises(SystemExit):
        main(estimate_args(scene, tmp_path, "--config", str(cfg)))


def test_too_few_events_is_an_error(scene, tmp_path, capsys):
    code = main(["estimate", "--events", str(scene / "events.txt"), "--width", "64", "--height", "64",
                 "--out-dir", str(tmp_path)])
    assert code == 1
    assert "event=failed" in capsys.readouterr().err


def test_metrics_table(scene, tmp_path, capsys):
    assert main(estimate_args(scene, tmp_path)) == 0
    capsys.readouterr()
    preds = [str(tmp_path / f"flow_{i:05d}.flo") for i in range(2)]
    code = main(["metrics", "--events", str(scene / "events.txt"), "--width", "64", "--height", "64",
                 "--num-events", "1500", "--pred", *preds, "--gt", str(scene / "gt.flo"), "--gt-dt", "1.0"])
    assert code == 0
    table = rows(capsys.readouterr().out)
    assert len(table) == 2 and all(float(r["fwl"]) > 1 for r in table)


def test_metrics_count_mismatch(scene, tmp_path):
    code = main(["metrics", "--events", str(scene / "events.txt"), "--width", "64", "--height", "64",
                 "--num-events", "1500", "--pred", str(scene / "gt.flo"), "--gt", str(scene / "gt.flo")])
    assert code == 1


@pytest.mark.slow
def test_parallel_slices(scene, tmp_path, capsys):
    assert main(estimate_args(scene, tmp_path, "--threads", "2")) == 0
    assert len(rows(capsys.readouterr().out)) == 2


def test_usage_errors():
    with pytest.raises(SystemExit):
        main(["estimate", "--events", "x", "--width", "0", "--height", "4", "--out-dir", "o"])
    with pytest.raises(SystemExit):
        main([])
