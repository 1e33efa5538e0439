import json

import pytest

from echobench.cli import build_parser, main
from echobench.synthdata import PhantomParams


def test_train_defaults_are_full_protocol():
    args = build_parser().parse_args(["train", "--variant", "unet", "--data", "d", "--out", "o"])
    assert args.lr == 1e-5
    assert args.epochs == 250
    assert args.batch == 8 and args.scale == 1.0 and args.size == 256


def test_two_ratios_rejected(tmp_path, capsys):
    assert main(["split", "--manifest", str(tmp_path / "m.csv"), "--ratios", "0.5,0.5", "--seed", "1"]) == 1
    assert "three" in capsys.readouterr().err


def test_unknown_flag_and_missing_file(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["split", "--bogus"])
    assert exc.value.code == 1
    assert main(["split", "--manifest", str(tmp_path / "nope.csv")]) == 1
    assert "not found" in capsys.readouterr().err


def test_corrupt_checkpoint_is_runtime_failure(tmp_path, small_dataset):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    code = main(["evaluate", "--checkpoint", str(bad), "--data", str(small_dataset), "--out", str(tmp_path / "e")])
    assert code == 2


def test_full_pipeline(tmp_path):
    params = tmp_path / "params.json"
    params.write_text(json.dumps(PhantomParams.for_size(64).to_dict()))
    data = tmp_path / "data"
    assert main(["synth-gen", "--patients", "5", "--frames-per-patient", "2", "--seed", "3",
                 "--out", str(data), "--params", str(params)]) == 0
    first = (data / "P000" / "P000_F00_img.png").read_bytes()
    assert main(["synth-gen", "--patients", "5", "--frames-per-patient", "2", "--seed", "3",
                 "--out", str(data), "--params", str(params)]) == 0
    assert (data / "P000" / "P000_F00_img.png").read_bytes() == first
    assert main(["split", "--manifest", str(data / "manifest.csv"), "--ratios", "0.6,0.2,0.2", "--seed", "0"]) == 0
    assert (data / "split_config.json").is_file()

    common = ["--data", str(data), "--epochs", "1", "--lr", "1e-3", "--batch", "4", "--scale", "0.25", "--size", "32"]
    runs = {}
    for variant, op in (("unet", "A"), ("unet", "B"), ("unet1", "A"), ("unet2", "A")):
        out = tmp_path / "runs" / f"{variant}_{op}"
        assert main(["train", "--variant", variant, "--operator", op, "--out", str(out)] + common) == 0
        for name in ("config.txt", "history.csv", "best.ckpt", "last.ckpt", "history.png"):
            assert (out / name).is_file()
        ev = tmp_path / "eval" / f"{variant}_{op}"
        assert main(["evaluate", "--checkpoint", str(out / "best.ckpt"), "--data", str(data),
                     "--split", "test", "--operator", op, "--out", str(ev)]) == 0
        assert (ev / "metrics.csv").is_file()
        runs[(variant, op)] = ev

    tables = tmp_path / "tables"
    assert main(["benchmark", "--data", str(data), "--operator", "A", "--out", str(tables),
                 "--pred", f"unet={runs['unet', 'A']}", "--pred", f"unet1={runs['unet1', 'A']}",
                 "--pred", f"unet2={runs['unet2', 'A']}"]) == 0
    assert main(["scenarios", "--pred-oa", str(runs["unet", "A"]), "--pred-ob", str(runs["unet", "B"]),
                 "--data", str(data), "--out", str(tables)]) == 0
    report = tmp_path / "report"
    assert main(["report", "--benchmark", str(tables / "benchmark.csv"), "--scenarios", str(tables / "scenarios.csv"),
                 "--overlays", str(runs["unet", "A"]), "--data", str(data),
                 "--history", str(tmp_path / "runs" / "unet_A" / "history.csv"), "--out", str(report)]) == 0
    assert (report / "report.md").is_file()
    assert (report / "unet_A_history.png").is_file()
    assert len(list((report / "overlays").glob("*.png"))) == 2
