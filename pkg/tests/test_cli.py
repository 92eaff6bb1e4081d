import json

import numpy as np
import pytest

from qarest import cli
from qarest.dataio import CorpusManifest, MosDatabase, MosRecord, save_image, save_mos_manifest
from qarest.model import ModelConfig
from qarest.trainer import OptimizerConfig, new_train_state, save_checkpoint

from helpers import synth_image

CLI_MODEL = ModelConfig(base_channels=4, res_blocks_per_stage=1, attention_channels=4)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Checkpoint, corpus manifest, loose images, and a MOS csv."""
    root = tmp_path_factory.mktemp("cli")
    state = new_train_state(CLI_MODEL, OptimizerConfig(total_steps=1), seed=2)
    ckpt_dir = root / "ckpt"
    save_checkpoint(state, ckpt_dir)

    rng = np.random.default_rng(31)
    corpus = root / "corpus"
    corpus.mkdir()
    for i in range(3):
        save_image(corpus / f"c{i}.png", synth_image(rng, 48, 48))
    manifest = CorpusManifest(
        name="cli", root=str(corpus), seed=0, entries=[("c0.png", "train"), ("c1.png", "train"), ("c2.png", "val")]
    )
    manifest_path = corpus / "manifest.json"
    manifest.save(manifest_path)

    loose = root / "loose"
    loose.mkdir()
    for i in range(2):
        save_image(loose / f"x{i}.png", synth_image(rng, 32, 32))

    mos_dir = root / "mos"
    mos_dir.mkdir()
    records = []
    for i in range(4):
        rel = f"m{i}.png"
        save_image(mos_dir / rel, synth_image(rng, 32, 32))
        records.append(MosRecord(rel, "jpeg", float(i), 1.0 + i, True))
    mos_csv = mos_dir / "mos.csv"
    save_mos_manifest(MosDatabase(records=records, path=""), mos_csv)

    return {
        "root": root,
        "ckpt": str(ckpt_dir),
        "manifest": str(manifest_path),
        "loose": loose,
        "mos": str(mos_csv),
    }


class TestTrain:
    def test_train_from_config(self, workspace, tmp_path, capsys):
        from qarest.dataio import DistortionSpec, PatchSpec
        from qarest.trainer import LoggingConfig, RunConfig

        run = RunConfig(
            model=CLI_MODEL,
            optimizer=OptimizerConfig(total_steps=2),
            manifest_path=workspace["manifest"],
            distortion=DistortionSpec(),
            patch=PatchSpec(patch_size=16, batch_size=2),
            data_seed=1,
            logging=LoggingConfig(out_dir=str(tmp_path / "run"), checkpoint_interval=10, val_interval=10),
            seed=0,
        )
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(run.to_dict(), indent=2))
        assert cli.main(["train", "--config", str(config_path)]) == 0
        out = capsys.readouterr().out
        assert "trained 2 steps" in out
        assert (tmp_path / "run" / "train_log.csv").is_file()
        assert (tmp_path / "run" / "checkpoints" / "step_00000002").is_dir()


class TestRestore:
    def test_single_file(self, workspace, tmp_path, capsys):
        src = next(workspace["loose"].iterdir())
        out_dir = tmp_path / "restored"
        assert cli.main(["restore", "--ckpt", workspace["ckpt"], "--input", str(src), "--output", str(out_dir)]) == 0
        assert (out_dir / f"{src.stem}_restored.png").is_file()
        prov = json.loads((out_dir / "run.json").read_text())
        assert prov["command"] == "restore"
        assert prov["checkpoint_id"]
        assert str(src) in capsys.readouterr().out

    def test_directory_input(self, workspace, tmp_path):
        out_dir = tmp_path / "restored"
        code = cli.main(["restore", "--ckpt", workspace["ckpt"], "--input", str(workspace["loose"]), "--output", str(out_dir)])
        assert code == 0
        assert len(list(out_dir.glob("*_restored.png"))) == 2


class TestAssess:
    def test_prints_scores(self, workspace, capsys):
        code = cli.main(["assess", "--ckpt", workspace["ckpt"], "--input", str(workspace["loose"]), "--map", "2", "--p", "2.0"])
        assert code == 0
        lines = [ln for ln in capsys.readouterr().out.strip().split("\n") if ln]
        assert len(lines) == 2
        for line in lines:
            assert "Q2(p=2)" in line
            q = float(line.rsplit("=", 1)[1])
            assert 0.0 <= q <= 1.0

    def test_map_choice_enforced(self, workspace, capsys):
        with pytest.raises(SystemExit):
            cli.main(["assess", "--ckpt", workspace["ckpt"], "--input", ".", "--map", "5"])


class TestMetrics:
    def test_pair_json(self, workspace, capsys):
        imgs = sorted(workspace["loose"].iterdir())
        code = cli.main(["metrics", "--ref", str(imgs[0]), "--test", str(imgs[1])])
        assert code == 0
        values = json.loads(capsys.readouterr().out)
        assert set(values) == {"psnr", "ssim", "psnr_b"}
        assert values["psnr"] > 0
        assert -1.0 <= values["ssim"] <= 1.0


class TestEvalCommands:
    def test_eval_restoration(self, workspace, tmp_path, capsys):
        out_dir = tmp_path / "resto"
        code = cli.main([
            "eval-restoration", "--ckpt", workspace["ckpt"], "--corpus", workspace["manifest"],
            "--qfs", "10,50", "--out", str(out_dir),
        ])
        assert code == 0
        assert (out_dir / "restoration.csv").is_file()
        assert (out_dir / "restoration.json").is_file()
        assert json.loads((out_dir / "run.json").read_text())["args"]["qfs"] == [10, 50]
        out = capsys.readouterr().out
        assert "qf 10:" in out and "qf 50:" in out

    def test_eval_restoration_split(self, workspace, tmp_path):
        out_dir = tmp_path / "resto_val"
        code = cli.main([
            "eval-restoration", "--ckpt", workspace["ckpt"], "--corpus", workspace["manifest"],
            "--qfs", "30", "--split", "val", "--out", str(out_dir),
        ])
        assert code == 0
        from qarest.bench import parse_report_csv

        rows = parse_report_csv(out_dir / "restoration.csv")
        assert rows[0]["count"] == 1

    def test_eval_iqa(self, workspace, tmp_path, capsys):
        out_dir = tmp_path / "iqa"
        code = cli.main([
            "eval-iqa", "--ckpt", workspace["ckpt"], "--mos", workspace["mos"],
            "--distortion", "jpeg", "--out", str(out_dir),
        ])
        assert code == 0
        assert (out_dir / "iqa.csv").is_file()
        assert (out_dir / "iqa.json").is_file()
        assert "mos/jpeg:" in capsys.readouterr().out


class TestFailures:
    def test_missing_checkpoint(self, workspace, tmp_path, capsys):
        code = cli.main(["restore", "--ckpt", str(tmp_path / "nope"), "--input", ".", "--output", str(tmp_path / "o")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error[")

    def test_bad_input_path(self, workspace, tmp_path, capsys):
        code = cli.main(["assess", "--ckpt", workspace["ckpt"], "--input", str(tmp_path / "missing.png")])
        assert code == 2
        assert "error[InputError]" in capsys.readouterr().err

    def test_metrics_missing_file(self, workspace, tmp_path, capsys):
        code = cli.main(["metrics", "--ref", str(tmp_path / "a.png"), "--test", str(tmp_path / "b.png")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error[")

    def test_train_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(
            json.dumps(
                {
                    "data": {"manifest": str(tmp_path / "none.json")},
                    "logging": {"out_dir": str(tmp_path / "run")},
                }
            )
        )
        code = cli.main(["train", "--config", str(bad)])
        assert code == 2
        assert capsys.readouterr().err.startswith("error[")
