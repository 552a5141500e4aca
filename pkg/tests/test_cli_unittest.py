"""
End-to-end tests for the rootseg command line on tiny synthetic data.

Goals:
- synth -> split -> segment -> evaluate runs with the documented files.
- train and tune-frangi produce checkpoints and parameter files.
- Repeated train runs write byte-identical logs; 2 + 2 resumed epochs
  match 4 straight ones.
- Bad configuration and bad arguments exit with status 1.
"""

from __future__ import annotations

import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

from rootseg import app, log
from rootseg.config import EVAL_COLUMNS
from rootseg.dataio import load_manifest
from rootseg.frangi import FrangiParams
from rootseg.storage import read_csv, save_json

SCENE = ["--set", "scene.height=64", "--set", "scene.width=64", "--set", "scene.root_width_range=3,4"]
TINY_NET = [
    "--set", "arch.depth=2",
    "--set", "arch.base_channels=4",
    "--set", "train.tile_in=68",
    "--set", "train.max_epochs=1",
    "--set", "train.batch_size=2",
    "--set", "train.tiles_sampled_per_image=6",
    "--set", "train.tiles_kept_per_image=1",
]


class TestCli(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self._real_log_path = log._log_path
        log._log_path = self.root / "rootseg.log"

    def tearDown(self) -> None:
        log._log_path = self._real_log_path
        self._tmp.cleanup()

    def run_cli(self, *argv: str) -> tuple[int, str, str]:
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            status = app.main(list(argv))
        return status, out.getvalue(), err.getvalue()

    def synth(self, n: int = 12) -> Path:
        data = self.root / "data"
        status, out, _ = self.run_cli("synth", "-n", str(n), "--test", "2", "--seed", "3", "--out", str(data), *SCENE)
        self.assertEqual(status, 0)
        self.assertIn("[rootseg]", out)
        return data

    def test_synth_layout(self) -> None:
        data = self.synth()
        manifest = load_manifest(data / "manifest.csv")
        self.assertEqual(len(manifest.rows), 12)
        self.assertEqual(len(load_manifest(data / "test" / "manifest.csv").rows), 2)
        self.assertTrue((data / "effective_config.txt").exists())
        self.assertEqual([p.name for p in self.root.iterdir() if p.name.startswith(".data")], [])

    def test_synth_is_reproducible(self) -> None:
        data = self.synth(3)
        first = (data / "images" / "scene_0001.png").read_bytes()
        data = self.synth(3)
        self.assertEqual((data / "images" / "scene_0001.png").read_bytes(), first)

    def test_split_segment_evaluate(self) -> None:
        data = self.synth()
        status, _, _ = self.run_cli("split", str(data / "manifest.csv"))
        self.assertEqual(status, 0)
        split = load_manifest(data / "split.csv")
        self.assertEqual(len(split.by_split("validation")), 9)
        self.assertEqual(len(split.by_split("train")), 3)

        params_path = self.root / "frangi.json"
        save_json(params_path, FrangiParams().to_dict())
        seg = self.root / "seg"
        status, _, _ = self.run_cli("segment", str(data / "images"), "--frangi-params", str(params_path), "--out", str(seg))
        self.assertEqual(status, 0)
        self.assertEqual(len(list(seg.glob("*_mask.png"))), 12)

        ev = self.root / "eval"
        status, _, _ = self.run_cli("evaluate", str(data / "masks"), str(data / "masks"), "--out", str(ev))
        self.assertEqual(status, 0)
        summary = json.loads((ev / "summary.json").read_text(encoding="utf-8"))
        self.assertEqual(summary["pooled"]["f1"], 1.0)
        self.assertEqual(summary["images"], 12)
        rows = read_csv(ev / "evaluation.csv", required=EVAL_COLUMNS)
        self.assertEqual(len(rows), 12)
        self.assertTrue(all(r["root_length_px"] == r["true_root_length_px"] for r in rows))

        status, _, _ = self.run_cli("evaluate", str(seg), str(data / "masks"), "--out", str(self.root / "eval2"))
        self.assertEqual(status, 0)

    def test_train_then_segment_with_checkpoint(self) -> None:
        data = self.synth()
        runs = self.root / "runs"
        status, _, err = self.run_cli("train", str(data / "manifest.csv"), "--out", str(runs), *TINY_NET)
        self.assertEqual(status, 0, err)
        for name in ("best.ckpt", "last.ckpt", "train_log.csv", "train_summary.json", "effective_config.txt"):
            self.assertTrue((runs / name).exists(), name)
        summary = json.loads((runs / "train_summary.json").read_text(encoding="utf-8"))
        self.assertEqual(summary["epochs"], 1)
        self.assertEqual(len(summary["validation_ids"]), 9)

        seg = self.root / "seg"
        status, _, _ = self.run_cli(
            "segment", str(data / "test" / "images"), "--checkpoint", str(runs / "best.ckpt"),
            "--save-prob", "--out", str(seg),
        )
        self.assertEqual(status, 0)
        self.assertEqual(len(list(seg.glob("*_mask.png"))), 2)
        self.assertEqual(len(list(seg.glob("*_prob.png"))), 2)

    def train(self, data: Path, out: Path, epochs: int, *extra: str) -> bytes:
        status, _, err = self.run_cli(
            "train", str(data / "manifest.csv"), "--out", str(out), *TINY_NET,
            "--set", f"train.max_epochs={epochs}", *extra,
        )
        self.assertEqual(status, 0, err)
        return (out / "train_log.csv").read_bytes()

    def test_identical_train_runs_write_identical_logs(self) -> None:
        data = self.synth()
        first = self.train(data, self.root / "a", 2)
        second = self.train(data, self.root / "b", 2)
        self.assertEqual(first, second)
        self.assertEqual(len(first.decode("utf-8").splitlines()), 3)

    def test_resumed_train_matches_straight_run(self) -> None:
        data = self.synth()
        straight = self.train(data, self.root / "straight", 4)
        self.train(data, self.root / "resumed", 2)
        resumed = self.train(data, self.root / "resumed", 4, "--resume")
        self.assertEqual(resumed, straight)
        summary = json.loads((self.root / "resumed" / "train_summary.json").read_text(encoding="utf-8"))
        self.assertEqual(summary["epochs"], 4)

    def test_tune_frangi(self) -> None:
        data = self.synth()
        out = self.root / "frangi"
        status, _, err = self.run_cli(
            "tune-frangi", str(data / "manifest.csv"), "--out", str(out), "--set", "cma.max_evaluations=10"
        )
        self.assertEqual(status, 0, err)
        params = FrangiParams.from_dict(json.loads((out / "frangi_params.json").read_text(encoding="utf-8")))
        params.validate()
        self.assertTrue((out / "cma_log.csv").exists())

    def test_unknown_config_key_exits_1(self) -> None:
        status, _, err = self.run_cli("synth", "--set", "bogus.key=1", "--out", str(self.root / "x"))
        self.assertEqual(status, 1)
        self.assertIn("bogus.key", err)
        self.assertIn("See log:", err)
        self.assertFalse((self.root / "x").exists())

    def test_segment_needs_one_model(self) -> None:
        data = self.synth(2)
        status, _, _ = self.run_cli("segment", str(data / "images"), "--out", str(self.root / "seg"))
        self.assertEqual(status, 1)

    def test_missing_manifest_exits_1(self) -> None:
        status, _, _ = self.run_cli("split", str(self.root / "nope.csv"))
        self.assertEqual(status, 1)

    def test_bad_argument_exits_1(self) -> None:
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                app.main(["synth", "-n", "abc"])
        self.assertEqual(ctx.exception.code, 1)


if __name__ == "__main__":
    unittest.main()
