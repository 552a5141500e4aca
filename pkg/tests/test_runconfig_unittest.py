"""
Unit tests for the run configuration file.

Goals:
- KEY=VALUE parsing is strict about malformed lines and unknown keys.
- `--set` overrides and the seed flag take precedence over the file.
- The effective dump parses back to the same configuration.
"""

from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

from rootseg import runconfig
from rootseg.runconfig import RunConfig, build_run_config, load_run_config


class TestParseLines(unittest.TestCase):
    def test_comments_blanks_and_quotes(self) -> None:
        values = runconfig.parse_lines(["# header", "", "train.max_epochs = 5", 'paths.out="runs/x"'])
        self.assertEqual(values, {"train.max_epochs": "5", "paths.out": "runs/x"})

    def test_malformed_line_names_location(self) -> None:
        with self.assertRaisesRegex(ValueError, "cfg.txt:2"):
            runconfig.parse_lines(["seed=1", "oops"], "cfg.txt")


class TestBuild(unittest.TestCase):
    def test_defaults(self) -> None:
        run = build_run_config({})
        self.assertEqual(run, RunConfig())

    def test_typed_values(self) -> None:
        run = build_run_config(
            {
                "frangi.sigmas": "1,2.5,4",
                "train.momentum": "0.9",
                "arch.depth": "2",
                "scene.root_count_range": "0,3",
                "cma.population_size": "12",
                "grid.panel_width_mm": "none",
            }
        )
        self.assertEqual(run.frangi.sigmas, (1.0, 2.5, 4.0))
        self.assertEqual(run.train.momentum, 0.9)
        self.assertEqual(run.arch.depth, 2)
        self.assertEqual(run.scene.root_count_range, (0, 3))
        self.assertEqual(run.cma.population_size, 12)
        self.assertIsNone(run.grid.panel_width_mm)

    def test_unknown_keys_rejected(self) -> None:
        for key in ("train.nope", "nosection.x", "paths.somewhere", "depth"):
            with self.assertRaises(ValueError, msg=key):
                build_run_config({key: "1"})

    def test_bad_values_rejected(self) -> None:
        with self.assertRaisesRegex(ValueError, "train.batch_size"):
            build_run_config({"train.batch_size": "four"})
        with self.assertRaises(ValueError):
            build_run_config({"scene.root_width_range": "2"})
        with self.assertRaisesRegex(ValueError, r"\[grid\]"):
            build_run_config({"grid.square_size_mm": "15"})

    def test_seed_propagates_unless_set(self) -> None:
        run = build_run_config({"seed": "42"})
        self.assertEqual((run.seed, run.scene.seed, run.train.seed), (42, 42, 42))
        run = build_run_config({"seed": "42", "train.seed": "7"})
        self.assertEqual((run.scene.seed, run.train.seed), (42, 7))

    def test_path_lookup(self) -> None:
        run = build_run_config({"paths.manifest": "data/manifest.csv"})
        self.assertEqual(run.path("manifest"), Path("data/manifest.csv"))
        self.assertIsNone(run.path("checkpoint"))


class TestLoad(unittest.TestCase):
    def test_overrides_beat_file_and_seed_flag_beats_both(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "run.cfg"
            path.write_text("seed=1\ntrain.seed=3\ntrain.max_epochs=10\n", encoding="utf-8")
            run = load_run_config(path, ["train.max_epochs=2"])
            self.assertEqual(run.train.max_epochs, 2)
            self.assertEqual(run.train.seed, 3)

            run = load_run_config(path, [], seed=9, out=Path(tmpdir) / "out")
            self.assertEqual((run.seed, run.scene.seed, run.train.seed), (9, 9, 9))
            self.assertEqual(run.path("out"), Path(tmpdir) / "out")

    def test_missing_file(self) -> None:
        with self.assertRaises(FileNotFoundError):
            load_run_config(Path("/nonexistent/run.cfg"))

    def test_dump_parses_back_equal(self) -> None:
        run = build_run_config(
            {
                "seed": "11",
                "frangi.sigmas": "0.5,1.5",
                "frangi.c": "0.123456789",
                "train.tile_in": "92",
                "grid.panel_height_mm": "250.5",
                "paths.manifest": "data/manifest.csv",
            }
        )
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "effective_config.txt"
            runconfig.dump_effective_config(run, path)
            self.assertEqual(load_run_config(path), run)


if __name__ == "__main__":
    unittest.main()
