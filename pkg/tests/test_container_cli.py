import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from src.cli import EXIT_INVALID, EXIT_OK, load_run_config, main
from src.core.errors import InvalidInputError
from src.core.forward import KSpaceDataset, ReconstructionModel
from src.core.models import RunConfig
from src.tools.container import (
    MANIFEST_FILE,
    load_model,
    read_checkpoint,
    read_dataset,
    read_manifest,
    read_volume,
    write_checkpoint,
    write_dataset,
    write_volume,
)
from src.utils.helpers import flatten_dict, merge_dicts, parse_grid_shape

TINY_RUN = {
    "magnetization": {"hidden_layers": 1, "width": 8, "modes": [2, 4, 4]},
    "coils": {"hidden_layers": 1, "width": 4, "modes": [2, 2]},
    "batch": {"b_time": [1, 2], "b_space": [[2, 2], [2, 2]]},
    "iterations": 2,
    "learning_rate": 1e-3,
}


class TestDatasetFiles:
    def test_dataset_survives_a_write(self, tiny_dataset: KSpaceDataset, tmp_path: Path) -> None:
        write_dataset(tiny_dataset, tmp_path)
        loaded = read_dataset(tmp_path)
        assert loaded.geometry == tiny_dataset.geometry
        np.testing.assert_array_equal(loaded.masks, tiny_dataset.masks)
        np.testing.assert_allclose(loaded.kspace, tiny_dataset.kspace, rtol=1e-6, atol=1e-7)
        assert loaded.ground_truth is not None
        assert read_manifest(tmp_path).mask["kind"] == "rectilinear"

    def test_manifest_is_deterministic(self, tiny_dataset: KSpaceDataset, tmp_path: Path) -> None:
        write_dataset(tiny_dataset, tmp_path / "a")
        write_dataset(tiny_dataset, tmp_path / "b")
        for name in (MANIFEST_FILE, "kspace.c64", "masks.u8"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_truncated_binary_is_rejected(self, tiny_dataset: KSpaceDataset, tmp_path: Path) -> None:
        write_dataset(tiny_dataset, tmp_path)
        path = tmp_path / "kspace.c64"
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(InvalidInputError):
            read_dataset(tmp_path)

    def test_missing_manifest(self, tmp_path: Path) -> None:
        with pytest.raises(InvalidInputError):
            read_dataset(tmp_path)


class TestCheckpoints:
    def test_model_reloads_exactly(
        self, tiny_model: ReconstructionModel, tiny_config: RunConfig, tmp_path: Path
    ) -> None:
        write_checkpoint(tmp_path, tiny_model, tiny_config, iteration=7, lr=5e-4)
        model, manifest = load_model(tmp_path)
        assert manifest.iteration == 7 and manifest.lr == 5e-4
        times = [0.1, 0.9]
        np.testing.assert_array_equal(model.render(times), tiny_model.render(times))
        np.testing.assert_array_equal(model.coil_maps(), tiny_model.coil_maps())

    def test_parameters_are_stored_by_name(
        self, tiny_model: ReconstructionModel, tiny_config: RunConfig, tmp_path: Path
    ) -> None:
        write_checkpoint(tmp_path, tiny_model, tiny_config)
        manifest, params = read_checkpoint(tmp_path)
        names = [e.name for e in manifest.parameters]
        assert names == sorted(tiny_model.parameters())
        assert manifest.lr == tiny_config.learning_rate
        assert set(params) == set(names)

    def test_tampered_config_is_detected(
        self, tiny_model: ReconstructionModel, tiny_config: RunConfig, tmp_path: Path
    ) -> None:
        write_checkpoint(tmp_path, tiny_model, tiny_config)
        manifest_path = tmp_path / MANIFEST_FILE
        payload = json.loads(manifest_path.read_text())
        payload["config"]["seed"] = 99
        manifest_path.write_text(json.dumps(payload))
        with pytest.raises(InvalidInputError):
            read_checkpoint(tmp_path)


def test_volume_files(tmp_path: Path, rng: np.random.Generator) -> None:
    volume = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
    path = write_volume(tmp_path, "rec", volume, times=[0.1, 0.2, 0.3], metadata={"grid": "4x5"})
    loaded, info = read_volume(path)
    np.testing.assert_allclose(loaded, volume, rtol=1e-6, atol=1e-6)
    assert info.shape == [3, 4, 5] and info.metadata == {"grid": "4x5"}


class TestHelpers:
    def test_parse_grid_shape(self) -> None:
        assert parse_grid_shape("128x96") == (128, 96)
        assert parse_grid_shape("32 x 32 x 16") == (32, 32, 16)
        for bad in ("", "12xa", "0x4"):
            with pytest.raises(InvalidInputError):
                parse_grid_shape(bad)

    def test_dict_helpers(self) -> None:
        merged = merge_dicts({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}, "d": 4})
        assert merged == {"a": {"b": 1, "c": 3}, "d": 4}
        assert flatten_dict(merged) == {"a.b": 1, "a.c": 3, "d": 4}

    def test_seed_override(self, tmp_path: Path) -> None:
        path = tmp_path / "run.json"
        path.write_text(json.dumps({**TINY_RUN, "seed": 3}))
        assert load_run_config(path, None).seed == 3
        assert load_run_config(path, 8).seed == 8
        assert load_run_config(None, None).iterations == RunConfig().iterations


class TestCommandLine:
    def test_end_to_end(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        data, out = tmp_path / "data", tmp_path / "out"
        config = tmp_path / "run.json"
        config.write_text(json.dumps(TINY_RUN))

        assert main(["synth", "--out", str(data), "--preset", "tiny", "--af", "2"]) == EXIT_OK
        assert main(["info", "--data", str(data)]) == EXIT_OK
        assert "effective AF 2.000" in capsys.readouterr().out

        assert (
            main(["recon", "--data", str(data), "--config", str(config), "--out", str(out)])
            == EXIT_OK
        )
        for name in ("reconstruction.c64", "reconstruction.json", "loss_trace.csv"):
            assert (out / name).exists()
        assert (out / "checkpoint" / MANIFEST_FILE).exists()
        assert len((out / "loss_trace.csv").read_text().splitlines()) == 1 + 2

        report_dir = tmp_path / "report"
        args = ["eval", "--rec", str(out / "reconstruction.c64"), "--ref", str(data)]
        assert main(args + ["--out", str(report_dir)]) == EXIT_OK
        assert (report_dir / "metrics.csv").exists()
        assert json.loads((report_dir / "metrics.json").read_text())["ssim_min"] <= 1.0

    def test_repeated_recon_runs_write_identical_files(self, tmp_path: Path) -> None:
        data = tmp_path / "data"
        config = tmp_path / "run.json"
        config.write_text(json.dumps({**TINY_RUN, "iterations": 3}))
        assert main(["synth", "--out", str(data), "--preset", "tiny", "--af", "2"]) == EXIT_OK
        for name in ("first", "second"):
            args = ["recon", "--data", str(data), "--config", str(config), "--seed", "5"]
            assert main(args + ["--out", str(tmp_path / name)]) == EXIT_OK

        first, second = tmp_path / "first", tmp_path / "second"
        files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        assert sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file()) == files
        assert {str(f) for f in files} >= {
            "reconstruction.c64",
            "reconstruction.json",
            "loss_trace.csv",
            "checkpoint/manifest.json",
            "checkpoint/params.f64",
        }
        names = [str(f) for f in files]
        match, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
        assert mismatch == [] and errors == []
        assert len(match) == len(files)

    def test_recon_at_a_new_resolution(self, tmp_path: Path) -> None:
        data, out = tmp_path / "data", tmp_path / "out"
        config = tmp_path / "run.json"
        config.write_text(json.dumps(TINY_RUN))
        main(["synth", "--out", str(data), "--preset", "tiny"])
        code = main(
            [
                "recon", "--data", str(data), "--config", str(config), "--out", str(out),
                "--out-grid", "24x20", "--out-frames", "3",
            ]
        )
        assert code == EXIT_OK
        _, info = read_volume(out / "reconstruction.c64")
        assert info.shape == [3, 24, 20]
        assert info.times == pytest.approx([1 / 6, 0.5, 5 / 6])

    def test_invalid_inputs_exit_with_two(self, tmp_path: Path) -> None:
        assert main(["info", "--data", str(tmp_path / "missing")]) == EXIT_INVALID
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        main(["synth", "--out", str(tmp_path / "data"), "--preset", "tiny"])
        args = ["recon", "--data", str(tmp_path / "data"), "--out", str(tmp_path / "o")]
        assert main(args + ["--config", str(bad)]) == EXIT_INVALID
        wrong = tmp_path / "wrong.json"
        wrong.write_text(json.dumps({**TINY_RUN, "magnetization": {"modes": [2, 2]}}))
        assert main(args + ["--config", str(wrong)]) == EXIT_INVALID
        assert main(["synth", "--out", str(tmp_path / "x"), "--preset", "tiny", "--af", "99"]) == (
            EXIT_INVALID
        )
