import copy
import json
from pathlib import Path

import numpy as np
import pytest

from residual_sbl import cli
from residual_sbl.forward_models import acquire, make_model
from residual_sbl.io import read_csv, read_pgm, write_pgm
from residual_sbl.signals import make_grid, sample_signal
from residual_sbl.solver import HyperParams, gsbl_run
from residual_sbl.transforms import make_transform

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "name": "small",
    "dimension": 1,
    "n": 32,
    "measurements": [
        {"target": "f1", "kind": "identity", "snr_db": 10, "noise_seed": 1},
        {"target": "f4", "kind": "subsample", "r": 0.3, "mask_seed": 2, "snr_db": 20, "noise_seed": 3},
    ],
    "priors": [
        {"name": "T", "kind": "local", "vartheta": 1e-4},
        {"name": "R", "kind": "residual", "p": 0, "zeta": 0.25, "vartheta": 1e-4},
    ],
    "hyper": {"max_outer_iters": 30},
    "replicates": [0, 1],
}


def _config(**changes):
    raw = copy.deepcopy(SMALL)
    raw.update(changes)
    return raw


def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(Path(path).iterdir())}


class TestConfig:
    def test_valid(self):
        cfg = cli.ExperimentConfig.from_dict(_config())
        assert cfg.modes == ("separate",) and cfg.hyper_for(cfg.priors[0]).max_outer_iters == 30

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda r: r.update(colour="red"),
            lambda r: r["measurements"][0].update(extra=1),
            lambda r: r["measurements"][0].pop("noise_seed"),
            lambda r: r["measurements"][1].pop("mask_seed"),
            lambda r: r["measurements"].append({"target": "f2", "kind": "blur", "snr_db": 5, "noise_seed": 0}),
            lambda r: r["measurements"][0].update(target="f9"),
            lambda r: r.update(n=31),
            lambda r: r.update(modes=["both"]),
            lambda r: r["priors"].append({"name": "T", "kind": "local", "vartheta": 1}),
            lambda r: r["hyper"].update(beta=0.5),
            lambda r: r["hyper"].update(hyperprior="shape"),
            lambda r: r["measurements"][0].update(snr_db="loud"),
            lambda r: r.update(dimension=2),
        ],
    )
    def test_rejected(self, mutate):
        raw = _config()
        mutate(raw)
        with pytest.raises(cli.ConfigError):
            cli.ExperimentConfig.from_dict(raw)

    def test_infinite_snr(self):
        raw = _config()
        raw["measurements"][0]["snr_db"] = "inf"
        assert cli.ExperimentConfig.from_dict(raw).measurements[0].snr_db == np.inf

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_bundled_configs_validate(self, path):
        cfg = cli.load_config(path)
        assert {p.kind for p in cfg.priors} == {"local", "residual"}

    def test_unreadable(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(cli.ConfigError):
            cli.load_config(tmp_path / "bad.json")


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    assert cli.run_experiment(_config(), out) == cli.EXIT_OK
    return out


class TestRun:
    def test_recovery_csv_layout(self, outputs):
        text = (outputs / "recovery_rep0_R_separate_m0_f1.csv").read_text().splitlines()
        assert text[0] == "s,truth,map,abs_err"
        assert len(text) == 33

    def test_all_values_finite(self, outputs):
        for path in outputs.glob("*.csv"):
            for column in read_csv(path).values():
                assert np.all(np.isfinite(column)), path.name

    def test_summary_lists_every_signal_and_prior(self, outputs):
        summary = cli.read_summary(outputs / "summary.txt")
        for target, m in (("f1", 0), ("f4", 1)):
            for prior in ("T", "R"):
                assert f"mean_abs.{target}.m{m}.{prior}.separate.avg" in summary

    def test_summary_matches_csv(self, outputs):
        summary = cli.read_summary(outputs / "summary.txt")
        for key, value in summary.items():
            if not key.startswith("mean_abs.") or key.endswith(".avg"):
                continue
            _, target, m, prior, mode, rep = key.split(".")
            table = read_csv(outputs / f"recovery_{rep}_{prior}_{mode}_{m}_{target}.csv")
            assert float(value) == pytest.approx(np.mean(table["abs_err"]), abs=1e-12)
            np.testing.assert_array_equal(table["abs_err"], np.abs(table["map"] - table["truth"]))

    def test_measurements_and_traces(self, outputs):
        meas = read_csv(outputs / "measurement_rep1_m1.csv")
        assert meas["index"].size == 22 and np.all(meas["imag"] == 0)
        trace = read_csv(outputs / "trace_rep0_T_separate_m0.csv")
        assert np.all(np.diff(trace["objective"]) <= 1e-8 * np.abs(trace["objective"][:-1]))

    def test_byte_identical_reruns(self, outputs, tmp_path):
        assert cli.run_experiment(_config(), tmp_path) == cli.EXIT_OK
        assert _tree(tmp_path) == _tree(outputs)

    def test_workers_do_not_change_output(self, outputs, tmp_path):
        assert cli.run_experiment(_config(workers=2), tmp_path) == cli.EXIT_OK
        assert _tree(tmp_path) == _tree(outputs)

    def test_single_measurement_matches_library(self, tmp_path):
        raw = _config(measurements=[SMALL["measurements"][1]], priors=[SMALL["priors"][1]], replicates=[4])
        res = cli.run_suite(cli.ExperimentConfig.from_dict(raw))
        f = sample_signal("f4", make_grid(32))
        model = make_model("subsample", 32, r=0.3, seed=[2, 4])
        direct = gsbl_run(acquire(f, model, 20, [3, 4]), make_transform("residual", 32), HyperParams(max_outer_iters=30))
        np.testing.assert_array_equal(res.recoveries[0].x, direct.x)

    def test_joint_mode_and_uq(self, tmp_path):
        raw = _config(
            measurements=[
                {"target": "f3", "kind": "identity", "snr_db": 5, "noise_seed": 1},
                {"target": "f3", "kind": "blur", "gamma": 0.03, "snr_db": 20, "noise_seed": 2},
            ],
            modes=["separate", "joint"],
            replicates=[0],
            uq={"enabled": True, "level": 0.9, "samples": 3, "seed": 5},
            dump_transforms=True,
        )
        assert cli.run_experiment(raw, tmp_path) == cli.EXIT_OK
        table = read_csv(tmp_path / "recovery_rep0_R_joint_m1_f3.csv")
        assert list(table) == ["s", "truth", "map", "abs_err", "lower", "upper"]
        assert np.all(table["lower"] <= table["map"]) and np.all(table["map"] <= table["upper"])
        assert (tmp_path / "trace_rep0_R_joint_f3.csv").exists()
        assert read_csv(tmp_path / "recovery_rep0_T_separate_m0_f3_samples.csv")["draw"].max() == 2
        assert (tmp_path / "transform_R.csv").exists()

    def test_two_dimensional(self, tmp_path):
        raw = {
            "name": "tiny2d",
            "dimension": 2,
            "n": 8,
            "measurements": [
                {
                    "target": "h3",
                    "kind": "partial_fourier",
                    "r": 0.5,
                    "mask_seed": 1,
                    "keep_dc": True,
                    "snr_db": 10,
                    "noise_seed": 2,
                }
            ],
            "priors": [{"name": "R", "kind": "residual", "vartheta": 1e-3}],
            "replicates": [0],
        }
        assert cli.run_experiment(raw, tmp_path) == cli.EXIT_OK
        table = read_csv(tmp_path / "recovery_rep0_R_separate_m0_h3.csv")
        assert list(table)[:2] == ["row", "col"] and table["row"].size == 64
        pixels, _ = read_pgm(tmp_path / "recovery_rep0_R_separate_m0_h3.pgm")
        assert pixels.shape == (8, 8) and pixels.min() == 0 and pixels.max() == 255
        meas = read_csv(tmp_path / "measurement_rep0_m0.csv")
        assert np.any(meas["imag"] != 0)

    def test_user_image(self, tmp_path, rng):
        write_pgm(tmp_path / "in.pgm", rng.integers(0, 256, (20, 24), dtype=np.uint8))
        raw = {
            "name": "user",
            "dimension": 2,
            "n": 10,
            "image_path": str(tmp_path / "in.pgm"),
            "crop": True,
            "measurements": [{"target": "input", "kind": "identity", "snr_db": 20, "noise_seed": 0}],
            "priors": [{"name": "T", "kind": "local", "vartheta": 1e-2}],
            "replicates": [0],
        }
        assert cli.run_experiment(raw, tmp_path / "out") == cli.EXIT_OK
        truth = read_csv(tmp_path / "out" / "truth_input.csv")["value"]
        assert truth.size == 100 and truth.min() >= 0 and truth.max() <= 1


class TestMain:
    def test_main_round_trip(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps(_config(replicates=[0])))
        assert cli.main(["--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "summary.txt").exists()

    def test_config_error_exit(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps(_config(bogus=1)))
        assert cli.main(["--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
        assert not (tmp_path / "o").exists()

    def test_missing_config(self, tmp_path):
        assert cli.main(["--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG

    def test_solver_failure_exit(self, tmp_path):
        raw = {
            "name": "starved",
            "dimension": 2,
            "n": 24,
            "measurements": [{"target": "h2", "kind": "blur", "gamma": 0.3, "snr_db": 5, "noise_seed": 0}],
            "priors": [{"name": "T", "kind": "local", "vartheta": 1e-2}],
            "hyper": {"cg_max_iters": 1},
            "replicates": [0],
        }
        (tmp_path / "c.json").write_text(json.dumps(raw))
        assert cli.main(["--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == cli.EXIT_SOLVER

    def test_unseen_constants_exit(self, tmp_path):
        # without the zero frequency the data cannot see constant images
        raw = {
            "name": "no_dc",
            "dimension": 2,
            "n": 8,
            "measurements": [
                {"target": "h3", "kind": "partial_fourier", "r": 0.5, "mask_seed": 1, "snr_db": 10, "noise_seed": 2}
            ],
            "priors": [{"name": "T", "kind": "local", "vartheta": 1e-3}],
            "replicates": [0],
        }
        (tmp_path / "c.json").write_text(json.dumps(raw))
        assert cli.main(["--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == cli.EXIT_SOLVER

    def test_flags_required(self):
        with pytest.raises(SystemExit):
            cli.main(["--out", "x"])
