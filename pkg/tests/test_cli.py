import json

import numpy as np
import pytest

from ffdrive import cli
from ffdrive.model import RunConfig, load_config


MINI_CONFIG = """
potential = quartic
mass = 1.0
hbar = 2.0
tau = 1.0
n = 12
q_max = 8.0
grid_points = 512
dt_quantum = 0.001
dt_classical = 0.001
n_trajectories = 320
theta_bins = 32
"""


@pytest.fixture
def mini_config(tmp_path):
    path = tmp_path / "mini.cfg"
    path.write_text(MINI_CONFIG + f"output_dir = {tmp_path / 'out'}\n")
    return path


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        rc = cli.main(["--config", str(tmp_path / "absent.cfg"), "eigen"])
        assert rc == 2
        assert "not found" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("n_trajectorys = 10\n")
        rc = cli.main(["--config", str(bad), "eigen"])
        assert rc == 2
        assert "n_trajectorys" in capsys.readouterr().err

    def test_numerical_failure_maps_to_three(self, tmp_path, capsys):
        cfg = tmp_path / "coarse.cfg"
        cfg.write_text(
            "potential = harmonic\nhbar = 1.0\ngrid_points = 256\n"
            f"dt_quantum = 50.0\nn = 2\noutput_dir = {tmp_path / 'out'}\n"
        )
        rc = cli.main(
            ["--config", str(cfg), "evolve-quantum", "--hamiltonian", "bare",
             "--snapshots", "3", "--k", "5"]
        )
        assert rc == 3
        assert "numerical failure" in capsys.readouterr().err


class TestSubcommands:
    def test_eigen_dump(self, tmp_path):
        cfg = tmp_path / "ho.cfg"
        out = tmp_path / "out"
        cfg.write_text(
            f"potential = harmonic\nhbar = 1.0\ngrid_points = 256\nn = 2\noutput_dir = {out}\n"
        )
        rc = cli.main(["--config", str(cfg), "eigen", "--t", "0", "--k", "5",
                       "--vectors", "0,2"])
        assert rc == 0
        rows = np.loadtxt(out / "eigenvalues_t0.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(rows[:, 1], np.arange(5) + 0.5, atol=1e-6)
        assert (out / "eigvec_t0_k0.csv").exists()
        assert (out / "eigvec_t0_k2.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert "eigenvalues_t0.csv" in manifest["files"]

    def test_wkb_dump(self, tmp_path):
        cfg = tmp_path / "ho.cfg"
        out = tmp_path / "out"
        cfg.write_text(
            f"potential = harmonic\nhbar = 1.0\ngrid_points = 256\nn = 3\noutput_dir = {out}\n"
        )
        rc = cli.main(["--config", str(cfg), "wkb", "--t", "0"])
        assert rc == 0
        meta = json.loads((out / "shell_meta_t0.json").read_text())
        assert meta["E"] == pytest.approx(3.5, abs=1e-8)
        assert meta["I"] == pytest.approx(3.5, abs=1e-8)
        assert meta["T"] == pytest.approx(2 * np.pi, rel=1e-9)
        header = (out / "shell_t0.csv").read_text().splitlines()[0]
        assert header == "q,pbar,Sigma,theta"

    def test_fastforward_dump(self, tmp_path, mini_config):
        cfg = load_config(str(mini_config))
        rc = cli.main(
            ["--config", str(mini_config), "fastforward", "--mesh-times", "51",
             "--times", "0.5"]
        )
        assert rc == 0
        out = tmp_path / "out"
        header = (out / "ff_t0.5.csv").read_text().splitlines()[0]
        assert header == "q,v,a,UFF"
        meta = json.loads((out / "ff_meta.json").read_text())
        assert meta["mesh_times"] == 51
        assert meta["gauge"] == "min_zero"
        assert meta["extension"] == "linear"
        del cfg


@pytest.fixture(scope="module")
def mini_results(tmp_path_factory):
    """Two identical mini reproductions for the determinism contract."""
    results = []
    for tag in ("a", "b"):
        root = tmp_path_factory.mktemp(f"repro_{tag}")
        cfg = RunConfig(
            potential="quartic", hbar=2.0, n=12, grid_points=512,
            dt_quantum=1e-3, dt_classical=1e-3, n_trajectories=320,
            theta_bins=32, output_dir=str(root / "out"),
        )
        results.append(
            cli.reproduce(cfg, mesh_times=201, snapshots=11, threads=2)
        )
    return results


class TestReproduceMini:
    def test_outputs_bit_reproducible(self, mini_results):
        manifests = [
            json.loads((res.out_dir / "manifest.json").read_text())
            for res in mini_results
        ]
        assert manifests[0]["files"].keys() == manifests[1]["files"].keys()
        for name in manifests[0]["files"]:
            assert (
                manifests[0]["files"][name]["sha256"]
                == manifests[1]["files"][name]["sha256"]
            ), f"checksum mismatch for {name}"

    def test_summary_keys_and_types(self, mini_results):
        summary = json.loads((mini_results[0].out_dir / "summary.json").read_text())
        for key in (
            "p17", "top3", "p17_bare", "max_action_dev",
            "sideband_sup_diff", "uff_max", "runtime_seconds",
        ):
            assert key in summary
            assert isinstance(summary[key], float)

    def test_expected_file_inventory(self, mini_results):
        out = mini_results[0].out_dir
        for name in (
            "eigenvalues_t0.csv", "eigenvalues_t0.5.csv", "eigenvalues_t1.csv",
            "shell_t0.csv", "shell_meta_t0.json",
            "ff_t0.csv", "ff_t0.5.csv", "ff_t1.csv", "ff_meta.json",
            "populations_bare.csv", "populations_ff.csv",
            "psi_final.csv", "psi_final_bare.csv",
            "frame_0.csv", "frame_10.csv",
            "trajectories_t0.csv", "trajectories_t1.csv",
            "eta.csv", "sidebands.csv", "summary.json", "manifest.json",
        ):
            assert (out / name).exists(), f"missing {name}"

    def test_exit_code_reflects_thresholds(self, mini_results, tmp_path, capsys):
        # the CLI must exit 0 exactly when every threshold check passed
        res = mini_results[0]
        expected = 0 if res.thresholds_ok else 1
        cfg_file = tmp_path / "mini2.cfg"
        cfg_file.write_text(
            MINI_CONFIG + f"output_dir = {tmp_path / 'out2'}\n"
        )
        rc = cli.main(
            ["--config", str(cfg_file), "reproduce",
             "--mesh-times", "201", "--snapshots", "11", "--threads", "2"]
        )
        capsys.readouterr()
        assert rc == expected

    def test_predict_sidebands_from_files(self, mini_results, capsys):
        res = mini_results[0]
        cfg_text = MINI_CONFIG + f"output_dir = {res.out_dir}\n"
        cfg_file = res.out_dir / "reread.cfg"
        cfg_file.write_text(cfg_text)
        rc = cli.main(["--config", str(cfg_file), "predict-sidebands"])
        assert rc == 0
        rows = np.loadtxt(res.out_dir / "sidebands.csv", delimiter=",", skiprows=1)
        # k, l columns aligned around the configured level
        assert rows[:, 0].min() >= 6 and 12 in rows[:, 0]


class TestThresholdLogic:
    def test_all_pass(self):
        checks = cli.evaluate_thresholds(
            {"p17": 0.91, "top3": 0.98, "p17_bare": 0.01,
             "max_action_dev": 1e-5, "sideband_sup_diff": 0.002}
        )
        assert all(checks.values())

    @pytest.mark.parametrize(
        "key,value,failing",
        [
            ("p17", 0.80, "p17_in_band"),
            ("p17", 0.97, "p17_in_band"),
            ("top3", 0.95, "top3_in_band"),
            ("p17_bare", 0.7, "bare_below_half"),
            ("max_action_dev", 0.05, "action_dev_small"),
            ("sideband_sup_diff", 0.2, "sidebands_match"),
        ],
    )
    def test_single_failures(self, key, value, failing):
        base = {"p17": 0.91, "top3": 0.98, "p17_bare": 0.01,
                "max_action_dev": 1e-5, "sideband_sup_diff": 0.002}
        base[key] = value
        checks = cli.evaluate_thresholds(base)
        assert not checks[failing]
        assert sum(not ok for ok in checks.values()) == 1
