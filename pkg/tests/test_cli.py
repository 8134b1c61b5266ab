import csv
import json

import numpy as np
import pytest

from mkofl.cli import main

SMALL = ["--set", "K=3", "--set", "T=25", "--set", "P=4", "--set", "r=20",
         "--set", "data_seed=2", "--set", "seed=2"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestRun:
    def test_artifacts_and_row_counts(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["run", "--algo", "mk_ofl", *SMALL, "--out", str(out)])
        assert rc == 0
        for name in ("trace_trial0.csv", "mse_trace.csv", "summary.json",
                     "manifest.json", "fraction.csv"):
            assert (out / name).exists(), name
        assert len(read_csv(out / "mse_trace.csv")) == 25
        assert len(read_csv(out / "trace_trial0.csv")) == 25

    def test_trace_schema(self, tmp_path):
        out = tmp_path / "run"
        main(["run", "--algo", "mk_ofl", *SMALL, "--out", str(out)])
        rows = read_csv(out / "trace_trial0.csv")
        assert set(rows[0]) == {"round", "selected_kernel", "sq_err_sum",
                                "mse", "alg_loss_sum", "label_sum",
                                "uplink_scalars", "downlink_scalars"}
        assert rows[0]["round"] == "1"
        assert rows[0]["selected_kernel"] == "1"

    def test_identical_invocations_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", "--algo", "mk_ofl", *SMALL, "--out", str(a)])
        main(["run", "--algo", "mk_ofl", *SMALL, "--out", str(b)])
        for name in ("trace_trial0.csv", "mse_trace.csv", "fraction.csv",
                     "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_algo_seed_leaves_stream_column(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", "--algo", "mk_ofl", *SMALL, "--out", str(a)])
        main(["run", "--algo", "mk_ofl", *SMALL[:-1], "seed=77", "--out", str(b)])
        col_a = [r["label_sum"] for r in read_csv(a / "trace_trial0.csv")]
        col_b = [r["label_sum"] for r in read_csv(b / "trace_trial0.csv")]
        assert col_a == col_b
        mse_a = [r["mse"] for r in read_csv(a / "trace_trial0.csv")]
        mse_b = [r["mse"] for r in read_csv(b / "trace_trial0.csv")]
        assert mse_a != mse_b

    def test_manifest_contents(self, tmp_path):
        out = tmp_path / "run"
        main(["run", "--algo", "mk_ofl", *SMALL, "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["algorithm"] == "mk_ofl"
        assert manifest["config"]["K"] == 3
        assert manifest["seeds"] == {"seed": 2, "data_seed": 2}
        assert manifest["schema_versions"]["trace"] == 1
        assert "duration_s" in manifest

    def test_missing_dataset_path_exit_2(self, tmp_path, capsys):
        rc = main(["run", "--algo", "mk_ofl", "--dataset",
                   "csv:/definitely/not/here.csv:y",
                   "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "/definitely/not/here.csv" in capsys.readouterr().err

    def test_unknown_config_key_exit_2(self, tmp_path, capsys):
        rc = main(["run", "--algo", "mk_ofl", "--set", "warp=9",
                   "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "warp" in capsys.readouterr().err

    def test_config_file_with_overrides(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"algorithm": "mk_ofl", "K": 3,
                                        "T": 10, "P": 4, "r": 20}))
        out = tmp_path / "run"
        rc = main(["run", "--config", str(cfg_path), "--set", "T=12",
                   "--out", str(out)])
        assert rc == 0
        assert len(read_csv(out / "mse_trace.csv")) == 12

    def test_verbose_trace_emits_kernel_losses(self, tmp_path):
        out = tmp_path / "run"
        main(["run", "--algo", "mk_ofl", *SMALL, "--verbose-trace",
              "--out", str(out)])
        rows = read_csv(out / "kernel_losses_trial0.csv")
        assert len(rows) == 25 * 3
        assert set(rows[0]) == {"round", "node", "ell_1", "ell_2", "ell_3",
                                "ell_4"}

    def test_burn_in_summary(self, tmp_path):
        out = tmp_path / "run"
        main(["run", "--algo", "mk_ofl", *SMALL, "--set", "mse_burn_in=5",
              "--out", str(out)])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["mse_burn_in"] == 5
        assert "terminal_mse_burned_mean" in summary


class TestCompare:
    def test_sk_all_wide_csv(self, tmp_path):
        out = tmp_path / "cmp"
        rc = main(["compare", "--sk-all", *SMALL, "--out", str(out)])
        assert rc == 0
        rows = read_csv(out / "compare.csv")
        # round column plus mk_ofl plus one sk column per kernel
        assert len(rows[0]) == 1 + 1 + 4
        assert len(rows) == 25
        comm = read_csv(out / "compare_comm.csv")
        assert {r["run"] for r in comm} >= {"mk_ofl", "sk_ofl_p1"}

    def test_comm_ratio_matches_naive_overhead(self, tmp_path):
        cfg_mk = tmp_path / "mk.json"
        cfg_nv = tmp_path / "nv.json"
        base = {"K": 3, "T": 10, "P": 4, "r": 20, "data_seed": 2}
        cfg_mk.write_text(json.dumps({**base, "algorithm": "mk_ofl"}))
        cfg_nv.write_text(json.dumps({**base, "algorithm": "naive_mk"}))
        out = tmp_path / "cmp"
        rc = main(["compare", str(cfg_mk), str(cfg_nv), "--out", str(out)])
        assert rc == 0
        comm = {r["run"]: int(r["uplink_scalars"])
                for r in read_csv(out / "compare_comm.csv")}
        D = 20 // 2 - 1
        assert comm["naive_mk"] / comm["mk_ofl"] == (4 * 2 * D + 4) / (2 * D + 1)

    def test_mismatched_data_seed_refused(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        a.write_text(json.dumps({"algorithm": "mk_ofl", "K": 3, "T": 10,
                                 "P": 4, "r": 20, "data_seed": 1}))
        b.write_text(json.dumps({"algorithm": "naive_mk", "K": 3, "T": 10,
                                 "P": 4, "r": 20, "data_seed": 2}))
        rc = main(["compare", str(a), str(b), "--out", str(tmp_path / "c")])
        assert rc == 2
        assert "data_seed" in capsys.readouterr().err

    def test_no_configs_refused(self, tmp_path, capsys):
        rc = main(["compare", "--out", str(tmp_path / "c")])
        assert rc == 2


class TestOracle:
    def run_verbose(self, tmp_path, extra=()):
        out = tmp_path / "run"
        rc = main(["run", "--algo", "mk_ofl", *SMALL, "--verbose-trace",
                   *extra, "--out", str(out)])
        assert rc == 0
        return out

    def test_report_contents(self, tmp_path):
        out = self.run_verbose(tmp_path)
        rc = main(["oracle", str(out), "--n-draws", "20000", "--states", "3"])
        assert rc == 0
        report = json.loads((out / "oracle_report.json").read_text())
        assert len(report["hindsight_losses"]) == 4
        assert report["regret"] == pytest.approx(
            report["alg_loss"] - min(report["hindsight_losses"]))
        assert report["regret_over_sqrt_T"] == pytest.approx(
            report["regret"] / np.sqrt(25))
        assert len(report["martingale"]) == 3
        assert all(m["passed"] for m in report["martingale"])
        pmf_rows = read_csv(out / "central_pmf.csv")
        assert len(pmf_rows) == 25
        q0 = [float(pmf_rows[0][f"q_{p}"]) for p in range(1, 5)]
        np.testing.assert_allclose(q0, 0.25)

    def test_single_node_tv_zero(self, tmp_path):
        out = tmp_path / "run"
        main(["run", "--algo", "mk_ofl", "--set", "K=1", "--set", "T=20",
              "--set", "P=4", "--set", "r=20", "--verbose-trace",
              "--out", str(out)])
        rc = main(["oracle", str(out), "--n-draws", "1000", "--states", "2"])
        assert rc == 0
        report = json.loads((out / "oracle_report.json").read_text())
        assert report["tv_max"] <= 1e-12

    def test_needs_verbose_trace(self, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--algo", "mk_ofl", *SMALL, "--out", str(out)])
        rc = main(["oracle", str(out)])
        assert rc == 2
        assert "--verbose-trace" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path, capsys):
        rc = main(["oracle", str(tmp_path / "ghost")])
        assert rc == 2
