import csv
import json
import math
import os

import numpy as np
import pytest

from chordfield.cli import main
from chordfield.config import DEFAULTS, UsageError, load_config

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def identical_conditions_config(tmp_path, preset_free=True):
    cfg = {
        "backbone": {
            "source": {
                "weights": [1.0],
                "means": [[0.5, -0.5]],
                "scales": [0.6],
            },
            "target": {
                "weights": [1.0],
                "means": [[0.5, -0.5]],
                "scales": [0.6],
            },
            "output_kind": "velocity",
        },
        "chord": {"use_prox": False},
        "params": {"particles": 120},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestConfig:
    def test_defaults_complete(self):
        for name in DEFAULTS:
            cfg = load_config(name)
            assert cfg.experiment == name
            assert cfg.schedule.get("kind")

    def test_unknown_experiment(self):
        with pytest.raises(UsageError):
            load_config("fourier")

    def test_flag_precedence(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 7, "output_dir": "fromfile"}))
        cfg = load_config("toy", str(path), seed=9, output_dir="fromflag")
        assert cfg.seed == 9
        assert cfg.output_dir == "fromflag"

    def test_override_paths(self):
        cfg = load_config(
            "toy", overrides=["chord.delta=0.2", "params.particles=150"]
        )
        assert cfg.chord["delta"] == 0.2
        assert cfg.params["particles"] == 150

    def test_lambda_alias(self):
        from chordfield.config import build_chord_params

        params = build_chord_params({"lambda": 0.5})
        assert params.step_scale == 0.5

    def test_empty_config_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{}")
        with pytest.raises(UsageError):
            load_config("diagnostics", str(path))

    def test_env_var_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CHORDFIELD_OUT", str(tmp_path / "envout"))
        code = main(["coeffs", "--seed", "1"])
        assert code == 0
        assert (tmp_path / "envout" / "coeffs.csv").exists()

    def test_schedule_from_beta_csv(self, tmp_path):
        from chordfield.config import build_schedule

        path = tmp_path / "beta.csv"
        lines = ["t,beta"] + [f"{t},{0.5 + t}" for t in np.linspace(0, 1, 21)]
        path.write_text("\n".join(lines) + "\n")
        sched = build_schedule({"kind": "vp_generic", "beta_csv": str(path)})
        assert sched.beta(0.0) == pytest.approx(0.5)
        assert sched.beta(1.0) == pytest.approx(1.5)

    def test_schedule_from_inline_table(self):
        from chordfield.config import build_schedule

        t = list(np.linspace(0, 1, 11))
        sched = build_schedule(
            {"kind": "vp_generic", "beta_table": {"times": t, "values": [2.0] * 11}}
        )
        assert sched.beta(0.37) == pytest.approx(2.0)

    def test_bad_schedule_kind_is_usage_error(self):
        from chordfield.config import build_schedule

        with pytest.raises(UsageError):
            build_schedule({"kind": "cosine"})


class TestCoeffs:
    def test_velocity_column_all_one(self, tmp_path):
        out = tmp_path / "run"
        assert main(["coeffs", "--out", str(out), "--seed", "0"]) == 0
        rows = read_csv(out / "coeffs.csv")
        vel = [r for r in rows if r["kind"] == "velocity"]
        assert vel and all(float(r["coefficient"]) == 1.0 for r in vel)

    def test_vp_disagreement_below_tolerance(self, tmp_path):
        out = tmp_path / "run"
        main(["coeffs", "--out", str(out)])
        rows = read_csv(out / "coeffs.csv")
        eps_rows = [r for r in rows if r["kind"] == "noise_eps" and not r["error"]]
        assert eps_rows
        assert all(float(r["max_rel_disagreement"]) <= 1e-6 for r in eps_rows)

    def test_consistency_equals_data_x0(self, tmp_path):
        out = tmp_path / "run"
        main(["coeffs", "--out", str(out)])
        rows = read_csv(out / "coeffs.csv")
        by_key = {(r["t"], r["kind"]): r["coefficient"] for r in rows}
        for (t, kind), value in by_key.items():
            if kind == "consistency":
                assert value == by_key[(t, "data_x0")]

    def test_empty_grid_is_usage_error(self, tmp_path):
        code = main(
            ["coeffs", "--out", str(tmp_path), "--override", "params.t_count=0"]
        )
        assert code == 2

    def test_guard_rows_carry_error_column(self, tmp_path):
        out = tmp_path / "run"
        code = main(
            [
                "coeffs",
                "--out",
                str(out),
                "--override",
                "params.t_values=[1e-7]",
            ]
        )
        assert code == 0  # partial failure is not fatal
        rows = read_csv(out / "coeffs.csv")
        guarded = [r for r in rows if r["error"]]
        assert guarded  # sigma-dividing kinds trip the floor near t = 0


class TestToy:
    def test_identical_conditions_no_motion(self, tmp_path):
        out = tmp_path / "run"
        cfg = identical_conditions_config(tmp_path)
        assert main(["toy", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
        before = read_csv(out / "particles_before.csv")
        for method in ("naive", "chord"):
            after = read_csv(out / f"particles_after_{method}.csv")
            assert len(after) == len(before)
            for b, a in zip(before, after):
                assert b == a  # identical formatted coordinates

    def test_chord_beats_naive_on_default_preset(self, tmp_path):
        out = tmp_path / "run"
        assert main(["toy", "--out", str(out), "--seed", "0"]) == 0
        rows = {r["method"]: r for r in read_csv(out / "energy.csv")}
        assert float(rows["chord"]["mean_distance"]) < float(
            rows["naive"]["mean_distance"]
        )

    def test_small_particle_count_rejected(self, tmp_path):
        code = main(
            ["toy", "--out", str(tmp_path), "--override", "params.particles=50"]
        )
        assert code == 2

    def test_stiff_preset_divergence_counts_ordered(self, tmp_path):
        out = tmp_path / "run"
        code = main(
            [
                "toy",
                "--out",
                str(out),
                "--seed",
                "1",
                "--override",
                'backbone.preset="stiff_2d"',
                "--override",
                "params.particles=150",
            ]
        )
        assert code == 0
        rows = {r["method"]: r for r in read_csv(out / "energy.csv")}
        assert int(rows["chord"]["diverged"]) <= int(rows["naive"]["diverged"])

    def test_mass_divergence_is_exit_three(self, tmp_path):
        # absurd step scale over two sub-steps trips the norm guard on
        # every particle
        code = main(
            [
                "toy",
                "--out",
                str(tmp_path / "run"),
                "--override",
                "chord.step_scale=1e9",
                "--override",
                "params.steps=2",
                "--override",
                "params.particles=100",
            ]
        )
        assert code == 3


class TestStepSweep:
    def test_energy_trends(self, tmp_path):
        out = tmp_path / "run"
        code = main(
            [
                "step_sweep",
                "--out",
                str(out),
                "--seed",
                "0",
                "--override",
                "params.particles=30",
            ]
        )
        assert code == 0
        rows = read_csv(out / "step_sweep.csv")
        energy = {
            (int(r["S"]), r["method"]): float(r["bb_energy"]) for r in rows
        }
        s_values = sorted({int(r["S"]) for r in rows})
        naive = [energy[(s, "naive")] for s in s_values]
        chord = [energy[(s, "chord")] for s in s_values]
        assert naive[0] > naive[-1]
        assert max(chord) / min(chord) <= max(naive) / min(naive)

    def test_needs_s_one(self, tmp_path):
        code = main(
            [
                "step_sweep",
                "--out",
                str(tmp_path),
                "--override",
                "params.s_values=[2,4,8]",
            ]
        )
        assert code == 2


class TestNoiseAblation:
    def test_single_cell_deterministic(self, tmp_path):
        args = [
            "noise_ablation",
            "--seed",
            "5",
            "--override",
            "params.n_values=[1]",
            "--override",
            "params.seeds=1",
        ]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        assert (out_a / "noise_ablation.csv").read_bytes() == (
            out_b / "noise_ablation.csv"
        ).read_bytes()
        rows = read_csv(out_a / "noise_ablation.csv")
        assert len(rows) == 2  # one chord row, one naive row

    def test_cov_orderings(self, tmp_path):
        out = tmp_path / "run"
        assert main(["noise_ablation", "--out", str(out), "--seed", "0"]) == 0
        rows = read_csv(out / "noise_ablation.csv")

        def cov(method, n):
            errs = np.array(
                [
                    float(r["endpoint_error"])
                    for r in rows
                    if r["method"] == method and int(r["n"]) == n
                ]
            )
            return errs.std(ddof=1) / errs.mean()

        assert cov("naive", 1) > cov("chord", 1)
        assert cov("chord", 1) <= 2.0 * cov("chord", 4)


class TestRisk:
    def test_variance_reduction_rows(self, tmp_path):
        out = tmp_path / "run"
        assert main(["risk", "--out", str(out), "--seed", "2"]) == 0
        rows = read_csv(out / "risk.csv")
        for r in rows:
            if r["kernel"] == "dirac":
                assert r["mse_naive"] == r["mse_chord"]
            else:
                assert float(r["mse_chord"]) < float(r["mse_naive"])


class TestErrorOrder:
    def test_slopes_and_ratio(self, tmp_path):
        out = tmp_path / "run"
        assert main(["error_order", "--out", str(out), "--seed", "0"]) == 0
        text = (out / "summary.txt").read_text()
        slopes = {}
        ratio = None
        for line in text.splitlines():
            if "slope" in line:
                name, value = line.split(" slope ")
                slopes[name] = float(value)
            if "ratio" in line:
                ratio = float(line.rsplit(" ", 1)[1])
        assert 0.8 <= slopes["chord"] <= 1.2
        assert 0.8 <= slopes["naive"] <= 1.2
        assert ratio <= 1.05


class TestDiagnostics:
    def test_default_run_passes(self, tmp_path):
        out = tmp_path / "run"
        assert main(["diagnostics", "--out", str(out), "--seed", "0"]) == 0
        text = (out / "summary.txt").read_text()
        assert "FAIL" not in text

    def test_zero_slack_fails_with_named_check(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(
            [
                "diagnostics",
                "--out",
                str(out),
                "--override",
                "params.lte_slack=0",
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert "lte_bound_with_slack" in err

    def test_empty_config_usage_error(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{}")
        code = main(["diagnostics", "--config", str(path), "--out", str(tmp_path)])
        assert code == 2


class TestReproducibility:
    @pytest.mark.parametrize("experiment", ["coeffs", "toy", "risk"])
    def test_byte_identical_reruns(self, tmp_path, experiment):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        extra = []
        if experiment == "toy":
            extra = ["--override", "params.particles=120"]
        assert main([experiment, "--out", str(out_a), "--seed", "11"] + extra) == 0
        assert main([experiment, "--out", str(out_b), "--seed", "11"] + extra) == 0
        for name in sorted(os.listdir(out_a)):
            if name.endswith(".csv"):
                assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_csv_uses_lf_endings(self, tmp_path):
        out = tmp_path / "run"
        main(["coeffs", "--out", str(out)])
        raw = (out / "coeffs.csv").read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")
