import json

import numpy as np
import pytest

from degenwave.cli.config import ConfigError, load_config
from degenwave.cli.main import main
from degenwave.cli.pipeline import PipelineRunner, StageFailure, emit_plot_data


BASE_CONFIG = """\
[coefficients]
family = constant
a0 = 1.0
N = 1
p = 3.0
q = 1.0
M = 1.0

[initial_data]
preset = flat_ode
T0 = 1.0

[grid]
h = 0.0078125
X_max = 2.0

[solver]
t_max = 2.0
guard = 1.0e10
near_dt_frac = 0.05
store_frac = 0.01

[analysis]
x0_list = 0.8 1.0
n_y = 129
ds = 0.02

[solitons]
k_list = 2

[normcheck]
dims = 2
R = 8.0
h = 0.01

[output]
directory = {out}
"""


def write_config(tmp_path, text=None, **overrides):
    text = text if text is not None else BASE_CONFIG.format(out=tmp_path / "out")
    for key, val in overrides.items():
        section, name = key.split(".")
        lines = []
        in_section = False
        replaced = False
        for line in text.splitlines():
            if line.startswith("["):
                if in_section and not replaced:
                    lines.append(f"{name} = {val}")
                    replaced = True
                in_section = line.strip() == f"[{section}]"
            elif in_section and line.split("=")[0].strip() == name:
                line = f"{name} = {val}"
                replaced = True
            lines.append(line)
        if not replaced:
            lines.append(f"{name} = {val}")
        text = "\n".join(lines) + "\n"
    cfg = tmp_path / "run.ini"
    cfg.write_text(text)
    return cfg


class TestConfig:
    def test_valid_config_loads(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.p == 3.0 and cfg.x0_list == (0.8, 1.0)

    def test_subunit_exponent_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, **{"coefficients.p": "0.5"}))

    def test_q_above_p_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, **{"coefficients.q": "4.0"}))

    def test_unknown_key_rejected(self, tmp_path):
        text = BASE_CONFIG.format(out=tmp_path / "out").replace(
            "[grid]\n", "[grid]\nbogus = 1\n")
        cfg = tmp_path / "bad.ini"
        cfg.write_text(text)
        with pytest.raises(ConfigError, match="bogus"):
            load_config(cfg)

    def test_unknown_section_rejected(self, tmp_path):
        text = BASE_CONFIG.format(out=tmp_path / "out") + "\n[mystery]\nx = 1\n"
        cfg = tmp_path / "bad2.ini"
        cfg.write_text(text)
        with pytest.raises(ConfigError, match="mystery"):
            load_config(cfg)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "nope.ini")

    def test_validation_exit_code_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, **{"coefficients.p": "0.5"})
        assert main(["simulate", "--config", str(cfg)]) == 2

    def test_soliton_seed_needs_positive_base(self, tmp_path):
        with pytest.raises(ConfigError, match="soliton_seed"):
            cfg = load_config(write_config(
                tmp_path, **{"initial_data.preset": "soliton_seed",
                             "initial_data.d_hat": "-0.9",
                             "initial_data.T0": "0.5"}))
            cfg.initial_data(np.linspace(0, 2, 11))

    def test_tabulated_family(self, tmp_path):
        x = np.linspace(1e-4, 4.0, 2000)
        table = tmp_path / "coeff.txt"
        np.savetxt(table, np.column_stack([x, 0.5 + x]))
        cfg = load_config(write_config(
            tmp_path, **{"coefficients.family": "tabulated",
                         "coefficients.table": str(table),
                         "coefficients.N": "1"}))
        model = cfg.model()
        assert model.family == "tabulated"
        assert float(model.a(1.0)) == pytest.approx(1.5, rel=1e-6)


@pytest.fixture(scope="module")
def ran(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli_run")
    cfg_path = write_config(tmp)
    rc = main(["report", "--config", str(cfg_path)])
    assert rc == 0
    return tmp / "out", cfg_path


class TestPipeline:
    def test_all_stages_green(self, ran):
        out, _ = ran
        manifest = json.loads((out / "manifest.json").read_text())
        for stage in ("simulate", "curve", "frames", "energy", "profile-fit",
                      "solitons", "normcheck", "report"):
            assert manifest["stages"][stage]["status"] in ("ok", "cached"), stage

    def test_manifest_outputs_exist_and_checksum(self, ran):
        import hashlib

        out, _ = ran
        manifest = json.loads((out / "manifest.json").read_text())
        seen = 0
        for rec in manifest["stages"].values():
            for o in rec["outputs"]:
                p = out / o["path"]
                assert p.exists(), o["path"]
                assert hashlib.sha256(p.read_bytes()).hexdigest() == o["sha256"]
                seen += 1
        assert seen > 10

    def test_rerun_hits_cache(self, ran):
        out, cfg_path = ran
        rc = main(["energy", "--config", str(cfg_path)])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        for stage in ("simulate", "curve", "frames", "energy"):
            assert manifest["stages"][stage]["status"] == "cached", stage

    def test_force_stage_rerun(self, ran):
        out, cfg_path = ran
        rc = main(["curve", "--config", str(cfg_path), "--stage", "curve"])
        assert rc == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["stages"]["curve"]["status"] == "ok"

    def test_flat_profile_fit_output(self, ran):
        out, _ = ran
        fits = json.loads((out / "profile_fit.json").read_text())
        for rec in fits.values():
            assert abs(rec["d_hat"]) < 0.02
            assert rec["d_hat_vs_T_prime"] < 0.05
            assert abs(rec["E_at_fit"] - 4.0 / 3.0) < 0.01

    def test_energy_plot_monotone_after_burn_in(self, ran):
        out, _ = ran
        data = np.loadtxt(out / "plot_energy_0.8.dat", delimiter=",", skiprows=1)
        s, H = data[:, 0], data[:, 1]
        burn = s[0] + 0.2 * (s[-1] - s[0])
        sel = s[:-1] >= burn
        assert np.all(np.diff(H)[sel] <= 1e-3 * (1.0 + np.abs(H[:-1][sel])))

    def test_curve_plot_lipschitz(self, ran):
        out, _ = ran
        data = np.loadtxt(out / "plot_curve.dat", delimiter=",", skiprows=1)
        X, T = data[:, 0], data[:, 1]
        assert np.max(np.abs(np.diff(T) / np.diff(X))) <= 1.05

    def test_soliton_plot_log_slope(self, ran):
        out, _ = ran
        data = np.loadtxt(out / "plot_solitons_k2.dat", delimiter=",", skiprows=1)
        s, gap = data[:, 0], data[:, 1]
        slope = np.polyfit(np.log(s[-40:]), gap[-40:], 1)[0]
        assert slope == pytest.approx((3.0 - 1.0) / 2.0, rel=1e-3)

    def test_missing_stage_plot_error(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        runner = PipelineRunner(cfg)
        with pytest.raises(StageFailure, match="curve"):
            emit_plot_data(runner, "curve")

    def test_figures_rendered(self, ran):
        out, _ = ran
        figs = sorted(p.name for p in (out / "figures").glob("*.png"))
        assert "curve.png" in figs and "energy.png" in figs

    def test_fresh_runner_reloads_curve_from_csv(self, ran):
        out, cfg_path = ran
        cfg = load_config(cfg_path)
        runner = PipelineRunner(cfg)  # no in-memory curve or trace
        runner.run(target="frames", force="frames")
        curve = runner.curve()
        assert np.all(np.isfinite(curve.T))
        assert curve.classification[len(curve.classification) // 2].kind \
            == "non_characteristic"

    def test_stage_failure_exit_code_3(self, tmp_path):
        # base point whose cone leaves the grid: frames stage fails
        cfg = write_config(tmp_path, **{"analysis.x0_list": "1.99"})
        assert main(["frames", "--config", str(cfg)]) == 3
        manifest = json.loads(
            (tmp_path / "out" / "manifest.json").read_text())
        assert manifest["stages"]["frames"]["status"] == "failed"
        assert "error" in manifest["stages"]["frames"]
