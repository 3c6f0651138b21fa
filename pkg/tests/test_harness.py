import os

import numpy as np
import pytest

from stablelab.fields import Grid
from stablelab.harness.cli import main as cli_main
from stablelab.harness.config import ConfigError, build_objects, load_config
from stablelab.harness.experiments import classify_regime, hypothesis_check
from stablelab.levy import LevyModel, SphericalMeasure
from stablelab.nonlocal_op import DriftField, JumpKernel


class TestClassifyRegime:
    def test_bands(self):
        assert classify_regime(1.5, 0.5)[0] == "subcritical"
        assert classify_regime(1.0, 0.5)[0] == "critical"
        regime, balance = classify_regime(0.5, 0.4)
        assert regime == "supercritical"
        assert balance is False
        assert classify_regime(0.5, 0.5)[1] is True

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            classify_regime(2.0, 0.5)
        with pytest.raises(ValueError):
            classify_regime(0.5, 1.5)


class TestHypothesisCheck:
    def model(self):
        return LevyModel(0.5, SphericalMeasure.line(1.0))

    def test_constant_kernel_passes(self):
        rows = hypothesis_check(self.model(), JumpKernel.constant(1.0),
                                DriftField.zero(1), seed=0)
        d = {r[0]: r[1] for r in rows}
        assert d["kernel-bounds"] == "PASS"
        assert d["kernel-holder"] == "PASS"
        assert d["measure-nondegeneracy"] == "PASS"

    def test_sine_kernel_holder_quotient(self):
        kern = JumpKernel.from_x_function(lambda x: 2.0 + np.sin(x[0]),
                                          kappa0=1.0, kappa1=3.0,
                                          kappa2=1.0, theta_holder=1.0)
        rows = hypothesis_check(self.model(), kern, DriftField.zero(1),
                                seed=1)
        d = {r[0]: r for r in rows}
        assert d["kernel-holder"][1] == "PASS"
        assert d["kernel-holder"][2] <= 1.0 + 1e-9

    def test_understated_drift_norm_warns(self):
        drift = DriftField(lambda t, x: 0.3 * np.sin(x), 1, beta=1.0,
                           p=np.inf, declared_norm=0.1)
        rows = hypothesis_check(self.model(), JumpKernel.constant(1.0),
                                drift, seed=2)
        d = {r[0]: r[1] for r in rows}
        assert d["drift-besov-norm"] == "WARN"

    def test_drift_windows(self):
        drift = DriftField(lambda t, x: 0.1 * np.sin(x), 1, beta=0.3,
                           p=np.inf, declared_norm=0.1)
        rows = hypothesis_check(self.model(), JumpKernel.constant(1.0),
                                drift, seed=3)
        d = {r[0]: r[1] for r in rows}
        # beta = 0.3 < 1 - alpha/2 = 0.75: strong window fails
        assert d["drift-strong-window"] == "WARN"


SYMBOL_CFG = """
[model]
alpha = 0.5
dim = 1
geometry = "line"
tail = "pure"

[experiment]
kind = "symbol"
xi_octaves = 5
"""

SIM_CFG = """
[model]
alpha = 0.5
dim = 1
geometry = "line"

[kernel]
kind = "constant"
value = 1.0

[drift]
kind = "sine"
amp = 0.2
beta = 1.0

[grid]
n = 64

[sim]
x0 = [0.0]
T = 0.5
dt = 0.01
eps = 0.2
thinning_bound = 1.0
n_paths = 200

[experiment]
kind = "simulate"
dump_paths = 3
"""

LP_CFG = """
[model]
alpha = 0.5
geometry = "line"

[grid]
n = 128

[experiment]
kind = "lp"
n_fields = 5
"""

MAXPRIN_CFG = """
[model]
alpha = 0.5
geometry = "line"

[grid]
n = 128

[experiment]
kind = "verify-maxprinciple"
trials = 20
j_values = [2, 3, 4]
"""

PDE_ZERO_CFG = """
[model]
alpha = 0.5
geometry = "line"
tail = "pure"

[grid]
n = 64

[source]
kind = "zero"

[pde]
T = 0.1
dt = 0.005
lam = 1.0

[experiment]
kind = "pde"
"""

REGIME_CFG = """
[model]
alpha = 0.6
geometry = "line"

[kernel]
kind = "constant"
value = 1.0

[drift]
kind = "lacunary"
amp = 1.5
beta = 0.6
j_lo = 0
j_hi = 4
phase_seed = 3

[grid]
n = 128

[sim]
x0 = [0.5]
T = 1.0
dt = 0.004
eps = 0.15
thinning_bound = 1.0
n_paths = 4000

[experiment]
kind = "regime-study"
mollification_levels = [1, 2, 4]
"""


def write_cfg(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestCli:
    def run(self, tmp_path, cfg_text, sub, outname="out", seed=None):
        cfg = write_cfg(tmp_path, cfg_text)
        out = str(tmp_path / outname)
        argv = sub + ["--config", cfg, "--out", out]
        if seed is not None:
            argv += ["--seed", str(seed)]
        code = cli_main(argv)
        return code, out

    def test_symbol_experiment(self, tmp_path):
        code, out = self.run(tmp_path, SYMBOL_CFG, ["symbol"])
        assert code == 0
        assert os.path.exists(os.path.join(out, "symbol_table.csv"))
        assert os.path.exists(os.path.join(out, "symbol_fit.csv"))
        assert os.path.exists(os.path.join(out, "symbol.svg"))
        assert os.path.exists(os.path.join(out, "manifest.txt"))

    def test_lp_experiment(self, tmp_path):
        code, out = self.run(tmp_path, LP_CFG, ["lp"])
        assert code == 0

    def test_pde_zero_source(self, tmp_path):
        code, out = self.run(tmp_path, PDE_ZERO_CFG, ["pde"])
        assert code == 0
        diag = open(os.path.join(out, "diagnostics.csv")).read()
        for line in diag.splitlines()[2:]:
            assert float(line.split(",")[1]) == 0.0

    def test_simulate_deterministic(self, tmp_path):
        code1, out1 = self.run(tmp_path, SIM_CFG, ["simulate"], "out1", seed=5)
        code2, out2 = self.run(tmp_path, SIM_CFG, ["simulate"], "out2", seed=5)
        assert code1 == 0 and code2 == 0
        for name in ("paths.csv", "mc_summary.csv", "hypotheses.csv"):
            a = open(os.path.join(out1, name), "rb").read()
            b = open(os.path.join(out2, name), "rb").read()
            assert a == b

    def test_verify_maxprinciple(self, tmp_path):
        code, out = self.run(tmp_path, MAXPRIN_CFG,
                             ["verify", "maxprinciple"])
        assert code == 0
        assert os.path.exists(os.path.join(out, "maxprinciple.csv"))
        first = open(os.path.join(out, "maxprinciple.csv")).readline()
        assert first.startswith("checks,")

    def test_regime_study_balance(self, tmp_path):
        code, out = self.run(tmp_path, REGIME_CFG, ["regime-study"])
        assert code == 0
        summary = open(os.path.join(out, "regime_summary.csv")).read()
        assert "balance,true" in summary

    def test_error_record(self, tmp_path):
        bad = SYMBOL_CFG.replace('alpha = 0.5', 'alpha = 3.0')
        code, out = self.run(tmp_path, bad, ["symbol"])
        assert code == 1
        assert os.path.exists(os.path.join(out, "error.json"))

    def test_kind_mismatch_rejected(self, tmp_path):
        code, out = self.run(tmp_path, SYMBOL_CFG, ["lp"])
        assert code == 1


class TestConfigBuilders:
    def test_objects_roundtrip(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, SIM_CFG))
        model, kernel, drift, grid = build_objects(cfg)
        assert model.alpha == 0.5
        assert kernel.constant_value == 1.0
        assert drift.name == "sine"
        assert grid.n == 64

    def test_dimension_mismatch(self, tmp_path):
        text = SIM_CFG.replace('[grid]\nn = 64', '[grid]\nn = 64\ndim = 2')
        cfg = load_config(write_cfg(tmp_path, text))
        with pytest.raises(ConfigError):
            build_objects(cfg)
