"""
Monte-Carlo acceptance checks for the built-in simulation designs.
Run with: pytest -m slow
"""
import json
import time

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner
from scipy import linalg

from conftest import random_psd
from constants import SIMULATION_TABLES
from main import create_cli
from services.factor_model_service import factor_model_service
from services.panel_service import panel_service
from services.simulation_service import SimulationOptions, make_config, simulation_service
from services.sparse_eigen_service import SolverSettings, sparse_eigen_service
from utils.helpers import ceil_sqrt
from utils.logger import app_logger

pytestmark = pytest.mark.slow


def table_cell(table, n, t, reps, seed=2024, noise_kind="iid_gaussian", **option_overrides):
    """Replicate one (N, T) cell of a built-in design and return its summary"""
    design_table = SIMULATION_TABLES[table]
    config = make_config(n=n, t=t, r=design_table['r'], sparsity_rule=design_table['sparsity_rule'],
                         loading_rule=design_table['loading_rule'], noise_kind=noise_kind, seed=seed)
    options = SimulationOptions(tasks=(design_table['task'],), j_partitions=design_table.get('j_partitions', 1),
                                **option_overrides)
    summary = simulation_service.run_replications(config, reps, options=options, threads=0)
    assert summary.failures == 0, summary.failure_messages
    return summary.metrics[design_table['metric']].mean


class TestDesignCells:
    """Replication means inside the accepted tolerance bands"""

    def test_one_factor_error_small(self):
        """Test d at N=50, T=200"""
        assert 0.045 <= table_cell(1, 50, 200, 100) <= 0.055

    def test_one_factor_error_large(self):
        """Test d at N=500, T=1200"""
        assert 0.006 <= table_cell(1, 500, 1200, 50) <= 0.010

    def test_one_factor_recovery(self):
        """Test ER at N=50, T=200"""
        assert 0.90 <= table_cell(2, 50, 200, 100) <= 0.94

    def test_three_factor_matrix_error(self):
        """Test the factor matrix error at N=50, T=100"""
        assert 0.080 <= table_cell(3, 50, 100, 100) <= 0.100

    def test_three_factor_recovery(self):
        """Test ER at N=100, T=200"""
        assert 0.95 <= table_cell(4, 100, 200, 100) <= 0.98

    def test_number_of_factors(self):
        """Test P(r_hat = 3) at N=200, T=300"""
        assert table_cell(5, 200, 300, 100) >= 0.98

    def test_sparsity_selection_ar_noise(self):
        """Test P(s_hat = s0) at N=50, T=100 with AR noise"""
        assert 0.80 <= table_cell(6, 50, 100, 100, noise_kind="ar1_diagonal") <= 0.96

    def test_sparsity_selection_iid_noise(self):
        """Test P(s_hat = s0) at N=50, T=100 with iid noise"""
        assert table_cell(6, 50, 100, 100) >= 0.98


class TestSolverOracles:
    """Exhaustive and dense references for the solvers"""

    def test_truncated_power_matches_enumeration(self, rng, tight_settings):
        """Test the sparse optimum on small PSD matrices"""
        hits, gaps = 0, []
        for _ in range(200):
            t = int(rng.integers(4, 9))
            cardinality = int(rng.integers(1, 4))
            s = random_psd(rng, t)
            optimum, _, _ = sparse_eigen_service.exhaustive_sparse_eigen(s, cardinality)
            vector = sparse_eigen_service.truncated_power(s, cardinality, tight_settings).vector.values
            value = float(vector @ s @ vector)
            if value >= (1.0 - 1e-6) * optimum:
                hits += 1
            else:
                gaps.append(optimum - value)
        if gaps:
            app_logger.info(f"Local optima in {len(gaps)} of 200 cases, largest gap {max(gaps):.3g}")
        assert hits >= 190

    def test_dense_limit_matches_apca(self, rng, tight_settings):
        """Test that s = T reproduces the top three eigenvectors of S"""
        for _ in range(50):
            t, n = 30, 40
            factors = rng.standard_normal((t, 3)) * np.array([5.0, 3.0, 2.0])
            values = factors @ rng.standard_normal((3, n)) + 0.5 * rng.standard_normal((t, n))
            panel = panel_service.demean(panel_service.from_array(values))
            fit = factor_model_service.estimate(panel, 3, [t, t, t], tight_settings)

            gram = panel_service.scaled_gram(panel).values
            _, eigenvectors = linalg.eigh(gram)
            dense = eigenvectors[:, ::-1][:, :3]
            distance = factor_model_service.subspace_distance(linalg.orth(fit.factors), dense, "rho")
            assert distance < 1e-6

    def test_distance_identities(self, rng):
        """Test rho^2 = 2 r D^2 = 2 ||sin theta||^2 on random bases"""
        for _ in range(100):
            r = int(rng.integers(1, 5))
            h1, _ = np.linalg.qr(rng.standard_normal((12, r)))
            h2, _ = np.linalg.qr(rng.standard_normal((12, r)))
            d = factor_model_service.subspace_distance(h1, h2, "D")
            rho = factor_model_service.subspace_distance(h1, h2, "rho")
            sin_theta = factor_model_service.subspace_distance(h1, h2, "sin_theta")
            assert rho ** 2 == pytest.approx(2 * r * d ** 2, abs=1e-10)
            assert rho ** 2 == pytest.approx(2 * sin_theta ** 2, abs=1e-10)


class TestLoadingDistribution:
    """Asymptotic normality of the studentized loading"""

    def test_studentized_loading_is_normal(self):
        """Test the KS p-value at N=300, T=500"""
        config = make_config(n=300, t=500, seed=77)
        options = SimulationOptions(tasks=("loading_distribution",))
        summary = simulation_service.run_replications(config, 500, SolverSettings(), options, threads=0)

        assert summary.failures == 0
        assert summary.loading_ks_pvalue > 0.01
        assert config.sparsity == ceil_sqrt(500)


def write_generated_panel(path, config):
    """Simulate one panel and save it in the CSV input layout"""
    truth = simulation_service.generate(config)
    frame = pd.DataFrame(truth.panel.values, columns=list(truth.panel.series_ids))
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


class TestCommandLineScale:
    """End-to-end CLI runs at empirical panel sizes"""

    def test_estimate_at_returns_panel_shape(self, tmp_path):
        """Test estimate with the default s grid and J=10 on a T=3273, N=332 panel"""
        path = write_generated_panel(tmp_path / "returns.csv", make_config(n=332, t=3273, seed=19))
        runner, cli = CliRunner(), create_cli()
        outs = [tmp_path / "first", tmp_path / "second"]
        elapsed = []
        for out in outs:
            started = time.perf_counter()
            result = runner.invoke(cli, ["--threads", "0", "estimate", "--input", str(path), "--r", "1",
                                         "--j", "10", "--seed", "3", "--out", str(out)], obj={})
            elapsed.append(time.perf_counter() - started)
            assert result.exit_code == 0, result.output

        assert elapsed[0] < 600
        fit = json.loads((outs[0] / "fit.json").read_text())
        assert (fit['T'], fit['N'], fit['r']) == (3273, 332, 1)
        assert fit['s_selection']['j_partitions'] == 10
        assert ceil_sqrt(3273) - 10 <= fit['sparsities'][0] <= ceil_sqrt(3273) + 150

        factors = pd.read_csv(outs[0] / "factors.csv")
        assert list(factors.columns) == ["time", "factor_1"]
        assert len(factors) == 3273
        assert np.count_nonzero(factors["factor_1"].to_numpy()) == fit['sparsities'][0]
        loadings = pd.read_csv(outs[0] / "loadings.csv")
        assert len(loadings) == 332

        for name in ("factors.csv", "loadings.csv", "supports.json", "fit.json", "selection_report.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_select_r_on_three_factor_design(self, tmp_path):
        """Test that select r finds three factors in the three-factor design"""
        design_table = SIMULATION_TABLES[5]
        config = make_config(n=200, t=300, r=3, sparsity_rule=design_table['sparsity_rule'],
                             loading_rule=design_table['loading_rule'], seed=31)
        path = write_generated_panel(tmp_path / "three.csv", config)
        result = CliRunner().invoke(create_cli(), ["--threads", "1", "select", "r", "--input", str(path),
                                                   "--out", str(tmp_path / "r")], obj={})

        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout.strip().splitlines()[-1])['selected'] == 3
