"""
Simulation Service
Synthetic sparse factor panels, accuracy metrics and the seeded
Monte-Carlo replication harness.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy import signal, stats

from config import Config
from constants import (
    AR_BURN_IN,
    LOADING_RULES,
    LOADING_STRENGTHS,
    LOADING_UNIFORM_BOUND,
    NOISE_AR_RANGE,
    NOISE_KINDS,
    ONE_FACTOR_AR,
    SIMULATION_TASKS,
    SPARSITY_RULES,
    THREE_FACTOR_AR,
)
from services.base_service import BaseService
from services.factor_model_service import factor_model_service
from services.panel_service import Panel, panel_service
from services.sparse_eigen_service import SolverSettings
from services.sparsity_selection_service import sparsity_selection_service
from utils.error_handler import ConfigError, DimensionError, PreconditionError, safe_execute
from utils.helpers import ceil_sqrt, default_num_factors_bound, derive_seed


class DgpConfig(BaseModel):
    """Data-generating process for one simulated panel"""

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=2)
    t: int = Field(ge=2)
    r: int = Field(default=1, ge=1)
    factor_ar: Tuple[float, ...] = ()
    sparsity: Optional[int] = None
    sparsity_rule: str = "random_support"
    noise_kind: str = "iid_gaussian"
    loading_rule: str = "uniform_rows"
    loading_strengths: Tuple[float, ...] = ()
    noise_scale: float = Field(default=1.0, ge=0)
    demean_before_fit: bool = False
    seed: int = 0

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        r = int(data.get("r", 1))
        if not data.get("factor_ar"):
            data["factor_ar"] = ONE_FACTOR_AR if r == 1 else (THREE_FACTOR_AR if r == 3 else (0.5,) * r)
        if not data.get("loading_strengths"):
            data["loading_strengths"] = LOADING_STRENGTHS if r == 3 else tuple(float(r - j) for j in range(r))
        if data.get("sparsity") is None and "t" in data:
            data["sparsity"] = ceil_sqrt(int(data["t"]))
        return data

    @field_validator("factor_ar")
    @classmethod
    def _stationary(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(abs(coefficient) >= 1 for coefficient in value):
            raise ValueError("factor AR coefficients must satisfy |phi| < 1")
        return value

    @field_validator("sparsity_rule")
    @classmethod
    def _known_sparsity_rule(cls, value: str) -> str:
        if value not in SPARSITY_RULES:
            raise ValueError(f"sparsity_rule must be one of {SPARSITY_RULES}")
        return value

    @field_validator("noise_kind")
    @classmethod
    def _known_noise_kind(cls, value: str) -> str:
        if value not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}")
        return value

    @field_validator("loading_rule")
    @classmethod
    def _known_loading_rule(cls, value: str) -> str:
        if value not in LOADING_RULES:
            raise ValueError(f"loading_rule must be one of {LOADING_RULES}")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "DgpConfig":
        if len(self.factor_ar) != self.r:
            raise ValueError(f"factor_ar needs {self.r} coefficients")
        if len(self.loading_strengths) != self.r:
            raise ValueError(f"loading_strengths needs {self.r} entries")
        if not 1 <= self.sparsity <= self.t:
            raise ValueError(f"sparsity must lie in [1, {self.t}]")
        if self.r * self.sparsity > self.t:
            raise ValueError("disjoint supports need r * sparsity <= T")
        if self.loading_rule == "svd_orthonormal_scaled" and self.r > self.n:
            raise ValueError("svd loadings need r <= N")
        return self


class SimulationOptions(BaseModel):
    """Estimation choices applied inside every replication"""

    model_config = ConfigDict(frozen=True)

    tasks: Tuple[str, ...] = ("factor_error", "recovery")
    j_partitions: int = Field(default=1, ge=1)
    penalty_kind: str = "ic_log_scaled"
    s_grid: Optional[Tuple[int, ...]] = None
    k_max: Optional[int] = None

    @field_validator("tasks")
    @classmethod
    def _known_tasks(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [task for task in value if task not in SIMULATION_TASKS]
        if unknown or not value:
            raise ValueError(f"tasks must be a non-empty subset of {SIMULATION_TASKS}")
        return value


class MetricSummary(BaseModel):
    mean: float
    std: float
    count: int


class ReplicationSummary(BaseModel):
    """Aggregated replication outcome for one design cell"""

    config: DgpConfig
    reps: int
    tasks: Tuple[str, ...]
    metrics: Dict[str, MetricSummary] = Field(default_factory=dict)
    failures: int = 0
    failure_messages: List[str] = Field(default_factory=list)
    loading_ks_pvalue: Optional[float] = None
    records: List[Dict[str, Any]] = Field(default_factory=list)


@dataclass(frozen=True)
class GroundTruth:
    """Simulated panel with the factors, loadings and supports that generated it"""

    panel: Panel
    factors: np.ndarray
    dense_factors: np.ndarray
    loadings: np.ndarray
    supports: Tuple[Tuple[int, ...], ...]
    config: DgpConfig


def make_config(**kwargs: Any) -> DgpConfig:
    """Build a DgpConfig, translating validation failures into ConfigError"""
    try:
        return DgpConfig(**kwargs)
    except ValidationError as error:
        raise ConfigError(f"Invalid simulation configuration: {error.errors()[0]['msg']}",
                          details={'errors': [item['msg'] for item in error.errors()]}) from error


def _run_replication(config: DgpConfig, index: int, settings: SolverSettings,
                     options: SimulationOptions) -> Dict[str, Any]:
    replication = config.model_copy(update={'seed': derive_seed(config.seed, index)})
    record, error = safe_execute(simulation_service.replicate, replication, settings, options,
                                 context={'replication': index})
    if error is not None:
        return {'index': index, 'failed': True, 'message': error['error']}
    record['index'] = index
    record['failed'] = False
    return record


class SimulationService(BaseService):
    """Service for simulated designs and replication studies"""

    def __init__(self):
        super().__init__("SimulationService")

    # ------------------------------------------------------------------
    # Data generation
    # ------------------------------------------------------------------
    def generate(self, config: DgpConfig) -> GroundTruth:
        """
        Draw one panel X = F L' + e from the configured design

        Args:
            config: Data-generating process

        Returns:
            GroundTruth with an uncentered panel
        """
        rng = np.random.default_rng(config.seed)
        t, n, r = config.t, config.n, config.r

        innovations = rng.standard_normal((AR_BURN_IN + t, r))
        dense = np.column_stack([
            signal.lfilter([1.0], [1.0, -phi], innovations[:, j]) for j, phi in enumerate(config.factor_ar)
        ])[AR_BURN_IN:]

        supports = self._draw_supports(dense, config.sparsity, config.sparsity_rule, rng)
        factors = np.zeros_like(dense)
        for j, support in enumerate(supports):
            factors[list(support), j] = dense[list(support), j]
            scale = factors[:, j].std(ddof=1)
            if scale == 0.0:
                raise ConfigError("Sparsified factor has zero variance", details={'factor': j})
            factors[:, j] /= scale

        loadings = self._draw_loadings(config, rng)
        noise = config.noise_scale * self._draw_noise(config, rng)
        values = factors @ loadings.T + noise

        panel = panel_service.from_array(values, series_ids=[f"s{i + 1}" for i in range(n)],
                                         time_labels=[str(i + 1) for i in range(t)])
        return GroundTruth(panel=panel, factors=factors, dense_factors=dense, loadings=loadings,
                           supports=supports, config=config)

    def _draw_supports(self, dense: np.ndarray, cardinality: int, rule: str,
                       rng: np.random.Generator) -> Tuple[Tuple[int, ...], ...]:
        t, r = dense.shape
        available = np.ones(t, dtype=bool)
        supports = []
        for j in range(r):
            candidates = np.flatnonzero(available)
            if rule == "random_support":
                chosen = rng.choice(candidates, size=cardinality, replace=False)
            else:
                order = np.argsort(-np.abs(dense[candidates, j]), kind="stable")
                chosen = candidates[order[:cardinality]]
            available[chosen] = False
            supports.append(tuple(sorted(int(index) for index in chosen)))
        return tuple(supports)

    def _draw_loadings(self, config: DgpConfig, rng: np.random.Generator) -> np.ndarray:
        n, r = config.n, config.r
        raw = rng.uniform(-LOADING_UNIFORM_BOUND, LOADING_UNIFORM_BOUND, size=(n, r))
        if config.loading_rule == "uniform_rows":
            return raw * (np.sqrt(n) / np.linalg.norm(raw, axis=0))
        left, _, _ = np.linalg.svd(raw, full_matrices=False)
        return left * np.sqrt(n) * np.asarray(config.loading_strengths)

    def _draw_noise(self, config: DgpConfig, rng: np.random.Generator) -> np.ndarray:
        t, n = config.t, config.n
        if config.noise_kind == "iid_gaussian":
            return rng.standard_normal((t, n))
        low, high = NOISE_AR_RANGE
        coefficients = rng.choice([-1.0, 1.0], size=n) * rng.uniform(low, high, size=n)
        shocks = rng.standard_normal((AR_BURN_IN + t, n))
        noise = np.empty_like(shocks)
        noise[0] = shocks[0]
        for step in range(1, shocks.shape[0]):
            noise[step] = coefficients * noise[step - 1] + shocks[step]
        return noise[AR_BURN_IN:]

    # ------------------------------------------------------------------
    # Metrics
    # ------------------------------------------------------------------
    def factor_angle_error(self, f_hat: np.ndarray, f_true: np.ndarray) -> float:
        """d = sqrt(1 - (f_hat' f / T)^2) with both vectors scaled to squared norm T"""
        f_hat = np.asarray(f_hat, dtype=float).ravel()
        f_true = np.asarray(f_true, dtype=float).ravel()
        if f_hat.shape != f_true.shape:
            raise DimensionError("Factor vectors differ in length")
        norm_hat, norm_true = np.linalg.norm(f_hat), np.linalg.norm(f_true)
        if norm_hat == 0.0 or norm_true == 0.0:
            raise PreconditionError("Factor vectors must be nonzero")
        cosine = float(np.clip(f_hat @ f_true / (norm_hat * norm_true), -1.0, 1.0))
        return float(np.sqrt(max(0.0, 1.0 - cosine ** 2)))

    def recovery_rate(self, estimated_supports: Sequence[Sequence[int]],
                      true_supports: Sequence[Sequence[int]], cardinality: int) -> float:
        """Share of true support indices recovered, sum_j |S_hat_j & S_j| / (r s)"""
        if len(estimated_supports) != len(true_supports) or not true_supports:
            raise DimensionError("Support lists must have the same positive length")
        if any(len(support) != cardinality for support in true_supports):
            raise DimensionError(f"True supports must have exactly s={cardinality} indices")
        hits = sum(len(set(estimated) & set(true))
                   for estimated, true in zip(estimated_supports, true_supports))
        return hits / (len(true_supports) * cardinality)

    def factor_matrix_error(self, f_hat: np.ndarray, f_true: np.ndarray) -> float:
        """||F_hat F_hat' / T - F F' / T||_F"""
        f_hat = np.atleast_2d(np.asarray(f_hat, dtype=float))
        f_true = np.atleast_2d(np.asarray(f_true, dtype=float))
        if f_hat.shape != f_true.shape:
            raise DimensionError(f"Factor matrices differ in shape: {f_hat.shape} vs {f_true.shape}")
        t = f_hat.shape[0]
        return float(np.linalg.norm((f_hat @ f_hat.T - f_true @ f_true.T) / t))

    # ------------------------------------------------------------------
    # Replications
    # ------------------------------------------------------------------
    def replicate(self, config: DgpConfig, settings: SolverSettings,
                  options: SimulationOptions) -> Dict[str, Any]:
        """
        Run every requested task on one simulated panel

        Factor accuracy tasks fit the raw panel of the zero-mean design, so
        estimates and true factors share one origin, unless
        config.demean_before_fit is set. The selection tasks always run on
        the demeaned panel.
        """
        truth = self.generate(config)
        panel = panel_service.demean(truth.panel)
        record: Dict[str, Any] = {'seed': config.seed}
        tasks = set(options.tasks)

        if tasks & {"factor_error", "recovery", "loading_distribution"}:
            fit_panel = panel if config.demean_before_fit else truth.panel
            fit = factor_model_service.estimate(fit_panel, config.r, [config.sparsity] * config.r, settings,
                                                assume_zero_mean=not config.demean_before_fit)
            if "factor_error" in tasks:
                record['factor_angle_error'] = self.factor_angle_error(fit.factors[:, 0], truth.factors[:, 0])
                record['factor_matrix_error'] = self.factor_matrix_error(fit.factors, truth.factors)
            if "recovery" in tasks:
                record['recovery_rate'] = self.recovery_rate(
                    fit.factor_set.supports, truth.supports, config.sparsity)
            if "loading_distribution" in tasks:
                record['loading_z'] = self._studentized_loading(fit, truth, config.demean_before_fit)

        if "r_selection" in tasks:
            k_max = options.k_max or default_num_factors_bound(config.t, config.n)
            gram = panel_service.scaled_gram(panel)
            eigenvalues = factor_model_service.gram_eigenvalues(gram.values, config.n, config.t)
            r_hat = factor_model_service.select_num_factors_ratio(eigenvalues, k_max)
            record['r_hat'] = r_hat
            record['r_selection'] = float(r_hat == config.r)

        if "s_selection" in tasks:
            report = sparsity_selection_service.select_sparsity(
                panel, config.r,
                grid=None if options.s_grid is None else list(options.s_grid),
                j=options.j_partitions, penalty_kind=options.penalty_kind,
                settings=settings, seed=config.seed, threads=1)
            record['s_hat'] = report.selected
            record['s_selection'] = float(report.selected == config.sparsity)
        return record

    def _studentized_loading(self, fit, truth: GroundTruth, demeaned: bool = False) -> float:
        """(lambda_hat - H lambda) / se for the first loading of the first series"""
        reference = truth.factors
        if demeaned:
            reference = reference - reference.mean(axis=0, keepdims=True)
        f_hat = fit.factors
        rotation = np.linalg.solve(f_hat.T @ f_hat, f_hat.T @ reference)
        target = rotation @ truth.loadings[0]
        return float((fit.loadings[0, 0] - target[0]) / fit.loading_matrix.standard_errors[0, 0])

    def run_replications(self, config: DgpConfig, reps: int, settings: Optional[SolverSettings] = None,
                         options: Optional[SimulationOptions] = None, threads: int = 1) -> ReplicationSummary:
        """
        Independent replications with seeds derived from (config.seed, index)

        Args:
            config: Base design; its seed is the master seed
            reps: Number of replications
            settings: Convergence settings
            options: Tasks and selection choices
            threads: Worker count, 0 for all cores

        Returns:
            ReplicationSummary aggregated in replication-index order
        """
        if reps < 1:
            raise DimensionError("reps must be at least 1")
        settings = settings or SolverSettings()
        options = options or SimulationOptions()
        self._log_operation("run_replications", f"N={config.n} T={config.t} r={config.r} reps={reps}")

        with self._timed("run_replications"):
            records = Parallel(n_jobs=Config.resolve_threads(threads))(
                delayed(_run_replication)(config, index, settings, options) for index in range(reps)
            )
        records = sorted(records, key=lambda record: record['index'])
        return self.summarize_records(config, reps, options.tasks, records)

    def summarize_records(self, config: DgpConfig, reps: int, tasks: Sequence[str],
                          records: List[Dict[str, Any]]) -> ReplicationSummary:
        succeeded = [record for record in records if not record['failed']]
        failures = [record for record in records if record['failed']]
        if failures:
            self.logger.warning(f"{len(failures)} of {reps} replications failed")

        metrics = {}
        for name in ("factor_angle_error", "factor_matrix_error", "recovery_rate", "r_selection", "s_selection"):
            values = np.array([record[name] for record in succeeded if name in record], dtype=float)
            if values.size:
                metrics[name] = MetricSummary(
                    mean=float(values.mean()),
                    std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
                    count=int(values.size),
                )

        ks_pvalue = None
        z_values = [record['loading_z'] for record in succeeded if 'loading_z' in record]
        if len(z_values) >= 2:
            ks_pvalue = float(stats.kstest(z_values, "norm").pvalue)

        return ReplicationSummary(
            config=config, reps=reps, tasks=tuple(tasks), metrics=metrics,
            failures=len(failures), failure_messages=[record['message'] for record in failures],
            loading_ks_pvalue=ks_pvalue, records=records,
        )

    def format_table(self, summaries: Sequence[ReplicationSummary], metric: str) -> pd.DataFrame:
        """Pivot cell means into a table with N rows and T columns"""
        rows = [
            {'N': summary.config.n, 'T': summary.config.t,
             'value': summary.metrics[metric].mean if metric in summary.metrics else np.nan}
            for summary in summaries
        ]
        if not rows:
            raise DimensionError("No summaries to tabulate")
        return pd.DataFrame(rows).pivot_table(index='N', columns='T', values='value', aggfunc='first', dropna=False)


# Create singleton instance
simulation_service = SimulationService()
