"""
Services Package
Estimation, selection, simulation and reporting services for Sparse APCA
"""
from .panel_service import GramMatrix, Panel, PanelService, panel_service
from .sparse_eigen_service import (
    DeflationState,
    SolverResult,
    SolverSettings,
    SparseEigenService,
    SparseVector,
    sparse_eigen_service,
)
from .factor_model_service import (
    FactorModelService,
    LoadingMatrix,
    ModelFit,
    SparseFactorSet,
    factor_model_service,
)
from .sparsity_selection_service import (
    CrossSectionSplit,
    PenaltyKind,
    SparsitySelectionReport,
    SparsitySelectionService,
    sparsity_selection_service,
)
from .simulation_service import (
    DgpConfig,
    GroundTruth,
    ReplicationSummary,
    SimulationOptions,
    SimulationService,
    make_config,
    simulation_service,
)
from .report_service import ReportService, RunManifest, report_service

__all__ = [
    'Panel', 'GramMatrix', 'PanelService', 'panel_service',
    'SparseVector', 'SolverResult', 'SolverSettings', 'DeflationState',
    'SparseEigenService', 'sparse_eigen_service',
    'SparseFactorSet', 'LoadingMatrix', 'ModelFit', 'FactorModelService', 'factor_model_service',
    'CrossSectionSplit', 'PenaltyKind', 'SparsitySelectionReport',
    'SparsitySelectionService', 'sparsity_selection_service',
    'DgpConfig', 'GroundTruth', 'ReplicationSummary', 'SimulationOptions',
    'SimulationService', 'make_config', 'simulation_service',
    'ReportService', 'RunManifest', 'report_service',
]
