"""Sparse phase retrieval from coded diffraction patterns at several distances."""
from .estimator import CDPMeasurement, SparseCDPRetriever
from .experiments import ConfigError, ExperimentConfig, run_phase_diagram, run_recon_experiment, run_verify
from .forward import (
    MeasurementSet,
    SensingEnsemble,
    add_noise,
    adjoint_field,
    explicit_matrix,
    field,
    forward,
    make_ensemble,
    make_transfer_function,
)
from .guarantees import apply_B_operator, check_gram_identity, nuclear_norm_rank2, sample_condition1, spectral_quantity
from .metrics import dist, relative_error, success_rate
from .model import (
    CodedAperture,
    CrystalSignal,
    GridShape,
    RegionPartition,
    gen_coded_aperture,
    gen_crystal_lattice,
    gen_regions,
    gen_sparse_signal,
)
from .solver import DivergenceError, ReconstructionReport, SolverParams, reconstruct

__version__ = "0.1.0"
