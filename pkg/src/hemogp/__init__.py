"""Velocity field reconstruction for 1D vascular networks.

The workflow: simulate a randomized ensemble of pulsatile blood-flow solutions
on a vessel network, factor the snapshot matrix into a low-rank space-time
kernel, then condition a Gaussian process built from that kernel on sparse
point measurements of velocity.
"""

from .container import load_kernel, load_snapshots, save_kernel, save_snapshots
from .ensemble import (RandomizationSpec, SnapshotMatrix, apply_sample,
                       load_ensemble, run_ensemble, sample_parameters,
                       save_ensemble)
from .errors import (ConfigError, ConvergenceError, DomainError,
                     FileFormatError, HemoGPError, InvariantError,
                     NumericalError, SampleRejectedError)
from .gp import (MeasurementSet, PosteriorField, decompose, fit_noise,
                 mass_audit, predict)
from .lowrank import LowRankKernel, SpaceTimePoint, build_kernel, eval_basis, eval_kernel
from .network import (BloodProperties, Junction, NetworkTopology, Vessel,
                      WallProperties, WindkesselOutlet, compute_beta,
                      load_network, network_from_dict, pressure,
                      serialize_network, wave_speed)
from .scenarios import Scenario, holdout_truth, layout_measurements, load_scenario
from .solver import (SimulationResult, SolverConfig, available_backends,
                     integrate, load_result_csv, simulate)
from .waveform import InletWaveform, evaluate_inlet

__version__ = "0.1.0"

__all__ = [
    "BloodProperties", "ConfigError", "ConvergenceError", "DomainError",
    "FileFormatError", "HemoGPError", "InletWaveform", "InvariantError",
    "Junction", "LowRankKernel", "MeasurementSet", "NetworkTopology",
    "NumericalError", "PosteriorField", "RandomizationSpec", "SampleRejectedError",
    "Scenario", "SimulationResult", "SnapshotMatrix", "SolverConfig",
    "SpaceTimePoint", "Vessel", "WallProperties", "WindkesselOutlet",
    "apply_sample", "available_backends", "build_kernel", "compute_beta",
    "decompose", "eval_basis", "eval_kernel", "evaluate_inlet", "fit_noise",
    "holdout_truth", "integrate", "layout_measurements", "load_ensemble",
    "load_kernel", "load_network", "load_result_csv", "load_scenario",
    "load_snapshots", "mass_audit", "network_from_dict", "predict", "pressure",
    "run_ensemble", "sample_parameters", "save_ensemble", "save_kernel",
    "save_snapshots", "serialize_network", "simulate", "wave_speed",
    "__version__",
]
