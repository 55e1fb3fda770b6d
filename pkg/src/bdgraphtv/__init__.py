"""Graph vectorial symmetric total variation on random point clouds and its continuum limit."""
from .continuum import (ContinuumTVResult, LinearField, PiecewiseRigidField, SmoothField,
                        rigid_motion, sym_gradient, tv_eta)
from .domain import Density, Domain, EmpiricalMeasure, grid_reference, sample
from .experiments import (ExperimentConfig, Explicit, PowerLaw, emit_report, fit_rate,
                          run_convergence_study)
from .graph_energy import gtv, gtv_celllist, gtv_expectation_oracle, gtv_naive
from .kernels import Kernel, QuadratureSpec, SymMatrix, phi_eta, rescale, second_moment
from .slicing import (SliceSpec, liminf_probe_1d, slice_energy_1d, slice_field,
                      verify_slicing_identity)
from .transport import (build_transport_map, scaling_diagnostics, tl1_converging_pair_check,
                        tl1_distance)

__version__ = "0.1.0"

__all__ = [
    "ContinuumTVResult", "Density", "Domain", "EmpiricalMeasure", "ExperimentConfig", "Explicit",
    "Kernel", "LinearField", "PiecewiseRigidField", "PowerLaw", "QuadratureSpec", "SliceSpec",
    "SmoothField", "SymMatrix", "build_transport_map", "emit_report", "fit_rate", "grid_reference",
    "gtv", "gtv_celllist", "gtv_expectation_oracle", "gtv_naive", "liminf_probe_1d", "phi_eta",
    "rescale", "rigid_motion", "run_convergence_study", "sample", "scaling_diagnostics",
    "second_moment", "slice_energy_1d", "slice_field", "sym_gradient", "tl1_converging_pair_check",
    "tl1_distance", "tv_eta", "verify_slicing_identity",
]
