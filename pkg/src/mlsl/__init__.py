"""Magnetic semiclassics laboratory.

Simulates the atomic phase-space flow of a charged particle in a confining
well and the matching packet-mixture dynamics side by side, measures the
transport distance between the two, and verifies exponential envelopes,
operator identities, and an observation inequality, all at desk scale.
"""

__version__ = "0.1.0"

from .errors import (DimensionMismatch, GCViolated, InvariantViolation,
                     IoFailure, MalformedDocument, MassLeak, MlslError,
                     NonFiniteState, NonPositiveInput, NotConverged,
                     NotNormalized, NotPSD, OutOfBox, ResolutionInsufficient,
                     SizeExceeded, SupportViolation)
from .model import (AtomicMeasure, FieldSpec, ObserveParams, PhaseVec,
                    PotentialSpec, SimConfig, TransportParams, config_from_file,
                    field_divergence, field_eval, field_jacobian, parse_config,
                    potential_eval, potential_gradient, potential_sup,
                    resolve_atoms)
from .classical_flow import (Region, Trajectory, batch_hitting_occupation,
                             classical_energy, flow_states_at, hitting_time,
                             integrate_flow, occupation_integral, pushforward)
from .quantum import (DensityMixture, Grid, GridState, coherent_state,
                      dump_state, expectation_multiplication, fidelity,
                      load_state, make_stepper, propagate_mixture,
                      propagate_state, quantum_energy,
                      quantum_kinetic_magnetic, quantum_second_moments,
                      toeplitz_mixture)
from .transforms import (PhaseGrid, PhaseGridDensity, build_phase_grid,
                         gaussian_comb, husimi_at, husimi_overlap,
                         husimi_smooth, l1_gap, load_density, trace_pairing,
                         toeplitz_wigner_check, wigner)
from .transport import (TransportPlan, sinkhorn_divergence, w2_cloud_grid,
                        w2_exact, w2_gaussian_oracle)
from .costs import (CostParams, RateConstants, coherent_cost_expectation,
                    constants, double_limit_bound, double_limit_rate,
                    magnetic_cost_expectation, optimize_cstar,
                    pseudo_distance_lower, pseudo_distance_upper,
                    single_limit_bound)
from .operator_algebra import (anticommutator_cancellation_residual,
                               discrete_commutator_check)
