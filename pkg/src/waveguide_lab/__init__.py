"""Desk-scale numerical laboratory for dispersive estimates on waveguides."""

from .geometry import (Disk, FlatProduct, GridMode, GridSpec, Interval,
                       RadialProfile, WaveguideDomain, WitschBump,
                       audit_flat_tail, audit_repulsivity, build_domain)
from .fields import GridFunction, bump_source, random_field
from .mcnorms import (InequalityId, MarginReport, NormReport, check_inequality,
                      lemma_weights_bound, norm_report, weighted_norm,
                      xstar_norm)
from .operators import (DirichletOperator, PotentialField, RadialPotential,
                        SectorOperator, assemble_hamiltonian, assemble_sector,
                        audit_potential, operator_selfcheck)
from .morawetz import WeightEval, morawetz_weights
from .resolvent import (ResolventSolve, SpectralPoint, SweepRecord,
                        SweepSummary, calibrate_eps_floor,
                        energy_identity_check, resolvent_ratio,
                        solve_resolvent, sweep_uniformity)
from .spectral import (EigenReport, ModeBasis, classify_embedded,
                       cross_section_modes, essential_threshold,
                       scan_eigenvalues)
from .evolution import (DecayFit, EvolutionTrace, Trajectory, duhamel_evolve,
                        evolve_schrodinger, evolve_wave,
                        flat_reference_propagator, half_derivative_x,
                        inhomogeneous_ratio, smoothing_trace, strichartz_norm)

__version__ = "0.1.0"
