"""Lattice simulator for continuously monitored quantum matter whose
measurement signal sources a classical Newton field."""

from .lattice import (DiagonalField, GuardError, LatticeGrid, LatticeUnits,
                      ParticleSet, apply_double_commutator, kinetic_hamiltonian,
                      mass_density_field)
from .kernels import (CorrelationKernel, MatrixKernel, coulomb_potential,
                      kernel_quadratic_form, sample_noise, smear)
from .engine import (FeedbackSpec, MonitoringSpec, TrajectoryRecord,
                     combined_step, ensemble_mean, expectation, feedback_step,
                     generate_signal, hcal_apply, hfb_family_identity_check,
                     hfb_identity_check, me_step, run_trajectory, sme_step,
                     sse_step)
from .models import (Model, ModelSpec, build_backaction_hamiltonian, build_model,
                     exact_pair_step, kappa_decoherence_coefficient, sn_step)
from .analysis import (DecoherenceProfile, LinearityReport, closed_form_rate,
                       decoherence_profile, fit_offdiagonal_decay, kappa_scan,
                       linearity_witness, pair_potential_curve, trace_distance)

__version__ = "0.1.0"
