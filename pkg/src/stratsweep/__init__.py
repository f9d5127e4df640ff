"""Sweeping preconditioners and DtN sensitivity lab for 2D time-harmonic
waves in stratified media on tensor-product grids."""

from .assembly import (SourceSpec, TensorSystem, assemble_load,
                       assemble_perturbed_system, assemble_tensor_system,
                       relative_l2_error)
from .dtn import (InterfaceOperator, ModalDtN, TransverseEigenbasis,
                  exact_schur_dtn, modal_relative_error, mode_dtn_number,
                  moving_pml_dtn, tensor_dtn_operator, transverse_eigenbasis)
from .fem import Mesh1D, Space1D, assemble_weighted_matrix
from .gmres import GmresReport, gmres
from .halfline import (HalfLineProblem, closed_form_solution, dtn_numbers,
                       first_order_sensitivity, perturbation_kernel,
                       relative_errors, riccati_integrate)
from .media import (PMLSpec, Perturbation, RadialProfile,
                    SeparableCoefficients, apply_perturbation, eval_profile,
                    load_profile, make_disk_coefficients,
                    make_sh_coefficients, pml_scale, prem_like_profile,
                    save_profile)
from .sweep import (DosmPreconditioner, LayerDecomposition,
                    build_preconditioner, decompose)

__version__ = "0.1.0"
