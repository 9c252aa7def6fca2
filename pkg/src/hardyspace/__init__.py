"""Hardy-space toolkit for discrete non-negative self-adjoint operators."""
from .decomposition import (AtomTerm, Decomposition, LevelSetFamily, WhitneyCube,
                            atomic_decompose, build_cells, calderon_reconstruct,
                            interior_bound_check, level_sets, validate_atom, whitney)
from .estimators import AtomicDecomposition, MaximalFunctionTransformer
from .exceptions import HardyError
from .grid import Cube, Field, GridSpec, ball_points, distance, lp_quasinorm
from .harness import (ExperimentConfig, generate_corpus, run_equivalence,
                      run_kernel_reports)
from .maximal import (ConeParams, ScaleGrid, area_function, grand_maximal,
                      nt_maximal, peetre_maximal, radial_maximal, script_M)
from .operator import (SpectralOperator, build_operator, gaussian_bound_report,
                       heat_apply, kato_norm, kernel_matrix, resolvent_check,
                       spectral_apply)
from .symbols import (CalderonBundle, Symbol, dictionary_seminorm, fourier_symbol,
                      make_bump, make_calderon_bundle, make_eta)

__version__ = "0.1.0"
