"""Spin squeezing from collective coupling between two spin ensembles.

The S ensemble (n_s spins) is coupled to a much larger J ensemble (n_j spins)
through g_x SxJx + g_y SyJy + g_z SzJz.  With J polarized, S experiences an
effective one-axis twisting; pulse sequences on S remove the linear precession
and synthesize two-axis twisting.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    AccuracyError,
    BudgetExceededError,
    DegenerateDirectionError,
    InvalidArgumentError,
    NotBracketedError,
    NumericalError,
    SpinSqueezeError,
    TruncationError,
)
from .spin_ops import SparseHermitianOperator, SpinSystem, css, embed, rotation, spin_matrices  # noqa: E402
from .model import (  # noqa: E402
    BosonSpace,
    CouplingParams,
    build_h_eff,
    build_h_fn_hp,
    build_h_int,
    build_h_oat,
    build_h_tat,
    build_s_fn,
    conjugate_columns,
)
from .propagate import Evolver, PropagatorConfig, evolve, evolve_dense, evolve_sampled  # noqa: E402
from .observables import (  # noqa: E402
    CollectiveMoments,
    HusimiGrid,
    SqueezingTrace,
    collective_moments,
    find_optimal_squeezing,
    husimi_q,
    reduced_density_s,
    squeezing_parameter,
)
from .pulses import (  # noqa: E402
    Free,
    NoiseSpec,
    PulseSequence,
    Rotate,
    apply_sequence,
    echo_sequence,
    perturb_sequence,
    tat_sequence,
)
