"""Line spectral estimation by atomic norm minimization, with classical baselines."""
from .signal import (
    DomainError,
    MatchReport,
    NoisyObservation,
    PsfSpectrum,
    SingularPSFError,
    SpikeSignal,
    add_noise,
    atom,
    atom_derivative,
    equalize,
    make_rng,
    match_spikes,
    min_separation,
    synthesize,
)
from .toeplitz import (
    HermToeplitz,
    NoDecompositionError,
    NotHermitianError,
    NotPSDError,
    VandermondeDecomposition,
    project_psd,
    toep,
    vandermonde_decompose,
)
from .admm import (
    AdmmOptions,
    SolveReport,
    atomic_norm_exact,
    denoise,
    extract_dual,
    lambda_rule,
    mmv_atomic_norm_exact,
    mmv_denoise,
)
from .localization import ConditioningError, amplitudes_ls, certify, eval_dual_poly, localize_support
from .adcg import AdcgConfig, CompressedLoss, QuadraticLoss, solve as adcg_solve
from .baselines import HankelConfig, cadzow, crb, prony, root_music

__version__ = "0.1.0"
