"""Sequential-measurement thermometry on a ferromagnetic Heisenberg chain.

Library layers: dense register algebra (:mod:`seqtherm.linalg`), the chain and
its thermal states (:mod:`seqtherm.chain`), the thermal master equation
(:mod:`seqtherm.lindblad`), the sequential measurement protocol
(:mod:`seqtherm.protocol`), Fisher-information estimation
(:mod:`seqtherm.fisher`), Bayesian temperature inference
(:mod:`seqtherm.bayes`) and the experiment/CSV front end
(:mod:`seqtherm.experiments`, :mod:`seqtherm.presets`, ``seqtherm`` CLI).
"""

__version__ = "0.1.0"

from .chain import (
    ChainParams,
    ThermalProbe,
    build_hamiltonian,
    energy_moments,
    find_t_star,
    gibbs_state,
    heat_capacity,
    qfi_thermal,
)
from .errors import (
    DegeneratePosteriorError,
    NumericalError,
    ResourceLimitError,
    ValidationError,
)
from .fisher import (
    DerivativeScheme,
    FisherSeries,
    NseqStarResult,
    cfi_static,
    exact_sequential_cfi,
    find_nseq_star,
    mc_sequential_cfi,
)
from .lindblad import (
    BohrTransition,
    LindbladModel,
    bohr_frequencies,
    build_jump_operators,
    build_liouvillian,
    propagate,
    thermalization_time_t95,
)
from .linalg import (
    Spectrum,
    eig_hermitian,
    fidelity,
    operator_function,
    partial_trace,
    von_neumann_entropy,
)
from .bayes import (
    PosteriorGrid,
    TrajectoryCounts,
    log_likelihood,
    posterior,
    posterior_moments,
)
from .protocol import (
    LocalPovm,
    ProbeDynamics,
    ProtocolConfig,
    Trajectory,
    average_entropy,
    enumerate_trajectory_tree,
    measure_site,
    multi_site_probabilities,
    sample_trajectory,
)
