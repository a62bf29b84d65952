"""OTOCs of banded locally-GOE random-matrix ensembles.

Monte Carlo sampling, closed-form large-N predictions, and a brute-force
Wick-contraction oracle that cross-validates every formula.
"""

from .ensemble import (
    DegenerateDrawError,
    EnsembleConfig,
    EnsembleMember,
    SpectrumModel,
    build_hamiltonian,
    sample_member,
    wigner_surmise,
    window_weight,
)
from .observables import (
    ObservablePair,
    check_one_point,
    generate_pair,
    padded_support,
)
from .propagator import (
    ComplexArgument,
    ComplexPropagator,
    build_Y,
    trace_Z,
    window_trace_Z,
)
from .analytic import (
    AnalyticPrediction,
    C0,
    C_asymptote,
    F0,
    MomentSpec,
    correlated_moment,
    corr_trZ_squared,
    first_moment,
    mean_trZ,
    predict_C,
    predict_F,
    trZ_HF,
)
from .otoc_mc import (
    OtocSeries,
    RunConfig,
    RunFailedError,
    eval_C,
    eval_F,
    run_series,
)
from .wick_oracle import (
    ContractionPattern,
    TraceSpec,
    VarianceDecomposition,
    enumerate_pairings,
    exact_moment,
    exact_trace_moment,
    trace_product_correlated,
    variance_decomposition,
)

__version__ = "0.1.0"
