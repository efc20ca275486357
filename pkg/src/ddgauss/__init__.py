"""Distributed discrete Gaussian aggregation toolkit.

Clients clip, flatten, and randomly round their vectors onto a grid, add
exact integer-Gaussian noise, and ship residues mod m through a (simulated)
secure aggregator; the server decodes the modular sum back to an unbiased
estimate of the vector sum.  The accountant computes the exact privacy
guarantees of that pipeline and calibrates its noise scale and granularity
under a communication budget.

The hot kernels (integer-Gaussian sampling, Walsh-Hadamard butterfly) run
on a compiled extension when built, with a pure-Python fallback selected at
import; see :func:`backend_name` and the ``DDGAUSS_BACKEND`` environment
variable.
"""

__version__ = "0.1.0"

from ddgauss._backend import backend_name
from ddgauss.accountant import (
    NORM_MODES,
    CommBudget,
    PrivacyReport,
    calibrate_sigma,
    choose_gamma,
    compose,
    dropout_epsilon,
    epsilon_zcdp,
    privacy_report,
    tau,
    zcdp_to_dp,
)
from ddgauss.dgauss import (
    NoiseScale,
    TruncatedPmf,
    convolution_max_log_ratio,
    exact_pmf,
    sample_dgauss,
    sample_dgauss_batch,
)
from ddgauss.dme import DmeConfig, DmeResult, gaussian_baseline, run_dme, sample_sphere
from ddgauss.flatten import PaddedDim, SignVector, flatten, unflatten, wht
from ddgauss.modular import Modulus, ResidueVector, center, mod_clip_real, mod_reduce, secagg_sum
from ddgauss.protocol import (
    MseBound,
    ProtocolConfig,
    RoundDiagnostics,
    client_encode,
    run_round,
    server_decode,
    theoretical_mse_bound,
)
from ddgauss.rounding import (
    RoundingParams,
    SensitivityBound,
    conditional_round,
    delta2_bound,
    randomized_round,
)

__all__ = [
    "__version__",
    "backend_name",
    # exact integer-Gaussian sampling
    "NoiseScale",
    "TruncatedPmf",
    "sample_dgauss",
    "sample_dgauss_batch",
    "exact_pmf",
    "convolution_max_log_ratio",
    # rounding and sensitivity
    "RoundingParams",
    "SensitivityBound",
    "randomized_round",
    "conditional_round",
    "delta2_bound",
    # flattening
    "SignVector",
    "PaddedDim",
    "wht",
    "flatten",
    "unflatten",
    # modular arithmetic and the aggregator
    "Modulus",
    "ResidueVector",
    "mod_reduce",
    "center",
    "mod_clip_real",
    "secagg_sum",
    # the client/server protocol
    "ProtocolConfig",
    "RoundDiagnostics",
    "MseBound",
    "client_encode",
    "server_decode",
    "run_round",
    "theoretical_mse_bound",
    # privacy accounting and calibration
    "NORM_MODES",
    "CommBudget",
    "PrivacyReport",
    "tau",
    "epsilon_zcdp",
    "zcdp_to_dp",
    "compose",
    "calibrate_sigma",
    "choose_gamma",
    "dropout_epsilon",
    "privacy_report",
    # mean-estimation experiments
    "DmeConfig",
    "DmeResult",
    "sample_sphere",
    "gaussian_baseline",
    "run_dme",
]
