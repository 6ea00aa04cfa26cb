"""Distance covariance, rank and Cramér–von Mises dependence statistics with
resampling tests for blocks of random vectors and time series."""

from .data import (BlockSample, BlockSpec, DataError, DataMatrix, RankMatrix, load_csv,
                   parse_blocks, save_csv, to_ranks)
from .dcov import (CenteredKernel, dcor, dcov_stat, dcov_test, double_center, kernel,
                   mobius_all_subsets, mobius_dcov, pairwise_distances)
from .cvm import bn_stat, cvm_test, ecdf, joint_cvm, mobius_cvm, mobius_cvm_all_subsets
from .serial import (ARFit, LagSpectrum, acov_spectrum, fit_ar1, lag_dcov, lag_embed_mobius,
                     residual_serial_test)
from .resampling import (ResamplingPlan, TestResult, make_stream, permutation_pvalue)

__version__ = "0.1.0"
