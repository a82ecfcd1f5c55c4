"""Extreme value laws, extremal indices and hitting times for piecewise
expanding maps, deterministic and randomly perturbed."""

from .maps import (Branch, NoiseModel, PiecewiseMap, PointClassification, SidedPoint, TorusLinearMap,
                   affine_map, classify, doubling, expansion_bounds, orbit, random_orbit, random_step, step,
                   step_sided, times_m)
from .stochastic import (MeasureModel, Observable, ProcessSample, ThresholdSchedule, sample_deterministic,
                         sample_random, simulate, stationary_start, threshold_for)
from .extremes import (cluster_histogram, compound_poisson_pmf, dp_prime_stat, dprime_stat, ei_estimate,
                       evl_estimate, polya_aeppli_pmf, repp)
from .hitting import (Ball, duality_check, first_return_min, hitting_time, hitting_times, hts_cdf,
                      hts_from_rts, rts_cdf, short_return_prob)
from .theory import (NonSimpleData, annulus_family, block_bound_residual, ei_from_annulus, ei_multidim_periodic,
                     ei_nonsimple, ei_periodic_1d, multiplicity_from_annuli, multiplicity_nonsimple)
from .spectral import (HoleSpec, UlamOperator, delta, hole_around, leading_eigen, open_operator, qk_series,
                       spectral_ei, spectral_report, survival, ulam_build, ulam_random)

__version__ = "0.1.0"
