"""Delay and RF-phase metrology with phase-modulated biphoton frequency combs."""

__version__ = "0.1.0"

from .core import (BETA2_SMF28, BfcState, ChannelSettings, DerivedPhase, MixingCoefficients,
                   OracleResult, bessel_j, channel_probability, channel_weights,
                   coincidence_probability, coincidence_probability_dispersive,
                   effective_phase, g2_correlation, mixing_coefficients, normalize_trace,
                   oracle_filter_integral, unit_mixing)
from .design import (SlopeMap, equalization_weights, equalized_mixing, max_slope, slope_map,
                     trace_fwhm)
from .estimation import (AmbiguityError, DisambiguationResult, FitError, FitResult, combine_ci,
                         compensation_phase, disambiguate, estimate_rf_phase,
                         fit_gaussian_histogram, fit_interferogram)
from .noise import (AcquisitionConfig, Interferogram, ScanKind, TimeTagHistogram,
                    sample_counts, scan_expected, simulate_histogram)
