"""Exact laboratory for rank-one cutting-and-stacking constructions."""

from __future__ import annotations

__version__ = "0.1.0"

from .correlation import (CorrelationValue, IntersectionQuery, brute_force_oracle, correlation, difference_counts,
                          lag_census, multi_intersection, power_sum, x1_correlation)
from .dynamics import (DivergenceScenario, IntervalPermutation, Poly, RepulsionScenario, SequencePair, average_series,
                       block_bounds, build_pi, build_sigma, conjugated_image, repulsion_measure, repulsion_summability)
from .errors import BudgetExceeded, InternalInvariant, InvalidInput, LabError
from .poisson import (CylinderConjunction, CylinderEvent, ExactExp, Shift, Swap, cylinder_measure, image_conjunction,
                      mc_estimate, sample_configuration)
from .schedule import ExperimentConfig, parse_floorset, parse_schedule, spec_to_text
from .sidon import (AffinePsi, CnuDescriptor, GeometricBlocks, check_growth, check_sidon, classify_tensor_powers,
                    generate_cnu, sidon_schedule)
from .spectral import indicator_support_check, lemma_disjointness_check, pk_norm, product_rhs, verify_41
from .tower import Construction, ConstructionSpec, FloorSet, StageParams

__all__ = [name for name in dir() if not name.startswith("_")]
