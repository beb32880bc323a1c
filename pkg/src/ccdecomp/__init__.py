"""Concentration-compactness decompositions of measure and Sobolev sequences."""

from .concfun import (ATOMS, CenterStrategy, ConcentrationCurve, LimitProfile, RadiusGrid,
                      TailWindow, concentration_curve, concentration_curve_bruteforce,
                      default_grid, diagonal_scales, helly_subsequence, limsup_profile)
from .extraction import (Bubble, DecompositionReport, ExtractionConfig, TrichotomyVerdict,
                         classify, disjointness_check, extract_concentrating_core,
                         extract_profiles, vanishing_score)
from .measures import (Ball, DiscreteMeasure, MeasureSequence, ball_mass, read_measure_csv,
                       read_sequence, restrict_ball, restrict_outside_balls, total_mass,
                       write_measure_csv, write_sequence_csv)
from .sobolev import (GridFunction, ProfileDecomposition, SobolevParams, cutoff_partition,
                      density_rho, gradient, lemma41_check, local_uniform_mass,
                      norm_expansion_check, profile_extract, read_gfn, remainder_split,
                      write_gfn)

__version__ = "0.1.0"

__all__ = [
    "ATOMS", "Ball", "Bubble", "CenterStrategy", "ConcentrationCurve", "DecompositionReport",
    "DiscreteMeasure", "ExtractionConfig", "GridFunction", "LimitProfile", "MeasureSequence",
    "ProfileDecomposition", "RadiusGrid", "SobolevParams", "TailWindow", "TrichotomyVerdict",
    "ball_mass", "classify", "concentration_curve", "concentration_curve_bruteforce",
    "cutoff_partition", "default_grid", "density_rho", "diagonal_scales",
    "disjointness_check", "extract_concentrating_core", "extract_profiles", "gradient",
    "helly_subsequence", "lemma41_check", "limsup_profile", "local_uniform_mass",
    "norm_expansion_check", "profile_extract", "read_gfn", "read_measure_csv",
    "read_sequence", "remainder_split", "restrict_ball", "restrict_outside_balls",
    "total_mass", "vanishing_score", "write_gfn", "write_measure_csv", "write_sequence_csv",
]
