"""Verification checks run against solved problems."""

from .abp import ABPReport, abp_batch, abp_check
from .approximation import ApproximationReport, approximation_gap, approximation_ladder
from .caffarelli import RegularityFit, caffarelli_fit, minimax_affine_fit
from .checks import nagumo_check, nagumo_ladder, smp_hopf_check, w2p_norm
from .holder import holder_seminorm
from .rescale import RescaledProblem, rescale_blowup, rescale_iteration

__all__ = [
    "ABPReport", "abp_batch", "abp_check",
    "ApproximationReport", "approximation_gap", "approximation_ladder",
    "RegularityFit", "caffarelli_fit", "minimax_affine_fit",
    "nagumo_check", "nagumo_ladder", "smp_hopf_check", "w2p_norm",
    "holder_seminorm",
    "RescaledProblem", "rescale_blowup", "rescale_iteration",
]
