"""Closed-form NLI model for dual-polarization 4D formats."""
from .integrals import KernelIntegrals
from .kernel import LinkKernel
from .model import (COMPONENTS, PARTS, NliBreakdown, classify, effective_snr, eta_total,
                    gaussian_eta, get_integrals, link_integrals, optimal_launch_power,
                    optimum_from, phi_coefficients, snr_from, snr_sweep, xpm_term)
from .weights import FormatCumulants, GaussianCumulants, MomentCumulants

__all__ = ["KernelIntegrals", "LinkKernel", "NliBreakdown", "COMPONENTS", "PARTS", "classify",
           "effective_snr", "eta_total", "gaussian_eta", "get_integrals", "link_integrals",
           "optimal_launch_power", "optimum_from", "phi_coefficients", "snr_from", "snr_sweep",
           "xpm_term", "FormatCumulants", "GaussianCumulants", "MomentCumulants"]
