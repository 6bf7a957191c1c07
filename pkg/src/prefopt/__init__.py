"""Preference-driven visual parameter optimization with transfer.

Core pieces: a GP surrogate over latent goodness fit from gallery
selections, transfer acquisition functions over a gallery of prior-user
models, 2D search-plane construction, the interactive session engine, and a
simulated benchmark harness.
"""

from .acquisition import (
    AcquisitionContext,
    DecaySchedule,
    PopulationGallery,
    decay,
    expected_improvement,
    maximize_acquisition,
    taf_acquisition,
    taf_m_weights,
    taf_r_weights,
    two_step_acquisition,
)
from .backend import BACKEND_NAME
from .gp import KernelHyperparams, LatentGoodness, PreferenceGP, kernel_eval, log_posterior_and_grad, posterior_predict
from .plane import SearchPlane, build_plane, orthogonal_third_point, random_plane
from .preference import (
    FitOptions,
    PreferenceDataset,
    SelectionEvent,
    btl_choice_probability,
    fit_preference_gp,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionContext",
    "BACKEND_NAME",
    "DecaySchedule",
    "FitOptions",
    "KernelHyperparams",
    "LatentGoodness",
    "PopulationGallery",
    "PreferenceDataset",
    "PreferenceGP",
    "SearchPlane",
    "SelectionEvent",
    "btl_choice_probability",
    "build_plane",
    "decay",
    "expected_improvement",
    "fit_preference_gp",
    "kernel_eval",
    "log_posterior_and_grad",
    "maximize_acquisition",
    "orthogonal_third_point",
    "posterior_predict",
    "random_plane",
    "taf_acquisition",
    "taf_m_weights",
    "taf_r_weights",
    "two_step_acquisition",
]
