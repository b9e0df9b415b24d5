"""Exact analysis, asymptotics and simulation of Nudge-M scheduling
for the two-class M/PH/1 queue."""

__version__ = "0.1.0"

from .phtype import JobMix, PhaseType, load_mix, normalized_mix, two_class_exp_mix
from .policy import PolicyFn, named_policy
from .asymptotics import decay_rate, atir_nudge_m, m_opt

__all__ = [
    "JobMix", "PhaseType", "load_mix", "normalized_mix", "two_class_exp_mix",
    "PolicyFn", "named_policy",
    "decay_rate", "atir_nudge_m", "m_opt",
    "__version__",
]
