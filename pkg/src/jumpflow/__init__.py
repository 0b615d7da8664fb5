"""Ensemble averages of integrable flows with periodic and almost-periodic action jumps."""

from .model import (ActionDomain, Check, FrequencyField, InitialDensity, Observable, PhasePoint,
                    Polynomial, ProductDensity, TransitionSchedule, TrigPolynomial, ValidationReport,
                    check_normalization, trig_observable, validate_hypotheses, validate_schedule)
from .flow import (FlowContext, advance, average_frequency, invert, jacobian_determinant_probe,
                   locate, period_angle_shift, segment_index, twist)
from .spectral import ModeSet, ActionQuadrature, direct_expectation, expectation_fourier, fourier_coefficient
from .montecarlo import SampleCloud, convergence_curve, expectation_mc, time_average, time_average_curve
from .theorems import (LimitReport, bounded_decay_average_demo, rl_segment_amplitudes, rl_time_average_demo,
                       theoretical_limit, verify_theorem_4_1, verify_theorem_4_2)
from .almostperiodic import (APFlow, JumpSequence, advance_ap, averaged_frequency_N, equivalent_schedule,
                             find_almost_period, quasiperiodic_generator, theoretical_limit_ap,
                             validate_ap_condition, verify_theorem_5_1)

__version__ = "0.1.0"

__all__ = [
    "ActionDomain",
    "Check",
    "FrequencyField",
    "InitialDensity",
    "Observable",
    "PhasePoint",
    "Polynomial",
    "ProductDensity",
    "TransitionSchedule",
    "TrigPolynomial",
    "ValidationReport",
    "check_normalization",
    "trig_observable",
    "validate_hypotheses",
    "validate_schedule",
    "FlowContext",
    "advance",
    "average_frequency",
    "invert",
    "jacobian_determinant_probe",
    "locate",
    "period_angle_shift",
    "segment_index",
    "twist",
    "ModeSet",
    "ActionQuadrature",
    "direct_expectation",
    "expectation_fourier",
    "fourier_coefficient",
    "SampleCloud",
    "convergence_curve",
    "expectation_mc",
    "time_average",
    "time_average_curve",
    "LimitReport",
    "bounded_decay_average_demo",
    "rl_segment_amplitudes",
    "rl_time_average_demo",
    "theoretical_limit",
    "verify_theorem_4_1",
    "verify_theorem_4_2",
    "APFlow",
    "JumpSequence",
    "advance_ap",
    "averaged_frequency_N",
    "equivalent_schedule",
    "find_almost_period",
    "quasiperiodic_generator",
    "theoretical_limit_ap",
    "validate_ap_condition",
    "verify_theorem_5_1",
]
