"""Mean-field scaling toolkit: derive, simulate, solve."""

from ._vlasov import (
    ConfigError,
    NumericalFault,
    ParseError,
    ScalingError,
    UnsupportedForm,
    derive,
    g2,
    main,
    presets,
    reference,
    selftest,
    simulate,
    solve,
)

__all__ = [
    "ConfigError",
    "NumericalFault",
    "ParseError",
    "ScalingError",
    "UnsupportedForm",
    "derive",
    "g2",
    "main",
    "presets",
    "reference",
    "selftest",
    "simulate",
    "solve",
]
