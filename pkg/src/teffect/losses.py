"""Convex loss families that define the estimation target.

The estimated parameter for treatment level d is the minimizer of the
weighted empirical loss, so the family picks the functional:

- ``squared``             v^2                       -> mean
- ``check``               v * (tau - 1{v <= 0})     -> tau-quantile
- ``asymmetric_squared``  v^2 * |tau - 1{v <= 0}|   -> tau-expectile

Losses are implemented literally (squared is v^2, not v^2/2); downstream
curvature and influence values inherit that scale and the sandwich variance
is invariant to it.  The derivative convention at v = 0 is 1{0 <= 0} = 1,
so the check derivative at zero is tau - 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQUARED = "squared"
CHECK = "check"
ASYMMETRIC_SQUARED = "asymmetric_squared"

_FAMILIES = (SQUARED, CHECK, ASYMMETRIC_SQUARED)


@dataclass(frozen=True)
class LossSpec:
    """A loss family plus its asymmetry level and an overall scale.

    Parameters
    ----------
    family : str
        One of ``squared``, ``check``, ``asymmetric_squared``.
    tau : float or None
        Asymmetry level in (0, 1); required for check and asymmetric_squared,
        must be None for squared.
    scale : float
        Positive multiplier applied to the loss and its derivative.
    """

    family: str
    tau: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.family == SQUARED:
            if self.tau is not None:
                raise ValueError("squared loss takes no tau")
        else:
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ValueError("tau must lie strictly in (0, 1)")
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")

    @property
    def smooth(self) -> bool:
        """True when the derivative is continuous (no jump at zero)."""
        return self.family != CHECK


def squared_loss(scale: float = 1.0) -> LossSpec:
    return LossSpec(SQUARED, None, scale)


def check_loss(tau: float, scale: float = 1.0) -> LossSpec:
    return LossSpec(CHECK, tau, scale)


def expectile_loss(tau: float, scale: float = 1.0) -> LossSpec:
    return LossSpec(ASYMMETRIC_SQUARED, tau, scale)


def loss_value(spec: LossSpec, v):
    """Evaluate the loss elementwise; returns an array matching `v`."""
    v = np.asarray(v, dtype=float)
    if spec.family == SQUARED:
        out = v * v
    elif spec.family == CHECK:
        out = v * (spec.tau - (v <= 0.0))
    else:
        out = v * v * np.abs(spec.tau - (v <= 0.0))
    return spec.scale * out


def loss_deriv(spec: LossSpec, v):
    """Evaluate the loss derivative elementwise (subgradient 0 convention).

    At v = 0 the indicator resolves to 1, which makes the check derivative
    tau - 1 and leaves the two quadratic families at 0 there.
    """
    v = np.asarray(v, dtype=float)
    if spec.family == SQUARED:
        out = 2.0 * v
    elif spec.family == CHECK:
        out = spec.tau - (v <= 0.0)
    else:
        out = 2.0 * v * np.abs(spec.tau - (v <= 0.0))
    return spec.scale * out


def unit_scale(spec: LossSpec) -> LossSpec:
    """The same family and tau with scale 1."""
    if spec.scale == 1.0:
        return spec
    return LossSpec(spec.family, spec.tau, 1.0)
