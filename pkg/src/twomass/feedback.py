"""Funnel feedback: a model-free high-gain law with a prescribed error bound.

The controller confines the tracking error ``e = y - y_ref`` to the time
varying band ``|e(t)| < psi(t)``.  It uses no plant parameters; the gain grows
without bound as the error approaches the band, which is what pushes the
error back.  Outside the band the law is undefined; evaluation there raises
:class:`~twomass.errors.FunnelViolation` and the caller decides what a
violation means (the closed-loop simulator stops the run).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import FunnelViolation, ValidationError

__all__ = ["FunnelSpec", "psi", "funnel_gain", "funnel_law"]


@dataclass(frozen=True)
class FunnelSpec:
    """Exponentially shrinking error band ``psi(t) = s*exp(-q_decay*t) + c``.

    ``c > 0`` and ``s >= 0`` keep the infimum of the band positive, as the
    feasibility of the feedback law requires.  (The decay rate is named
    ``q_decay`` to avoid colliding with the generalized coordinates ``q``.)
    """

    s: float
    q_decay: float
    c: float

    def __post_init__(self):
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ValidationError(f"funnel offset c must be > 0, got {self.c}")
        if not (self.s >= 0.0 and math.isfinite(self.s)):
            raise ValidationError(f"funnel surplus s must be >= 0, got {self.s}")
        if not math.isfinite(self.q_decay):
            raise ValidationError(f"funnel decay rate must be finite, got {self.q_decay}")


def psi(spec: FunnelSpec, t: float) -> float:
    """Half-width of the error band at time ``t`` (rad/s)."""
    return spec.s * math.exp(-spec.q_decay * t) + spec.c


def funnel_gain(y: float, y_ref: float, psi_t: float) -> float:
    """Dimensionless gain ``psi^2 / (psi^2 - e^2)``; >= 1 inside the band.

    Exposed separately for diagnostics: traces of the gain show how close the
    loop operates to the band.
    """
    e = y - y_ref
    if abs(e) >= psi_t:
        raise FunnelViolation(math.nan, e, psi_t)
    p2 = psi_t * psi_t
    return p2 / (p2 - e * e)


def funnel_law(y: float, y_ref: float, psi_t: float) -> float:
    """Feedback input ``-psi^2 e / (psi^2 - e^2)``, factored as -gain*e."""
    return -funnel_gain(y, y_ref, psi_t) * (y - y_ref)
