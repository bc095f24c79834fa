"""Material response models mapping volumetric dose to dose response.

The default model is a generalized logistic (Richards) curve; a
``linear-identity`` variant (response equals dose) is provided for the
binary-target presets that assume no response nonlinearity.  The inverse is
tabulated and clamped: queries outside the stored response range return the
dose at the nearest table bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

LOGISTIC = "logistic"
LINEAR_IDENTITY = "linear-identity"

_TABLE_SIZE = 4096
_TABLE_MARGIN = 1e-6  # fraction of (K - A) kept away from each asymptote


@dataclass(frozen=True)
class ResponseModel:
    """Injective, differentiable dose -> response map.

    Logistic variant: ``A + (K - A) / (1 + exp(-B (f - M')))**(1/nu)`` with
    left/right asymptotes A < K, steepness B > 0, shift M' and asymmetry
    nu > 0.  The ``linear-identity`` variant is the identity map.
    """

    variant: str = LOGISTIC
    A: float = 0.0
    K: float = 1.0
    B: float = 10.0
    M_prime: float = 0.5
    nu: float = 1.0

    def __post_init__(self):
        if self.variant not in (LOGISTIC, LINEAR_IDENTITY):
            raise ValueError(f"unknown response variant {self.variant!r}")
        if self.variant == LOGISTIC:
            if not self.K > self.A:
                raise ValueError("logistic response needs K > A")
            if not self.B > 0:
                raise ValueError("logistic response needs B > 0")
            if not self.nu > 0:
                raise ValueError("logistic response needs nu > 0")

    @property
    def is_identity(self) -> bool:
        return self.variant == LINEAR_IDENTITY

    def respond(self, f):
        """Dose response M(f).  Total and overflow-safe for any finite dose."""
        f = np.asarray(f, dtype=np.float64)
        if self.is_identity:
            return f.copy()
        t = -self.B * (f - self.M_prime)
        # (1 + e^t)^(-1/nu) written through logaddexp to avoid overflow
        out = self.A + (self.K - self.A) * np.exp(-np.logaddexp(0.0, t) / self.nu)
        return out

    def derivative(self, f):
        """dM/df; strictly positive for the logistic variant, 1 for identity."""
        f = np.asarray(f, dtype=np.float64)
        if self.is_identity:
            return np.ones_like(f)
        t = -self.B * (f - self.M_prime)
        log_d = t - (self.nu + 1.0) / self.nu * np.logaddexp(0.0, t)
        return (self.K - self.A) * (self.B / self.nu) * np.exp(log_d)

    def invert_exact(self, f_m):
        """Closed-form inverse, valid strictly inside (A, K).  Used to build
        the interpolation table; not clamped."""
        f_m = np.asarray(f_m, dtype=np.float64)
        if self.is_identity:
            return f_m.copy()
        ratio = (self.K - self.A) / (f_m - self.A)
        return self.M_prime - np.log(ratio**self.nu - 1.0) / self.B

    @cached_property
    def _inverse_table(self) -> tuple[np.ndarray, np.ndarray]:
        span = self.K - self.A
        fm = np.linspace(
            self.A + _TABLE_MARGIN * span, self.K - _TABLE_MARGIN * span, _TABLE_SIZE
        )
        return fm, self.invert_exact(fm)

    def invert(self, f_m):
        """Tabulated inverse dose M^-1(f_m), clamped at the table bounds."""
        f_m = np.asarray(f_m, dtype=np.float64)
        if self.is_identity:
            return f_m.copy()
        fm_grid, dose_grid = self._inverse_table
        return np.interp(f_m, fm_grid, dose_grid)

    @property
    def inverse_bounds(self) -> tuple[float, float]:
        """Response range covered by the inverse table; identity is unbounded."""
        if self.is_identity:
            return (-np.inf, np.inf)
        fm_grid, _ = self._inverse_table
        return (float(fm_grid[0]), float(fm_grid[-1]))


def respond(model: ResponseModel, f):
    return model.respond(f)


def respond_derivative(model: ResponseModel, f):
    return model.derivative(f)


def invert_response(model: ResponseModel, f_m):
    return model.invert(f_m)
