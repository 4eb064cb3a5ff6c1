"""Market primitives, reduced parameters and the positive-root cubic solver.

Every equilibrium quantity in the package is a closed form in a handful of
reduced parameters::

    kappa  = alpha_I**2 * p_N          precision of Z_N / alpha_I
    lam    = alpha_I / (alpha_I + alpha_U)
    Pi_hat = Pi / (alpha_I + alpha_U)
    beta   = kappa * p_I
    R      = 1 / (1 + p_I)

plus the unique positive root y_hat of

    g(y) = (1+y)^2 (1 - (1-lam) y / (lam (1+p_I))) + (kappa p_I / lam) ((1-lam) y + 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ParameterError",
    "SolverError",
    "BracketError",
    "ConvergenceError",
    "MarketParams",
    "DerivedParams",
    "CubicSolution",
    "derive",
    "cubic_coefficients",
    "cubic_residual",
    "cubic_scale",
    "positive_root",
    "solve_cubic",
    "RESIDUAL_RTOL",
    "MAX_ITER",
]

RESIDUAL_RTOL = 1e-12
MAX_ITER = 200


class ParameterError(ValueError):
    """Invalid model input. ``field`` names the offending parameter."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class SolverError(RuntimeError):
    pass


class BracketError(SolverError):
    """No sign change could be established; this indicates a bug, not bad input."""


class ConvergenceError(SolverError):
    pass


def _check_finite(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(name, f"expected a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise ParameterError(name, f"must be finite, got {value}")
    return value


def _check_positive(name: str, value: float) -> float:
    value = _check_finite(name, value)
    if value <= 0.0:
        raise ParameterError(name, f"must be > 0, got {value}")
    return value


@dataclass(frozen=True)
class MarketParams:
    """Scalar-market primitives.

    alpha_I, alpha_U are risk tolerances, p_I the insider signal precision
    (0 is the no-signal limit), p_N the noise-demand precision and Pi the
    outstanding supply.
    """

    alpha_I: float
    alpha_U: float
    p_I: float
    p_N: float
    Pi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_I", _check_positive("alpha_I", self.alpha_I))
        object.__setattr__(self, "alpha_U", _check_positive("alpha_U", self.alpha_U))
        object.__setattr__(self, "p_N", _check_positive("p_N", self.p_N))
        p_I = _check_finite("p_I", self.p_I)
        if p_I < 0.0:
            raise ParameterError("p_I", f"must be >= 0, got {p_I}")
        object.__setattr__(self, "p_I", p_I)
        object.__setattr__(self, "Pi", _check_finite("Pi", self.Pi))

    def to_dict(self) -> dict:
        return {
            "alpha_I": self.alpha_I,
            "alpha_U": self.alpha_U,
            "p_I": self.p_I,
            "p_N": self.p_N,
            "Pi": self.Pi,
        }


@dataclass(frozen=True)
class DerivedParams:
    kappa: float
    lam: float
    Pi_hat: float
    p_Q0: float
    beta: float
    lambda_I: float
    lambda_U: float
    R: float
    p_I: float

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "lambda": self.lam,
            "Pi_hat": self.Pi_hat,
            "p_Q0": self.p_Q0,
            "beta": self.beta,
            "lambda_I": self.lambda_I,
            "lambda_U": self.lambda_U,
            "R": self.R,
        }


@dataclass(frozen=True)
class CubicSolution:
    y_hat: float
    residual: float
    iterations: int
    y_max: float
    scale: float


def derive(params: MarketParams) -> DerivedParams:
    a_I, a_U = params.alpha_I, params.alpha_U
    total = a_I + a_U
    kappa = a_I * a_I * params.p_N
    lam = a_I / total
    Pi_hat = params.Pi / total
    return DerivedParams(
        kappa=kappa,
        lam=lam,
        Pi_hat=Pi_hat,
        p_Q0=0.0 - Pi_hat,
        beta=kappa * params.p_I,
        lambda_I=lam,
        lambda_U=a_U / total,
        R=1.0 / (1.0 + params.p_I),
        p_I=params.p_I,
    )


def cubic_coefficients(kappa: float, lam: float, p_I: float) -> tuple[float, float, float, float]:
    """Coefficients (a0, a1, a2, a3) of g(y) = a0 + a1 y + a2 y^2 + a3 y^3."""
    c = (1.0 - lam) / (lam * (1.0 + p_I))
    b = kappa * p_I / lam
    return (1.0 + b, 2.0 - c + b * (1.0 - lam), 1.0 - 2.0 * c, -c)


def _horner(coeffs, y):
    a0, a1, a2, a3 = coeffs
    return ((a3 * y + a2) * y + a1) * y + a0


def _horner_prime(coeffs, y):
    _, a1, a2, a3 = coeffs
    return (3.0 * a3 * y + 2.0 * a2) * y + a1


def cubic_scale(coeffs, y: float) -> float:
    """Magnitude of the largest rounding error expected when evaluating g near ``y``."""
    t = max(1.0, abs(y))
    return sum(abs(a) * t**k for k, a in enumerate(coeffs))


def cubic_residual(y: float, d: DerivedParams) -> float:
    y = _check_finite("y", y)
    return _horner(cubic_coefficients(d.kappa, d.lam, d.p_I), y)


def _initial_upper(kappa: float, lam: float, p_I: float) -> float:
    return max(10.0, 3.0 * lam * (1.0 + p_I) * (1.0 + kappa * p_I) / (1.0 - lam))


def positive_root(kappa: float, lam: float, p_I: float) -> CubicSolution:
    """Unique positive root of the equilibrium cubic for raw reduced parameters."""
    if not (kappa > 0.0 and math.isfinite(kappa)):
        raise ParameterError("kappa", f"must be finite and > 0, got {kappa}")
    if not 0.0 < lam < 1.0:
        raise ParameterError("lambda", f"must lie in (0, 1), got {lam}")
    if not (p_I > 0.0 and math.isfinite(p_I)):
        raise ParameterError(
            "p_I", f"must be > 0 for the cubic, got {p_I}; use the no-signal equilibria"
        )
    coeffs = cubic_coefficients(kappa, lam, p_I)

    lo, hi = 0.0, _initial_upper(kappa, lam, p_I)
    g_hi = _horner(coeffs, hi)
    for _ in range(2000):
        if g_hi < 0.0:
            break
        hi *= 2.0
        g_hi = _horner(coeffs, hi)
    if not (g_hi < 0.0 and _horner(coeffs, lo) > 0.0):
        raise BracketError(f"no sign change on [0, {hi}] for kappa={kappa}, lam={lam}, p_I={p_I}")
    y_max = hi

    # kappa = 0 root is a lower bound for the root and a good Newton start
    y = min(max(lam * (1.0 + p_I) / (1.0 - lam), lo), hi)
    for it in range(1, MAX_ITER + 1):
        g = _horner(coeffs, y)
        if g == 0.0:
            break
        if g > 0.0:
            lo = y
        else:
            hi = y
        dg = _horner_prime(coeffs, y)
        step = g / dg if dg != 0.0 else math.inf
        y_new = y - step
        if not (lo < y_new < hi):
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 2.0 * math.ulp(y) or hi - lo <= 4.0 * math.ulp(hi):
            y = y_new
            break
        y = y_new
    else:
        raise ConvergenceError(
            f"cubic solver did not converge in {MAX_ITER} iterations "
            f"(kappa={kappa}, lam={lam}, p_I={p_I})"
        )

    residual = _horner(coeffs, y)
    scale = cubic_scale(coeffs, y)
    if abs(residual) > RESIDUAL_RTOL * scale:
        raise ConvergenceError(f"residual {residual:.3e} exceeds tolerance at y={y}")
    return CubicSolution(y_hat=y, residual=residual, iterations=it, y_max=y_max, scale=scale)


def solve_cubic(d: DerivedParams) -> CubicSolution:
    return positive_root(d.kappa, d.lam, d.p_I)
