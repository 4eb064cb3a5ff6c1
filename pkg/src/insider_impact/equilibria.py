"""The four scalar equilibria as explicit affine maps.

Demands are in risk-tolerance-adjusted units psi; the share position of
trader i is alpha_i * psi. PI and PT objects are evaluated on the insider
signal g and noise demand z (or the public signal h). The no-signal kinds
depend on z alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model_core import (
    DerivedParams,
    MarketParams,
    ParameterError,
    derive,
    solve_cubic,
)

__all__ = [
    "EquilibriumKind",
    "Equilibrium",
    "solve_pi",
    "solve_pt",
    "solve_no_signal",
    "solve",
    "public_signal",
    "price",
    "insider_demand",
    "uninformed_demand",
    "perceived_price",
    "slopes",
    "to_shares",
]


class EquilibriumKind(str, Enum):
    PI = "PI"
    PT = "PT"
    NS_PI = "NS_PI"
    NS_PT = "NS_PT"

    @property
    def has_signal(self) -> bool:
        return self in (EquilibriumKind.PI, EquilibriumKind.PT)

    @classmethod
    def parse(cls, text: str) -> "EquilibriumKind":
        key = str(text).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ParameterError("kind", f"unknown equilibrium kind {text!r}") from None


@dataclass(frozen=True)
class Equilibrium:
    """One solved equilibrium.

    For PI/PT the price is ``price_intercept + price_slope * (h - price_intercept)``,
    the insider policy is ``a*g + b*p + c*p_Q0`` with ``insider_coeffs = (a, b, c)``
    and the uninformed policy is ``a*h + b*p`` with ``uninformed_coeffs = (a, b)``.

    For the no-signal kinds the price is ``price_intercept + price_slope * z`` and
    both coefficient pairs read ``(intercept, slope on z)``.
    """

    kind: EquilibriumKind
    params: MarketParams
    derived: DerivedParams
    lambda_sig: float | None
    p_pub: float
    price_intercept: float
    price_slope: float
    insider_coeffs: tuple
    uninformed_coeffs: tuple
    impact_M: float | None
    impact_V: float | None
    y_hat: float | None = None
    residual: float | None = None
    iterations: int | None = None

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind.value,
            "lambda_sig": self.lambda_sig,
            "p_pub": self.p_pub,
            "price_intercept": self.price_intercept,
            "price_slope": self.price_slope,
            "insider_coeffs": list(self.insider_coeffs),
            "uninformed_coeffs": list(self.uninformed_coeffs),
            "impact_M": self.impact_M,
            "impact_V": self.impact_V,
            "y_hat": self.y_hat,
            "residual": self.residual,
            "iterations": self.iterations,
            "params": self.params.to_dict(),
            "derived": self.derived.to_dict(),
        }
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _require_signal(params: MarketParams, kind: str) -> DerivedParams:
    if params.p_I <= 0.0:
        raise ParameterError(
            "p_I", f"must be > 0 for the {kind} equilibrium; use kind ns-{kind.lower()} for p_I = 0"
        )
    return derive(params)


def solve_pi(params: MarketParams) -> Equilibrium:
    d = _require_signal(params, "PI")
    sol = solve_cubic(d)
    y = sol.y_hat
    p_I, kappa = params.p_I, d.kappa
    p_pub = kappa * p_I * p_I / ((1.0 + y) ** 2 + kappa * p_I)
    return Equilibrium(
        kind=EquilibriumKind.PI,
        params=params,
        derived=d,
        lambda_sig=(1.0 + y) / (params.alpha_I * p_I),
        p_pub=p_pub,
        price_intercept=d.p_Q0,
        price_slope=p_I * y / ((1.0 + p_I) * (1.0 + 2.0 * y)),
        insider_coeffs=(p_I / (1.0 + y), -(1.0 + p_I) / (1.0 + y), -y / (1.0 + y)),
        uninformed_coeffs=(p_pub, -(1.0 + p_pub)),
        impact_M=y / (1.0 + p_I),
        impact_V=d.p_Q0,
        y_hat=y,
        residual=sol.residual,
        iterations=sol.iterations,
    )


def solve_pt(params: MarketParams) -> Equilibrium:
    d = _require_signal(params, "PT")
    a_I, a_U, p_I = params.alpha_I, params.alpha_U, params.p_I
    beta = d.beta
    p_pub = beta * p_I / (1.0 + beta)
    slope = (a_I * p_I + a_U * p_pub) / (a_I * (1.0 + p_I) + a_U * (1.0 + p_pub))
    return Equilibrium(
        kind=EquilibriumKind.PT,
        params=params,
        derived=d,
        lambda_sig=1.0 / (a_I * p_I),
        p_pub=p_pub,
        price_intercept=d.p_Q0,
        price_slope=slope,
        insider_coeffs=(p_I, -(1.0 + p_I), 0.0),
        uninformed_coeffs=(p_pub, -(1.0 + p_pub)),
        # reverse combined-demand map; PT agents do not internalize it
        impact_M=(a_I * p_I + a_U * p_pub) / (a_U * (p_I - p_pub)),
        impact_V=d.p_Q0,
    )


def solve_no_signal(params: MarketParams, impact: bool) -> Equilibrium:
    d = derive(params)
    lam, a_I = d.lam, params.alpha_I
    if impact:
        kind = EquilibriumKind.NS_PI
        price_z = lam / (1.0 - lam * lam) / a_I
        ins_z = -lam / (1.0 + lam) / a_I
        un_z = -price_z
    else:
        kind = EquilibriumKind.NS_PT
        price_z = lam / a_I
        ins_z = un_z = -price_z
    return Equilibrium(
        kind=kind,
        params=params,
        derived=d,
        lambda_sig=None,
        p_pub=0.0,
        price_intercept=d.p_Q0,
        price_slope=price_z,
        insider_coeffs=(d.Pi_hat, ins_z),
        uninformed_coeffs=(d.Pi_hat, un_z),
        impact_M=None,
        impact_V=None,
    )


def solve(params: MarketParams, kind) -> Equilibrium:
    kind = kind if isinstance(kind, EquilibriumKind) else EquilibriumKind.parse(kind)
    if kind is EquilibriumKind.PI:
        return solve_pi(params)
    if kind is EquilibriumKind.PT:
        return solve_pt(params)
    return solve_no_signal(params, impact=kind is EquilibriumKind.NS_PI)


def _finite(name, x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(name, "must be finite")
    return arr if arr.ndim else float(arr)


def public_signal(eq: Equilibrium, g, z):
    if not eq.kind.has_signal:
        raise ParameterError("kind", f"{eq.kind.value} has no public signal")
    return _finite("g", g) + eq.lambda_sig * _finite("z", z)


def price(eq: Equilibrium, h_or_z):
    """Equilibrium price from h (PI, PT) or from z (no-signal kinds)."""
    x = _finite("h" if eq.kind.has_signal else "z", h_or_z)
    if eq.kind.has_signal:
        return eq.price_intercept + eq.price_slope * (x - eq.price_intercept)
    return eq.price_intercept + eq.price_slope * x


def insider_demand(eq: Equilibrium, g, z):
    if not eq.kind.has_signal:
        return eq.insider_coeffs[0] + eq.insider_coeffs[1] * _finite("z", z)
    p = price(eq, public_signal(eq, g, z))
    a, b, c = eq.insider_coeffs
    return a * g + b * p + c * eq.derived.p_Q0


def uninformed_demand(eq: Equilibrium, h_or_z):
    if not eq.kind.has_signal:
        return eq.uninformed_coeffs[0] + eq.uninformed_coeffs[1] * _finite("z", h_or_z)
    h = _finite("h", h_or_z)
    a, b = eq.uninformed_coeffs
    return a * h + b * price(eq, h)


def perceived_price(eq: Equilibrium, psi, psi_I0=None, z=0.0):
    """Price the insider expects after trading to psi: V_p + M_p (psi - psi_I0 + z/alpha_I)."""
    if eq.impact_M is None:
        raise ParameterError("kind", f"{eq.kind.value} has no impact map")
    Pi_hat = eq.derived.Pi_hat
    if psi_I0 is not None and psi_I0 != Pi_hat:
        raise ParameterError("psi_I0", f"only the Pareto endowment {Pi_hat} is supported")
    return eq.impact_V + eq.impact_M * (
        _finite("psi", psi) - Pi_hat + _finite("z", z) / eq.params.alpha_I
    )


def slopes(eq_pi: Equilibrium, eq_pt: Equilibrium) -> tuple[float, float, float, float]:
    """(m_g_iota, m_g, m_chi_iota, m_chi): price sensitivities to g and to combined demand."""
    if eq_pi.kind is not EquilibriumKind.PI or eq_pt.kind is not EquilibriumKind.PT:
        raise ParameterError("kind", "slopes needs a PI and a PT equilibrium")
    if eq_pi.params != eq_pt.params:
        raise ParameterError("params", "PI and PT equilibria were solved for different parameters")
    d, y, p_I = eq_pi.derived, eq_pi.y_hat, eq_pi.params.p_I
    lam, beta = d.lam, d.beta
    m_g_i = p_I * y / ((1.0 + p_I) * (1.0 + 2.0 * y))
    m_g = p_I * (beta + lam) / (1.0 - lam + (1.0 + p_I) * (beta + lam))
    return m_g_i, m_g, y / (1.0 + p_I), (lam + beta) / (1.0 - lam)


def to_shares(eq: Equilibrium, psi, who: str):
    if who == "I":
        return eq.params.alpha_I * psi
    if who == "U":
        return eq.params.alpha_U * psi
    raise ParameterError("who", f"expected 'I' or 'U', got {who!r}")
