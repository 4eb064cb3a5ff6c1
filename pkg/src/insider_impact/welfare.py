"""Certainty equivalents and the comparisons built on them.

CE values are in wealth units. With the Pareto endowment every ex-ante CE is
its no-information baseline plus ``(alpha_i / 2) * log(1 + ratio)`` where the
ratio depends only on (kappa, lambda, p_I) and the cubic root.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .equilibria import EquilibriumKind
from .model_core import MarketParams, ParameterError, derive, positive_root, solve_cubic

__all__ = [
    "CEReport",
    "RegionPoint",
    "SweepRow",
    "ShiftReport",
    "ex_ante_ratios",
    "ce_nsn",
    "ce_ex_ante",
    "ce_interim",
    "phi_maps",
    "precision_sweep",
    "classify_region",
    "region_sign_fast",
    "asymptotic_limit",
    "asymptotic_limit_derived",
    "asymptotic_check",
    "expected_demand_shift",
    "no_signal_interim_limits",
    "sweep_csv",
    "region_csv",
    "PI_BETTER",
    "PT_BETTER",
    "TIE",
]

PI_BETTER = "PI_better"
PT_BETTER = "PT_better"
TIE = "tie_within_tol"
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CEReport:
    ce_nsn_I: float
    ce_nsn_U: float
    ce_I_pi: float
    ce_U_pi: float
    ce_I_pt: float
    ce_U_pt: float
    diff_I: float
    diff_U: float
    d: int = 1

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class RegionPoint:
    alpha_U: float
    p_I: float
    sign: str
    sign_U: str = PI_BETTER


@dataclass(frozen=True)
class SweepRow:
    p_I: float
    ce_I_pi: float
    ce_I_pt: float


@dataclass(frozen=True)
class ShiftReport:
    pt_shift: float
    pi_shift: float
    pi_minus_pt: float
    price_shift_pt: float
    price_shift_pi: float
    ns_price_gap: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ex_ante_ratios(kappa: float, lam: float, p_I: float, y: float) -> tuple[float, float, float, float]:
    """Log arguments minus one for (I PI, U PI, I PT, U PT)."""
    kp = kappa * p_I
    q = 1.0 + 2.0 * y
    den_pt = 1.0 + lam * p_I + kp * (1.0 + p_I)
    r_I_pi = (kp * (1.0 + p_I) + y * y) / (kappa * (1.0 + p_I) * q)
    r_U_pi = lam * lam * (kp + (1.0 + y) ** 2) / ((1.0 - lam) ** 2 * kappa * q * q)
    r_I_pt = ((1.0 - lam) ** 2 * kp + (1.0 + p_I) * (lam + kp) ** 2) / (kappa * den_pt**2)
    r_U_pt = lam * lam * (1.0 + kp) / (kappa * den_pt**2)
    return r_I_pi, r_U_pi, r_I_pt, r_U_pt


def ce_nsn(alpha: float, Pi_hat: float, mu_X: float = 0.0, prec_X: float = 1.0) -> float:
    return alpha * (Pi_hat * mu_X - 0.5 * Pi_hat * Pi_hat / prec_X)


def ce_ex_ante(params: MarketParams, mu_X: float = 0.0) -> CEReport:
    d = derive(params)
    if params.p_I <= 0.0:
        raise ParameterError("p_I", "ex-ante CEs need p_I > 0")
    y = solve_cubic(d).y_hat
    a_I, a_U = params.alpha_I, params.alpha_U
    r = ex_ante_ratios(d.kappa, d.lam, params.p_I, y)
    nI = ce_nsn(a_I, d.Pi_hat, mu_X)
    nU = ce_nsn(a_U, d.Pi_hat, mu_X)
    # log1p differences keep the comparison accurate when the ratios nearly agree
    gap_I = 0.5 * a_I * math.log1p((r[0] - r[2]) / (1.0 + r[2]))
    gap_U = 0.5 * a_U * math.log1p((r[1] - r[3]) / (1.0 + r[3]))
    return CEReport(
        ce_nsn_I=nI,
        ce_nsn_U=nU,
        ce_I_pi=nI + 0.5 * a_I * math.log1p(r[0]),
        ce_U_pi=nU + 0.5 * a_U * math.log1p(r[1]),
        ce_I_pt=nI + 0.5 * a_I * math.log1p(r[2]),
        ce_U_pt=nU + 0.5 * a_U * math.log1p(r[3]),
        diff_I=gap_I,
        diff_U=gap_U,
    )


def ce_interim(params: MarketParams, kind, g, z, mu_X: float = 0.0):
    """Interim CEs (insider given g, z; uninformed given the public signal).

    Scalar model with unit payoff precision. Accepts numpy arrays for g, z.
    """
    kind = kind if isinstance(kind, EquilibriumKind) else EquilibriumKind.parse(kind)
    if not kind.has_signal:
        raise ParameterError("kind", "use no_signal_interim_limits for the no-signal kinds")
    if params.p_I <= 0.0:
        raise ParameterError("p_I", "interim CEs need p_I > 0")
    d = derive(params)
    a_I, a_U, p_I = params.alpha_I, params.alpha_U, params.p_I
    lam, lam_U, R, beta, Ph = d.lam, d.lambda_U, d.R, d.beta, d.Pi_hat
    p_Q0 = mu_X - Ph
    g = np.asarray(g, dtype=float)
    z = np.asarray(z, dtype=float)
    g0 = g - p_Q0
    base_I = a_I * (Ph * (R * mu_X + (1.0 - R) * g) - 0.5 * R * Ph * Ph)
    if kind is EquilibriumKind.PI:
        y = solve_cubic(d).y_hat
        h = g + (1.0 + y) / (a_I * p_I) * z
        p_U = beta * p_I / ((1.0 + y) ** 2 + beta)
        corr_I = a_I * R / (2.0 * (1.0 + 2.0 * y)) * ((1.0 - R) / R * g0 - y * z / a_I) ** 2
        k_U = (
            a_U * lam**2 * (1.0 - R) ** 2 * (beta + (1.0 + y) ** 2)
            / (2.0 * lam_U**2 * R * (beta + R * (1.0 + y) ** 2) * (1.0 + 2.0 * y) ** 2)
        )
    else:
        h = g + z / (a_I * p_I)
        p_U = beta * p_I / (1.0 + beta)
        D = lam + beta + R * lam_U
        corr_I = a_I * R / (2.0 * D * D) * ((1.0 - R) * lam_U * g0 - (lam + beta) * z / a_I) ** 2
        k_U = a_U * lam**2 * (1.0 - R) ** 2 * R * (1.0 + beta) / (2.0 * D * D * (R + beta))
    base_U = a_U / (1.0 + p_U) * (Ph * (mu_X + p_U * h) - 0.5 * Ph * Ph)
    ce_I = base_I + corr_I
    ce_U = base_U + k_U * (h - p_Q0) ** 2
    if ce_I.ndim == 0:
        return float(ce_I), float(ce_U)
    return ce_I, ce_U


def phi_maps(p_I: float, kappa: float, lam: float) -> tuple[float, float]:
    """(phi_iota, phi): the insider's PI and PT log arguments minus one."""
    y = positive_root(kappa, lam, p_I).y_hat
    r = ex_ante_ratios(kappa, lam, p_I, y)
    return r[0], r[2]


def _check_grid(name, grid, increasing=True):
    arr = np.asarray(grid, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ParameterError(name, "must be a non-empty 1-d grid")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ParameterError(name, "entries must be finite and > 0")
    if increasing and np.any(np.diff(arr) <= 0.0):
        raise ParameterError(name, "must be strictly increasing")
    return arr


def precision_sweep(params_base: MarketParams, p_I_grid, mu_X: float = 0.0) -> list[SweepRow]:
    grid = _check_grid("p_I_grid", p_I_grid)
    rows = []
    for p in grid:
        rep = ce_ex_ante(
            MarketParams(params_base.alpha_I, params_base.alpha_U, float(p), params_base.p_N, params_base.Pi),
            mu_X,
        )
        rows.append(SweepRow(float(p), rep.ce_I_pi, rep.ce_I_pt))
    return rows


def region_sign_fast(kappa: float, lam: float, p_I: float, y: float) -> tuple[int, int]:
    """Signs of (CE_I_pi - CE_I_pt, CE_U_pi - CE_U_pt) from the cleared-denominator inequalities."""
    kp = kappa * p_I
    den = (1.0 + lam * p_I + kp * (1.0 + p_I)) ** 2
    q = 1.0 + 2.0 * y
    lhs_I = (kp * (1.0 + p_I) + y * y) / ((1.0 + p_I) * q)
    rhs_I = ((1.0 - lam) ** 2 * kp + (1.0 + p_I) * (lam + kp) ** 2) / den
    lhs_U = (kp + (1.0 + y) ** 2) / ((1.0 - lam) ** 2 * q * q)
    rhs_U = (1.0 + kp) / den

    def sgn(a, b):
        if abs(a - b) <= TIE_RTOL * (abs(a) + abs(b)):
            return 0
        return 1 if a > b else -1

    return sgn(lhs_I, rhs_I), sgn(lhs_U, rhs_U)


def _label(diff: float, scale: float) -> str:
    if abs(diff) <= TIE_RTOL * (1.0 + abs(scale)):
        return TIE
    return PI_BETTER if diff > 0.0 else PT_BETTER


def classify_region(alpha_I: float, p_N: float, alpha_U_grid, p_I_grid, Pi: float = 0.0) -> list[RegionPoint]:
    """Sign of CE_I_pi - CE_I_pt on the grid, alpha_U outer, p_I inner."""
    a_grid = _check_grid("alpha_U_grid", alpha_U_grid)
    p_grid = _check_grid("p_I_grid", p_I_grid)
    out = []
    for a_U in a_grid:
        for p in p_grid:
            rep = ce_ex_ante(MarketParams(alpha_I, float(a_U), float(p), p_N, Pi))
            out.append(
                RegionPoint(
                    float(a_U),
                    float(p),
                    _label(rep.diff_I, rep.ce_I_pt),
                    _label(rep.diff_U, rep.ce_U_pt),
                )
            )
    return out


def asymptotic_limit(alpha_U: float, p_I: float, p_N: float, d: int = 1) -> float:
    """Limit of (CE_I_pi - CE_I_pt) / alpha_I**3 as alpha_I -> 0."""
    s = alpha_U * alpha_U * p_I * p_N
    if not math.isfinite(s) or s > 1e150:
        raise OverflowError(f"alpha_U={alpha_U} too large for the asymptotic formula")
    return 0.5 * d * (1.0 + p_I) ** 2 * (1.0 + p_I - s) / (alpha_U**2 * (s + 1.0 + p_I))


def asymptotic_limit_derived(alpha_U: float, p_I: float, p_N: float, d: int = 1) -> float:
    """Same limit re-derived from the ex-ante CE formulas; differs from the display above."""
    s = alpha_U * alpha_U * p_I * p_N
    if not math.isfinite(s) or s > 1e150:
        raise OverflowError(f"alpha_U={alpha_U} too large for the asymptotic formula")
    return 0.5 * d * (1.0 + p_I) * (1.0 + p_I - s) / (alpha_U**2 * (alpha_U**2 * p_N + 1.0))


ASYMPTOTIC_ALPHAS = (1e-2, 10.0**-2.5, 1e-3)


def asymptotic_check(alpha_U: float, p_I: float, p_N: float, alphas=ASYMPTOTIC_ALPHAS, closed_form=None):
    """Returns (numeric_limit, closed_form, rel_err).

    The scaled difference f(a) = diff_I(a) / a**3 is treated as L + c1 a + c2 a^2
    and extrapolated to a = 0 through the three sample points.
    """
    for name, v in (("alpha_U", alpha_U), ("p_I", p_I), ("p_N", p_N)):
        if not (v > 0.0 and math.isfinite(v)):
            raise ParameterError(name, f"must be finite and > 0, got {v}")
    closed = (closed_form or asymptotic_limit)(alpha_U, p_I, p_N)
    a = np.asarray(alphas, dtype=float)
    f = np.array([ce_ex_ante(MarketParams(x, alpha_U, p_I, p_N)).diff_I / x**3 for x in a])
    # Neville extrapolation to a = 0
    t = f.copy()
    for k in range(1, len(a)):
        for i in range(len(a) - k):
            t[i] = (a[i + k] * t[i] - a[i] * t[i + 1]) / (a[i + k] - a[i])
    numeric = float(t[0])
    rel = abs(numeric - closed) / abs(closed) if closed != 0.0 else abs(numeric)
    return numeric, closed, rel


def expected_demand_shift(params: MarketParams) -> ShiftReport:
    """Ex-ante demand and price changes caused by the signal and by internalization."""
    if params.p_I <= 0.0:
        raise ParameterError("p_I", "needs p_I > 0")
    d = derive(params)
    y = solve_cubic(d).y_hat
    p_I, lam, beta, Ph = params.p_I, d.lam, d.beta, d.Pi_hat
    p_U = beta * p_I / (1.0 + beta)
    den = 1.0 + lam * p_I + (1.0 - lam) * p_U
    pt_shift = (1.0 - lam) * (p_I - p_U) / den * Ph
    pi_shift = p_I / (1.0 + 2.0 * y) * Ph
    pi_minus_pt = p_I * (1.0 / (1.0 + 2.0 * y) - (1.0 - lam) / (1.0 + lam * p_I + beta * (1.0 + p_I))) * Ph
    return ShiftReport(
        pt_shift=pt_shift,
        pi_shift=pi_shift,
        pi_minus_pt=pi_minus_pt,
        price_shift_pt=(lam * p_I + (1.0 - lam) * p_U) / den * Ph,
        price_shift_pi=p_I * y / ((1.0 + p_I) * (1.0 + 2.0 * y)) * Ph,
        ns_price_gap=lam**3 / (1.0 - lam * lam),
    )


def no_signal_interim_limits(params: MarketParams, z, mu_X: float = 0.0) -> dict:
    """p_I -> 0 limits of the four interim CEs. The uninformed limits use the uninformed baseline."""
    d = derive(params)
    a_I, a_U, lam = params.alpha_I, params.alpha_U, d.lam
    z = np.asarray(z, dtype=float)
    nI = ce_nsn(a_I, d.Pi_hat, mu_X)
    nU = ce_nsn(a_U, d.Pi_hat, mu_X)
    out = {
        "I_PT": nI + lam**2 * z * z / (2.0 * a_I),
        "I_PI": nI + lam**2 * z * z / (2.0 * (1.0 - lam**2) * a_I),
        "U_PT": nU + a_U * lam**2 * z * z / (2.0 * a_I**2),
        "U_PI": nU + a_U * lam**2 * z * z / (2.0 * a_I**2 * (1.0 - lam**2) ** 2),
    }
    if z.ndim == 0:
        out = {k: float(v) for k, v in out.items()}
    return out


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _write_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def sweep_csv(rows: list[SweepRow]) -> str:
    return _write_csv(
        ["p_I", "ce_I_pi", "ce_I_pt"],
        [[_fmt(r.p_I), _fmt(r.ce_I_pi), _fmt(r.ce_I_pt)] for r in rows],
    )


def region_csv(points: list[RegionPoint]) -> str:
    return _write_csv(
        ["alpha_U", "p_I", "sign"],
        [[_fmt(r.alpha_U), _fmt(r.p_I), r.sign] for r in points],
    )
