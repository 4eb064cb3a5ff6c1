"""d-asset equilibria under proportional precisions.

The insider signal precision is p_I * P_X and the noise precision p_N * P_X^-1,
so the matrix cubic collapses to the scalar one and every coefficient is a
scalar multiple of P_X or its inverse. The PI matrices are nonetheless
assembled from the general Y-parametrised expressions so that the matrix
clearing residual is a genuine check.

Vector arguments may be a single (d,) vector or an (n, d) batch of rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .equilibria import EquilibriumKind
from .model_core import MarketParams, ParameterError, positive_root
from .welfare import CEReport, ex_ante_ratios

__all__ = [
    "AssetModel",
    "MatrixEquilibrium",
    "sym_sqrt",
    "assemble_pi",
    "solve_pi_multi",
    "solve_pt_multi",
    "solve_no_signal_multi",
    "solve_multi",
    "clearing_matrix_residual",
    "public_signal_multi",
    "price_multi",
    "insider_demand_multi",
    "uninformed_demand_multi",
    "ce_ex_ante_multi",
    "ce_interim_multi",
]

SYM_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def sym_sqrt(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root and its inverse via eigendecomposition."""
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    if np.any(w <= 0.0):
        raise ParameterError("prec_X", "matrix is not positive definite")
    s = np.sqrt(w)
    return (V * s) @ V.T, (V / s) @ V.T


def _check_spd(name: str, A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(name, f"must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ParameterError(name, "must be finite")
    if np.max(np.abs(A - A.T)) > SYM_TOL * max(1.0, np.max(np.abs(A))):
        raise ParameterError(name, "must be symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ParameterError(name, "must be positive definite") from None
    return A


@dataclass(frozen=True, eq=False)
class AssetModel:
    mu_X: np.ndarray
    prec_X: np.ndarray
    p_I: float
    p_N: float
    alpha_I: float
    alpha_U: float
    Pi: np.ndarray

    def __post_init__(self):
        # reuse the scalar validation for the scalars
        MarketParams(self.alpha_I, self.alpha_U, self.p_I, self.p_N, 0.0)
        P = _check_spd("prec_X", self.prec_X)
        d = P.shape[0]
        mu = np.asarray(self.mu_X, dtype=float).reshape(-1)
        Pi = np.asarray(self.Pi, dtype=float).reshape(-1)
        if mu.shape != (d,):
            raise ParameterError("mu_X", f"expected length {d}, got {mu.shape[0]}")
        if Pi.shape != (d,):
            raise ParameterError("Pi", f"expected length {d}, got {Pi.shape[0]}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(Pi))):
            raise ParameterError("mu_X", "mu_X and Pi must be finite")
        object.__setattr__(self, "prec_X", _frozen(0.5 * (P + P.T)))
        object.__setattr__(self, "mu_X", _frozen(mu))
        object.__setattr__(self, "Pi", _frozen(Pi))
        for f in ("p_I", "p_N", "alpha_I", "alpha_U"):
            object.__setattr__(self, f, float(getattr(self, f)))

    @property
    def d(self) -> int:
        return self.prec_X.shape[0]

    @property
    def cov_X(self) -> np.ndarray:
        return np.linalg.inv(self.prec_X)

    @property
    def Pi_hat(self) -> np.ndarray:
        return self.Pi / (self.alpha_I + self.alpha_U)

    @property
    def p_Q0(self) -> np.ndarray:
        return self.mu_X - np.linalg.solve(self.prec_X, self.Pi_hat)

    @property
    def kappa(self) -> float:
        return self.alpha_I**2 * self.p_N

    @property
    def lam(self) -> float:
        return self.alpha_I / (self.alpha_I + self.alpha_U)

    @property
    def P_I(self) -> np.ndarray:
        return self.p_I * self.prec_X

    @property
    def P_N(self) -> np.ndarray:
        return self.p_N * self.cov_X

    @classmethod
    def from_scalar(cls, params: MarketParams, mu_X: float = 0.0, prec_X: float = 1.0) -> "AssetModel":
        return cls(
            mu_X=[mu_X],
            prec_X=[[prec_X]],
            p_I=params.p_I,
            p_N=params.p_N,
            alpha_I=params.alpha_I,
            alpha_U=params.alpha_U,
            Pi=[params.Pi],
        )

    def scalar_params(self) -> MarketParams:
        if self.d != 1:
            raise ParameterError("d", "scalar view needs d = 1")
        return MarketParams(self.alpha_I, self.alpha_U, self.p_I, self.p_N, float(self.Pi[0]))

    def rotated(self, Q: np.ndarray) -> "AssetModel":
        Q = np.asarray(Q, dtype=float)
        return AssetModel(
            mu_X=Q @ self.mu_X,
            prec_X=Q @ self.prec_X @ Q.T,
            p_I=self.p_I,
            p_N=self.p_N,
            alpha_I=self.alpha_I,
            alpha_U=self.alpha_U,
            Pi=Q @ self.Pi,
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "mu_X": self.mu_X.tolist(),
            "prec_X": self.prec_X.tolist(),
            "p_I": self.p_I,
            "p_N": self.p_N,
            "alpha_I": self.alpha_I,
            "alpha_U": self.alpha_U,
            "Pi": self.Pi.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AssetModel":
        missing = [k for k in ("mu_X", "prec_X", "p_I", "p_N", "alpha_I", "alpha_U", "Pi") if k not in doc]
        if missing:
            raise ParameterError(missing[0], "missing from model document")
        model = cls(
            mu_X=doc["mu_X"],
            prec_X=doc["prec_X"],
            p_I=doc["p_I"],
            p_N=doc["p_N"],
            alpha_I=doc["alpha_I"],
            alpha_U=doc["alpha_U"],
            Pi=doc["Pi"],
        )
        if "d" in doc and int(doc["d"]) != model.d:
            raise ParameterError("d", f"declared {doc['d']} but prec_X is {model.d}x{model.d}")
        return model


@dataclass(frozen=True, eq=False)
class MatrixEquilibrium:
    """Affine d-asset equilibrium, stored in de-meaned form around p_Q0.

    PI/PT:  p = p_Q0 + price_coef (h - p_Q0)
            psi_I = Pi_hat + insider_g (g - p_Q0) + insider_p (p - p_Q0)
            psi_U = Pi_hat + uninformed_h (h - p_Q0) + uninformed_p (p - p_Q0)
    NS:     p = p_Q0 + price_coef z, psi_i = Pi_hat + <i>_z z
    """

    kind: EquilibriumKind
    model: AssetModel
    p_Q0: np.ndarray
    Pi_hat: np.ndarray
    price_coef: np.ndarray
    y_hat: float | None = None
    Lambda: np.ndarray | None = None
    M_p: np.ndarray | None = None
    Mcal: np.ndarray | None = None
    P_pub: np.ndarray | None = None
    insider_g: np.ndarray | None = None
    insider_p: np.ndarray | None = None
    uninformed_h: np.ndarray | None = None
    uninformed_p: np.ndarray | None = None
    insider_z: np.ndarray | None = None
    uninformed_z: np.ndarray | None = None
    P_I: np.ndarray | None = None
    P_N: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "y_hat": self.y_hat}
        for f in (
            "p_Q0", "Pi_hat", "price_coef", "Lambda", "M_p", "Mcal", "P_pub",
            "insider_g", "insider_p", "uninformed_h", "uninformed_p", "insider_z", "uninformed_z",
        ):
            v = getattr(self, f)
            out[f] = None if v is None else np.asarray(v).tolist()
        out["model"] = self.model.to_dict()
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def assemble_pi(model: AssetModel, y: float) -> MatrixEquilibrium:
    """PI coefficient matrices for the guess Y = y * 1_d (equilibrium only at the cubic root)."""
    d = model.d
    P, P_I, P_N = model.prec_X, model.P_I, model.P_N
    eye = np.eye(d)
    S, Si = sym_sqrt(P_I + P)
    Y = y * eye
    M_p = Si @ Y @ Si
    Mcal = S @ np.linalg.solve(eye + Y + Y.T, Si @ P_I)
    Lam = np.linalg.solve(P_I, S @ (eye + Y.T) @ Si) / model.alpha_I
    P_pub = np.linalg.inv(np.linalg.inv(P_I) + Lam @ np.linalg.solve(P_N, Lam.T))
    P_pub = 0.5 * (P_pub + P_pub.T)
    return MatrixEquilibrium(
        kind=EquilibriumKind.PI,
        model=model,
        p_Q0=model.p_Q0,
        Pi_hat=model.Pi_hat,
        price_coef=M_p @ Mcal,
        y_hat=y,
        Lambda=Lam,
        M_p=M_p,
        Mcal=Mcal,
        P_pub=P_pub,
        insider_g=np.linalg.inv(Lam) / model.alpha_I,
        insider_p=-S @ np.linalg.solve(eye + Y.T, S),
        uninformed_h=P_pub,
        uninformed_p=-(P_pub + P),
        P_I=P_I,
        P_N=P_N,
    )


def solve_pi_multi(model: AssetModel) -> MatrixEquilibrium:
    if model.p_I <= 0.0:
        raise ParameterError("p_I", "must be > 0 for the PI equilibrium; use the no-signal kind")
    y = positive_root(model.kappa, model.lam, model.p_I).y_hat
    return assemble_pi(model, y)


def clearing_matrix_residual(eq: MatrixEquilibrium, model: AssetModel | None = None) -> float:
    if eq.kind is not EquilibriumKind.PI:
        raise ParameterError("kind", "the matrix clearing equation is defined for PI")
    model = eq.model if model is None else model
    d = model.d
    try:
        inv_M = np.linalg.inv(eq.Mcal)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("impact response matrix is singular") from exc
    R = (model.alpha_I / model.alpha_U) * np.eye(d) + eq.P_pub @ inv_M - (eq.P_pub + model.prec_X) @ eq.M_p
    return float(np.linalg.norm(R, "fro"))


def solve_pt_multi(model: AssetModel, P_I=None, P_N=None) -> MatrixEquilibrium:
    """PT equilibrium; P_I and P_N default to the proportional precisions."""
    if model.p_I <= 0.0 and P_I is None:
        raise ParameterError("p_I", "must be > 0 for the PT equilibrium; use the no-signal kind")
    P = model.prec_X
    P_I = model.P_I if P_I is None else _check_spd("P_I", P_I)
    P_N = model.P_N if P_N is None else _check_spd("P_N", P_N)
    if P_I.shape != P.shape or P_N.shape != P.shape:
        raise ParameterError("P_I", "precision matrices must match the asset dimension")
    a_I, a_U = model.alpha_I, model.alpha_U
    inv_PI = np.linalg.inv(P_I)
    P_pub = np.linalg.inv(inv_PI + inv_PI @ np.linalg.solve(P_N, inv_PI) / a_I**2)
    P_pub = 0.5 * (P_pub + P_pub.T)
    A = np.linalg.solve(a_I * (P_I + P) + a_U * (P_pub + P), a_I * P_I + a_U * P_pub)
    # reverse combined-demand map: p - p_Q0 = M_p (psi_I - Pi_hat + z / alpha_I)
    M_p = np.linalg.inv((a_U / a_I) * ((P_pub + P) - P_pub @ np.linalg.inv(A)))
    return MatrixEquilibrium(
        kind=EquilibriumKind.PT,
        model=model,
        p_Q0=model.p_Q0,
        Pi_hat=model.Pi_hat,
        price_coef=A,
        Lambda=inv_PI / a_I,
        M_p=M_p,
        P_pub=P_pub,
        insider_g=P_I,
        insider_p=-(P_I + P),
        uninformed_h=P_pub,
        uninformed_p=-(P_pub + P),
        P_I=P_I,
        P_N=P_N,
    )


def solve_no_signal_multi(model: AssetModel, impact: bool) -> MatrixEquilibrium:
    lam, a_I, d = model.lam, model.alpha_I, model.d
    if impact:
        c_p, c_I, c_U = lam / (1.0 - lam * lam), -lam / (1.0 + lam), -lam / (1.0 - lam * lam)
        kind = EquilibriumKind.NS_PI
    else:
        c_p, c_I, c_U = lam, -lam, -lam
        kind = EquilibriumKind.NS_PT
    return MatrixEquilibrium(
        kind=kind,
        model=model,
        p_Q0=model.p_Q0,
        Pi_hat=model.Pi_hat,
        price_coef=c_p * model.cov_X / a_I,
        insider_z=c_I * np.eye(d) / a_I,
        uninformed_z=c_U * np.eye(d) / a_I,
    )


def solve_multi(model: AssetModel, kind) -> MatrixEquilibrium:
    kind = kind if isinstance(kind, EquilibriumKind) else EquilibriumKind.parse(kind)
    if kind is EquilibriumKind.PI:
        return solve_pi_multi(model)
    if kind is EquilibriumKind.PT:
        return solve_pt_multi(model)
    return solve_no_signal_multi(model, impact=kind is EquilibriumKind.NS_PI)


def _rows(x, d, name):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d or x.ndim > 2:
        raise ParameterError(name, f"expected trailing dimension {d}, got shape {x.shape}")
    return x


def _apply(A, x):
    return x @ A.T


def public_signal_multi(eq: MatrixEquilibrium, g, z):
    if not eq.kind.has_signal:
        raise ParameterError("kind", f"{eq.kind.value} has no public signal")
    d = eq.model.d
    return _rows(g, d, "g") + _apply(eq.Lambda, _rows(z, d, "z"))


def price_multi(eq: MatrixEquilibrium, h_or_z):
    x = _rows(h_or_z, eq.model.d, "h")
    if eq.kind.has_signal:
        return eq.p_Q0 + _apply(eq.price_coef, x - eq.p_Q0)
    return eq.p_Q0 + _apply(eq.price_coef, x)


def insider_demand_multi(eq: MatrixEquilibrium, g, z):
    if not eq.kind.has_signal:
        return eq.Pi_hat + _apply(eq.insider_z, _rows(z, eq.model.d, "z"))
    p = price_multi(eq, public_signal_multi(eq, g, z))
    return eq.Pi_hat + _apply(eq.insider_g, np.asarray(g) - eq.p_Q0) + _apply(eq.insider_p, p - eq.p_Q0)


def uninformed_demand_multi(eq: MatrixEquilibrium, h_or_z):
    x = _rows(h_or_z, eq.model.d, "h")
    if not eq.kind.has_signal:
        return eq.Pi_hat + _apply(eq.uninformed_z, x)
    p = price_multi(eq, x)
    return eq.Pi_hat + _apply(eq.uninformed_h, x - eq.p_Q0) + _apply(eq.uninformed_p, p - eq.p_Q0)


def _nsn(model: AssetModel, alpha: float) -> float:
    Ph = model.Pi_hat
    return alpha * (Ph @ model.mu_X - 0.5 * Ph @ np.linalg.solve(model.prec_X, Ph))


def ce_ex_ante_multi(model: AssetModel) -> CEReport:
    if model.p_I <= 0.0:
        raise ParameterError("p_I", "ex-ante CEs need p_I > 0")
    y = positive_root(model.kappa, model.lam, model.p_I).y_hat
    r = ex_ante_ratios(model.kappa, model.lam, model.p_I, y)
    a_I, a_U, d = model.alpha_I, model.alpha_U, model.d
    nI, nU = _nsn(model, a_I), _nsn(model, a_U)
    return CEReport(
        ce_nsn_I=nI,
        ce_nsn_U=nU,
        ce_I_pi=nI + 0.5 * a_I * d * math.log1p(r[0]),
        ce_U_pi=nU + 0.5 * a_U * d * math.log1p(r[1]),
        ce_I_pt=nI + 0.5 * a_I * d * math.log1p(r[2]),
        ce_U_pt=nU + 0.5 * a_U * d * math.log1p(r[3]),
        diff_I=0.5 * a_I * d * math.log1p((r[0] - r[2]) / (1.0 + r[2])),
        diff_U=0.5 * a_U * d * math.log1p((r[1] - r[3]) / (1.0 + r[3])),
        d=d,
    )


def ce_interim_multi(model: AssetModel, kind, g, z):
    """Interim CEs for the insider at (g, z) and the uninformed trader at the implied h."""
    kind = kind if isinstance(kind, EquilibriumKind) else EquilibriumKind.parse(kind)
    if not kind.has_signal:
        raise ParameterError("kind", "no-signal kinds have no interim formulas here")
    if model.p_I <= 0.0:
        raise ParameterError("p_I", "interim CEs need p_I > 0")
    d = model.d
    g = _rows(g, d, "g")
    z = _rows(z, d, "z")
    a_I, a_U, p_I = model.alpha_I, model.alpha_U, model.p_I
    lam, kappa = model.lam, model.kappa
    lam_U, R, beta = 1.0 - lam, 1.0 / (1.0 + p_I), kappa * p_I
    P, mu, Ph, p_Q0 = model.prec_X, model.mu_X, model.Pi_hat, model.p_Q0
    S, Si = sym_sqrt(P)
    Pi_cov_Pi = Ph @ np.linalg.solve(P, Ph)

    def sq(v):
        return np.sum(v * v, axis=-1)

    base_I = a_I * ((R * mu + (1.0 - R) * g) @ Ph - 0.5 * R * Pi_cov_Pi)
    g0 = _apply(S, g - p_Q0)
    zs = _apply(Si, z) / a_I
    if kind is EquilibriumKind.PI:
        y = positive_root(kappa, lam, p_I).y_hat
        h = g + (1.0 + y) / (a_I * p_I) * _apply(np.linalg.inv(P), z)
        p_U = beta * p_I / ((1.0 + y) ** 2 + beta)
        corr_I = a_I * R / (2.0 * (1.0 + 2.0 * y)) * sq((1.0 - R) / R * g0 - y * zs)
        k_U = (
            a_U * lam**2 * (1.0 - R) ** 2 * (beta + (1.0 + y) ** 2)
            / (2.0 * lam_U**2 * R * (beta + R * (1.0 + y) ** 2) * (1.0 + 2.0 * y) ** 2)
        )
    else:
        h = g + _apply(np.linalg.inv(model.P_I), z) / a_I
        p_U = beta * p_I / (1.0 + beta)
        D = lam + beta + R * lam_U
        corr_I = a_I * R / (2.0 * D * D) * sq((1.0 - R) * lam_U * g0 - (lam + beta) * zs)
        k_U = a_U * lam**2 * (1.0 - R) ** 2 * R * (1.0 + beta) / (2.0 * D * D * (R + beta))
    base_U = a_U / (1.0 + p_U) * ((mu + p_U * h) @ Ph - 0.5 * Pi_cov_Pi)
    ce_I = base_I + corr_I
    ce_U = base_U + k_U * sq(_apply(S, h - p_Q0))
    if np.ndim(ce_I) == 0:
        return float(ce_I), float(ce_U)
    return ce_I, ce_U
