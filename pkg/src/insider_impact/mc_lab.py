"""Monte Carlo checks of the closed forms.

Random numbers come from Philox streams spawned off one SeedSequence, one
stream per shard, so results depend only on (seed, n_paths, shard_size).
Exponential-utility averages are accumulated shard by shard with a running
log-shift, which keeps exp(-W) representable for large wealth values.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import equilibria as eqm
from . import multiasset as ma
from .equilibria import Equilibrium, EquilibriumKind
from .model_core import MarketParams, ParameterError
from .welfare import ce_ex_ante, ce_interim

__all__ = [
    "SimConfig",
    "McReport",
    "Draws",
    "LogMeanExp",
    "sample_market",
    "sample_conditional",
    "verify_clearing",
    "verify_optimality",
    "estimate_ce",
    "ce_target",
    "estimate_public_precision",
    "run_suite",
    "DEFAULT_EPSILONS",
]

DEFAULT_EPSILONS = (-1e-1, -1e-2, 1e-2, 1e-1)
SHARD_SIZE = 250_000


@dataclasses.dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int
    model: MarketParams | ma.AssetModel
    antithetic: bool = False
    shard_size: int = SHARD_SIZE
    workers: int = 1

    def __post_init__(self):
        if int(self.n_paths) < 2:
            raise ParameterError("n_paths", f"must be >= 2, got {self.n_paths}")
        if self.antithetic and int(self.n_paths) % 2:
            raise ParameterError("n_paths", "must be even with antithetic draws")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed", "must be an unsigned 64-bit integer")
        if int(self.shard_size) < 2 or (self.antithetic and int(self.shard_size) % 2):
            raise ParameterError("shard_size", "must be >= 2 (and even with antithetic draws)")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def asset_model(self) -> ma.AssetModel:
        if isinstance(self.model, ma.AssetModel):
            return self.model
        return ma.AssetModel.from_scalar(self.model)

    @property
    def scalar(self) -> bool:
        return isinstance(self.model, MarketParams)

    def shard_sizes(self) -> list[int]:
        full, rest = divmod(self.n_paths, self.shard_size)
        sizes = [self.shard_size] * full
        if rest:
            sizes.append(rest)
        return sizes

    def reseeded(self, offset: int = 1) -> "SimConfig":
        return SimConfig(
            self.n_paths, (self.seed + offset) % 2**64, self.model, self.antithetic, self.shard_size, self.workers
        )


@dataclasses.dataclass(frozen=True)
class McReport:
    estimate: float
    std_error: float
    n_paths: int
    target: float
    z_score: float
    name: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclasses.dataclass(frozen=True)
class Draws:
    X: np.ndarray
    G: np.ndarray
    Z: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclasses.dataclass
class LogMeanExp:
    """Streaming mean and variance of exp(a), stored relative to exp(shift)."""

    n: int = 0
    shift: float = -math.inf
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, a: np.ndarray) -> "LogMeanExp":
        a = np.asarray(a, dtype=float)
        c = float(np.max(a))
        e = np.exp(a - c)
        mu = float(np.mean(e))
        return cls(a.size, c, mu, float(np.sum((e - mu) ** 2)))

    def merge(self, other: "LogMeanExp") -> "LogMeanExp":
        if other.n == 0:
            return self
        if self.n == 0:
            return LogMeanExp(other.n, other.shift, other.mean, other.m2)
        c = max(self.shift, other.shift)
        s1, s2 = math.exp(self.shift - c), math.exp(other.shift - c)
        m1, m2 = self.mean * s1, other.mean * s2
        q1, q2 = self.m2 * s1 * s1, other.m2 * s2 * s2
        n = self.n + other.n
        delta = m2 - m1
        mean = m1 + delta * other.n / n
        return LogMeanExp(n, c, mean, q1 + q2 + delta * delta * self.n * other.n / n)

    def log_mean(self) -> float:
        return math.log(self.mean) + self.shift

    def rel_se(self) -> float:
        """Standard error of log(mean) by the delta method."""
        if self.n < 2:
            return math.inf
        return math.sqrt(self.m2 / (self.n - 1) / self.n) / self.mean


def _streams(config: SimConfig):
    children = np.random.SeedSequence(config.seed).spawn(len(config.shard_sizes()))
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def _normals(rng, m: int, shape, antithetic: bool) -> np.ndarray:
    if antithetic:
        half = rng.standard_normal((m // 2,) + shape)
        # pairs sit in adjacent rows so pair means are a reshape away
        return np.stack([half, -half], axis=1).reshape((m,) + shape)
    return rng.standard_normal((m,) + shape)


def _shard_draws(model: ma.AssetModel, rng, m: int, antithetic: bool) -> Draws:
    d = model.d
    eps = _normals(rng, m, (3, d), antithetic)
    root_prec, root_cov = ma.sym_sqrt(model.prec_X)
    X = model.mu_X + eps[:, 0] @ root_cov.T
    Z_I = eps[:, 1] @ root_cov.T / math.sqrt(model.p_I) if model.p_I > 0 else np.zeros_like(X)
    Z_N = eps[:, 2] @ root_prec.T / math.sqrt(model.p_N)
    return Draws(X, X + Z_I, Z_N)


def _squeeze(draws: Draws, scalar: bool) -> Draws:
    if not scalar:
        return draws
    return Draws(draws.X[:, 0], draws.G[:, 0], draws.Z[:, 0])


def _map_shards(config: SimConfig, fn):
    jobs = list(zip(_streams(config), config.shard_sizes()))
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(rng, m) for rng, m in jobs]


def sample_market(config: SimConfig) -> Draws:
    """Draws of (X, G, Z_N); 1-d arrays for scalar params, (n, d) for an AssetModel."""
    model = config.asset_model
    parts = _map_shards(config, lambda rng, m: _shard_draws(model, rng, m, config.antithetic))
    out = Draws(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("X", "G", "Z")))
    return _squeeze(out, config.scalar)


def sample_conditional(config: SimConfig, mean, cov) -> np.ndarray:
    """Draws of a Gaussian vector with the given mean and covariance."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    _, root = ma.sym_sqrt(np.linalg.inv(cov))
    parts = _map_shards(
        config, lambda rng, m: mean + _normals(rng, m, mean.shape, config.antithetic) @ root.T
    )
    out = np.concatenate(parts)
    return out[:, 0] if config.scalar else out


# ---------------------------------------------------------------- evaluation


def _is_scalar(eq) -> bool:
    return isinstance(eq, Equilibrium)


def _positions(eq, draws: Draws):
    """(price, psi_I, psi_U, h) at every draw; h is None for the no-signal kinds."""
    if _is_scalar(eq):
        if eq.kind.has_signal:
            h = eqm.public_signal(eq, draws.G, draws.Z)
            return eqm.price(eq, h), eqm.insider_demand(eq, draws.G, draws.Z), eqm.uninformed_demand(eq, h), h
        p = eqm.price(eq, draws.Z)
        return p, eqm.insider_demand(eq, None, draws.Z), eqm.uninformed_demand(eq, draws.Z), None
    if eq.kind.has_signal:
        h = ma.public_signal_multi(eq, draws.G, draws.Z)
        return ma.price_multi(eq, h), ma.insider_demand_multi(eq, draws.G, draws.Z), ma.uninformed_demand_multi(eq, h), h
    p = ma.price_multi(eq, draws.Z)
    return p, ma.insider_demand_multi(eq, draws.G, draws.Z), ma.uninformed_demand_multi(eq, draws.Z), None


def _alphas_pi(eq):
    if _is_scalar(eq):
        return eq.params.alpha_I, eq.params.alpha_U, eq.params.Pi
    return eq.model.alpha_I, eq.model.alpha_U, eq.model.Pi


def verify_clearing(eq, draws: Draws) -> float:
    """Largest |alpha_I psi_I + alpha_U psi_U + Z_N - Pi| over the draws."""
    _, psi_I, psi_U, _ = _positions(eq, draws)
    a_I, a_U, Pi = _alphas_pi(eq)
    return float(np.max(np.abs(a_I * psi_I + a_U * psi_U + draws.Z - Pi)))


def _as_rows(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _structure(eq):
    """(model, P_I, p_pub matrix) for either equilibrium flavour."""
    if _is_scalar(eq):
        model = ma.AssetModel.from_scalar(eq.params)
        return model, model.P_I, np.array([[eq.p_pub]])
    return eq.model, eq.P_I, eq.P_pub


def verify_optimality(eq, draws: Draws, epsilon_grid=DEFAULT_EPSILONS, max_draws: int | None = None) -> float:
    """Largest amount by which some psi_hat + eps beats psi_hat in a trader's conditional objective.

    The objective is log E[exp(-W) | info] for W = Pi_hat' p + psi'(X - p), in
    closed form from the Gaussian conditional law. The PI insider's price moves
    with her trade along the perceived impact map.
    """
    if not eq.kind.has_signal:
        raise ParameterError("kind", "optimality is checked for PI and PT")
    eps = np.asarray(epsilon_grid, dtype=float)
    if eps.size == 0 or not np.allclose(np.sort(eps), -np.sort(eps)[::-1]):
        raise ParameterError("epsilon_grid", "must be symmetric around 0")
    if max_draws is not None:
        draws = Draws(draws.X[:max_draws], draws.G[:max_draws], draws.Z[:max_draws])
    model, P_I, P_pub = _structure(eq)
    P, mu = model.prec_X, model.mu_X
    a_I = model.alpha_I
    p, psi_I, psi_U, h = (_as_rows(v) for v in _positions(eq, draws))
    G, Z = _as_rows(draws.G), _as_rows(draws.Z)
    Pi_hat = model.Pi_hat
    d = model.d

    cov_I = np.linalg.inv(P + P_I)
    m_I = (mu @ P.T + G @ P_I.T) @ cov_I.T
    cov_U = np.linalg.inv(P + P_pub)
    m_U = (mu @ P.T + h @ P_pub.T) @ cov_U.T

    if eq.kind is EquilibriumKind.PI:
        if _is_scalar(eq):
            M, V = np.array([[eq.impact_M]]), np.full(d, eq.impact_V)
        else:
            M, V = eq.M_p, eq.p_Q0

        def price_I(psi):
            return V + (psi - Pi_hat + Z / a_I) @ M.T
    else:

        def price_I(psi):
            return p

    def objective(psi, price_at, mean, cov):
        q = price_at(psi)
        return -(q @ Pi_hat) - np.sum(psi * (mean - q), axis=1) + 0.5 * np.sum((psi @ cov) * psi, axis=1)

    worst = 0.0
    for who, psi, price_at, mean, cov in (
        ("I", psi_I, price_I, m_I, cov_I),
        ("U", psi_U, lambda _psi: p, m_U, cov_U),
    ):
        base = objective(psi, price_at, mean, cov)
        for e in eps:
            for k in range(d):
                bump = psi.copy()
                bump[:, k] += e
                gap = base - objective(bump, price_at, mean, cov)
                worst = max(worst, float(np.max(gap)))
    return worst


def ce_target(eq, level, who: str) -> float:
    """Closed-form CE matching an estimate_ce request."""
    if _is_scalar(eq):
        params = eq.params
        if level == "ex_ante":
            rep = ce_ex_ante(params)
        else:
            _, g, z = level
            ce_I, ce_U = ce_interim(params, eq.kind, g, z)
            return ce_I if who == "I" else ce_U
    else:
        if level == "ex_ante":
            rep = ma.ce_ex_ante_multi(eq.model)
        else:
            _, g, z = level
            ce_I, ce_U = ma.ce_interim_multi(eq.model, eq.kind, g, z)
            return ce_I if who == "I" else ce_U
    pi = eq.kind is EquilibriumKind.PI
    if who == "I":
        return rep.ce_I_pi if pi else rep.ce_I_pt
    return rep.ce_U_pi if pi else rep.ce_U_pt


def _wealth_stats(w: np.ndarray, antithetic: bool) -> LogMeanExp:
    # w holds -W/alpha; with antithetic draws the pair means are the i.i.d. units
    if not antithetic:
        return LogMeanExp.of(w)
    c = float(np.max(w))
    e = np.exp(w - c).reshape(-1, 2).mean(axis=1)
    mu = float(np.mean(e))
    return LogMeanExp(e.size, c, mu, float(np.sum((e - mu) ** 2)))


def estimate_ce(eq, config: SimConfig, level="ex_ante", who: str = "I", target: float | None = None) -> McReport:
    """Monte Carlo CE: -alpha log mean exp(-W / alpha) for actual wealth W.

    ``level`` is "ex_ante" or ("interim", g, z). For the interim level the
    payoff is drawn from its law given the trader's information: (G, Z_N) for
    the insider, the implied public signal for the uninformed trader.
    """
    if who not in ("I", "U"):
        raise ParameterError("who", f"expected 'I' or 'U', got {who!r}")
    if not eq.kind.has_signal:
        raise ParameterError("kind", "CE estimates are for PI and PT")
    model, P_I, P_pub = _structure(eq)
    alpha = model.alpha_I if who == "I" else model.alpha_U
    Pi_hat = model.Pi_hat
    stats = LogMeanExp()

    if level == "ex_ante":

        def shard(rng, m):
            dr = _squeeze(_shard_draws(model, rng, m, config.antithetic), _is_scalar(eq))
            p, psi_I, psi_U, _ = (_as_rows(v) for v in _positions(eq, dr))
            psi = psi_I if who == "I" else psi_U
            W = p @ Pi_hat + np.sum(psi * (_as_rows(dr.X) - p), axis=1)
            return _wealth_stats(-W, config.antithetic)

    else:
        kind_tag, g, z = level
        if kind_tag != "interim":
            raise ParameterError("level", f"unknown level {level!r}")
        g1 = np.atleast_1d(np.asarray(g, dtype=float))
        z1 = np.atleast_1d(np.asarray(z, dtype=float))
        one = Draws(g1[None, :], g1[None, :], z1[None, :])
        one = _squeeze(one, _is_scalar(eq))
        p, psi_I, psi_U, h = (_as_rows(v)[0] for v in _positions(eq, one))
        P, mu = model.prec_X, model.mu_X
        if who == "I":
            cov = np.linalg.inv(P + P_I)
            mean = cov @ (P @ mu + P_I @ g1)
            psi = psi_I
        else:
            cov = np.linalg.inv(P + P_pub)
            mean = cov @ (P @ mu + P_pub @ h)
            psi = psi_U
        _, root = ma.sym_sqrt(np.linalg.inv(cov))
        const = p @ Pi_hat

        def shard(rng, m):
            X = mean + _normals(rng, m, mean.shape, config.antithetic) @ root.T
            W = const + (X - p) @ psi
            return _wealth_stats(-W, config.antithetic)

    for part in _map_shards(config, shard):
        stats = stats.merge(part)
    est = -alpha * stats.log_mean()
    se = alpha * stats.rel_se()
    if target is None:
        target = ce_target(eq, level, who)
    z_score = (est - target) / se if se > 0 else math.inf
    name = f"ce_{level if isinstance(level, str) else level[0]}_{who}_{eq.kind.value}"
    return McReport(est, se, config.n_paths, float(target), z_score, name, config.seed)


def estimate_public_precision(draws: Draws, eq, blocks: int = 20) -> McReport:
    """Precision of H - X from the draws; block jackknife standard error.

    For d > 1 the statistic is trace(S^-1 P_X^-1) / d, with S the sample
    covariance, which equals p_pub under proportional precisions.
    """
    if not eq.kind.has_signal:
        raise ParameterError("kind", "no public signal in the no-signal kinds")
    scalar = _is_scalar(eq)
    model, _, P_pub = _structure(eq)
    d = model.d
    h = eqm.public_signal(eq, draws.G, draws.Z) if scalar else ma.public_signal_multi(eq, draws.G, draws.Z)
    e = _as_rows(h) - _as_rows(draws.X)
    n = e.shape[0]
    if n < d + 1:
        raise ParameterError("n_paths", f"need at least {d + 1} draws for a {d}x{d} covariance")
    cov_X = model.cov_X

    def stat(rows):
        S = np.atleast_2d(np.cov(rows, rowvar=False))
        try:
            return float(np.trace(np.linalg.solve(S, cov_X))) / d
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError("sample covariance is singular") from exc

    est = stat(e)
    k = min(blocks, n // (d + 2))
    if k >= 2:
        idx = np.array_split(np.arange(n), k)
        loo = np.array([stat(np.delete(e, part, axis=0)) for part in idx])
        se = math.sqrt((k - 1) / k * np.sum((loo - loo.mean()) ** 2))
    else:
        se = est * math.sqrt(2.0 / max(n - 1, 1))
    target = float(np.trace(P_pub @ cov_X)) / d
    z = (est - target) / se if se > 0 else math.inf
    return McReport(est, se, n, target, z, f"public_precision_{eq.kind.value}", None)


# ---------------------------------------------------------------- suite


def _with_retry(fn, config: SimConfig, limit: float):
    rep = fn(config)
    if abs(rep.z_score) > limit:
        rep = fn(config.reseeded())
    return rep


def run_suite(
    model,
    n_paths: int,
    seed: int,
    z_limit: float = 4.0,
    corrupt: bool = False,
    interim_point=None,
    clearing_draws: int = 100_000,
    optimality_draws: int = 2_000,
) -> list[dict]:
    """Every verification check for one parameter set.

    Every stochastic check is rerun once with the next seed if it misses the
    z-limit. ``corrupt`` perturbs the uninformed response (a negative control).
    """
    scalar = isinstance(model, MarketParams)
    results = []
    solver = eqm.solve if scalar else ma.solve_multi
    eqs = {k: solver(model, k) for k in EquilibriumKind}
    if corrupt:
        for k in (EquilibriumKind.PI, EquilibriumKind.PT):
            e = eqs[k]
            if scalar:
                a, b = e.uninformed_coeffs
                eqs[k] = dataclasses.replace(e, uninformed_coeffs=(a + 1e-3, b))
            else:
                eqs[k] = dataclasses.replace(e, uninformed_h=e.uninformed_h + 1e-3 * np.eye(e.model.d))
    base = SimConfig(min(n_paths, clearing_draws) if n_paths >= 2 else 2, seed, model)
    draws = sample_market(base)
    for k, e in eqs.items():
        res = verify_clearing(e, draws)
        results.append({"name": f"clearing_{k.value}", "value": res, "limit": 1e-10, "passed": res <= 1e-10})
    for k in (EquilibriumKind.PI, EquilibriumKind.PT):
        viol = verify_optimality(eqs[k], draws, max_draws=optimality_draws)
        results.append({"name": f"optimality_{k.value}", "value": viol, "limit": 1e-12, "passed": viol <= 1e-12})

    cfg = SimConfig(n_paths, seed, model)
    d = 1 if scalar else model.d
    if interim_point is None:
        g0 = np.full(d, 1.0)
        z0 = np.full(d, 1.0)
    else:
        g0, z0 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in interim_point)
    level_interim = ("interim", float(g0[0]), float(z0[0])) if scalar else ("interim", g0, z0)
    for k in (EquilibriumKind.PI, EquilibriumKind.PT):
        for level in ("ex_ante", level_interim):
            for who in ("I", "U"):
                # targets come from the uncorrupted closed forms
                target = ce_target(solver(model, k), level, who)
                rep = _with_retry(lambda c: estimate_ce(eqs[k], c, level, who, target), cfg, z_limit)
                results.append(_report_row(rep, z_limit))
        rep = _with_retry(lambda c: estimate_public_precision(sample_market(c), eqs[k]), base, z_limit)
        results.append(_report_row(rep, z_limit))
    return results


def _report_row(rep: McReport, z_limit: float) -> dict:
    row = {k: float(v) if isinstance(v, np.floating) else v for k, v in rep.to_dict().items()}
    row["passed"] = bool(abs(rep.z_score) <= z_limit)
    return row
