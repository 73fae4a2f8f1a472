"""Worst-case Bayes correlated equilibria and their dual certificates.

For a fixed mechanism the revenue-minimizing BCE solves a linear program over
joint distributions ``mu(v, m)``.  Its dual assigns a deviation rate
``alpha_i(m'|m)`` to every obedience constraint and a price ``gamma(v)`` to every
consistency constraint; any dual-feasible pair certifies the revenue guarantee
``sum_v p(v) gamma(v)``.

LP layout: the primal variable for ``(v, m)`` sits at ``iv * n_profiles + im``
where ``im`` is the C-order (last buyer fastest) index of ``m``.  Obedience rows
are ordered by ``(i, m_i, m_i')`` with ``m_i' != m_i``, followed by one
consistency row per grid value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp_core import LinearProgram, solve_lp
from .mechanism import FiniteMechanism
from .prior import DiscretePrior

SIZE_CAP = 20_000
EMBED_PROFILE_CAP = 2**22   # largest profile count an embedding may produce


class SizeCapError(ValueError):
    """The program would exceed ``SIZE_CAP`` primal variables."""


class InternalLPError(RuntimeError):
    pass


class EmbedError(RuntimeError):
    def __init__(self, msg, slack):
        super().__init__(msg)
        self.slack = slack


@dataclass(frozen=True)
class BCEDistribution:
    mu: np.ndarray  # shape (n_values, n_1, ..., n_I)

    def to_dict(self, value: float | None = None) -> dict:
        # mu[iv][profile], profile index as in mechanism files (buyer 1 fastest)
        out = {"mu": [row.flatten(order="F").tolist() for row in self.mu]}
        if value is not None:
            out["value"] = value
        return out


@dataclass(frozen=True)
class DualCertificate:
    alpha: np.ndarray  # alpha[i, m, m'] = rate of deviating from m to m'
    gamma: np.ndarray

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.tolist(), "alpha": self.alpha.tolist()}


@dataclass(frozen=True)
class BandRates:
    """Upward-neighbour rates: ``alpha(j+1|j) = a``, all others zero."""

    a: float

    def __post_init__(self):
        if not self.a >= 0:
            raise ValueError(f"band rate must be nonnegative, got {self.a}")

    def as_alpha(self, mech: FiniteMechanism) -> np.ndarray:
        n = max(mech.messages)
        alpha = np.zeros((mech.buyers, n, n))
        for i, ni in enumerate(mech.messages):
            idx = np.arange(ni - 1)
            alpha[i, idx, idx + 1] = self.a
        return alpha


def _alpha_of(rates, mech: FiniteMechanism) -> np.ndarray:
    if isinstance(rates, BandRates):
        return rates.as_alpha(mech)
    if isinstance(rates, DualCertificate):
        return np.asarray(rates.alpha, dtype=float)
    return np.asarray(rates, dtype=float)


def _check_size(mech: FiniteMechanism, prior: DiscretePrior):
    cells = mech.n_profiles * prior.weights.size
    if cells > SIZE_CAP:
        raise SizeCapError(f"{cells} (value, profile) cells exceed the cap of {SIZE_CAP}")


def utility_tables(mech: FiniteMechanism, values) -> np.ndarray:
    """``U[i, iv, m] = v q_i(m) - P_i(m)``."""
    vals = np.asarray(values, dtype=float).reshape((1, -1) + (1,) * mech.buyers)
    return vals * mech.q[:, None] - mech.P[:, None]


def virtual_revenue_table(mech: FiniteMechanism, rates, values) -> np.ndarray:
    """Virtual revenue ``Rev(v, m)`` on every grid value and profile.

    ``Rev(v, m) = sum_i [P_i(m) + sum_m' alpha_i(m'|m_i) (U_i(v, m', m_-i) - U_i(v, m))]``
    """
    U = utility_tables(mech, values)
    rev = np.broadcast_to(mech.P.sum(axis=0), U.shape[1:]).copy()
    if isinstance(rates, BandRates):
        for i in range(mech.buyers):
            lo = (slice(None),) * (1 + i) + (slice(None, -1),)
            hi = (slice(None),) * (1 + i) + (slice(1, None),)
            rev[lo] += rates.a * (U[i][hi] - U[i][lo])
        return rev
    alpha = _alpha_of(rates, mech)
    for i, ni in enumerate(mech.messages):
        ax = 1 + i
        Ui = U[i]
        bshape = [1] * Ui.ndim
        bshape[ax] = ni
        for r in range(ni):
            w = alpha[i, :ni, r]
            if not np.any(w):
                continue
            rev += w.reshape(bshape) * (np.take(Ui, [r], axis=ax) - Ui)
    return rev


def virtual_revenue(v: float, profile, mech: FiniteMechanism, rates) -> float:
    return float(virtual_revenue_table(mech, rates, [v])[(0,) + tuple(profile)])


def _gain_tables(mech: FiniteMechanism, values):
    """``gain[i][r][iv, m] = U_i(v, m) - U_i(v, (r, m_-i))``."""
    U = utility_tables(mech, values)
    out = []
    for i, ni in enumerate(mech.messages):
        out.append([U[i] - np.take(U[i], [r], axis=1 + i) for r in range(ni)])
    return out


def _obedience_index(mech: FiniteMechanism):
    return [(i, r, rp) for i, ni in enumerate(mech.messages)
            for r in range(ni) for rp in range(ni) if rp != r]


def build_primal_lp(mech: FiniteMechanism, prior: DiscretePrior) -> LinearProgram:
    values, p = prior.values, prior.weights
    nV, nM = values.size, mech.n_profiles
    gains = _gain_tables(mech, values)
    own = [np.broadcast_to(np.arange(ni).reshape([1] * (1 + i) + [ni] + [1] * (mech.buyers - 1 - i)),
                           (nV,) + mech.messages) for i, ni in enumerate(mech.messages)]
    rows = []
    for i, r, rp in _obedience_index(mech):
        rows.append(np.where(own[i] == r, gains[i][rp], 0.0).ravel())
    cons = np.kron(np.eye(nV), np.ones(nM))
    A = np.vstack(rows + [cons]) if rows else cons
    senses = [">="] * len(rows) + ["="] * nV
    b = np.concatenate([np.zeros(len(rows)), p])
    c = np.tile(mech.P.sum(axis=0).ravel(), nV)
    return LinearProgram(c, A, senses, b)


def build_dual_lp(mech: FiniteMechanism, prior: DiscretePrior) -> LinearProgram:
    """Variables: ``gamma`` (free, one per value) then one ``alpha`` per
    obedience triple, in :func:`_obedience_index` order."""
    values, p = prior.values, prior.weights
    nV, nM = values.size, mech.n_profiles
    gains = _gain_tables(mech, values)
    trip = _obedience_index(mech)
    A = np.zeros((nV * nM, nV + len(trip)))
    A[:, :nV] = np.kron(np.eye(nV), np.ones((nM, 1)))
    for col, (i, r, rp) in enumerate(trip):
        own = np.arange(mech.messages[i]).reshape(
            [1] * (1 + i) + [mech.messages[i]] + [1] * (mech.buyers - 1 - i))
        A[:, nV + col] = np.where(own == r, gains[i][rp], 0.0).ravel()
    b = np.tile(mech.P.sum(axis=0).ravel(), nV)
    c = np.concatenate([p, np.zeros(len(trip))])
    lb = np.concatenate([np.full(nV, -np.inf), np.zeros(len(trip))])
    return LinearProgram(c, A, ["<="] * A.shape[0], b, lb=lb, maximize=True)


def _alpha_from_vector(mech: FiniteMechanism, vec) -> np.ndarray:
    n = max(mech.messages)
    alpha = np.zeros((mech.buyers, n, n))
    for val, (i, r, rp) in zip(vec, _obedience_index(mech)):
        alpha[i, r, rp] = max(val, 0.0)
    return alpha


def min_bce_revenue(mech: FiniteMechanism, prior: DiscretePrior, backend: str = "simplex"):
    """Revenue of the worst-case BCE and the BCE itself."""
    _check_size(mech, prior)
    sol = solve_lp(build_primal_lp(mech, prior), backend=backend)
    if not sol.optimal:
        # the no-trade distribution is always feasible and revenue is bounded
        raise InternalLPError(f"BCE program reported {sol.status}")
    mu = np.maximum(sol.x, 0.0).reshape((prior.weights.size,) + mech.messages)
    return sol.objective, BCEDistribution(mu)


def max_dual_revenue(mech: FiniteMechanism, prior: DiscretePrior, backend: str = "simplex"):
    """Best revenue certificate ``max sum_v p(v) gamma(v)`` and its rates."""
    _check_size(mech, prior)
    sol = solve_lp(build_dual_lp(mech, prior), backend=backend)
    if not sol.optimal:
        raise InternalLPError(f"dual program reported {sol.status}")
    nV = prior.weights.size
    cert = DualCertificate(_alpha_from_vector(mech, sol.x[nV:]), sol.x[:nV].copy())
    return sol.objective, cert


@dataclass
class BCEReport:
    consistency_residual: float
    obedience_violation: float
    min_weight: float
    revenue: float

    def ok(self, tol: float) -> bool:
        return (self.consistency_residual <= tol and self.obedience_violation <= tol
                and self.min_weight >= -tol)


def obedience_values(mu: np.ndarray, mech: FiniteMechanism, values) -> dict:
    """Left-hand side of every obedience constraint, keyed by ``(i, m, m')``."""
    gains = _gain_tables(mech, values)
    out = {}
    for i, r, rp in _obedience_index(mech):
        sl = (slice(None),) + (slice(None),) * i + (r,)
        out[(i, r, rp)] = float(np.sum(mu[sl] * gains[i][rp][sl]))
    return out


def verify_bce(bce: BCEDistribution | np.ndarray, mech: FiniteMechanism, prior: DiscretePrior,
               tol: float = 1e-9) -> BCEReport:
    mu = bce.mu if isinstance(bce, BCEDistribution) else np.asarray(bce, dtype=float)
    if mu.shape != (prior.weights.size,) + mech.messages:
        raise ValueError(f"mu has shape {mu.shape}, expected {(prior.weights.size,) + mech.messages}")
    cons = np.abs(mu.reshape(mu.shape[0], -1).sum(axis=1) - prior.weights).max()
    obed = obedience_values(mu, mech, prior.values)
    worst = max((-x for x in obed.values()), default=0.0)
    revenue = float(np.sum(mu * mech.P.sum(axis=0)[None]))
    return BCEReport(float(cons), max(float(worst), 0.0) + 0.0, float(mu.min()), revenue)


def complementary_slackness(bce: BCEDistribution, cert: DualCertificate,
                            mech: FiniteMechanism, prior: DiscretePrior) -> float:
    """Largest product of a positive variable with the slack of its paired
    constraint, over both programs."""
    rev = virtual_revenue_table(mech, cert.alpha, prior.values)
    dual_slack = rev - cert.gamma.reshape((-1,) + (1,) * mech.buyers)
    primal = float(np.max(np.abs(bce.mu * dual_slack)))
    obed = obedience_values(bce.mu, mech, prior.values)
    dual = max((abs(cert.alpha[i, r, rp] * s) for (i, r, rp), s in obed.items()), default=0.0)
    return max(primal, dual)


def lemma1_check(mech: FiniteMechanism, rates, values) -> float:
    """``max_v (min_m Rev(v, m) - v)``; never positive for a feasible mechanism
    with opt-out messages and nonnegative rates."""
    vals = np.asarray(values, dtype=float)
    rev = virtual_revenue_table(mech, rates, vals)
    return float(np.max(rev.reshape(vals.size, -1).min(axis=1) - vals))


@dataclass
class Embedding:
    mechanism: FiniteMechanism
    rates: BandRates
    slack: float
    k_new: int
    transitions: list[np.ndarray]   # one row-stochastic matrix per buyer
    mixtures: list[np.ndarray]      # mixtures[i][j] = j-step distribution from message 0

    def __iter__(self):
        return iter((self.mechanism, self.rates, self.slack))


def transition_matrices(mech: FiniteMechanism, alpha: np.ndarray, c: float = 1.0):
    """Uniformized jump chains of the deviation rates and the common rate ``a``."""
    if not c > 0:
        raise ValueError("c must be positive")
    if np.any(alpha < 0):
        raise ValueError("rates must be nonnegative")
    out_rates = []
    for i, ni in enumerate(mech.messages):
        off = alpha[i, :ni, :ni] * (1 - np.eye(ni))
        out_rates.append(off.sum(axis=1).max())
    a = max(out_rates) + c
    mats = []
    for i, ni in enumerate(mech.messages):
        M = alpha[i, :ni, :ni] * (1 - np.eye(ni)) / a
        M[np.diag_indices(ni)] = 1.0 - M.sum(axis=1)
        mats.append(M)
    return a, mats


def _step_distributions(mats, length):
    """Rows ``A^j(.|0)`` for j = 0..length-1, per buyer, by block doubling."""
    dists = []
    for M in mats:
        d = np.zeros((1, M.shape[0]))
        d[0, 0] = 1.0
        while d.shape[0] < length:
            d = np.vstack([d, d @ np.linalg.matrix_power(M, d.shape[0])])
        dists.append(d[:length])
    return dists


def _embed_slack(mats, a, max_u, k):
    # a * ||A^(k+1)(.|0) - A^k(.|0)||_1 * max|U|, worst buyer
    out = 0.0
    for M, mu in zip(mats, max_u):
        dk = np.linalg.matrix_power(M, k)[0]
        out = max(out, a * float(np.abs(dk @ M - dk).sum()) * mu)
    return out


def _embed_k_max(I: int) -> int:
    n = int(round(EMBED_PROFILE_CAP ** (1.0 / I)))
    while n ** I > EMBED_PROFILE_CAP:
        n -= 1
    while (n + 1) ** I <= EMBED_PROFILE_CAP:
        n += 1
    return max(n - 1, 1)


def markov_embed(mech: FiniteMechanism, rates, c: float = 1.0, k_new: int | None = None,
                 eps: float = 1e-6, k_max: int | None = None) -> Embedding:
    """Rewrite ``(mech, rates)`` as a mechanism on ``{0..k_new}`` with band rates.

    Message ``j`` of the new mechanism plays the ``j``-step distribution of the
    uniformized deviation chain started at the opt-out message.  The boundary
    slack ``a * ||A^(k+1)(.|0) - A^k(.|0)||_1 * max|U|`` is nonincreasing in
    ``k``; unless ``k_new`` is given, the smallest ``k`` with slack at most
    ``eps`` is found by doubling from 8 and then bisecting.  ``k_max`` defaults
    to the largest value keeping ``(k + 1)**I`` within ``EMBED_PROFILE_CAP``.
    """
    alpha = _alpha_of(rates, mech)
    a, mats = transition_matrices(mech, alpha, c)
    max_u = [float(max(np.abs(mech.P[i]).max(), np.abs(mech.q[i] - mech.P[i]).max()))
             for i in range(mech.buyers)]
    if k_max is None:
        k_max = _embed_k_max(mech.buyers)
    slack_at = lambda k: _embed_slack(mats, a, max_u, k)  # noqa: E731
    if k_new is None:
        k = min(8, k_max)
        while slack_at(k) > eps and k < k_max:
            k = min(2 * k, k_max)
        if slack_at(k) <= eps:
            lo = k // 2   # slack(lo) > eps or lo below the start
            while k - lo > 1:
                mid = (lo + k) // 2
                if slack_at(mid) <= eps:
                    k = mid
                else:
                    lo = mid
    else:
        k = k_new
    slack = slack_at(k)
    if slack > eps:
        raise EmbedError(f"boundary slack {slack:.3g} > {eps:.3g} at k_new={k}", slack)
    mix = _step_distributions(mats, k + 1)
    q = [_mix_table(mech.q[i], mix) for i in range(mech.buyers)]
    P = [_mix_table(mech.P[i], mix) for i in range(mech.buyers)]
    new = FiniteMechanism(np.stack(q), np.stack(P),
                          meta={"kind": "markov_embedding", "a": a, "c": c})
    return Embedding(new, BandRates(a), slack, k, mats, mix)


def _mix_table(table: np.ndarray, mix) -> np.ndarray:
    out = table
    for ax, W in enumerate(mix):
        out = np.moveaxis(np.tensordot(W, out, axes=([1], [ax])), 0, ax)
    return out
