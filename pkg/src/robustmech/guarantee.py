"""Revenue guarantees of the exponential price mechanism and its two-buyer
generalization, plus the one-buyer Roesler-Szentes benchmark.

Guarantee objectives are evaluated in the continuum-demand limit ``k -> inf``
with the demand scale ``A = a / k``; pass ``SearchConfig(k=...)`` to evaluate
the finite-``k`` formulas instead.  Objectives are prior-weighted lower
envelopes of functions linear in the payment parameters, so for fixed ``A`` the
payment parameters are optimized exactly; ``A`` itself is searched on a
logarithmic grid followed by golden-section refinement.

Internally the exponential-price objective is written in terms of the kink
``s = X g / A`` (``g`` the total payment growth ``e^(1/A)`` or ``(1 + 1/a)^k``),
which keeps every coefficient bounded for small ``A``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .lp_core import LinearProgram, solve_lp
from .mechanism import FiniteMechanism, generalized_two_buyer_tables
from .prior import DEFAULT_NU, ContinuousPrior, DiscretePrior, Prior, as_discrete

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MAX_EXPONENT = 700.0   # grid points with 1/A above this overflow exp(1/A)


class SearchError(RuntimeError):
    pass


class RSConstructionError(RuntimeError):
    pass


@dataclass
class SearchConfig:
    nu: float = DEFAULT_NU
    grid_points: int = 200
    A_min: float = 1e-3
    A_max: float = 10.0
    refine_width: float = 1e-6
    max_refine_iter: int = 200
    seed: int | None = None          # jitters the A grid; None keeps it fixed
    k: int | None = None             # finite number of demand levels; None = continuum
    lp_backend: str = "highs"

    def grid(self) -> np.ndarray:
        lo, hi = math.log(self.A_min), math.log(self.A_max)
        g = np.linspace(lo, hi, self.grid_points)
        if self.seed is not None:
            step = (hi - lo) / (self.grid_points - 1)
            g = g + np.random.default_rng(self.seed).uniform(-0.5, 0.5) * step
            g = np.clip(g, lo, hi)
        return np.exp(g)


@dataclass
class GuaranteeResult:
    value: float
    variant: str
    buyers: int
    params: dict
    diagnostics: dict = field(default_factory=dict)
    converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RSResult:
    pi_star: float
    b_star: float
    s_star: float
    A: float
    X: float
    foc_residuals: tuple[float, float] = (float("nan"), float("nan"))
    sosd_residuals: tuple[float, float] = (float("nan"), float("nan"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["foc_residuals"] = list(self.foc_residuals)
        d["sosd_residuals"] = list(self.sosd_residuals)
        return d


# --- finite-k building blocks ---------------------------------------------------

def harmonic_tail(n: int, I: int) -> float:
    """``sum_{j=n+1}^{I} 1/j``."""
    return math.fsum(1.0 / j for j in range(n + 1, I + 1))


def harmonic_number(I: float) -> float:
    if I < 10_000 and float(I).is_integer():
        return harmonic_tail(0, int(I))
    return float(special.digamma(I + 1.0) + np.euler_gamma)


def rev_n(v, n: int, I: int, k: int, a: float, X: float):
    """Virtual revenue of the exponential mechanism on profiles with ``n``
    top messages, under band rates ``a``."""
    if not 0 <= n <= I:
        raise ValueError(f"n must lie in 0..{I}")
    g = (1.0 + 1.0 / a) ** k
    return a * np.asarray(v) / k * harmonic_tail(n, I) + n * X * (g - 1.0) - (I - n) * X


def breakpoints(I: int, k: int, a: float, X: float) -> np.ndarray:
    """Values ``v(n)`` at which ``rev_n`` and ``rev_{n+1}`` cross, n = 0..I-1."""
    if not X > 0:
        raise ValueError("X must be positive")
    g = (1.0 + 1.0 / a) ** k
    return np.arange(1, I + 1) * k * X / a * g


def _growth(A: float, k: int | None) -> float:
    """Total payment growth factor between the bottom and top demand."""
    if k is None:
        return math.exp(1.0 / A)
    return (1.0 + 1.0 / (A * k)) ** k


def _log_growth(A: float, k: int | None) -> float:
    return 1.0 / A if k is None else k * math.log1p(1.0 / (A * k))


# --- exponential price mechanism ------------------------------------------------

def star_objective(prior: DiscretePrior, I: int, A: float, X: float, k: int | None = None) -> float:
    """``sum_v p(v) min_n Rev_n(v)`` with ``a = A k`` (or the continuum limit)."""
    g = _growth(A, k)
    v = prior.values
    H = np.array([harmonic_tail(n, I) for n in range(I + 1)])
    n = np.arange(I + 1)
    rev = A * v[:, None] * H[None] + X * (n * g - I)[None]
    return float(prior.weights @ rev.min(axis=1))


def _star_inner(values, weights, A: float, I: int, delta: float):
    """Exact ``max_{s >= 0} sum_v p(v) min_n [v H_n + s (n - I delta)]``.

    The objective is concave piecewise linear in ``s``: its slope starts at
    ``I (1 - delta)`` on positive values (``-I delta`` at v = 0) and drops by
    ``p(v)`` at each kink ``s = v / (n + 1)``.
    """
    H = np.array([harmonic_tail(n, I) for n in range(I + 1)])
    pos = values > 0
    slope0 = I * (1.0 - delta) * weights[pos].sum() - I * delta * weights[~pos].sum()
    if slope0 <= 0:
        s = 0.0
    else:
        kinks = (values[pos, None] / np.arange(1, I + 1)[None]).ravel()
        drops = np.repeat(weights[pos], I)
        order = np.argsort(kinks, kind="stable")
        kinks, drops = kinks[order], drops[order]
        after = slope0 - np.cumsum(drops)
        hit = int(np.searchsorted(-after, 0.0))   # first kink where slope turns <= 0
        s = float(kinks[min(hit, kinks.size - 1)])
    env = values[:, None] * H[None] + s * (np.arange(I + 1) - I * delta)[None]
    return float(A * (weights @ env.min(axis=1))), s


def _sharp_coefs(A: float, k: int | None):
    """Slopes of the two demand branches and the top-profile growth ``E``."""
    beta = 1.5 if k is None else (3 * k + 1) / (2.0 * k)
    return beta, math.expm1(_log_growth(A, k))


def sharp_objective(prior: DiscretePrior, A: float, Y0: float, Y1: float, k: int | None = None) -> float:
    beta, E = _sharp_coefs(A, k)
    v = prior.values
    br = np.stack([beta * A * v - Y0, 0.5 * A * v - Y1,
                   np.full_like(v, Y0 * E * E + 2.0 * Y1 * E)], axis=1)
    return float(prior.weights @ br.min(axis=1))


def _sharp_inner(values, weights, A: float, k: int | None, backend: str):
    """Epigraph LP for the two-buyer objective at fixed ``A``.

    Variables ``(t_v, u, c)`` with ``Y0 = A u / E`` and the top-profile
    payment level ``c A``; all coefficients stay O(1) for every ``A``.
    """
    beta, E = _sharp_coefs(A, k)
    iE = 1.0 / E
    N = values.size
    A_ub = np.zeros((3 * N, N + 2))
    eye = np.arange(N)
    A_ub[eye, eye] = 1.0
    A_ub[eye, N] = iE
    A_ub[N + eye, eye] = 1.0
    A_ub[N + eye, N] = -0.5
    A_ub[N + eye, N + 1] = 0.5 * iE
    A_ub[2 * N + eye, eye] = 1.0
    A_ub[2 * N + eye, N + 1] = -1.0
    b = np.concatenate([beta * values, 0.5 * values, np.zeros(N)])
    c = np.concatenate([weights, [0.0, 0.0]])
    lp = LinearProgram(c, A_ub, ["<="] * (3 * N), b,
                       lb=np.full(N + 2, -np.inf), maximize=True)
    sol = solve_lp(lp, backend=backend)
    if not sol.optimal:
        raise SearchError(f"two-buyer epigraph LP {sol.status} at A={A}")
    u, cc = sol.x[N], sol.x[N + 1]
    Y0 = A * u * iE
    Y1 = A * (0.5 * cc * iE - 0.5 * u)
    return Y0, Y1


def _golden_max(f, lo: float, hi: float, width: float, max_iter: int):
    """Maximize ``f`` on ``[lo, hi]``; returns (x, fx, converged, evaluations)."""
    seen = []
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    seen += [(x1, f1), (x2, f2)]
    it = 0
    while hi - lo > width and it < max_iter:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
            seen.append((x1, f1))
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
            seen.append((x2, f2))
        it += 1
    return hi - lo <= width, seen


def _search_A(inner, config: SearchConfig, extra=()):
    """Grid-then-golden maximization of ``inner(A) -> (value, payload)``."""
    cache: dict[float, tuple] = {}

    def f(A):
        if A not in cache:
            cache[A] = inner(A)
        return cache[A][0]

    grid = [A for A in config.grid() if _log_growth(A, config.k) <= MAX_EXPONENT]
    skipped = config.grid_points - len(grid)
    if not grid:
        raise SearchError("no usable A grid points")
    vals = [f(A) for A in grid]
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    ok, _ = _golden_max(f, lo, hi, config.refine_width, config.max_refine_iter)
    for A in extra:
        f(A)
    on_edge = i in (0, len(grid) - 1)
    # deterministic max: smallest A wins ties
    best_A = min(cache, key=lambda A: (-cache[A][0], A))
    diag = {"grid_argmax": float(grid[i]), "grid_edge": on_edge,
            "skipped_grid_points": skipped, "evaluations": len(cache)}
    return best_A, cache[best_A], ok and not on_edge, diag


def pi_star_I(prior: Prior, I: int, config: SearchConfig | None = None) -> GuaranteeResult:
    """Best guarantee of the exponential price mechanism with ``I`` buyers."""
    if I < 1:
        raise ValueError("need at least one buyer")
    config = config or SearchConfig()
    disc = as_discrete(prior, config.nu)
    v, p = disc.values, disc.weights

    def inner(A):
        delta = math.exp(-_log_growth(A, config.k))
        val, s = _star_inner(v, p, A, I, delta)
        return val, s

    A, (value, s), ok, diag = _search_A(inner, config)
    X = A * s * math.exp(-_log_growth(A, config.k))
    diag["breakpoints"] = [(n + 1) * s for n in range(I)]
    return GuaranteeResult(value=value, variant="star", buyers=I, converged=ok,
                           params={"A": A, "X": X, "k": config.k, "continuum": config.k is None},
                           diagnostics=diag)


def pi_sharp_2(prior: Prior, config: SearchConfig | None = None) -> GuaranteeResult:
    """Best guarantee of the generalized two-buyer mechanism."""
    config = config or SearchConfig()
    disc = as_discrete(prior, config.nu)
    v, p = disc.values, disc.weights

    def inner(A):
        Y0, Y1 = _sharp_inner(v, p, A, config.k, config.lp_backend)
        return sharp_objective(disc, A, Y0, Y1, config.k), (Y0, Y1)

    # the exponential mechanism is a special case, so its optimal scale is a candidate
    star = pi_star_I(disc, 2, config)
    A, (value, (Y0, Y1)), ok, diag = _search_A(inner, config, extra=(star.params["A"],))
    E = _sharp_coefs(A, config.k)[1]
    diag.update({"Y0_sign": int(np.sign(Y0)), "Y1_sign": int(np.sign(Y1)),
                 "top_payment": Y0 * E * E + 2 * Y1 * E, "star_value": star.value})
    return GuaranteeResult(value=value, variant="sharp2", buyers=2, converged=ok,
                           params={"A": A, "Y0": Y0, "Y1": Y1, "k": config.k,
                                   "continuum": config.k is None},
                           diagnostics=diag)


# --- one buyer -----------------------------------------------------------------

def pi_1_continuum(prior: ContinuousPrior, A: float, X: float) -> float:
    """``int_0^1 min(A v, X e^(1/A)) rho(v) dv - X``."""
    if not (A > 0 and X > 0):
        raise ValueError("A and X must be positive")
    cap = X * math.exp(1.0 / A)
    kink = cap / A
    pts = sorted({x for x in [kink] + prior.breakpoints() if 0.0 < x < 1.0})
    edges = [0.0] + pts + [1.0]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda t: min(A * t, cap) * prior.density(t), lo, hi,
                                epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return total - X


def one_buyer_foc(prior: ContinuousPrior, A: float, X: float) -> tuple[float, float]:
    """Partial derivatives of the one-buyer objective in ``X`` and ``A``."""
    e = math.exp(1.0 / A)
    kink = min(X * e / A, 1.0)
    tail = 1.0 - prior.cdf(kink)
    dX = e * tail - 1.0
    dA = prior.partial_mean(kink) - X * e / A**2 * tail
    return float(dX), float(dA)


def rs_upper_support(prior: Prior | float, pi: float) -> float:
    """Top of the support ``B(pi)`` that gives the signal the prior's mean."""
    mu = prior if isinstance(prior, float) else prior.mean()
    expo = mu / pi - 1.0 + math.log(pi)
    return math.inf if expo > MAX_EXPONENT else math.exp(expo)


def rs_sosd_gap(prior: ContinuousPrior, s, pi: float):
    """``F(s, pi)``: integrated prior CDF minus integrated signal CDF on ``[pi, B]``."""
    s = np.asarray(s, dtype=float)
    return prior.integrated_cdf(s) - (s - pi - pi * np.log(s) + pi * math.log(pi))


def _min_gap(prior, pi, B, n_grid=2000):
    s = np.linspace(pi, B, n_grid)
    F = rs_sosd_gap(prior, s, pi)
    i = int(np.argmin(F))
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, n_grid - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: float(rs_sosd_gap(prior, x, pi)),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-13})
        if res.fun < F[i]:
            return float(res.fun), float(res.x)
    return float(F[i]), float(s[i])


def rs_construct(prior: ContinuousPrior, tol: float = 1e-13) -> RSResult:
    """The buyer-optimal unbiased signal for one buyer and the mechanism
    parameters that attain it."""
    mu = prior.mean()

    def feasible(pi):
        B = rs_upper_support(mu, pi)
        if B > 1.0:
            return False
        return _min_gap(prior, pi, B)[0] >= 0.0

    lo, hi = 1e-6, mu
    if feasible(lo):
        raise RSConstructionError("lower bracket 1e-6 is already feasible")
    if not feasible(hi):
        raise RSConstructionError("the prior mean is not a feasible revenue level")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    pi = hi
    B = rs_upper_support(mu, pi)
    gmin, s = _min_gap(prior, pi, B)
    # polish the binding point on the derivative of F
    dF = lambda x: prior.cdf(x) - 1.0 + pi / x  # noqa: E731
    w = 1e-3 * (B - pi)
    a_, b_ = max(pi, s - w), min(B, s + w)
    if a_ < b_ and dF(a_) * dF(b_) < 0:
        s = optimize.brentq(dF, a_, b_, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if not pi < s < B:
        raise RSConstructionError(f"binding point {s} is not interior to [{pi}, {B}]")
    A = 1.0 / math.log(s / pi)
    X = pi * A
    foc = one_buyer_foc(prior, A, X)
    sosd = (float(rs_sosd_gap(prior, s, pi)), float(dF(s)))
    return RSResult(pi_star=pi, b_star=B, s_star=s, A=A, X=X, foc_residuals=foc, sosd_residuals=sosd)


# --- unbiased signal distributions -------------------------------------------

class Signal:
    """Distribution of an unbiased signal ``s = E[v | s]`` on [0, 1]."""

    def expect(self, h, kinks=()) -> float:
        raise NotImplementedError

    def integrated_cdf(self, s):
        raise NotImplementedError

    def mean(self) -> float:
        return self.expect(lambda x: x)


@dataclass
class PointMass(Signal):
    x: float

    def expect(self, h, kinks=()):
        return float(h(self.x))

    def integrated_cdf(self, s):
        return np.maximum(np.asarray(s, dtype=float) - self.x, 0.0)


@dataclass
class RSSignal(Signal):
    """CDF ``1 - pi/s`` on ``[pi, B)`` with an atom ``pi/B`` at ``B``."""

    pi: float
    B: float

    def expect(self, h, kinks=()):
        pts = sorted({x for x in kinks if self.pi < x < self.B})
        edges = [self.pi] + pts + [self.B]
        cont = sum(integrate.quad(lambda t: h(t) * self.pi / t**2, lo, hi,
                                  epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                   for lo, hi in zip(edges[:-1], edges[1:]))
        return float(cont + self.pi / self.B * h(self.B))

    def integrated_cdf(self, s):
        s = np.asarray(s, dtype=float)
        pi, B = self.pi, self.B
        inner = lambda x: x - pi - pi * np.log(np.maximum(x, pi)) + pi * math.log(pi)  # noqa: E731
        return np.where(s < pi, 0.0, np.where(s < B, inner(s), inner(B) + (s - B)))


@dataclass
class PriorSignal(Signal):
    """Full information: the signal is the value itself."""

    prior: ContinuousPrior

    def expect(self, h, kinks=()):
        pts = sorted({x for x in list(kinks) + self.prior.breakpoints() if 0.0 < x < 1.0})
        edges = [0.0] + pts + [1.0]
        return float(sum(integrate.quad(lambda t: h(t) * self.prior.density(t), lo, hi,
                                        epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                         for lo, hi in zip(edges[:-1], edges[1:])))

    def integrated_cdf(self, s):
        return self.prior.integrated_cdf(s)


def rs_signal(rs: RSResult) -> RSSignal:
    return RSSignal(rs.pi_star, rs.b_star)


def pi_1_of_info(prior: ContinuousPrior, G: Signal, A: float, X: float) -> float:
    """Equilibrium revenue of the continuum one-buyer mechanism when the buyer
    observes an unbiased signal distributed as ``G``.

    A buyer with signal ``s`` pays ``clip(A s - X, 0, X (e^(1/A) - 1))``.
    """
    top = X * math.expm1(1.0 / A)
    h = lambda s: min(max(A * s - X, 0.0), top)  # noqa: E731
    return G.expect(h, kinks=(X / A, X * math.exp(1.0 / A) / A))


def mean_preserving_spread_gap(prior: ContinuousPrior, G: Signal, n_grid: int = 2001) -> tuple[float, float]:
    """``(mean difference, min_s [int F_prior - int G])``; the prior is a
    mean-preserving spread of ``G`` iff the first is 0 and the second >= 0."""
    s = np.linspace(0.0, 1.0, n_grid)
    gap = prior.integrated_cdf(s) - G.integrated_cdf(s)
    return prior.mean() - G.mean(), float(np.min(gap))


# --- many buyers -----------------------------------------------------------------

def theorem2_limit(prior: Prior, I: float) -> float:
    """Limit as ``k -> inf`` of the exponential mechanism's guarantee with
    ``A = 1/log I`` and ``X = 1/(2 I log I)``.

    The breakpoints tend to ``v(0) = 1/2`` and ``v(1) = 1``.
    """
    if I < 2:
        raise ValueError("need I >= 2")
    L = math.log(I)
    H = harmonic_number(I)
    if isinstance(prior, DiscretePrior):
        v, p = prior.values, prior.weights
        low = v <= 0.5
        return float(p[low] @ (v[low] * H / L - 0.5 / L)
                     + p[~low] @ (v[~low] * (H - 1.0) / L - 1.0 / L))
    m_lo, f_lo = prior.partial_mean(0.5), prior.cdf(0.5)
    m_hi = prior.partial_mean(1.0) - m_lo
    return float(H / L * m_lo - 0.5 / L * f_lo + (H - 1.0) / L * m_hi - (1.0 - f_lo) / L)


def theorem2_parameters(I: float, k: int) -> tuple[float, float]:
    """``(a, X)`` for ``k`` demand levels."""
    L = math.log(I)
    return k / L, 1.0 / (2.0 * I * L)


# --- two-buyer closed-form identities ---------------------------------------

def lemma_q_values(k: int) -> tuple[float, float]:
    """``(q(1, 0), q(1, k))`` forced on any allocation meeting the two-buyer
    conditions with binding feasibility."""
    if k < 1:
        raise ValueError("k >= 1")
    return (3 * k + 1) / (4.0 * k * k), 1.0 / (2.0 * k)


def check_pkk_identity(a: float, k: int, Y0: float, Y1: float) -> float:
    """``|P(k,k) - [E^2 a P(1,0) + E (a P(1,k) - P(k,0))]|`` with ``E = (1+1/a)^k - 1``."""
    _, P = generalized_two_buyer_tables(k, a, Y0, Y1)
    g = 1.0
    for _ in range(k):
        g *= 1.0 + 1.0 / a
    E = g - 1.0
    rhs = E * E * a * P[1, 0] + E * (a * P[1, k] - P[k, 0])
    return abs(P[k, k] - rhs)


def y_params(mech: FiniteMechanism, a: float) -> tuple[float, float]:
    """``(Y0, Y1) = (2 a P(1,0), -P(k,0) + a P(1,k))`` from buyer 1's payments."""
    if mech.buyers != 2:
        raise ValueError("defined for two buyers")
    P = mech.P[0]
    k = mech.k
    return 2.0 * a * P[1, 0], -P[k, 0] + a * P[1, k]


# --- benchmark -----------------------------------------------------------------

def wallet_game_bound() -> float:
    """Optimal revenue when each of two buyers privately sees a uniform signal
    and the value is their average."""
    val, _ = integrate.dblquad(lambda s2, s1: max(s1 + s2 / 2.0 - 0.5, 0.0),
                               0.0, 1.0, 0.0, lambda s1: s1, epsabs=1e-12, epsrel=1e-12)
    return 2.0 * val
