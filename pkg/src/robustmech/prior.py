"""Prior distributions of the common value on [0, 1].

Two representations are used throughout the package:

* :class:`DiscretePrior` -- weights on the uniform grid {0, nu, 2 nu, ..., 1},
  the form consumed by the BCE linear programs and the grid-based guarantee
  objectives.
* :class:`ContinuousPrior` -- a parametric density used for closed-form
  continuum quantities (Roesler-Szentes construction, one-buyer objective).

A continuous prior is mapped to a grid by :func:`discretize`, which assigns each
grid point the CDF mass of the cell centred on it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special

FAMILIES = ("uniform", "beta", "powercdf", "concavecdf", "triangle")
DEFAULT_NU = 1.0 / 200


class InvalidPriorError(ValueError):
    """Raised for malformed priors or out-of-domain parameters."""


def _grid_size(nu: float) -> int:
    n = round(1.0 / nu)
    if n < 1 or abs(n * nu - 1.0) > 1e-9:
        raise InvalidPriorError(f"grid step must be 1/n for an integer n >= 1, got {nu!r}")
    return n


@dataclass(frozen=True)
class DiscretePrior:
    """Probability weights on the grid ``{0, step, ..., 1}``."""

    step: float
    weights: np.ndarray

    def __post_init__(self):
        n = _grid_size(self.step)
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != n + 1:
            raise InvalidPriorError(f"expected {n + 1} weights for step 1/{n}, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidPriorError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidPriorError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "step", 1.0 / n)
        object.__setattr__(self, "weights", w)

    @property
    def n_cells(self) -> int:
        return self.weights.size - 1

    @property
    def values(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.weights.size)

    def mean(self) -> float:
        return float(self.values @ self.weights)

    def to_dict(self) -> dict:
        return {"type": "discrete", "nu": self.step, "weights": self.weights.tolist()}


@dataclass(frozen=True)
class ContinuousPrior:
    """A parametric density on [0, 1].

    ``family`` is one of ``uniform``, ``beta`` (params ``(b, c)``), ``powercdf``
    (CDF ``v**e``, params ``(e,)``), ``concavecdf`` (CDF ``2v - v**2``) and
    ``triangle`` (density of the average of two independent uniforms).
    """

    family: str
    params: tuple[float, ...] = field(default=())

    def __post_init__(self):
        fam = self.family.lower()
        params = tuple(float(x) for x in self.params)
        if fam not in FAMILIES:
            raise InvalidPriorError(f"unknown prior family {self.family!r}")
        expected = {"uniform": 0, "beta": 2, "powercdf": 1, "concavecdf": 0, "triangle": 0}[fam]
        if len(params) != expected:
            raise InvalidPriorError(f"{fam} takes {expected} parameter(s), got {len(params)}")
        if any(not math.isfinite(x) or x <= 0 for x in params):
            raise InvalidPriorError(f"{fam} parameters must be positive, got {params}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", params)

    @property
    def label(self) -> str:
        if self.params:
            return f"{self.family}:{','.join(f'{x:g}' for x in self.params)}"
        return self.family

    def density(self, v):
        """Density at ``v`` (scalar or array); zero outside [0, 1]."""
        x = np.asarray(v, dtype=float)
        inside = (x >= 0) & (x <= 1)
        xc = np.clip(x, 0.0, 1.0)
        fam = self.family
        with np.errstate(divide="ignore", invalid="ignore"):
            if fam == "uniform":
                d = np.ones_like(xc)
            elif fam == "beta":
                b, c = self.params
                log_norm = special.gammaln(b + c) - special.gammaln(b) - special.gammaln(c)
                d = np.exp(special.xlogy(b - 1, xc) + special.xlog1py(c - 1, -xc) + log_norm)
            elif fam == "powercdf":
                (e,) = self.params
                d = e * np.power(xc, e - 1)
            elif fam == "concavecdf":
                d = 2.0 - 2.0 * xc
            else:
                d = np.where(xc <= 0.5, 4.0 * xc, 4.0 * (1.0 - xc))
        d = np.where(inside, d, 0.0)
        return float(d) if np.ndim(d) == 0 else d

    def cdf(self, v):
        x = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        fam = self.family
        if fam == "uniform":
            out = x.copy()
        elif fam == "beta":
            out = special.betainc(*self.params, x)
        elif fam == "powercdf":
            out = np.power(x, self.params[0])
        elif fam == "concavecdf":
            out = 2.0 * x - x * x
        else:
            out = np.where(x <= 0.5, 2.0 * x * x, 1.0 - 2.0 * (1.0 - x) ** 2)
        return float(out) if np.ndim(out) == 0 else out

    def partial_mean(self, v):
        """``int_0^v x rho(x) dx`` in closed form."""
        x = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        fam = self.family
        if fam == "uniform":
            out = 0.5 * x * x
        elif fam == "beta":
            b, c = self.params
            out = b / (b + c) * special.betainc(b + 1.0, c, x)
        elif fam == "powercdf":
            (e,) = self.params
            out = e / (e + 1.0) * np.power(x, e + 1.0)
        elif fam == "concavecdf":
            out = x * x - 2.0 * x**3 / 3.0
        else:
            out = np.where(x <= 0.5, 4.0 * x**3 / 3.0, 2.0 * x * x - 4.0 * x**3 / 3.0 - 1.0 / 6.0)
        return float(out) if np.ndim(out) == 0 else out

    def integrated_cdf(self, v):
        """``int_0^v F(x) dx``, via integration by parts."""
        x = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        out = x * self.cdf(x) - self.partial_mean(x)
        return float(out) if np.ndim(out) == 0 else out

    def breakpoints(self) -> list[float]:
        return [0.5] if self.family == "triangle" else []

    def mean(self) -> float:
        val, _ = integrate.quad(lambda t: t * self.density(t), 0.0, 1.0,
                                points=self.breakpoints() or None,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
        return float(val)

    def to_dict(self) -> dict:
        return {"type": "continuous", "family": self.family, "params": list(self.params)}


Prior = DiscretePrior | ContinuousPrior


def eval_density(prior: ContinuousPrior, v: float) -> float:
    if not 0.0 <= v <= 1.0:
        raise InvalidPriorError(f"value {v!r} outside [0, 1]")
    return prior.density(v)


def mean(prior: Prior) -> float:
    return prior.mean()


def discretize(prior: ContinuousPrior, nu: float = DEFAULT_NU) -> DiscretePrior:
    """Cell-mass discretization onto ``{0, nu, ..., 1}``.

    Grid point ``v`` receives ``F(v + nu/2) - F(v - nu/2)`` clipped to [0, 1],
    so the endpoints get half cells.
    """
    n = _grid_size(nu)
    grid = np.linspace(0.0, 1.0, n + 1)
    half = 0.5 / n
    w = prior.cdf(np.minimum(grid + half, 1.0)) - prior.cdf(np.maximum(grid - half, 0.0))
    w = np.maximum(w, 0.0)
    return DiscretePrior(1.0 / n, w / w.sum())


def as_discrete(prior: Prior, nu: float = DEFAULT_NU) -> DiscretePrior:
    return prior if isinstance(prior, DiscretePrior) else discretize(prior, nu)


# --- serialization -----------------------------------------------------------

def prior_from_dict(data: dict) -> Prior:
    kind = data.get("type")
    if kind == "discrete":
        return DiscretePrior(float(data["nu"]), np.asarray(data["weights"], dtype=float))
    if kind == "continuous":
        return ContinuousPrior(str(data["family"]), tuple(data.get("params", ())))
    raise InvalidPriorError(f"unknown prior type {kind!r}")


def load_prior(path: str | Path) -> Prior:
    with open(path, encoding="utf-8") as fh:
        return prior_from_dict(json.load(fh))


def parse_prior_spec(spec: str) -> Prior:
    """Parse ``uniform``, ``beta:b,c``, ``powercdf:e``, ``concavecdf``,
    ``triangle`` or ``file:PATH``."""
    name, _, rest = spec.strip().partition(":")
    name = name.lower()
    if name == "file":
        return load_prior(rest)
    params = tuple(float(x) for x in rest.split(",")) if rest else ()
    return ContinuousPrior(name, params)


# Reference priors in report order, plus the wallet-game prior.
REFERENCE_PRIORS: dict[str, ContinuousPrior] = {
    "Uniform": ContinuousPrior("uniform"),
    "CDF 2v-v^2": ContinuousPrior("concavecdf"),
    "CDF v^2": ContinuousPrior("powercdf", (2.0,)),
    "Beta(2,2)": ContinuousPrior("beta", (2.0, 2.0)),
    "Beta(2,4)": ContinuousPrior("beta", (2.0, 4.0)),
    "Beta(4,2)": ContinuousPrior("beta", (4.0, 2.0)),
    "Beta(8,1)": ContinuousPrior("beta", (8.0, 1.0)),
}
TRIANGLE = ContinuousPrior("triangle")
