"""Finite selling mechanisms and the exponential-price family.

A mechanism with ``I`` buyers stores dense allocation and payment tables of
shape ``(I, n_1, ..., n_I)``: entry ``q[i][m]`` is buyer ``i``'s allocation at
message profile ``m``.  Message 0 of every buyer is the opt-out message.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TOL = 1e-12


class MechanismError(ValueError):
    """Raised for invalid mechanism parameters or tables."""


@dataclass(frozen=True)
class FiniteMechanism:
    q: np.ndarray
    P: np.ndarray
    symmetric: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        P = np.array(self.P, dtype=float)
        if q.shape != P.shape or q.ndim < 2 or q.shape[0] != q.ndim - 1:
            raise MechanismError(f"allocation/payment tables must share shape (I, n_1..n_I); got {q.shape}, {P.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(P))):
            raise MechanismError("tables contain non-finite entries")
        if np.any(q < -TOL):
            raise MechanismError("negative allocation")
        if np.any(q.sum(axis=0) > 1.0 + TOL):
            raise MechanismError("infeasible allocation: total exceeds 1")
        for i in range(q.shape[0]):
            idx = (i,) + (slice(None),) * i + (0,)
            if np.any(np.abs(q[idx]) > TOL) or np.any(np.abs(P[idx]) > TOL):
                raise MechanismError(f"buyer {i + 1} has no opt-out at message 0")
        q.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "P", P)
        if self.symmetric and not is_symmetric(self, tol=1e-12):
            raise MechanismError("symmetric flag set but tables are not symmetric")

    @property
    def buyers(self) -> int:
        return self.q.shape[0]

    @property
    def messages(self) -> tuple[int, ...]:
        return self.q.shape[1:]

    @property
    def k(self) -> int:
        """Highest message, when every buyer has the same message set."""
        if len(set(self.messages)) != 1:
            raise MechanismError("buyers have different message counts")
        return self.messages[0] - 1

    @property
    def n_profiles(self) -> int:
        return math.prod(self.messages)

    def profiles(self):
        return itertools.product(*(range(n) for n in self.messages))

    def total_allocation(self) -> np.ndarray:
        return self.q.sum(axis=0)

    def to_dict(self) -> dict:
        # profile index = sum_i m_i (k+1)^(i-1): buyer 1 varies fastest
        out = {
            "buyers": self.buyers,
            "k": self.k if len(set(self.messages)) == 1 else [n - 1 for n in self.messages],
            "q": [self.q[i].flatten(order="F").tolist() for i in range(self.buyers)],
            "P": [self.P[i].flatten(order="F").tolist() for i in range(self.buyers)],
        }
        if self.meta:
            out["meta"] = self.meta
        return out


def mechanism_from_dict(data: dict) -> FiniteMechanism:
    I = int(data["buyers"])
    k = data["k"]
    ks = [int(k)] * I if np.isscalar(k) else [int(x) for x in k]
    shape = tuple(x + 1 for x in ks)
    try:
        q = np.stack([np.reshape(np.asarray(r, dtype=float), shape, order="F") for r in data["q"]])
        P = np.stack([np.reshape(np.asarray(r, dtype=float), shape, order="F") for r in data["P"]])
    except ValueError as exc:
        raise MechanismError(f"table length does not match {shape}: {exc}") from None
    if q.shape[0] != I:
        raise MechanismError(f"expected {I} allocation tables, got {q.shape[0]}")
    return FiniteMechanism(q, P, meta=dict(data.get("meta", {})))


def load_mechanism(path: str | Path) -> FiniteMechanism:
    with open(path, encoding="utf-8") as fh:
        return mechanism_from_dict(json.load(fh))


def rank_set(position: int, profile) -> frozenset[int]:
    """Ranks (from the top, 1-based) that ``profile[position]`` can occupy.

    Entries tied with it share a contiguous block of ranks.
    """
    m = profile[position]
    above = sum(1 for x in profile if x > m)
    tied = sum(1 for x in profile if x == m)
    return frozenset(range(above + 1, above + tied + 1))


def _growth_powers(a: float, k: int) -> np.ndarray:
    """``(1 + 1/a)**j - 1`` for j = 0..k by repeated multiplication."""
    g = 1.0 + 1.0 / a
    pw = np.ones(k + 1)
    for j in range(1, k + 1):
        pw[j] = pw[j - 1] * g
    return pw - 1.0


def _exponential_allocation(I: int, k: int) -> np.ndarray:
    """Buyer-1 allocation table of the rank-based allocation rule."""
    q0 = np.zeros((k + 1,) * I)
    for others in itertools.product(range(k + 1), repeat=I - 1):
        acc = 0.0
        for j in range(k):
            ranks = rank_set(0, (j,) + others)
            acc += sum(1.0 / r for r in ranks) / len(ranks) / k
            q0[(j + 1,) + others] = acc
    return q0


def build_exponential(I: int, k: int, a: float, X: float) -> FiniteMechanism:
    """Exponential price mechanism with ``k`` demand levels.

    Allocation rises with own demand at rate ``1/rank`` (ties averaged over the
    tied ranks); payment ``X((1 + 1/a)**m_i - 1)`` depends only on own message.
    """
    if I < 1 or k < 1 or not a > 0 or not X > 0:
        raise MechanismError(f"need I >= 1, k >= 1, a > 0, X > 0; got I={I}, k={k}, a={a}, X={X}")
    q0 = _exponential_allocation(I, k)
    pay = X * _growth_powers(a, k)
    p0 = np.broadcast_to(pay.reshape((k + 1,) + (1,) * (I - 1)), (k + 1,) * I)
    q = np.stack([np.moveaxis(q0, 0, i) for i in range(I)])
    P = np.stack([np.moveaxis(p0, 0, i) for i in range(I)])
    return FiniteMechanism(q, P, symmetric=True,
                           meta={"kind": "exponential", "a": a, "X": X})


def generalized_two_buyer_tables(k: int, a: float, Y0: float, Y1: float):
    """Buyer-1 tables ``(Q, Pt)`` indexed ``[own, other]``."""
    inc = np.empty((k, k + 1))
    j, l = np.meshgrid(np.arange(k), np.arange(k + 1), indexing="ij")
    inc[:] = np.where(j < l, 2 * k + 1, np.where(j == l, 3 * k + 1, 4 * k + 1)) / (4.0 * k * k)
    inc[:, k] = 1.0 / (2 * k)
    Q = np.zeros((k + 1, k + 1))
    Q[1:] = np.cumsum(inc, axis=0)
    c = _growth_powers(a, k)
    Pt = np.empty((k + 1, k + 1))
    Pt[:, :k] = c[:, None] * (Y0 / 2.0)
    Pt[:, k] = c * (Y1 + c[k] * Y0 / 2.0)
    return Q, Pt


def build_generalized_two_buyer(k: int, a: float, Y0: float, Y1: float) -> FiniteMechanism:
    """Two-buyer mechanism whose virtual revenue depends only on how many
    buyers send the top message.

    Payments may be negative for some sign choices of ``Y0``/``Y1``; this is
    allowed and recorded in ``meta["negative_payments"]``.
    """
    if k < 1 or not a > 0:
        raise MechanismError(f"need k >= 1 and a > 0; got k={k}, a={a}")
    Q, Pt = generalized_two_buyer_tables(k, a, Y0, Y1)
    q = np.stack([Q, Q.T])
    P = np.stack([Pt, Pt.T])
    return FiniteMechanism(q, P, symmetric=True, meta={
        "kind": "generalized_two_buyer", "a": a, "Y0": Y0, "Y1": Y1,
        "negative_payments": bool(np.any(Pt < -TOL)),
    })


def build_posted_price(price: float) -> FiniteMechanism:
    if not 0.0 < price <= 1.0:
        raise MechanismError(f"price must lie in (0, 1], got {price}")
    return FiniteMechanism(np.array([[0.0, 1.0]]), np.array([[0.0, price]]),
                           symmetric=True, meta={"kind": "posted_price", "price": price})


def zero_mechanism(I: int, k: int) -> FiniteMechanism:
    shape = (I,) + (k + 1,) * I
    return FiniteMechanism(np.zeros(shape), np.zeros(shape), symmetric=True)


def utility(v: float, profile, i: int, mech: FiniteMechanism) -> float:
    """Buyer ``i``'s payoff ``v q_i(m) - P_i(m)`` (``i`` is 0-based)."""
    m = tuple(profile)
    return float(v * mech.q[(i,) + m] - mech.P[(i,) + m])


def _relabel(table: np.ndarray, sigma) -> np.ndarray:
    # T[m'] = table[m] with m_{sigma(j)} = m'_j
    return np.transpose(table, sigma)


def symmetrize(mech: FiniteMechanism) -> FiniteMechanism:
    """Average the mechanism over all relabelings of the buyers."""
    if len(set(mech.messages)) != 1:
        raise MechanismError("symmetrize needs equal message counts for all buyers")
    I = mech.buyers
    perms = list(itertools.permutations(range(I)))
    q = np.zeros_like(mech.q)
    P = np.zeros_like(mech.P)
    for sigma in perms:
        for i in range(I):
            q[i] += _relabel(mech.q[sigma[i]], sigma)
            P[i] += _relabel(mech.P[sigma[i]], sigma)
    q /= len(perms)
    P /= len(perms)
    return FiniteMechanism(q, P, symmetric=True, meta=dict(mech.meta))


def is_symmetric(mech: FiniteMechanism, tol: float = 1e-12) -> bool:
    """Whether buyer ``i``'s tables equal buyer 1's at the same own message and
    the same multiset of opponent messages."""
    if len(set(mech.messages)) != 1:
        return False
    I = mech.buyers
    for sigma in itertools.permutations(range(I)):
        for i in range(I):
            if not (np.allclose(_relabel(mech.q[sigma[i]], sigma), mech.q[i], rtol=0, atol=tol)
                    and np.allclose(_relabel(mech.P[sigma[i]], sigma), mech.P[i], rtol=0, atol=tol)):
                return False
    return True
