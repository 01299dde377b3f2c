"""Service-level mathematics for stations modelled as M/M/s queues.

A station with k charging posts and aggregate offered load rho = lambda/mu
meets the service level alpha (probability that an arriving vehicle finds at
most b others waiting) exactly when

    L(k, b, rho) >= 1 / (1 - alpha),

where L is a strictly decreasing function of rho.  Inverting L at equality
gives one utilisation threshold per post count; those thresholds are what the
expansion model's congestion rows consume.  This module also provides the
plain M/M/s steady-state measures used to audit solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MAX_POSTS = 30  # factorials held as floats; larger server counts are rejected

_FACT = [float(math.factorial(k)) for k in range(MAX_POSTS + 1)]
_LOG_OVERFLOW = 700.0  # exp() overflows just above this


class QueueDomainError(ValueError):
    """An argument lies outside the supported queueing domain."""


class RootBracketError(RuntimeError):
    """Bracket expansion for a utilisation threshold failed to find a sign change."""


@dataclass(frozen=True)
class QueueConfig:
    """Service parameters shared by every station: rate per post, level, queue cap."""

    mu: float
    alpha: float
    b: int

    def __post_init__(self) -> None:
        if self.mu <= 0:
            raise QueueDomainError(f"service rate mu must be positive, got {self.mu}")
        if not 0.0 < self.alpha < 1.0:
            raise QueueDomainError(f"service level alpha must be in (0,1), got {self.alpha}")
        if self.b < 0:
            raise QueueDomainError(f"queue threshold b must be nonnegative, got {self.b}")


@dataclass(frozen=True)
class RhoTable:
    """Utilisation thresholds rho_{alpha,k}; entry k (1-based) is for k posts."""

    alpha: float
    b: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        prev = 0.0
        for k, v in enumerate(self.values, start=1):
            if v <= prev:
                raise QueueDomainError(
                    f"rho thresholds must increase strictly with post count; "
                    f"entry {k} is {v} after {prev}"
                )
            prev = v

    def __len__(self) -> int:
        return len(self.values)

    def cap(self, k: int) -> float:
        """Threshold for k posts (k >= 1); 0.0 for a closed station."""
        if k == 0:
            return 0.0
        return self.values[k - 1]


@dataclass(frozen=True)
class QueueMeasures:
    """Steady-state measures of one station: waiting time in hours, queue length,
    empty-system probability, P(queue <= b), and a stability flag."""

    wq: float
    lq: float
    p0: float
    p_le_b: float
    stable: bool


def service_level_lhs(m: int, b: int, rho: float) -> float:
    """Evaluate L(m, b, rho) = sum_{k=0}^{m-1} ((m-k) m! m^b / k!) rho^-(m+b+1-k).

    Strictly decreasing in rho; the service-level condition is
    L(m, b, rho) >= 1/(1-alpha).  Terms are evaluated in log space so very
    small rho just returns inf instead of overflowing.
    """
    if m < 1:
        raise QueueDomainError(f"need at least one server, got m={m}")
    if m > MAX_POSTS:
        raise QueueDomainError(f"server count {m} exceeds supported maximum {MAX_POSTS}")
    if b < 0:
        raise QueueDomainError(f"queue threshold b must be nonnegative, got {b}")
    if rho <= 0:
        raise QueueDomainError(f"offered load rho must be positive, got {rho}")
    log_rho = math.log(rho)
    log_mfact = math.log(_FACT[m])
    log_mb = b * math.log(m)
    total = 0.0
    for k in range(m):
        log_term = (
            math.log(m - k)
            + log_mfact
            + log_mb
            - math.log(_FACT[k])
            - (m + b + 1 - k) * log_rho
        )
        if log_term > _LOG_OVERFLOW:
            return math.inf
        total += math.exp(log_term)
    return total


def rho_alpha(m: int, b: int, alpha: float, tol: float = 1e-10) -> float:
    """Largest admissible load rho with m posts: the root of L(m,b,rho) = 1/(1-alpha).

    Bisection on an expanding bracket [1e-9, m]; the upper end doubles until L
    drops below the target (L(m,b,m) = 1 < 1/(1-alpha), so expansion is a
    safety net, not the common path).  Terminates when |L - target| <= tol*target.
    """
    if not 0.0 < alpha < 1.0:
        raise QueueDomainError(f"alpha must be in (0,1), got {alpha}")
    if tol <= 0:
        raise QueueDomainError(f"tolerance must be positive, got {tol}")
    target = 1.0 / (1.0 - alpha)
    lo = 1e-9
    hi = float(m)
    limit = (2.0**40) * m
    while service_level_lhs(m, b, hi) > target:
        hi *= 2.0
        if hi > limit:
            raise RootBracketError(
                f"no sign change below rho={limit} for m={m}, b={b}, alpha={alpha}"
            )
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        val = service_level_lhs(m, b, mid)
        if abs(val - target) <= tol * target:
            return mid
        if val > target:
            lo = mid
        else:
            hi = mid
    raise RootBracketError(
        f"bisection failed to reach tolerance {tol} for m={m}, b={b}, alpha={alpha}"
    )


def rho_alpha_table(M: int, b: int, alpha: float, tol: float = 1e-10) -> RhoTable:
    """Thresholds rho_{alpha,k} for k = 1..M (RhoTable checks strict monotonicity)."""
    if M < 1:
        raise QueueDomainError(f"table needs at least one entry, got M={M}")
    values = tuple(rho_alpha(k, b, alpha, tol) for k in range(1, M + 1))
    return RhoTable(alpha=alpha, b=b, values=values)


def mms_measures(lam: float, mu: float, s: int, b: int) -> QueueMeasures:
    """Steady-state M/M/s measures at arrival rate lam, with queue threshold b.

    Returns Wq in hours (0 when lam = 0), Lq, P0, and P(queue <= b) =
    P(N <= s+b).  An overloaded station (lam/mu >= s) is flagged unstable with
    infinite waiting measures and zero-probability placeholders.
    """
    if mu <= 0:
        raise QueueDomainError(f"service rate mu must be positive, got {mu}")
    if s < 1:
        raise QueueDomainError(f"need at least one server, got s={s}")
    if s > MAX_POSTS:
        raise QueueDomainError(f"server count {s} exceeds supported maximum {MAX_POSTS}")
    if lam < 0:
        raise QueueDomainError(f"arrival rate must be nonnegative, got {lam}")
    if b < 0:
        raise QueueDomainError(f"queue threshold b must be nonnegative, got {b}")
    if lam == 0.0:
        return QueueMeasures(wq=0.0, lq=0.0, p0=1.0, p_le_b=1.0, stable=True)
    a = lam / mu
    util = a / s
    if util >= 1.0:
        return QueueMeasures(wq=math.inf, lq=math.inf, p0=0.0, p_le_b=0.0, stable=False)
    inv_p0 = math.fsum(a**k / _FACT[k] for k in range(s)) + a**s / (_FACT[s] * (1.0 - util))
    p0 = 1.0 / inv_p0
    erlang_c = a**s / (_FACT[s] * (1.0 - util)) * p0  # P(all servers busy)
    lq = erlang_c * util / (1.0 - util)
    wq = lq / lam
    p_le_b = 1.0 - erlang_c * util ** (b + 1)
    return QueueMeasures(wq=wq, lq=lq, p0=p0, p_le_b=min(p_le_b, 1.0), stable=True)
