"""Closed-form domination thresholds for the multitype contact process.

Everything here is a pure function of its arguments and is evaluated in
64-bit floating point.  The two threshold functions use the
rationalized form ``lam = 2*C / (A + sqrt(D))`` of the smaller quadratic
root instead of ``(A - sqrt(D)) / 2``; the two are algebraically equal
but the former does not lose digits when ``A`` and ``sqrt(D)`` are close
(large ``c`` or large ``alpha``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterDomainError

__all__ = [
    "McpParams",
    "BromanParams",
    "GenericMcpRates",
    "lambda_bar_mcp",
    "lambda_bar_broman",
    "cpree_broman_params",
    "c_star",
    "sufficient_c_bound",
    "c_for_lambda_bar",
    "survival_sufficient",
    "LAMBDA_C_LITERATURE",
    "lambda_c_preset",
]


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0.0) or not math.isfinite(value):
        raise ParameterDomainError(f"{name} must be a finite positive number, got {value!r}")
    return value


def _dimension(dim) -> int:
    if isinstance(dim, bool) or int(dim) != dim or int(dim) < 1:
        raise ParameterDomainError(f"dim must be a positive integer, got {dim!r}")
    return int(dim)


@dataclass(frozen=True)
class McpParams:
    """The four-parameter family (beta, c, alpha, dim).

    Per-type rates are ``b2 = c*beta``, ``d2 = 1``, ``b1 = beta*alpha`` and
    ``d1 = alpha``.
    """

    beta: float
    c: float
    alpha: float
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "beta", _positive("beta", self.beta))
        object.__setattr__(self, "c", _positive("c", self.c))
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))
        object.__setattr__(self, "dim", _dimension(self.dim))

    @property
    def beta1(self) -> float:
        return self.beta * self.alpha

    @property
    def delta1(self) -> float:
        return self.alpha

    @property
    def beta2(self) -> float:
        return self.c * self.beta

    @property
    def delta2(self) -> float:
        return 1.0

    def rates(self) -> "GenericMcpRates":
        return GenericMcpRates(self.beta1, self.delta1, self.beta2, self.delta2, self.dim)


@dataclass(frozen=True)
class BromanParams:
    """Two-state modulated Poisson process.

    The background flips 0 -> 1 at rate ``gamma*p`` and 1 -> 0 at rate
    ``gamma*(1-p)``; arrivals occur at rate ``alpha0`` or ``alpha1``
    according to the background state.
    """

    alpha0: float
    alpha1: float
    gamma: float
    p: float

    def __post_init__(self):
        a0, a1, g, p = (float(v) for v in (self.alpha0, self.alpha1, self.gamma, self.p))
        if not all(math.isfinite(v) for v in (a0, a1, g, p)):
            raise ParameterDomainError("modulated-process parameters must be finite")
        if a0 < 0.0:
            raise ParameterDomainError(f"alpha0 must be >= 0, got {a0!r}")
        if a1 < a0:
            raise ParameterDomainError(f"alpha1 must be >= alpha0, got alpha1={a1!r} < alpha0={a0!r}")
        if not g > 0.0:
            raise ParameterDomainError(f"gamma must be > 0, got {g!r}")
        # p in {0, 1} degenerates the formula; excluded rather than guessed
        if not 0.0 < p < 1.0:
            raise ParameterDomainError(f"p must lie strictly inside (0, 1), got {p!r}")
        object.__setattr__(self, "alpha0", a0)
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "p", p)

    @property
    def rate_on(self) -> float:
        """Background rate 0 -> 1."""
        return self.gamma * self.p

    @property
    def rate_off(self) -> float:
        """Background rate 1 -> 0."""
        return self.gamma * (1.0 - self.p)

    @property
    def mean_rate(self) -> float:
        return self.p * self.alpha1 + (1.0 - self.p) * self.alpha0


@dataclass(frozen=True)
class GenericMcpRates:
    """Unnormalized MCP rates: births ``b1``, ``b2`` per neighbor, deaths ``d1``, ``d2``."""

    b1: float
    d1: float
    b2: float
    d2: float
    dim: int = 1

    def __post_init__(self):
        for name in ("b1", "d1", "b2", "d2"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0.0:
                raise ParameterDomainError(f"{name} must be a finite rate >= 0, got {v!r}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "dim", _dimension(self.dim))

    @classmethod
    def contact_process(cls, lam: float, dim: int = 1) -> "GenericMcpRates":
        """Rates for a standard contact process: arrows at ``lam``, deaths at 1."""
        lam = float(lam)
        if not math.isfinite(lam) or lam < 0.0:
            raise ParameterDomainError(f"lambda must be a finite rate >= 0, got {lam!r}")
        return cls(b1=lam, d1=0.0, b2=0.0, d2=1.0, dim=dim)


def lambda_bar_mcp(p: McpParams) -> float:
    """Largest contact-process birth rate dominated by type 2 of the MCP."""
    if not isinstance(p, McpParams):
        raise ParameterDomainError("lambda_bar_mcp expects McpParams")
    cb = p.c * p.beta
    env = p.alpha * (1.0 + 2.0 * p.dim * p.beta)
    disc = max((cb - env) ** 2 + 8.0 * p.dim * p.alpha * p.c * p.beta**2, 0.0)
    return 2.0 * cb * p.alpha / (cb + env + math.sqrt(disc))


def lambda_bar_broman(b: BromanParams) -> float:
    """Maximal Poisson rate dominated by the modulated counting process."""
    if not isinstance(b, BromanParams):
        raise ParameterDomainError("lambda_bar_broman expects BromanParams")
    a0, a1, g, p = b.alpha0, b.alpha1, b.gamma, b.p
    disc = max((a1 - a0 - g) ** 2 + 4.0 * g * (1.0 - p) * (a1 - a0), 0.0)
    prod = a0 * a1 + g * a0 + p * g * (a1 - a0)
    total = a1 + a0 + g + math.sqrt(disc)
    return 2.0 * prod / total


def cpree_broman_params(p: McpParams) -> BromanParams:
    """Modulated process seen by unblocked 2-arrows into one site."""
    k = 1.0 + 2.0 * p.dim * p.beta
    return BromanParams(alpha0=0.0, alpha1=p.c * p.beta, gamma=p.alpha * k, p=1.0 / k)


def c_for_lambda_bar(target: float, alpha: float, beta: float, dim: int) -> float:
    """Solve ``lambda_bar_mcp(beta, c, alpha, dim) == target`` for ``c``.

    Requires ``0 < target < alpha``; ``lambda_bar`` never reaches ``alpha``.
    """
    alpha, beta, dim = _positive("alpha", alpha), _positive("beta", beta), _dimension(dim)
    target = _positive("target", target)
    if not target < alpha:
        raise ParameterDomainError(
            f"no c reaches lambda_bar={target!r}: requires alpha > target, got alpha={alpha!r}"
        )
    return target * (alpha * (1.0 + 2.0 * dim * beta) - target) / (beta * (alpha - target))


def c_star(alpha: float, beta: float, dim: int) -> float:
    """Value of c at which lambda_bar equals the lower bound 1/(2d-1) on lambda_c."""
    alpha, beta, dim = _positive("alpha", alpha), _positive("beta", beta), _dimension(dim)
    m = 2 * dim - 1
    if not alpha * m > 1.0:
        raise ParameterDomainError(
            f"c_star requires alpha > 1/(2d-1) = {1.0 / m!r}, got alpha={alpha!r}"
        )
    return (alpha * (1.0 + 2.0 * dim * beta) * m - 1.0) / (beta * m * (alpha * m - 1.0))


def sufficient_c_bound(alpha: float, beta: float, dim: int) -> float:
    """Value of c above which lambda_bar exceeds the upper bound 2/d on lambda_c."""
    alpha, beta, dim = _positive("alpha", alpha), _positive("beta", beta), _dimension(dim)
    if not dim * alpha > 2.0:
        raise ParameterDomainError(f"requires alpha > 2/d = {2.0 / dim!r}, got alpha={alpha!r}")
    if not dim * beta > 2.0:
        raise ParameterDomainError(f"requires beta > 2/d = {2.0 / dim!r}, got beta={beta!r}")
    return 2.0 / (beta * dim) + 4.0 * dim * alpha / (dim * alpha - 2.0)


def survival_sufficient(p: McpParams, lambda_c_ref: float) -> bool:
    """True iff lambda_bar strictly exceeds the supplied critical-value reference."""
    lambda_c_ref = _positive("lambda_c_ref", lambda_c_ref)
    return lambda_bar_mcp(p) > lambda_c_ref


# External point estimates of the contact-process critical value (series
# expansions and simulation studies); not derived in this package.
LAMBDA_C_LITERATURE = {1: 1.6489, 2: 0.4122, 3: 0.2217}


def lambda_c_preset(name, dim: int) -> float:
    """Resolve a critical-value reference.

    ``lower`` is 1/(2d-1), ``upper`` is 2/d, ``literature`` is an external
    numeric estimate (d <= 3 only).  Anything else must parse as a
    positive number.
    """
    dim = _dimension(dim)
    if name == "lower":
        return 1.0 / (2 * dim - 1)
    if name == "upper":
        return 2.0 / dim
    if name == "literature":
        try:
            return LAMBDA_C_LITERATURE[dim]
        except KeyError:
            raise ParameterDomainError(f"no literature estimate of lambda_c stored for d={dim}") from None
    try:
        value = float(name)
    except (TypeError, ValueError):
        raise ParameterDomainError(
            f"lambda_c must be 'lower', 'upper', 'literature' or a number, got {name!r}"
        ) from None
    return _positive("lambda_c", value)
