"""Transport discrepancy and empirical almost-firm-nonexpansiveness estimates.

The central quantity is the six-distance combination

    psi(x, x0, Fx, Fx0) = d^2(Fx, x) + d^2(Fx0, x0) + d^2(Fx, Fx0)
                          + d^2(x, x0) - d^2(Fx, x0) - d^2(x, Fx0)

which is nonnegative on CAT(0) spaces and, in inner-product spaces, equals
the squared difference of displacements ||(x - Fx) - (x0 - Fx0)||^2.

A mapping F is almost alpha-firmly nonexpansive with constant alpha and
violation eps when

    d^2(Fx, Fy) <= (1 + eps) d^2(x, y) - ((1 - alpha)/alpha) psi(x, y, Fx, Fy).

The estimators below compute, over a sampled pair region, the smallest
violation making that inequality hold pair by pair, and report the max.
This is a sampled lower bound on the true violation, never a certificate;
the sampling region travels with the report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import EuclideanSpace, Space, SpiderPoint, SpiderSpace
from .operators import Operator, OperatorFamily

__all__ = [
    "PairSampler",
    "BoxPairSampler",
    "GaussianPairSampler",
    "SpiderPairSampler",
    "RegularityReport",
    "transport_discrepancy",
    "psi_array",
    "psi_estimation_array",
    "estimate_violation",
    "estimate_violation_in_expectation",
    "fb_violation_bound",
    "dr_violation_bound",
    "check_hypomonotone",
    "check_submonotone",
]

# pairs closer than this are skipped: the defining inequalities degenerate
MIN_PAIR_DISTANCE = 1e-12


def psi_array(space: Space, X: np.ndarray, X0: np.ndarray, FX: np.ndarray, FX0: np.ndarray) -> np.ndarray:
    """Vectorized transport discrepancy over rows of packed point arrays."""
    d = space.pair_dist
    return (
        d(FX, X) ** 2
        + d(FX0, X0) ** 2
        + d(FX, FX0) ** 2
        + d(X, X0) ** 2
        - d(FX, X0) ** 2
        - d(X, FX0) ** 2
    )


def transport_discrepancy(space: Space, x, x0, Fx, Fx0) -> float:
    """psi of F at (x, x0) given the images Fx, Fx0."""
    X = space.pack([x])
    X0 = space.pack([x0])
    FX = space.pack([Fx])
    FX0 = space.pack([Fx0])
    return float(psi_array(space, X, X0, FX, FX0)[0])


def psi_estimation_array(space: Space, X: np.ndarray, X0: np.ndarray, FX: np.ndarray, FX0: np.ndarray) -> np.ndarray:
    """psi for the sampled estimators.

    In inner-product spaces the six-term combination equals the squared
    displacement difference ||(x - Fx) - (x0 - Fx0)||^2 identically; that
    representation is free of the cancellation noise the six distance
    squares accumulate, so the estimators use it there.  Elsewhere the
    definition applies directly.
    """
    if isinstance(space, EuclideanSpace):
        d = (X - FX) - (X0 - FX0)
        return np.sum((d * d.conj()).real, axis=1)
    return psi_array(space, X, X0, FX, FX0)


# ---------------------------------------------------------------------------
# pair samplers (the sampling region is configuration, and is reported)
# ---------------------------------------------------------------------------

class PairSampler:
    """Draws packed point-pair arrays from a declared region, reproducibly."""

    space: Space

    def pairs(self, n: int) -> tuple:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


def _rng(seed: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 0x5A17, salt)))


@dataclass(frozen=True)
class BoxPairSampler(PairSampler):
    """Uniform pairs from the axis box [low, high]^dim (complex: both parts)."""

    space: EuclideanSpace
    low: float
    high: float
    seed: int

    def pairs(self, n: int):
        gen = _rng(self.seed)
        shape = (2, n, self.space.dim)
        if self.space.complex_coords:
            re = gen.uniform(self.low, self.high, size=shape)
            im = gen.uniform(self.low, self.high, size=shape)
            pts = re + 1j * im
        else:
            pts = gen.uniform(self.low, self.high, size=shape)
        return pts[0], pts[1]

    def describe(self) -> str:
        return f"uniform box [{self.low}, {self.high}]^{self.space.dim} ({self.space.kind})"


@dataclass(frozen=True)
class GaussianPairSampler(PairSampler):
    """Pairs drawn as center + scale * standard normal perturbations."""

    space: EuclideanSpace
    center: np.ndarray
    scale: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "center", self.space.validate_point(self.center))

    def pairs(self, n: int):
        gen = _rng(self.seed)
        shape = (2, n, self.space.dim)
        if self.space.complex_coords:
            noise = gen.normal(size=shape) + 1j * gen.normal(size=shape)
        else:
            noise = gen.normal(size=shape)
        pts = self.center[None, None, :] + self.scale * noise
        return pts[0], pts[1]

    def describe(self) -> str:
        return f"gaussian around a center point, scale {self.scale} ({self.space.kind})"


@dataclass(frozen=True)
class SpiderPairSampler(PairSampler):
    """Uniform leg, uniform radius in [0, max_radius] on each side of the pair."""

    space: SpiderSpace
    max_radius: float
    seed: int

    def pairs(self, n: int):
        gen = _rng(self.seed)
        legs = gen.integers(0, self.space.legs, size=(2, n))
        radii = gen.uniform(0.0, self.max_radius, size=(2, n))
        A = self.space.pack(np.stack([legs[0], radii[0]], axis=1))
        B = self.space.pack(np.stack([legs[1], radii[1]], axis=1))
        return A, B

    def describe(self) -> str:
        return f"uniform legs x radius [0, {self.max_radius}] on {self.space.legs}-spider"


# ---------------------------------------------------------------------------
# violation estimation
# ---------------------------------------------------------------------------

@dataclass
class RegularityReport:
    """Sampled violation estimate for a fixed constant alpha."""

    alpha: float
    epsilon_hat: float
    worst_pair: tuple
    n_pairs: int
    n_used: int
    region: str

    def to_dict(self) -> dict:
        def _point(p):
            if isinstance(p, SpiderPoint):
                return [float(p.leg), p.radius]
            arr = np.asarray(p)
            if np.iscomplexobj(arr):
                return [[float(v.real), float(v.imag)] for v in arr]
            return [float(v) for v in np.atleast_1d(arr)]

        return {
            "alpha": self.alpha,
            "epsilon_hat": self.epsilon_hat,
            "n_pairs": self.n_pairs,
            "n_used": self.n_used,
            "region": self.region,
            "worst_pair": [_point(self.worst_pair[0]), _point(self.worst_pair[1])],
        }


def _check_alpha(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def _violation_from_arrays(space, A, B, d2F, psi, alpha, region, n_pairs) -> RegularityReport:
    d2 = space.pair_dist(A, B) ** 2
    keep = d2 >= MIN_PAIR_DISTANCE**2
    if not np.any(keep):
        raise ValueError("all sampled pairs are degenerate (coincident points)")
    ratio = (d2F[keep] + ((1.0 - alpha) / alpha) * psi[keep] - d2[keep]) / d2[keep]
    k = int(np.argmax(ratio))
    idx = np.flatnonzero(keep)[k]
    eps_hat = max(0.0, float(ratio[k]))
    worst = (space.unpack(A[idx : idx + 1])[0], space.unpack(B[idx : idx + 1])[0])
    return RegularityReport(
        alpha=alpha,
        epsilon_hat=eps_hat,
        worst_pair=worst,
        n_pairs=n_pairs,
        n_used=int(keep.sum()),
        region=region,
    )


def estimate_violation(op: Operator, alpha: float, sampler: PairSampler, n_pairs: int) -> RegularityReport:
    """Smallest sampled violation of the alpha-firm inequality for one operator."""
    _check_alpha(alpha)
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    A, B = sampler.pairs(n_pairs)
    space = op.space
    FA = op.apply(A)
    FB = op.apply(B)
    d2F = space.pair_dist(FA, FB) ** 2
    psi = psi_estimation_array(space, A, B, FA, FB)
    return _violation_from_arrays(space, A, B, d2F, psi, alpha, sampler.describe(), n_pairs)


def estimate_violation_in_expectation(
    family: OperatorFamily, alpha: float, sampler: PairSampler, n_pairs: int
) -> RegularityReport:
    """As estimate_violation, with exact index expectations over the weights."""
    _check_alpha(alpha)
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    A, B = sampler.pairs(n_pairs)
    space = family.space
    d2F = np.zeros(len(A))
    psi = np.zeros(len(A))
    for w, op in zip(family.weights, family.operators):
        if w == 0.0:
            continue
        FA = op.apply(A)
        FB = op.apply(B)
        d2F += w * space.pair_dist(FA, FB) ** 2
        psi += w * psi_estimation_array(space, A, B, FA, FB)
    return _violation_from_arrays(space, A, B, d2F, psi, alpha, sampler.describe(), n_pairs)


# ---------------------------------------------------------------------------
# closed-form violation bounds for the splitting schemes
# ---------------------------------------------------------------------------

def fb_violation_bound(t: float, L: float, tau_f: float, tau_g: float) -> float:
    """Forward-backward violation bound max{0, (1+2*tau_g)(1+t(2*tau_f+2*t*L^2)) - 1}."""
    if t <= 0 or L <= 0:
        raise ValueError("step and Lipschitz constant must be > 0")
    return max(0.0, (1.0 + 2.0 * tau_g) * (1.0 + t * (2.0 * tau_f + 2.0 * t * L * L)) - 1.0)


def dr_violation_bound(tau_f: float, tau_g: float) -> float:
    """Douglas-Rachford violation bound ((1+2*tau_g)(1+2*tau_f) - 1)/2, clamped at 0."""
    return max(0.0, 0.5 * ((1.0 + 2.0 * tau_g) * (1.0 + 2.0 * tau_f) - 1.0))


# ---------------------------------------------------------------------------
# sampled monotonicity constants
# ---------------------------------------------------------------------------

def check_hypomonotone(grad: Callable[[np.ndarray], np.ndarray], sampler: PairSampler, n_pairs: int) -> float:
    """Smallest tau with -tau ||x-y||^2 <= <grad x - grad y, x - y> on the sample.

    Negative values indicate strong monotonicity of the sampled gradient.
    """
    A, B = sampler.pairs(n_pairs)
    dx = A - B
    d2 = np.sum((dx * np.conj(dx)).real, axis=1)
    keep = d2 >= MIN_PAIR_DISTANCE**2
    gA = np.stack([np.asarray(grad(a)) for a in A[keep]])
    gB = np.stack([np.asarray(grad(b)) for b in B[keep]])
    inner = np.sum(((gA - gB) * np.conj(dx[keep])).real, axis=1)
    return float(np.max(-inner / d2[keep]))


def check_submonotone(resolvent: Operator, sampler: PairSampler, n_pairs: int) -> float:
    """Smallest tau_g making the resolvent's graph submonotonicity hold on the sample.

    With x+ = J(x), z = x - x+ (and likewise y+, w), the inequality is
    -(tau_g/2) ||x - y||^2 <= <z - w, x+ - y+>; the returned value is the
    sampled a(1/2)-firm violation of J.
    """
    A, B = sampler.pairs(n_pairs)
    Ap = resolvent.apply(A)
    Bp = resolvent.apply(B)
    dx = A - B
    d2 = np.sum((dx * np.conj(dx)).real, axis=1)
    keep = d2 >= MIN_PAIR_DISTANCE**2
    z = (A - Ap)[keep]
    w = (B - Bp)[keep]
    inner = np.sum(((z - w) * np.conj((Ap - Bp)[keep])).real, axis=1)
    return float(np.max(-2.0 * inner / d2[keep]))
