"""Identifiability of coefficient moments from the covariate support.

Whether the mean vector and covariance matrix of the random coefficients
can be recovered from first and second conditional moments of the response
is a property of the support geometry alone: three distinct points per
covariate suffice, two break it.  This module decides that question,
constructs witnessing point sets, and, for the broken (binary regressor)
case, computes the sharp interval of coefficient variances consistent with
everything that is still identified.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DimensionError,
    DomainError,
    ExplosionError,
    InfeasibleError,
    NotIdentifiableError,
)
from .halfvec import half_dim, min_eigenvalue, numeric_rank, v_transform_rows

__all__ = [
    "SupportSpec",
    "IdentReport",
    "PartialIdBlocks",
    "VarianceBounds",
    "Classification",
    "build_design_S",
    "cartesian_identifying_points",
    "check_identified",
    "binary_variance_interval",
    "correlation_for_variance",
    "mixed_moments_single_regressor",
    "assemble_covariance",
    "partial_id_bounds",
    "classify_randomness",
]


@dataclass(frozen=True)
class SupportSpec:
    """Finite per-covariate support sets (intercept excluded).

    ``supports[j]`` lists the distinct values covariate j+1 can take; the
    sets are normalized to sorted tuples.  An empty ``supports`` describes
    the intercept-only model.
    """

    supports: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        normalized = []
        for j, pts in enumerate(self.supports):
            pts = tuple(sorted(float(v) for v in pts))
            if len(pts) == 0:
                raise DomainError(f"coordinate {j + 1} has an empty support")
            if len(set(pts)) != len(pts):
                raise DomainError(f"coordinate {j + 1} has duplicated support points")
            normalized.append(pts)
        object.__setattr__(self, "supports", tuple(normalized))

    @property
    def p_minus_1(self) -> int:
        return len(self.supports)

    @property
    def p(self) -> int:
        """Number of coefficients including the intercept."""
        return len(self.supports) + 1


@dataclass(frozen=True)
class IdentReport:
    """Outcome of an identifiability check.

    ``identified`` holds exactly when ``achieved_rank == full_dim``.
    Coordinates in ``deficient_coordinates`` are 1-based covariate indices
    with fewer than three support points.
    """

    full_dim: int
    achieved_rank: int
    identified: bool
    witness_points: tuple[tuple[float, ...], ...]
    deficient_coordinates: tuple[int, ...]


class Classification(str, Enum):
    FORCED_ZERO = "FORCED_ZERO"
    FORCED_POSITIVE = "FORCED_POSITIVE"
    INTERVAL = "INTERVAL"


@dataclass(frozen=True)
class VarianceBounds:
    """Sharp lower/upper bounds on a coefficient's dispersion.

    :func:`binary_variance_interval` bounds the standard deviation;
    :func:`partial_id_bounds` bounds the variance itself.
    """

    lower: float
    upper: float
    classification: Classification


@dataclass(frozen=True)
class PartialIdBlocks:
    """Identified covariance pieces when one regressor is binary.

    With coefficients ordered (B0, B1, B2') and B1 attached to the binary
    regressor, the data pin down ``cov_b0_b2`` = Cov((B0, B2')'), the
    cross-covariances ``cov_b1_b2`` = Cov(B1; B2), and ``var_b0_plus_b1``
    = Var(B0 + B1); Var(B1) itself is free.
    """

    cov_b0_b2: np.ndarray
    cov_b1_b2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    var_b0_plus_b1: float = 0.0

    def __post_init__(self):
        C = np.asarray(self.cov_b0_b2, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
            raise DimensionError(f"cov_b0_b2 must be square, got shape {C.shape}")
        scale = max(1.0, float(np.max(np.abs(C))) if C.size else 1.0)
        if np.max(np.abs(C - C.T)) > 1e-12 * scale:
            raise DomainError("cov_b0_b2 is not symmetric")
        C = (C + C.T) / 2.0
        lam = min_eigenvalue(C)
        if lam < -1e-10:
            raise DomainError(
                f"cov_b0_b2 is not positive semidefinite (min eigenvalue {lam:.3e})"
            )
        r = np.asarray(self.cov_b1_b2, dtype=float).reshape(-1)
        if r.shape[0] != C.shape[0] - 1:
            raise DimensionError(
                f"cov_b1_b2 must have length {C.shape[0] - 1}, got {r.shape[0]}"
            )
        v = float(self.var_b0_plus_b1)
        if v < 0:
            raise DomainError(f"var_b0_plus_b1 must be nonnegative, got {v}")
        object.__setattr__(self, "cov_b0_b2", C)
        object.__setattr__(self, "cov_b1_b2", r)
        object.__setattr__(self, "var_b0_plus_b1", v)

    @property
    def p(self) -> int:
        """Total number of coefficients (B0, B1 and the B2 block)."""
        return self.cov_b0_b2.shape[0] + 1


def build_design_S(points) -> np.ndarray:
    """Design matrix with rows v((1, w')') over the given covariate points.

    ``points`` is a sequence of equal-length covariate vectors (length 0 is
    the intercept-only model); row order follows input order.  Full rank
    p(p+1)/2 of this matrix is exactly identifiability of the coefficient
    covariance matrix.
    """
    pts = [np.atleast_1d(np.asarray(w, dtype=float)).reshape(-1) for w in points]
    if len(pts) == 0:
        raise DimensionError("need at least one covariate point")
    q = pts[0].shape[0]
    if any(w.shape[0] != q for w in pts):
        raise DimensionError("covariate points have inconsistent dimensions")
    X = np.ones((len(pts), q + 1))
    if q:
        X[:, 1:] = np.vstack(pts)
    return v_transform_rows(X)


def cartesian_identifying_points(spec: SupportSpec) -> list[np.ndarray]:
    """p(p+1)/2 support points whose design matrix has full rank.

    Uses the first three (sorted) levels a_j < b_j < c_j of each coordinate
    and enumerates: one point per coordinate at its second level, the base
    point (all first levels), one point per coordinate pair at their second
    levels, and one point per coordinate at its third level.  All points lie
    in the Cartesian product of the supports.

    Raises
    ------
    NotIdentifiableError
        If some coordinate has fewer than three support points.
    """
    deficient = [j + 1 for j, pts in enumerate(spec.supports) if len(pts) < 3]
    if deficient:
        raise NotIdentifiableError(deficient)
    q = spec.p_minus_1
    base = np.array([pts[0] for pts in spec.supports])
    points = []
    for j in range(q):
        w = base.copy()
        w[j] = spec.supports[j][1]
        points.append(w)
    points.append(base.copy())
    for j in range(q):
        for k in range(j + 1, q):
            w = base.copy()
            w[j] = spec.supports[j][1]
            w[k] = spec.supports[k][1]
            points.append(w)
    for j in range(q):
        w = base.copy()
        w[j] = spec.supports[j][2]
        points.append(w)
    assert len(points) == half_dim(spec.p)
    return points


def check_identified(
    spec: SupportSpec,
    *,
    product_cap: int = 1_000_000,
    rank_tol: float = 1e-10,
) -> IdentReport:
    """Decide identifiability of the coefficient covariance from the support.

    If every coordinate has at least three points the witnessing set of
    :func:`cartesian_identifying_points` is used.  Otherwise the design
    matrix over the full Cartesian product is ranked, which reports how far
    from identification the support is and which coordinates are to blame.

    Raises
    ------
    ExplosionError
        If the Cartesian product exceeds ``product_cap`` points; subsample
        the supports and retry.
    """
    full_dim = half_dim(spec.p)
    deficient = tuple(j + 1 for j, pts in enumerate(spec.supports) if len(pts) < 3)
    if not deficient:
        points = cartesian_identifying_points(spec)
    else:
        size = math.prod(len(pts) for pts in spec.supports)
        if size > product_cap:
            raise ExplosionError(
                f"Cartesian support product has {size} points (cap {product_cap}); "
                "subsample the supports and retry"
            )
        points = [np.array(combo) for combo in itertools.product(*spec.supports)]
    S = build_design_S(points)
    rank = numeric_rank(S, rank_tol)
    return IdentReport(
        full_dim=full_dim,
        achieved_rank=rank,
        identified=rank == full_dim,
        witness_points=tuple(tuple(w.tolist()) for w in points),
        deficient_coordinates=deficient,
    )


def binary_variance_interval(s1: float, s2: float) -> VarianceBounds:
    """Bounds on the standard deviation of B1 when its regressor is binary.

    ``s1`` and ``s2`` are the identified standard deviations of B0 and of
    B0 + B1; every value in [|s1 - s2|, s1 + s2] is attainable.
    """
    s1, s2 = float(s1), float(s2)
    if s1 < 0 or s2 < 0:
        raise DomainError(f"standard deviations must be nonnegative, got ({s1}, {s2})")
    lower, upper = abs(s1 - s2), s1 + s2
    cls = Classification.FORCED_ZERO if upper == 0.0 else Classification.INTERVAL
    return VarianceBounds(lower=lower, upper=upper, classification=cls)


def correlation_for_variance(s1: float, s2: float, u: float) -> float:
    """Correlation of (B0, B1) that realizes standard deviation ``u`` for B1.

    Valid for ``u`` inside the admissible interval of
    :func:`binary_variance_interval`; the result always lies in [-1, 1].
    """
    s1, s2, u = float(s1), float(s2), float(u)
    if s1 <= 0:
        raise DomainError(f"s1 must be positive, got {s1}")
    if s2 < 0:
        raise DomainError(f"s2 must be nonnegative, got {s2}")
    if u <= 0:
        raise DomainError(f"u must be positive, got {u}")
    slack = 1e-12 * max(1.0, s1 + s2)
    if u < abs(s1 - s2) - slack or u > s1 + s2 + slack:
        raise DomainError(
            f"u={u} outside the admissible interval [{abs(s1 - s2)}, {s1 + s2}]"
        )
    rho = (s2 * s2 - s1 * s1 - u * u) / (2.0 * s1 * u)
    return float(min(1.0, max(-1.0, rho)))


def mixed_moments_single_regressor(support, cond_moments, order: int) -> np.ndarray:
    """Mixed coefficient moments of one order from conditional response moments.

    In the single-regressor model Y = B0 + w B1, the conditional moment
    E[Y^n | W = w] equals sum_k C(n, k) w^k E[B0^(n-k) B1^k].  Given the
    values of that moment at ``order + 1`` distinct support points, the
    binomial-weighted Vandermonde system is solved for the vector
    (E[B0^n], E[B0^(n-1) B1], ..., E[B1^n]).
    """
    w = np.asarray(support, dtype=float).reshape(-1)
    c = np.asarray(cond_moments, dtype=float).reshape(-1)
    n = int(order)
    if n < 0:
        raise DomainError(f"order must be nonnegative, got {n}")
    if w.shape[0] != n + 1 or c.shape[0] != n + 1:
        raise DimensionError(
            f"need {n + 1} support points and conditional moments, "
            f"got {w.shape[0]} and {c.shape[0]}"
        )
    if len(set(w.tolist())) != w.shape[0]:
        raise DomainError("duplicated support points make the system singular")
    V = np.array([[math.comb(n, k) * w_j**k for k in range(n + 1)] for w_j in w])
    m = np.linalg.solve(V, c)
    resid = float(np.linalg.norm(V @ m - c))
    if resid > 1e-8 * max(1.0, float(np.linalg.norm(c))):
        raise DomainError(
            f"support points too close to resolve order-{n} moments "
            f"(relative residual {resid:.3e})"
        )
    return m


def assemble_covariance(blocks: PartialIdBlocks, s: float) -> np.ndarray:
    """Full coefficient covariance matrix at candidate value s = Var(B1).

    Var(B0 + B1) pins Cov(B0, B1) = (var_b0_plus_b1 - Var(B0) - s) / 2, so
    the matrix is affine in s; it is a valid completion exactly when it is
    positive semidefinite.
    """
    p = blocks.p
    v0 = blocks.cov_b0_b2[0, 0]
    M = np.zeros((p, p))
    M[0, 0] = v0
    M[1, 1] = s
    M[0, 1] = M[1, 0] = (blocks.var_b0_plus_b1 - v0 - s) / 2.0
    if p > 2:
        M[0, 2:] = M[2:, 0] = blocks.cov_b0_b2[0, 1:]
        M[1, 2:] = M[2:, 1] = blocks.cov_b1_b2
        M[2:, 2:] = blocks.cov_b0_b2[1:, 1:]
    return M


def _feasibility_margin(blocks: PartialIdBlocks, s: float) -> float:
    return min_eigenvalue(assemble_covariance(blocks, s))


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def partial_id_bounds(blocks: PartialIdBlocks, tol: float = 1e-9) -> VarianceBounds:
    """Sharp bounds on Var(B1) over all PSD completions of the blocks.

    The feasible set in s is an interval because the PSD cone is convex and
    the assembled matrix is affine in s.  The smallest eigenvalue of that
    matrix is concave in s, so its maximizer is located by golden-section
    search and the two endpoints by bisection, each to absolute precision
    ``tol``.  A matrix counts as feasible when its smallest eigenvalue is
    >= -tol; endpoints below 10 * tol are reported as exactly zero.

    Raises
    ------
    InfeasibleError
        If no s >= 0 admits a PSD completion.
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    v0 = blocks.cov_b0_b2[0, 0]
    v01 = blocks.var_b0_plus_b1
    # PSD of the (B0, B1) principal minor already forces
    # s <= (sqrt(v0) + sqrt(v01))^2, so this bracket is always infeasible.
    s_hi = (math.sqrt(max(v0, 0.0)) + math.sqrt(v01)) ** 2 + 1.0

    best_s, best_f = 0.0, _feasibility_margin(blocks, 0.0)

    def margin(s: float) -> float:
        nonlocal best_s, best_f
        f = _feasibility_margin(blocks, s)
        if f > best_f:
            best_s, best_f = s, f
        return f

    f_lo, f_hi = best_f, margin(s_hi)
    lo, hi = 0.0, s_hi
    a, b = lo + (1 - _GOLDEN) * (hi - lo), lo + _GOLDEN * (hi - lo)
    f_a, f_b = margin(a), margin(b)
    while hi - lo > tol / 4.0:
        if f_a >= f_b:
            hi, b, f_b = b, a, f_a
            a = lo + (1 - _GOLDEN) * (hi - lo)
            f_a = margin(a)
        else:
            lo, a, f_a = a, b, f_b
            b = lo + _GOLDEN * (hi - lo)
            f_b = margin(b)
    if best_f < -tol:
        raise InfeasibleError(
            "no value of Var(B1) admits a PSD completion of the given blocks"
        )

    def bisect(feasible: float, infeasible: float) -> float:
        while abs(infeasible - feasible) > tol:
            mid = (feasible + infeasible) / 2.0
            if _feasibility_margin(blocks, mid) >= -tol:
                feasible = mid
            else:
                infeasible = mid
        return feasible

    lower = 0.0 if f_lo >= -tol else bisect(best_s, 0.0)
    upper = bisect(best_s, s_hi) if f_hi < -tol else s_hi
    lower, upper = max(lower, 0.0), max(upper, 0.0)
    if upper < 10.0 * tol:
        return VarianceBounds(0.0, 0.0, Classification.FORCED_ZERO)
    if lower > 10.0 * tol:
        return VarianceBounds(lower, upper, Classification.FORCED_POSITIVE)
    return VarianceBounds(lower, upper, Classification.INTERVAL)


def classify_randomness(blocks: PartialIdBlocks, tol: float = 1e-9) -> Classification:
    """Is B1 necessarily random, necessarily degenerate, or undecided?

    FORCED_POSITIVE when Var(B0) differs from Var(B0 + B1) beyond ``tol``
    or some cross-covariance with the B2 block is nonzero.  FORCED_ZERO
    when those all vanish and Cov((B0, B2')') is degenerate with a kernel
    vector whose first coordinate is nonzero.  Otherwise INTERVAL, with the
    attainable range available from :func:`partial_id_bounds`.
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    v0 = blocks.cov_b0_b2[0, 0]
    cross = blocks.cov_b1_b2
    if abs(v0 - blocks.var_b0_plus_b1) > tol or (
        cross.size and float(np.max(np.abs(cross))) > tol
    ):
        return Classification.FORCED_POSITIVE
    eigvals, eigvecs = np.linalg.eigh(blocks.cov_b0_b2)
    kernel_cut = max(tol, 1e-12 * max(1.0, float(eigvals[-1])))
    kernel = eigvecs[:, eigvals <= kernel_cut]
    if kernel.size and float(np.max(np.abs(kernel[0, :]))) > 1e-8:
        return Classification.FORCED_ZERO
    return Classification.INTERVAL
