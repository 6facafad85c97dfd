"""Two-stage moment estimation with adaptive-LASSO selection.

Stage one regresses the response on the covariates by ordinary least
squares.  Stage two regresses the squared residuals on the transformed
design ``v_transform_rows(X)``: their conditional mean is linear in the
half-vectorized coefficient covariance matrix, so a weighted-l1 fit selects
which variances and covariances are nonzero.  Weights come from an initial
least squares estimate (coordinates with weight 1/|initial|), the objective
being

    (1/n) ||y - X b||^2 + 2 * lam * sum_k |b_k| / |init_k| .

Coordinates whose initial estimate is exactly zero are excluded from the
optimization and fixed at zero; unpenalized coordinates (the intercept
variance by default) ignore their initial estimate entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    DomainError,
    SingularDesignError,
    SingularGramError,
    WitnessContradictionError,
)
from .halfvec import half_dim, min_eigenvalue, numeric_rank, unvec_half, v_transform_rows

__all__ = [
    "Dataset",
    "SecondStageDesign",
    "AdaLassoConfig",
    "LassoSolution",
    "MomentFit",
    "SandwichEstimate",
    "WitnessReport",
    "ols",
    "build_second_stage",
    "adaptive_lasso",
    "kkt_residual",
    "lambda_max",
    "lambda_path",
    "witness_check",
    "fit_moments",
    "select_means",
    "sandwich",
]

PSD_TOL = 1e-9


@dataclass(frozen=True)
class Dataset:
    """n observations of (Y, X) where X carries a leading intercept column."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise DimensionError(f"X must be 2-D, got shape {X.shape}")
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries"
            )
        if X.shape[0] < X.shape[1]:
            raise DimensionError(f"need n >= p, got n={X.shape[0]}, p={X.shape[1]}")
        if not np.all(X[:, 0] == 1.0):
            raise DomainError("first column of X must be identically one")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_covariates(cls, W, Y) -> "Dataset":
        """Build a dataset from raw covariates, prepending the intercept column."""
        W = np.asarray(W, dtype=float)
        if W.ndim != 2:
            raise DimensionError(f"W must be 2-D, got shape {W.shape}")
        X = np.concatenate([np.ones((W.shape[0], 1)), W], axis=1)
        return cls(X=X, Y=Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SecondStageDesign:
    """Squared first-stage residuals and the quadratic-form design."""

    ysig: np.ndarray
    xsig: np.ndarray


@dataclass
class AdaLassoConfig:
    """Weighted-l1 solver configuration.

    ``penalize_mask`` entries set to False mark unpenalized coordinates;
    None penalizes everything.  ``tol`` bounds both the largest coordinate
    change per sweep and the KKT residual at convergence; ``max_iter``
    counts full sweeps.
    """

    lam: float
    init: np.ndarray
    penalize_mask: np.ndarray | None = None
    tol: float = 1e-8
    max_iter: int = 100_000


@dataclass
class LassoSolution:
    beta: np.ndarray
    active_set: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    lam: float


@dataclass
class MomentFit:
    """Estimated first and second coefficient moments."""

    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    Sigma_hat: np.ndarray
    psd: bool
    lambda_used: float
    sigma_init: np.ndarray
    solution: LassoSolution


@dataclass
class SandwichEstimate:
    """Plug-in pieces of the selected coordinates' asymptotic covariance."""

    c_hat: np.ndarray
    b_hat: np.ndarray
    avar_s: np.ndarray
    active_set: np.ndarray


@dataclass
class WitnessReport:
    """Closed-form support certificate for one (lam, init, S) instance."""

    condition1: bool
    sign_match: bool
    beta_tilde: np.ndarray
    solution: LassoSolution | None = None


def ols(Y, X) -> np.ndarray:
    """Least squares coefficients; the design must have full column rank.

    Rank is judged from the singular values of the solve itself (relative
    threshold 1e-10, as in :func:`rcreg.halfvec.numeric_rank`).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(
            f"incompatible shapes X {X.shape}, Y {Y.shape} for least squares"
        )
    if X.shape[0] < X.shape[1]:
        raise SingularDesignError(
            f"design with shape {X.shape} is rank deficient; cannot solve"
        )
    beta, _, _, svals = np.linalg.lstsq(X, Y, rcond=None)
    if svals.size == 0 or np.count_nonzero(svals > 1e-10 * svals[0]) < X.shape[1]:
        raise SingularDesignError(
            f"design with shape {X.shape} is rank deficient; cannot solve"
        )
    return beta


def build_second_stage(data: Dataset, mu_hat) -> SecondStageDesign:
    """Squared residuals and row-wise transformed design for stage two."""
    mu_hat = np.asarray(mu_hat, dtype=float).reshape(-1)
    if mu_hat.shape[0] != data.p:
        raise DimensionError(
            f"mu_hat must have length {data.p}, got {mu_hat.shape[0]}"
        )
    resid = data.Y - data.X @ mu_hat
    return SecondStageDesign(ysig=resid * resid, xsig=v_transform_rows(data.X))


def _resolve_config(cfg: AdaLassoConfig, d: int):
    lam = float(cfg.lam)
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    if cfg.tol <= 0:
        raise DomainError(f"tol must be positive, got {cfg.tol}")
    init = np.asarray(cfg.init, dtype=float).reshape(-1)
    if init.shape[0] != d:
        raise DimensionError(f"init must have length {d}, got {init.shape[0]}")
    if cfg.penalize_mask is None:
        penalized = np.ones(d, dtype=bool)
    else:
        penalized = np.asarray(cfg.penalize_mask, dtype=bool).reshape(-1)
        if penalized.shape[0] != d:
            raise DimensionError(
                f"penalize_mask must have length {d}, got {penalized.shape[0]}"
            )
    excluded = penalized & (init == 0.0)
    # Threshold lam/|init| per penalized coordinate; excluded ones are fixed at 0.
    thr = np.zeros(d)
    active_pen = penalized & ~excluded
    thr[active_pen] = lam / np.abs(init[active_pen])
    return lam, thr, excluded


def _kkt_violation(grad, beta, thr, excluded) -> float:
    """Largest stationarity violation; ``grad`` is the raw gradient 2/n X'(Xb - y)."""
    worst = 0.0
    for k in range(beta.shape[0]):
        if excluded[k]:
            continue
        if thr[k] == 0.0:
            v = abs(grad[k])
        elif beta[k] != 0.0:
            v = abs(grad[k] + 2.0 * thr[k] * np.sign(beta[k]))
        else:
            v = max(0.0, abs(grad[k]) - 2.0 * thr[k])
        worst = max(worst, v)
    return worst


def kkt_residual(Y, X, beta, cfg: AdaLassoConfig) -> float:
    """Stationarity residual recomputed from the raw data.

    Independent of the solver's internal Gram bookkeeping; a converged
    solution satisfies ``kkt_residual <= cfg.tol`` up to round-off.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    _, thr, excluded = _resolve_config(cfg, X.shape[1])
    grad = (2.0 / X.shape[0]) * (X.T @ (X @ beta - Y))
    return _kkt_violation(grad, beta, thr, excluded)


def _violations(q, b, beta, thr, optimized):
    """Vectorized per-coordinate stationarity violation at the current iterate."""
    grad = 2.0 * (q - b)
    viol = np.zeros(beta.shape[0])
    pen = thr > 0.0
    act = beta != 0.0
    m = optimized & pen & act
    viol[m] = np.abs(grad[m] + 2.0 * thr[m] * np.sign(beta[m]))
    m = optimized & pen & ~act
    viol[m] = np.maximum(0.0, np.abs(grad[m]) - 2.0 * thr[m])
    m = optimized & ~pen
    viol[m] = np.abs(grad[m])
    return viol


def _cd_solve(G, b, yty, thr, excluded, tol, max_iter, beta0=None):
    """Cyclic coordinate descent on the Gram form of the weighted-l1 objective.

    Sweeps cycle over a working set (current nonzeros plus stationarity
    violators); once the working set is stationary, a full KKT screen either
    certifies convergence or enlarges the set.  One iteration is one sweep.
    """
    d = b.shape[0]
    beta = np.zeros(d) if beta0 is None else beta0.copy()
    beta[excluded] = 0.0
    optimized = ~excluded
    diag = np.diagonal(G).copy()
    q = G @ beta

    def objective():
        return yty - 2.0 * (b @ beta) + beta @ q + 2.0 * (thr @ np.abs(beta))

    prev_obj = objective()
    work = np.flatnonzero(
        optimized & ((beta != 0.0) | (_violations(q, b, beta, thr, optimized) > tol))
    )
    sweeps = 0
    converged = False
    kkt = np.inf
    while sweeps < max_iter:
        sweeps += 1
        max_delta = 0.0
        for k in work:
            c = diag[k]
            if c <= 0.0:
                continue
            rho = b[k] - q[k] + c * beta[k]
            t = thr[k]
            if t > 0.0:
                new = (np.sign(rho) * (abs(rho) - t) / c) if abs(rho) > t else 0.0
            else:
                new = rho / c
            delta = new - beta[k]
            if delta != 0.0:
                beta[k] = new
                q += G[:, k] * delta
                max_delta = max(max_delta, abs(delta))
        q = G @ beta  # fresh product kills incremental drift
        obj = objective()
        assert obj <= prev_obj + 1e-9 * max(1.0, abs(prev_obj)), (
            f"objective increased across a sweep: {prev_obj} -> {obj}"
        )
        prev_obj = obj
        if max_delta < tol:
            viol = _violations(q, b, beta, thr, optimized)
            kkt = float(viol.max()) if viol.size else 0.0
            if kkt <= tol:
                converged = True
                break
            work = np.flatnonzero(optimized & ((beta != 0.0) | (viol > tol)))
    if not converged:
        kkt = _kkt_violation(2.0 * (G @ beta - b), beta, thr, excluded)
    return beta, kkt, sweeps, converged


def adaptive_lasso(Y, X, cfg: AdaLassoConfig, beta0=None) -> LassoSolution:
    """Weighted-l1 least squares by cyclic coordinate descent.

    Minimizes (1/n)||Y - X b||^2 + 2 lam sum_k |b_k| / |cfg.init_k| over the
    coordinates not excluded by a zero initial estimate.  Hitting
    ``max_iter`` returns the best iterate with ``converged=False`` rather
    than raising.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(
            f"incompatible shapes X {X.shape}, Y {Y.shape} for the lasso solver"
        )
    n = X.shape[0]
    lam, thr, excluded = _resolve_config(cfg, X.shape[1])
    G = (X.T @ X) / n
    b = (X.T @ Y) / n
    yty = float(Y @ Y) / n
    beta, kkt, sweeps, converged = _cd_solve(
        G, b, yty, thr, excluded, cfg.tol, cfg.max_iter, beta0=beta0
    )
    return LassoSolution(
        beta=beta,
        active_set=np.flatnonzero(beta != 0.0),
        kkt_residual=kkt,
        iterations=sweeps,
        converged=converged,
        lam=lam,
    )


def lambda_max(Y, X, init, penalize_mask=None) -> float:
    """Smallest penalty level at which every penalized coordinate is zero.

    At that solution the unpenalized coordinates take their restricted
    least squares values, so the threshold is the largest weighted gradient
    of the penalized coordinates against that restricted residual.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    _, _, excluded = _resolve_config(
        AdaLassoConfig(lam=0.0, init=init, penalize_mask=penalize_mask), X.shape[1]
    )
    init = np.asarray(init, dtype=float).reshape(-1)
    if penalize_mask is None:
        penalized = np.ones(X.shape[1], dtype=bool)
    else:
        penalized = np.asarray(penalize_mask, dtype=bool).reshape(-1)
    free = ~penalized
    if free.any():
        coef, *_ = np.linalg.lstsq(X[:, free], Y, rcond=None)
        resid = Y - X[:, free] @ coef
    else:
        resid = Y
    scored = penalized & ~excluded
    if not scored.any():
        return 0.0
    grads = np.abs(X[:, scored].T @ resid) / X.shape[0]
    return float(np.max(np.abs(init[scored]) * grads))


def lambda_path(Y, X, cfg: AdaLassoConfig, grid) -> list[LassoSolution]:
    """Warm-started solutions along a descending grid of penalty levels."""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise DimensionError("lambda grid must be nonempty")
    if np.any(np.diff(grid) > 0):
        raise DomainError("lambda grid must be sorted in descending order")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    n = X.shape[0]
    G = (X.T @ X) / n
    b = (X.T @ Y) / n
    yty = float(Y @ Y) / n
    solutions = []
    warm = None
    for lam in grid:
        _, thr, excluded = _resolve_config(
            AdaLassoConfig(
                lam=lam, init=cfg.init, penalize_mask=cfg.penalize_mask,
                tol=cfg.tol, max_iter=cfg.max_iter,
            ),
            X.shape[1],
        )
        beta, kkt, sweeps, converged = _cd_solve(
            G, b, yty, thr, excluded, cfg.tol, cfg.max_iter, beta0=warm
        )
        warm = beta
        solutions.append(
            LassoSolution(
                beta=beta,
                active_set=np.flatnonzero(beta != 0.0),
                kkt_residual=kkt,
                iterations=sweeps,
                converged=converged,
                lam=float(lam),
            )
        )
    return solutions


def witness_check(X, Y, S, lam, init, beta_star=None, agreement_tol=1e-6) -> WitnessReport:
    """Certify exact support recovery of the weighted-l1 solution on S.

    Evaluates the closed-form candidate restricted to S together with the
    strict dual feasibility condition on the complement.  In simulation
    mode (``beta_star`` given, supported on S) the noise is Y - X beta_star
    and signs come from the truth; otherwise both are taken from the
    restricted least squares fit.  When the certificate holds, the solver is
    run and must agree with the closed form within ``agreement_tol``.

    Raises
    ------
    WitnessContradictionError
        If the certificate holds but the solver solution differs; this
        indicates a solver defect.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    n, p = X.shape
    S = np.asarray(S, dtype=int).reshape(-1)
    if S.size > n:
        raise DimensionError(f"|S|={S.size} exceeds the sample size {n}")
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    init = np.asarray(init, dtype=float).reshape(-1)
    if init.shape[0] != p:
        raise DimensionError(f"init must have length {p}, got {init.shape[0]}")
    if np.any(init[S] == 0.0):
        raise DomainError("initial estimate vanishes on the candidate support")
    mask = np.zeros(p, dtype=bool)
    mask[S] = True
    Sc = np.flatnonzero(~mask)
    Xs = X[:, S]
    if numeric_rank(Xs) < S.size:
        raise SingularDesignError("design restricted to S is rank deficient")

    Gs = Xs.T @ Xs
    if beta_star is not None:
        beta_star = np.asarray(beta_star, dtype=float).reshape(-1)
        if beta_star.shape[0] != p:
            raise DimensionError(
                f"beta_star must have length {p}, got {beta_star.shape[0]}"
            )
        if np.any(beta_star[Sc] != 0.0):
            raise DomainError("beta_star must be supported on S")
        if np.any(beta_star[S] == 0.0):
            raise DomainError("beta_star must be nonzero on S")
        target = beta_star[S]
        eps = Y - Xs @ target
    else:
        target = np.linalg.solve(Gs, Xs.T @ Y)
        eps = Y - Xs @ target
    signs = np.sign(target)

    weighted_signs = lam * signs / np.abs(init[S])
    correction = np.linalg.solve(Gs / n, (Xs.T @ eps) / n - weighted_signs)
    beta_tilde = target + correction

    proj_eps = eps - Xs @ np.linalg.solve(Gs, Xs.T @ eps)
    lhs = X[:, Sc].T @ Xs @ np.linalg.solve(Gs, weighted_signs) + (X[:, Sc].T @ proj_eps) / n
    checked = init[Sc] != 0.0
    rhs = np.full(Sc.shape[0], np.inf)
    rhs[checked] = lam / np.abs(init[Sc][checked])
    condition1 = bool(np.all(np.abs(lhs) < rhs))
    sign_match = bool(np.all(np.sign(beta_tilde) == signs) and np.all(signs != 0.0))

    solution = None
    if condition1 and sign_match:
        solution = adaptive_lasso(Y, X, AdaLassoConfig(lam=lam, init=init))
        off_support_zero = bool(np.all(solution.beta[Sc] == 0.0))
        agrees = bool(np.max(np.abs(solution.beta[S] - beta_tilde)) <= agreement_tol)
        if not (off_support_zero and agrees):
            raise WitnessContradictionError(
                "certificate holds but the solver solution disagrees with the "
                "closed form"
            )
    return WitnessReport(
        condition1=condition1,
        sign_match=sign_match,
        beta_tilde=beta_tilde,
        solution=solution,
    )


def fit_moments(
    data: Dataset,
    lambda_sigma: float,
    penalize_intercept_variance: bool = False,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> MomentFit:
    """Full two-stage pipeline: means by OLS, covariance entries by adaptive lasso.

    The intercept-variance coordinate (position 0 of the half-vector) is
    left unpenalized unless requested otherwise: the intercept coefficient
    soaks up any additive error term, so shrinking its variance to zero is
    rarely wanted.
    """
    d = half_dim(data.p)
    if data.n < d:
        raise SingularDesignError(
            f"second stage needs n >= p(p+1)/2 = {d} observations, got {data.n}; "
            "no pseudo-inverse fallback is provided, collect more data or drop "
            "covariates"
        )
    mu_hat = ols(data.Y, data.X)
    stage2 = build_second_stage(data, mu_hat)
    sigma_init = ols(stage2.ysig, stage2.xsig)
    mask = np.ones(d, dtype=bool)
    if not penalize_intercept_variance:
        mask[0] = False
    sol = adaptive_lasso(
        stage2.ysig,
        stage2.xsig,
        AdaLassoConfig(
            lam=lambda_sigma, init=sigma_init, penalize_mask=mask,
            tol=tol, max_iter=max_iter,
        ),
    )
    Sigma_hat = unvec_half(sol.beta, data.p)
    return MomentFit(
        mu_hat=mu_hat,
        sigma_hat=sol.beta,
        Sigma_hat=Sigma_hat,
        psd=bool(min_eigenvalue(Sigma_hat) >= -PSD_TOL),
        lambda_used=float(lambda_sigma),
        sigma_init=sigma_init,
        solution=sol,
    )


def select_means(
    data: Dataset,
    lambda_mu: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> LassoSolution:
    """Adaptive-lasso selection of the coefficient means (intercept unpenalized)."""
    init = ols(data.Y, data.X)
    mask = np.ones(data.p, dtype=bool)
    mask[0] = False
    return adaptive_lasso(
        data.Y,
        data.X,
        AdaLassoConfig(
            lam=lambda_mu, init=init, penalize_mask=mask, tol=tol, max_iter=max_iter
        ),
    )


def sandwich(data: Dataset, fit: MomentFit) -> SandwichEstimate:
    """Plug-in sandwich covariance of the selected covariance coordinates.

    The outer matrix is the empirical Gram of the transformed design; the
    middle matrix reweights it by squared second-stage residuals, whose
    conditional mean matches the heteroscedastic noise level row by row.
    The reported block inverts the Gram restricted to the active set, which
    is the limit law of the selected coordinates.  Treat the output as a
    diagnostic: it ignores selection uncertainty, so it is not a basis for
    formal inference.
    """
    xsig = v_transform_rows(data.X)
    n = data.n
    c_hat = (xsig.T @ xsig) / n
    c_hat = (c_hat + c_hat.T) / 2.0
    resid1 = data.Y - data.X @ fit.mu_hat
    omega = (resid1 * resid1 - xsig @ fit.sigma_hat) ** 2
    b_hat = (xsig * omega[:, None]).T @ xsig / n
    b_hat = (b_hat + b_hat.T) / 2.0
    S = fit.solution.active_set
    if S.size == 0:
        return SandwichEstimate(
            c_hat=c_hat, b_hat=b_hat, avar_s=np.zeros((0, 0)), active_set=S
        )
    Css = c_hat[np.ix_(S, S)]
    if numeric_rank(Css) < S.size:
        raise SingularGramError(
            "Gram matrix restricted to the active set is numerically singular"
        )
    inner = np.linalg.solve(Css, b_hat[np.ix_(S, S)])
    avar = np.linalg.solve(Css, inner.T).T
    avar = (avar + avar.T) / 2.0
    return SandwichEstimate(c_hat=c_hat, b_hat=b_hat, avar_s=avar, active_set=S)
