"""Dense Gaussian primitives for the 4-state / 2-measurement linear model.

Every matrix "inverse" is taken through a Cholesky factor and triangular
solves. Densities are evaluated in the log domain and exponentiated at the
end. The batched helpers broadcast over leading axes so that a whole mixture
can be projected into measurement space in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a covariance that must be SPD fails to factorize."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        msg = f"{name} is not positive definite"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def cholesky(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of ``a`` (batched over leading axes)."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError(name, "non-finite entries")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(name, str(exc)) from exc


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def forward_substitute(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L y = b`` for lower-triangular ``L``.

    ``L`` has shape (..., d, d) and ``b`` shape (..., d); leading axes
    broadcast against each other.
    """
    d = L.shape[-1]
    shape = np.broadcast_shapes(L.shape[:-1], b.shape)
    y = np.empty(shape)
    y[..., 0] = b[..., 0] / L[..., 0, 0]
    for r in range(1, d):
        acc = np.einsum("...k,...k->...", L[..., r, :r], y[..., :r])
        y[..., r] = (b[..., r] - acc) / L[..., r, r]
    return y


def back_substitute_transposed(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L^T x = b`` for lower-triangular ``L`` (same broadcasting)."""
    d = L.shape[-1]
    shape = np.broadcast_shapes(L.shape[:-1], b.shape)
    x = np.empty(shape)
    x[..., d - 1] = b[..., d - 1] / L[..., d - 1, d - 1]
    for r in range(d - 2, -1, -1):
        acc = np.einsum("...k,...k->...", L[..., r + 1 :, r], x[..., r + 1 :])
        x[..., r] = (b[..., r] - acc) / L[..., r, r]
    return x


def cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) x = b`` for vector right-hand sides."""
    return back_substitute_transposed(L, forward_substitute(L, b))


def log_normalizer(L: np.ndarray) -> np.ndarray:
    """``-0.5 * log det(2 pi C)`` from the Cholesky factor of C."""
    d = L.shape[-1]
    diag = np.diagonal(L, axis1=-2, axis2=-1)
    return -np.sum(np.log(diag), axis=-1) - 0.5 * d * LOG_2PI


def mahalanobis_sq(diff: np.ndarray, L: np.ndarray) -> np.ndarray:
    y = forward_substitute(L, diff)
    return np.einsum("...k,...k->...", y, y)


def gaussian_logpdf(x, mean, cov, name: str = "covariance") -> float:
    x = np.asarray(x, dtype=float)
    L = cholesky(cov, name)
    return float(log_normalizer(L) - 0.5 * mahalanobis_sq(x - np.asarray(mean, dtype=float), L))


def gaussian_pdf(x, mean, cov, name: str = "covariance") -> float:
    """N(x; mean, cov) computed via a Cholesky solve in the log domain."""
    return float(np.exp(gaussian_logpdf(x, mean, cov, name)))


def logpdf_table(points: np.ndarray, means: np.ndarray, chols: np.ndarray,
                 lognorm: np.ndarray | None = None) -> np.ndarray:
    """Log densities of every point under every Gaussian.

    points (M, d), means (V, d), chols (V, d, d) -> (M, V).
    """
    if lognorm is None:
        lognorm = log_normalizer(chols)
    diff = points[:, None, :] - means[None, :, :]
    return lognorm[None, :] - 0.5 * mahalanobis_sq(diff, chols[None])


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted Gaussian term of an intensity."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f"component weight must be finite and >= 0, got {self.weight}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("component mean has non-finite entries")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean of size {mean.size}")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-9 * scale:
            raise ValueError("component covariance is not symmetric")
        cholesky(cov, "component covariance")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def innovation(means: np.ndarray, covs: np.ndarray, H: np.ndarray, R: np.ndarray):
    """Predicted measurements and innovation covariances, batched.

    Returns ``eta = H m`` (V, dz) and ``S = H P H^T + R`` (V, dz, dz).
    """
    eta = means @ H.T
    S = symmetrize(H @ covs @ H.T + R)
    return eta, S


def marginal_likelihood(z, comp: GaussianComponent, H, R) -> float:
    """q(z) = N(z; H m, R + H P H^T)."""
    H = np.asarray(H, dtype=float)
    eta, S = innovation(comp.mean[None], comp.cov[None], H, np.asarray(R, dtype=float))
    return gaussian_pdf(z, eta[0], S[0], name="innovation covariance")


def kalman_gains(covs: np.ndarray, H: np.ndarray, R: np.ndarray):
    """Batched gain and posterior covariance for a stack of priors.

    Returns ``(K, P_upd, S_chol)`` with ``K = P H^T S^-1`` obtained by
    Cholesky solves and ``P_upd = (I - K H) P`` re-symmetrized.
    """
    HP = H @ covs                                   # (V, dz, dx)
    S = symmetrize(HP @ H.T + R)
    L = cholesky(S, "innovation covariance")
    # S K^T = H P, solved column by column of H P
    HP_cols = np.swapaxes(HP, -1, -2)               # (V, dx, dz)
    Kt = cho_solve(L[:, None], HP_cols)             # (V, dx, dz) == K
    K = Kt
    eye = np.eye(covs.shape[-1])
    P_upd = symmetrize((eye - K @ H) @ covs)
    return K, P_upd, L


def kalman_gain(P, H, R):
    """Single-component gain: returns ``(K, P_upd)``."""
    P = np.asarray(P, dtype=float)
    K, P_upd, _ = kalman_gains(P[None], np.asarray(H, dtype=float), np.asarray(R, dtype=float))
    return K[0], P_upd[0]
