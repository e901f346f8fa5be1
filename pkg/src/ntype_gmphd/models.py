"""Linear-Gaussian motion/measurement models, detection profile, clutter and birth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import GaussianComponent, cholesky


class ParameterError(ValueError):
    """Invalid model parameter."""


@dataclass(frozen=True)
class MotionModel:
    F: np.ndarray
    Q: np.ndarray
    dt: float
    sigma_v: float
    p_survive: float


def make_cv_motion(dt: float, sigma_v: float, p_survive: float = 0.99) -> MotionModel:
    """Constant-velocity model on [px, py, vx, vy] with white-acceleration noise."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if sigma_v < 0:
        raise ParameterError(f"sigma_v must be >= 0, got {sigma_v}")
    if not 0.0 <= p_survive <= 1.0:
        raise ParameterError(f"p_survive must lie in [0, 1], got {p_survive}")
    I2 = np.eye(2)
    F = np.block([[I2, dt * I2], [np.zeros((2, 2)), I2]])
    Q = sigma_v ** 2 * np.block([
        [dt ** 4 / 4 * I2, dt ** 3 / 2 * I2],
        [dt ** 3 / 2 * I2, dt ** 2 * I2],
    ])
    return MotionModel(F=F, Q=Q, dt=float(dt), sigma_v=float(sigma_v), p_survive=float(p_survive))


@dataclass(frozen=True)
class MeasurementModel:
    H: np.ndarray
    R: np.ndarray
    sigma_r: float


def make_position_measurement(sigma_r: float) -> MeasurementModel:
    if not sigma_r > 0:
        raise ParameterError(f"sigma_r must be > 0, got {sigma_r}")
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    return MeasurementModel(H=H, R=sigma_r ** 2 * np.eye(2), sigma_r=float(sigma_r))


@dataclass(frozen=True)
class DetectionProfile:
    """Detection/confusion probabilities.

    ``p_detect[j, i]`` is the probability that detector ``j`` fires on a
    target of type ``i`` (0-based). The diagonal holds true detections.
    """

    p_detect: np.ndarray

    def __post_init__(self):
        p = np.array(self.p_detect, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ParameterError(f"detection matrix must be square, got shape {p.shape}")
        if p.shape[0] < 2:
            raise ParameterError("need at least two target types")
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ParameterError("detection probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p_detect", p)

    @property
    def n_types(self) -> int:
        return self.p_detect.shape[0]

    def p_true(self, i: int) -> float:
        return float(self.p_detect[i, i])

    def without_confusion(self) -> "DetectionProfile":
        return DetectionProfile(np.diag(np.diag(self.p_detect)))

    def with_confusion(self, level: float) -> "DetectionProfile":
        p = np.full(self.p_detect.shape, float(level))
        np.fill_diagonal(p, np.diag(self.p_detect))
        return DetectionProfile(p)

    @property
    def has_confusion(self) -> bool:
        off = self.p_detect[~np.eye(self.n_types, dtype=bool)]
        return bool(np.any(off > 0))


@dataclass(frozen=True)
class ClutterModel:
    """Uniform Poisson clutter on an axis-aligned rectangle."""

    lambda_per_detector: float
    region: tuple[tuple[float, float], tuple[float, float]] = ((-1000.0, 1000.0), (-1000.0, 1000.0))
    poisson: bool = True

    def __post_init__(self):
        (x0, x1), (y0, y1) = self.region
        if not (x1 > x0 and y1 > y0):
            raise ParameterError(f"degenerate surveillance region {self.region}")
        if self.lambda_per_detector < 0:
            raise ParameterError("clutter rate must be >= 0")
        object.__setattr__(self, "region", ((float(x0), float(x1)), (float(y0), float(y1))))

    @property
    def area(self) -> float:
        (x0, x1), (y0, y1) = self.region
        return (x1 - x0) * (y1 - y0)

    @property
    def density(self) -> float:
        return 1.0 / self.area

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        (x0, x1), (y0, y1) = self.region
        return (z[:, 0] >= x0) & (z[:, 0] <= x1) & (z[:, 1] >= y0) & (z[:, 1] <= y1)

    def intensity(self, z: np.ndarray) -> np.ndarray:
        """Scene clutter intensity lambda * c(z) at each row of ``z``."""
        inside = self.contains(z)
        return np.where(inside, self.lambda_per_detector * self.density, 0.0)


@dataclass(frozen=True)
class BirthModel:
    weight_per_component: float = 3e-6
    birth_cov: np.ndarray = field(default_factory=lambda: np.diag([200.0, 200.0, 100.0, 100.0]))

    def __post_init__(self):
        if not self.weight_per_component > 0:
            raise ParameterError("birth weight must be > 0")
        cov = np.asarray(self.birth_cov, dtype=float)
        cholesky(cov, "birth covariance")
        object.__setattr__(self, "birth_cov", cov)


def birth_from_measurements(frame_measurements, birth: BirthModel) -> list[GaussianComponent]:
    """One zero-velocity birth component per measurement."""
    return [
        GaussianComponent(
            weight=birth.weight_per_component,
            mean=np.array([z[0], z[1], 0.0, 0.0], dtype=float),
            cov=birth.birth_cov.copy(),
        )
        for z in frame_measurements
    ]
