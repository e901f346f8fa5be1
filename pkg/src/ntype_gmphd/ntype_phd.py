"""Gaussian-mixture N-type PHD recursion.

Each target type keeps its own mixture. During the update of type ``i`` the
predicted mixtures of every other type are projected into measurement space
and enter the weight denominator as confusion clutter, next to the uniform
scene clutter. Running the same recursion with a detection profile whose
off-diagonal entries are zero gives N independent GM-PHD filters.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .gaussian import (
    GaussianComponent,
    cholesky,
    innovation,
    kalman_gains,
    log_normalizer,
    logpdf_table,
    mahalanobis_sq,
    symmetrize,
)
from .models import (
    BirthModel,
    ClutterModel,
    DetectionProfile,
    MeasurementModel,
    MotionModel,
    ParameterError,
)

# Rough flop costs for the 4-state / 2-measurement model, used only for
# complexity bookkeeping.
PROJECT_FLOPS = 60        # H P H^T + R, 2x2 Cholesky, log-det
GAIN_FLOPS = 120          # K = P H^T S^-1 and (I - K H) P
PAIR_LIKELIHOOD_FLOPS = 14  # innovation, triangular solve, square, exp
PAIR_UPDATE_FLOPS = 19    # K nu mean shift and weight scaling
_PAIRWISE_LIMIT = 256


class SequencingError(ValueError):
    """A frame was fed out of order."""


@dataclass
class OpCounter:
    """Accumulates flop estimates for the update stage."""

    update_flops: int = 0
    confusion_flops: int = 0
    likelihood_evals: int = 0
    confusion_evals: int = 0

    @property
    def total_update_flops(self) -> int:
        return self.update_flops + self.confusion_flops


@dataclass(frozen=True)
class TypedIntensity:
    """Gaussian mixture for one target type, stored as stacked arrays."""

    type_id: int
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        m = np.asarray(self.means, dtype=float).reshape(len(w), 4)
        P = np.asarray(self.covs, dtype=float).reshape(len(w), 4, 4)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", P)

    @classmethod
    def empty(cls, type_id: int) -> "TypedIntensity":
        return cls(type_id, np.zeros(0), np.zeros((0, 4)), np.zeros((0, 4, 4)))

    @classmethod
    def from_components(cls, type_id: int, components: Sequence[GaussianComponent]) -> "TypedIntensity":
        if not components:
            return cls.empty(type_id)
        return cls(
            type_id,
            np.array([c.weight for c in components]),
            np.stack([c.mean for c in components]),
            np.stack([c.cov for c in components]),
        )

    @property
    def components(self) -> list[GaussianComponent]:
        return [GaussianComponent(float(w), m, P) for w, m, P in zip(self.weights, self.means, self.covs)]

    def __len__(self) -> int:
        return len(self.weights)

    def cardinality(self) -> float:
        return float(np.sum(self.weights))

    def concat(self, other: "TypedIntensity") -> "TypedIntensity":
        return TypedIntensity(
            self.type_id,
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.means, other.means]),
            np.concatenate([self.covs, other.covs]),
        )


@dataclass(frozen=True)
class FilterParams:
    prune_threshold: float = 1e-5
    merge_threshold: float = 4.0
    extract_threshold: float = 0.5
    max_components: int | None = None
    extract_after_merge: bool = True
    # "current": births from Z_{i,k}; "previous": births from Z_{i,k-1}
    birth_source: str = "current"

    def __post_init__(self):
        if self.prune_threshold < 0:
            raise ParameterError("prune threshold must be >= 0")
        if not self.merge_threshold > 0:
            raise ParameterError("merge threshold must be > 0")
        if not 0 < self.extract_threshold <= 1:
            raise ParameterError("extract threshold must lie in (0, 1]")
        if self.max_components is not None and self.max_components < 1:
            raise ParameterError("max_components must be a positive integer")
        if self.birth_source not in ("current", "previous"):
            raise ParameterError(f"unknown birth source {self.birth_source!r}")


@dataclass(frozen=True)
class MeasurementFrame:
    """Per-detector measurement sets for one time step.

    ``origins`` optionally labels every measurement with the id of the
    target that produced it (``0`` for clutter); the filter ignores it.
    """

    time_index: int
    per_detector: tuple
    origins: tuple | None = None

    def __post_init__(self):
        sets = tuple(np.asarray(z, dtype=float).reshape(-1, 2) for z in self.per_detector)
        object.__setattr__(self, "per_detector", sets)
        if self.origins is not None:
            origins = tuple(np.asarray(o, dtype=int).reshape(-1) for o in self.origins)
            if len(origins) != len(sets) or any(len(o) != len(z) for o, z in zip(origins, sets)):
                raise ValueError("origins must label every measurement")
            object.__setattr__(self, "origins", origins)

    @property
    def n_detectors(self) -> int:
        return len(self.per_detector)

    @classmethod
    def empty(cls, time_index: int, n: int) -> "MeasurementFrame":
        return cls(time_index, tuple(np.zeros((0, 2)) for _ in range(n)))


@dataclass(frozen=True)
class FilterState:
    time_index: int
    intensities: tuple
    previous_measurements: tuple | None = None

    def __post_init__(self):
        for i, d in enumerate(self.intensities):
            if d.type_id != i:
                raise ValueError(f"intensity at position {i} carries type_id {d.type_id}")

    @classmethod
    def initial(cls, n_types: int) -> "FilterState":
        return cls(0, tuple(TypedIntensity.empty(i) for i in range(n_types)))


@dataclass(frozen=True)
class FilterModels:
    """Everything the recursion needs besides the tuning thresholds."""

    motions: tuple
    measurement: MeasurementModel
    profile: DetectionProfile
    clutter: ClutterModel
    birth: BirthModel = field(default_factory=BirthModel)

    def __post_init__(self):
        if isinstance(self.motions, MotionModel):
            object.__setattr__(self, "motions", (self.motions,) * self.profile.n_types)
        else:
            object.__setattr__(self, "motions", tuple(self.motions))
        if len(self.motions) != self.profile.n_types:
            raise ParameterError("one motion model per target type is required")

    @property
    def n_types(self) -> int:
        return self.profile.n_types


@dataclass(frozen=True)
class _Projection:
    """A predicted mixture mapped to measurement space."""

    weights: np.ndarray
    eta: np.ndarray
    chol: np.ndarray
    lognorm: np.ndarray

    def density(self, z: np.ndarray) -> np.ndarray:
        """Mixture intensity sum_v w_v N(z; eta_v, S_v) at each row of z."""
        if len(self.weights) == 0 or len(z) == 0:
            return np.zeros(len(z))
        q = np.exp(logpdf_table(z, self.eta, self.chol, self.lognorm))
        return q @ self.weights


def _project(intensity: TypedIntensity, meas: MeasurementModel) -> _Projection:
    eta, S = innovation(intensity.means, intensity.covs, meas.H, meas.R)
    L = cholesky(S, f"innovation covariance (type {intensity.type_id})")
    return _Projection(intensity.weights, eta, L, log_normalizer(L))


def births_to_intensity(type_id: int, measurements: np.ndarray, birth: BirthModel) -> TypedIntensity:
    z = np.asarray(measurements, dtype=float).reshape(-1, 2)
    n = len(z)
    means = np.zeros((n, 4))
    means[:, :2] = z
    return TypedIntensity(
        type_id,
        np.full(n, birth.weight_per_component),
        means,
        np.broadcast_to(birth.birth_cov, (n, 4, 4)).copy(),
    )


def expected_cardinality(intensity: TypedIntensity) -> float:
    """Integral of the mixture over the state space."""
    return intensity.cardinality()


def predict(prev: TypedIntensity, motion: MotionModel, births=()) -> TypedIntensity:
    """Survival prediction followed by appended birth components."""
    F = motion.F
    surv = TypedIntensity(
        prev.type_id,
        motion.p_survive * prev.weights,
        prev.means @ F.T,
        symmetrize(motion.Q + F @ prev.covs @ F.T),
    )
    if isinstance(births, TypedIntensity):
        born = replace(births, type_id=prev.type_id)
    else:
        born = TypedIntensity.from_components(prev.type_id, list(births))
    return surv.concat(born)


def _confusion_from_projections(z, target_type, projections, profile, counter=None):
    total = np.zeros(len(z))
    for j, proj in enumerate(projections):
        if j == target_type:
            continue
        p = profile.p_detect[j, target_type]
        if p == 0.0 or len(proj.weights) == 0 or len(z) == 0:
            continue
        total += p * proj.density(z)
        if counter is not None:
            counter.confusion_evals += len(z) * len(proj.weights)
            counter.confusion_flops += len(z) * len(proj.weights) * (PAIR_LIKELIHOOD_FLOPS + 2)
    return total


def confusion_clutter(z, target_type: int, predicted: Sequence[TypedIntensity],
                      profile: DetectionProfile, meas: MeasurementModel,
                      counter: OpCounter | None = None):
    """Clutter intensity that the other types' predicted mixtures induce at z.

    Accepts a single measurement (returns a float) or an (M, 2) array.
    """
    z_arr = np.asarray(z, dtype=float)
    single = z_arr.ndim == 1
    z_arr = z_arr.reshape(-1, 2)
    projections = []
    for j, d in enumerate(predicted):
        if j == target_type or profile.p_detect[j, target_type] == 0.0:
            projections.append(None)
            continue
        projections.append(_project(d, meas))
        if counter is not None:
            counter.confusion_flops += len(d) * PROJECT_FLOPS
    projections = [p if p is not None else _EMPTY_PROJECTION for p in projections]
    out = _confusion_from_projections(z_arr, target_type, projections, profile, counter)
    return float(out[0]) if single else out


_EMPTY_PROJECTION = _Projection(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0))


def _update_with(pred: TypedIntensity, z: np.ndarray, p_d: float, meas: MeasurementModel,
                 background: np.ndarray, counter: OpCounter | None) -> TypedIntensity:
    """Missed-detection copies followed by one Kalman copy per (z, component)."""
    V = len(pred)
    M = len(z)
    missed_w = (1.0 - p_d) * pred.weights
    if V == 0 or M == 0:
        return TypedIntensity(pred.type_id, missed_w, pred.means, pred.covs)

    K, P_upd, L = kalman_gains(pred.covs, meas.H, meas.R)
    eta = pred.means @ meas.H.T
    logq = logpdf_table(z, eta, L)                          # (M, V)
    num = p_d * pred.weights[None, :] * np.exp(logq)        # (M, V)
    denom = background + num.sum(axis=1)                    # (M,)
    with np.errstate(invalid="ignore", divide="ignore"):
        w_det = np.where(denom[:, None] > 0, num / denom[:, None], 0.0)
    nu = z[:, None, :] - eta[None, :, :]                    # (M, V, 2)
    m_det = pred.means[None] + np.einsum("vij,mvj->mvi", K, nu)
    P_det = np.broadcast_to(P_upd, (M, V, 4, 4))

    if counter is not None:
        counter.update_flops += V * (PROJECT_FLOPS + GAIN_FLOPS)
        counter.update_flops += M * V * (PAIR_LIKELIHOOD_FLOPS + PAIR_UPDATE_FLOPS)
        counter.likelihood_evals += M * V

    return TypedIntensity(
        pred.type_id,
        np.concatenate([missed_w, w_det.reshape(-1)]),
        np.concatenate([pred.means, m_det.reshape(-1, 4)]),
        np.concatenate([pred.covs, P_det.reshape(-1, 4, 4)]),
    )


def update(predicted: Sequence[TypedIntensity], target_type: int, measurements,
           profile: DetectionProfile, meas: MeasurementModel, clutter: ClutterModel,
           counter: OpCounter | None = None) -> TypedIntensity:
    """Confusion-aware PHD update of one type from its own detector's set.

    ``predicted`` holds the predicted mixtures of all N types; the ones other
    than ``target_type`` only contribute confusion clutter.
    """
    if not 0 <= target_type < len(predicted):
        raise ValueError(f"target type {target_type} out of range for {len(predicted)} types")
    z = np.asarray(measurements, dtype=float).reshape(-1, 2)
    background = clutter.intensity(z) if len(z) else np.zeros(0)
    if len(z):
        background = background + confusion_clutter(z, target_type, predicted, profile, meas, counter)
    return _update_with(predicted[target_type], z, profile.p_true(target_type), meas, background, counter)


def prune_and_merge(intensity: TypedIntensity, params: FilterParams) -> TypedIntensity:
    """Drop weak components, then greedily merge around the heaviest ones.

    The merge test uses the covariance of the candidate being absorbed and
    compares the squared Mahalanobis form against ``merge_threshold``.
    """
    keep = intensity.weights > params.prune_threshold
    if not np.any(keep):
        return TypedIntensity.empty(intensity.type_id)
    w = intensity.weights[keep]
    m = intensity.means[keep]
    P = intensity.covs[keep]
    n = len(w)
    L = cholesky(P, f"component covariance (type {intensity.type_id})")

    quad = None
    if n <= _PAIRWISE_LIMIT:
        # quad[v, u] = (m_v - m_u)^T P_v^-1 (m_v - m_u)
        quad = mahalanobis_sq(m[:, None, :] - m[None, :, :], L[:, None])

    labels = np.empty(n, dtype=int)
    remaining = w.copy()
    active = np.ones(n, dtype=bool)
    U = params.merge_threshold
    groups = 0
    while True:
        u = int(np.argmax(remaining))  # first maximum wins ties
        if remaining[u] == -np.inf:
            break
        col = quad[:, u] if quad is not None else mahalanobis_sq(m - m[u], L)
        members = active & (col <= U)
        labels[members] = groups
        active &= ~members
        remaining[members] = -np.inf
        groups += 1

    A = np.zeros((groups, n))
    A[labels, np.arange(n)] = w
    w_new = A.sum(axis=1)
    m_new = (A @ m) / w_new[:, None]
    d = m_new[labels] - m
    spread = P + d[:, :, None] * d[:, None, :]
    P_new = symmetrize(np.einsum("gn,nij->gij", A, spread) / w_new[:, None, None])

    if params.max_components is not None and groups > params.max_components:
        order = np.argsort(-w_new, kind="stable")[: params.max_components]
        order.sort()
        w_new, m_new, P_new = w_new[order], m_new[order], P_new[order]
    return TypedIntensity(intensity.type_id, w_new, m_new, P_new)


def extract_states(intensity: TypedIntensity, params: FilterParams) -> np.ndarray:
    """Means of the components whose weight exceeds the extraction threshold."""
    return intensity.means[intensity.weights > params.extract_threshold].copy()


def step(state: FilterState, frame: MeasurementFrame, models: FilterModels,
         params: FilterParams, counter: OpCounter | None = None):
    """One full recursion for all N types.

    Returns the new state and a list with one (K_i, 4) array of extracted
    states per type. The input state is not modified.
    """
    n = models.n_types
    if frame.time_index != state.time_index + 1:
        raise SequencingError(
            f"frame {frame.time_index} cannot follow state at time {state.time_index}")
    if frame.n_detectors != n or len(state.intensities) != n:
        raise ValueError(f"expected {n} detector streams and intensities")

    if params.birth_source == "current":
        birth_sets = frame.per_detector
    else:
        birth_sets = state.previous_measurements or tuple(np.zeros((0, 2)) for _ in range(n))

    predicted = [
        predict(state.intensities[i], models.motions[i],
                births_to_intensity(i, birth_sets[i], models.birth))
        for i in range(n)
    ]

    confused = models.profile.has_confusion
    projections = []
    if confused:
        for j in range(n):
            if np.any(np.delete(models.profile.p_detect[j], j) > 0):
                projections.append(_project(predicted[j], models.measurement))
                if counter is not None:
                    counter.confusion_flops += len(predicted[j]) * PROJECT_FLOPS
            else:
                projections.append(_EMPTY_PROJECTION)

    intensities = []
    extracted = []
    for i in range(n):
        z = frame.per_detector[i]
        background = models.clutter.intensity(z) if len(z) else np.zeros(0)
        if confused and len(z):
            background = background + _confusion_from_projections(
                z, i, projections, models.profile, counter)
        updated = _update_with(predicted[i], z, models.profile.p_true(i),
                               models.measurement, background, counter)
        merged = prune_and_merge(updated, params)
        intensities.append(merged)
        source = merged if params.extract_after_merge else updated
        extracted.append(extract_states(source, params))

    new_state = FilterState(
        frame.time_index,
        tuple(intensities),
        frame.per_detector if params.birth_source == "previous" else None,
    )
    return new_state, extracted


class NTypeGMPHDFilter:
    """Stateful convenience wrapper around :func:`step`."""

    def __init__(self, models: FilterModels, params: FilterParams | None = None,
                 independent: bool = False):
        if independent:
            models = replace(models, profile=models.profile.without_confusion())
        self.models = models
        self.params = params or FilterParams()
        self.state = FilterState.initial(models.n_types)
        self.counter = OpCounter()

    def step(self, frame: MeasurementFrame):
        self.state, extracted = step(self.state, frame, self.models, self.params, self.counter)
        return extracted

    def cardinalities(self) -> list[float]:
        return [expected_cardinality(d) for d in self.state.intensities]
