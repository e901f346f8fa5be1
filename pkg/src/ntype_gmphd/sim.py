"""Scenario description, truth/measurement simulation and Monte-Carlo runs.

Indexing: target types and detectors are 0-based in code and 1-based in
scenario documents and output files. Target ids are labels (1..16 in the
quad scenario); origin label 0 marks clutter.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .gaussian import cholesky
from .metrics import OspaParams, ospa
from .models import (
    BirthModel,
    ClutterModel,
    DetectionProfile,
    MeasurementModel,
    ParameterError,
    make_cv_motion,
    make_position_measurement,
)
from .ntype_phd import (
    FilterModels,
    FilterParams,
    FilterState,
    MeasurementFrame,
    expected_cardinality,
    step,
)

MODES = ("ntype", "independent")


@dataclass(frozen=True)
class Trajectory:
    target_id: int
    type_id: int
    birth_step: int
    death_step: int
    initial_state: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.initial_state, dtype=float).reshape(4)
        if not np.all(np.isfinite(s)):
            raise ParameterError(f"target {self.target_id}: non-finite initial state")
        object.__setattr__(self, "initial_state", s)


@dataclass(frozen=True)
class ConfusionWiring:
    """Which targets each detector fires on, and with what probability.

    ``own[j]`` is detector j's probability for targets of its own type;
    ``foreign[j]`` lists ``(target_id, p)`` for the other-type targets it
    confuses.
    """

    own: tuple
    foreign: tuple

    def __post_init__(self):
        for p in self.own:
            if not 0 <= p <= 1:
                raise ParameterError("wiring probabilities must lie in [0, 1]")
        for links in self.foreign:
            for _, p in links:
                if not 0 <= p <= 1:
                    raise ParameterError("wiring probabilities must lie in [0, 1]")

    def probability(self, detector: int, target_id: int, type_id: int) -> float:
        if type_id == detector:
            return float(self.own[detector])
        for tid, p in self.foreign[detector]:
            if tid == target_id:
                return float(p)
        return 0.0


class TruthPoint(NamedTuple):
    target_id: int
    type_id: int
    state: np.ndarray


@dataclass(frozen=True)
class Scenario:
    n_types: int
    horizon: int
    trajectories: tuple
    p_detect: np.ndarray
    links: tuple  # (detector, target_id) pairs for confusions, 0-based detector
    dt: float = 1.0
    sigma_v: tuple = (5.0,)
    p_survive: tuple = (0.99,)
    sigma_r: float = 6.0
    region: tuple = ((-1000.0, 1000.0), (-1000.0, 1000.0))
    clutter_lambda: float = 10.0
    clutter_poisson: bool = True
    birth_weight: float = 3e-6
    birth_cov_diag: tuple = (200.0, 200.0, 100.0, 100.0)
    truth_noise: bool = False
    filter_params: FilterParams = field(default_factory=FilterParams)
    seed: int = 1

    def __post_init__(self):
        n = self.n_types
        p = np.array(self.p_detect, dtype=float)
        if p.shape != (n, n):
            raise ParameterError(f"detection matrix must be {n}x{n}")
        object.__setattr__(self, "p_detect", p)
        for name in ("sigma_v", "p_survive"):
            v = tuple(float(x) for x in np.atleast_1d(getattr(self, name)))
            if len(v) == 1:
                v = v * n
            if len(v) != n:
                raise ParameterError(f"{name} needs one value per type")
            object.__setattr__(self, name, v)
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")
        for t in self.trajectories:
            if not 0 <= t.type_id < n:
                raise ParameterError(f"target {t.target_id}: type out of range")
            if not 1 <= t.birth_step <= t.death_step <= self.horizon:
                raise ParameterError(f"target {t.target_id}: invalid birth/death steps")
        ids = {t.target_id: t for t in self.trajectories}
        for det, tid in self.links:
            if not 0 <= det < n or tid not in ids:
                raise ParameterError(f"invalid wiring link ({det + 1}, {tid})")
            if ids[tid].type_id == det:
                raise ParameterError(f"wiring link ({det + 1}, {tid}) targets the detector's own type")

    # -- derived models -------------------------------------------------
    def profile(self) -> DetectionProfile:
        return DetectionProfile(self.p_detect)

    def with_confusion(self, level: float) -> "Scenario":
        """Set every off-diagonal detection probability to ``level``."""
        return replace(self, p_detect=self.profile().with_confusion(level).p_detect)

    def with_horizon(self, horizon: int) -> "Scenario":
        """Shorten (or extend) the run, clipping trajectories that outlive it."""
        trajs = tuple(replace(t, death_step=min(t.death_step, horizon))
                      for t in self.trajectories if t.birth_step <= horizon)
        return replace(self, horizon=horizon, trajectories=trajs)

    def wiring(self) -> ConfusionWiring:
        types = {t.target_id: t.type_id for t in self.trajectories}
        foreign = [[] for _ in range(self.n_types)]
        for det, tid in self.links:
            foreign[det].append((tid, float(self.p_detect[det, types[tid]])))
        return ConfusionWiring(
            own=tuple(float(self.p_detect[j, j]) for j in range(self.n_types)),
            foreign=tuple(tuple(f) for f in foreign),
        )

    def measurement_model(self) -> MeasurementModel:
        return make_position_measurement(self.sigma_r)

    def clutter_model(self) -> ClutterModel:
        return ClutterModel(self.clutter_lambda, self.region, self.clutter_poisson)

    def filter_models(self, mode: str = "ntype") -> FilterModels:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        profile = self.profile()
        if mode == "independent":
            profile = profile.without_confusion()
        return FilterModels(
            motions=tuple(make_cv_motion(self.dt, self.sigma_v[i], self.p_survive[i])
                          for i in range(self.n_types)),
            measurement=self.measurement_model(),
            profile=profile,
            clutter=self.clutter_model(),
            birth=BirthModel(self.birth_weight, np.diag(self.birth_cov_diag)),
        )


# -- scenario documents ----------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    fp = s.filter_params
    return {
        "n_types": s.n_types,
        "horizon": s.horizon,
        "dt": s.dt,
        "sigma_v": list(s.sigma_v),
        "p_survive": list(s.p_survive),
        "sigma_r": s.sigma_r,
        "region": [list(r) for r in s.region],
        "clutter": {"lambda": s.clutter_lambda, "poisson": s.clutter_poisson},
        "birth": {"weight": s.birth_weight, "cov_diag": list(s.birth_cov_diag)},
        "p_detect": s.p_detect.tolist(),
        "wiring": [{"detector": det + 1, "target": tid} for det, tid in s.links],
        "trajectories": [
            {
                "id": t.target_id,
                "type": t.type_id + 1,
                "birth": t.birth_step,
                "death": t.death_step,
                "state": t.initial_state.tolist(),
            }
            for t in s.trajectories
        ],
        "truth_noise": s.truth_noise,
        "filter": {
            "prune_threshold": fp.prune_threshold,
            "merge_threshold": fp.merge_threshold,
            "extract_threshold": fp.extract_threshold,
            "max_components": fp.max_components,
            "extract_after_merge": fp.extract_after_merge,
            "birth_source": fp.birth_source,
        },
        "seed": s.seed,
    }


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        n = int(doc["n_types"])
        clutter = doc.get("clutter", {})
        birth = doc.get("birth", {})
        trajectories = tuple(
            Trajectory(
                target_id=int(t["id"]),
                type_id=int(t["type"]) - 1,
                birth_step=int(t.get("birth", 1)),
                death_step=int(t.get("death", doc["horizon"])),
                initial_state=t["state"],
            )
            for t in doc["trajectories"]
        )
        scenario = Scenario(
            n_types=n,
            horizon=int(doc["horizon"]),
            trajectories=trajectories,
            p_detect=np.array(doc["p_detect"], dtype=float),
            links=tuple((int(w["detector"]) - 1, int(w["target"])) for w in doc.get("wiring", [])),
            dt=float(doc.get("dt", 1.0)),
            sigma_v=tuple(np.atleast_1d(doc.get("sigma_v", 5.0))),
            p_survive=tuple(np.atleast_1d(doc.get("p_survive", 0.99))),
            sigma_r=float(doc.get("sigma_r", 6.0)),
            region=tuple(tuple(float(v) for v in r) for r in doc.get("region", Scenario.region)),
            clutter_lambda=float(clutter.get("lambda", 10.0)),
            clutter_poisson=bool(clutter.get("poisson", True)),
            birth_weight=float(birth.get("weight", 3e-6)),
            birth_cov_diag=tuple(float(v) for v in birth.get("cov_diag", (200, 200, 100, 100))),
            truth_noise=bool(doc.get("truth_noise", False)),
            filter_params=FilterParams(**doc.get("filter", {})),
            seed=int(doc.get("seed", 1)),
        )
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed scenario document: {exc}") from exc
    if "confusion_level" in doc:
        scenario = scenario.with_confusion(float(doc["confusion_level"]))
    return scenario


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


def default_scenario() -> Scenario:
    """The packaged 16-target, 4-type scenario."""
    text = resources.files("ntype_gmphd").joinpath("data/quad_scenario.json").read_text()
    return scenario_from_dict(json.loads(text))


QUAD_START_POSITIONS = (
    (-100, 700), (-750, -100), (-200, 400), (-700, -400),
    (-400, 600), (-800, -600), (-500, -200), (700, 600),
    (-900, 100), (-800, 500), (-900, -200), (400, -600),
    (800, -600), (500, -700), (-700, -600), (900, -100),
)
# detector -> foreign target ids (detector 1 sees targets 5, 9, 13, ...)
QUAD_LINKS = ((0, 5), (0, 9), (0, 13), (1, 1), (1, 10), (1, 14),
              (2, 2), (2, 6), (2, 15), (3, 3), (3, 7), (3, 11))


def build_quad_scenario(confusion: float = 0.6, horizon: int = 120) -> Scenario:
    """Reconstruct the quad scenario with straight crossing tracks.

    Each target heads for its start point rotated by +/-90 degrees about the
    origin (alternating by id) and scaled by 0.85, reached at the last step.
    Segments between two points of the square stay inside it.
    """
    trajectories = []
    for idx, (x, y) in enumerate(QUAD_START_POSITIONS):
        target_id = idx + 1
        sign = 1.0 if target_id % 2 else -1.0
        end = 0.85 * np.array([-sign * y, sign * x])
        vel = np.round((end - np.array([x, y])) / (horizon - 1), 2)
        trajectories.append(Trajectory(target_id, idx // 4, 1, horizon,
                                       [float(x), float(y), float(vel[0]), float(vel[1])]))
    p = np.full((4, 4), float(confusion))
    np.fill_diagonal(p, [0.90, 0.92, 0.92, 0.91])
    return Scenario(n_types=4, horizon=horizon, trajectories=tuple(trajectories),
                    p_detect=p, links=QUAD_LINKS)


# -- randomness -------------------------------------------------------------

STREAM_TRUTH = 0
STREAM_MEASUREMENTS = 1


def make_rng(seed: int, run_index: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, run, stream)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


# -- simulation -------------------------------------------------------------

def generate_truth(scenario: Scenario, rng: np.random.Generator | None = None) -> list[list[TruthPoint]]:
    """Per-step lists of alive targets for steps 1..horizon.

    A target that leaves the surveillance region is dead from that step on.
    """
    steps: list[list[TruthPoint]] = [[] for _ in range(scenario.horizon)]
    clutter = scenario.clutter_model()
    for traj in scenario.trajectories:
        motion = make_cv_motion(scenario.dt, scenario.sigma_v[traj.type_id],
                                scenario.p_survive[traj.type_id])
        G = cholesky(motion.Q + 1e-12 * np.eye(4), "process noise") if scenario.truth_noise else None
        x = traj.initial_state.copy()
        for k in range(traj.birth_step, traj.death_step + 1):
            if k > traj.birth_step:
                x = motion.F @ x
                if G is not None:
                    x = x + G @ rng.standard_normal(4)
            if not clutter.contains(x[:2])[0]:
                break
            steps[k - 1].append(TruthPoint(traj.target_id, traj.type_id, x.copy()))
    return steps


def generate_measurements(truth_step: Sequence[TruthPoint], wiring: ConfusionWiring,
                          meas: MeasurementModel, clutter: ClutterModel,
                          rng: np.random.Generator, time_index: int = 1) -> MeasurementFrame:
    """Detections (own type and wired confusions) plus uniform clutter per detector."""
    n = len(wiring.own)
    L = cholesky(meas.R, "measurement noise")
    (x0, x1), (y0, y1) = clutter.region
    sets, origins = [], []
    for j in range(n):
        pts, org = [], []
        for tp in truth_step:
            p = wiring.probability(j, tp.target_id, tp.type_id)
            if p <= 0.0:
                continue
            if rng.random() < p:
                pts.append(meas.H @ tp.state + L @ rng.standard_normal(2))
                org.append(tp.target_id)
        if clutter.poisson:
            n_clutter = int(rng.poisson(clutter.lambda_per_detector))
        else:
            n_clutter = int(round(clutter.lambda_per_detector))
        if n_clutter:
            cz = np.column_stack([rng.uniform(x0, x1, n_clutter), rng.uniform(y0, y1, n_clutter)])
            pts.extend(cz)
            org.extend([0] * n_clutter)
        sets.append(np.array(pts, dtype=float).reshape(-1, 2))
        origins.append(np.array(org, dtype=int))
    return MeasurementFrame(time_index, tuple(sets), tuple(origins))


def simulate(scenario: Scenario, run_index: int = 0, seed: int | None = None):
    """Truth and measurement frames for one run."""
    seed = scenario.seed if seed is None else seed
    truth = generate_truth(scenario, make_rng(seed, run_index, STREAM_TRUTH))
    rng = make_rng(seed, run_index, STREAM_MEASUREMENTS)
    wiring = scenario.wiring()
    meas = scenario.measurement_model()
    clutter = scenario.clutter_model()
    frames = [generate_measurements(truth[k], wiring, meas, clutter, rng, k + 1)
              for k in range(scenario.horizon)]
    return truth, frames


def run_filter(scenario: Scenario, frames: Sequence[MeasurementFrame], mode: str = "ntype",
               counter=None):
    """Run one filter pass; yields per-step (extracted, cardinalities, state)."""
    models = scenario.filter_models(mode)
    state = FilterState.initial(scenario.n_types)
    out = []
    for frame in frames:
        state, extracted = step(state, frame, models, scenario.filter_params, counter)
        out.append((extracted, [expected_cardinality(d) for d in state.intensities], state))
    return out


@dataclass
class RunResult:
    level: float
    mode: str
    run_index: int
    seed: int
    ospa: np.ndarray            # (T,) pooled over types
    ospa_per_type: np.ndarray   # (N, T)
    truth_count: np.ndarray     # (T,)
    estimated_count: np.ndarray  # (T,) pooled extracted states
    expected_count: np.ndarray  # (T,) pooled sum of weights

    @property
    def mean_ospa(self) -> float:
        return float(np.mean(self.ospa))


def run_single(scenario: Scenario, level: float, mode: str, run_index: int,
               seed: int | None = None, ospa_params: OspaParams = OspaParams()) -> RunResult:
    seed = scenario.seed if seed is None else seed
    sc = scenario.with_confusion(level)
    truth, frames = simulate(sc, run_index, seed)
    results = run_filter(sc, frames, mode)
    T, N = sc.horizon, sc.n_types
    pooled = np.zeros(T)
    per_type = np.zeros((N, T))
    truth_count = np.zeros(T, dtype=int)
    est_count = np.zeros(T, dtype=int)
    expected = np.zeros(T)
    for k, (extracted, cards, _) in enumerate(results):
        tpos = np.array([tp.state[:2] for tp in truth[k]]).reshape(-1, 2)
        ttype = np.array([tp.type_id for tp in truth[k]], dtype=int)
        epos = np.concatenate([e[:, :2] for e in extracted]).reshape(-1, 2)
        pooled[k] = ospa(epos, tpos, ospa_params)
        for i in range(N):
            per_type[i, k] = ospa(extracted[i][:, :2], tpos[ttype == i], ospa_params)
        truth_count[k] = len(tpos)
        est_count[k] = len(epos)
        expected[k] = sum(cards)
    return RunResult(float(level), mode, run_index, int(seed), pooled, per_type,
                     truth_count, est_count, expected)


@dataclass
class MonteCarloReport:
    runs: list
    mc_runs: int
    seed: int

    def select(self, level: float, mode: str) -> list:
        return [r for r in self.runs if r.mode == mode and np.isclose(r.level, level)]

    @property
    def levels(self) -> list:
        return sorted({r.level for r in self.runs})

    @property
    def modes(self) -> list:
        return [m for m in MODES if any(r.mode == m for r in self.runs)]

    def mean_ospa(self, level: float, mode: str) -> float:
        runs = self.select(level, mode)
        return float(np.mean(np.concatenate([r.ospa for r in runs])))

    def std_ospa(self, level: float, mode: str) -> float:
        """Spread over runs of the per-run mean OSPA."""
        return float(np.std([r.mean_ospa for r in self.select(level, mode)]))

    def ospa_curve(self, level: float, mode: str) -> np.ndarray:
        return np.mean([r.ospa for r in self.select(level, mode)], axis=0)

    def cardinality_curve(self, level: float, mode: str) -> np.ndarray:
        return np.mean([r.estimated_count for r in self.select(level, mode)], axis=0)

    def truth_curve(self, level: float, mode: str) -> np.ndarray:
        return np.mean([r.truth_count for r in self.select(level, mode)], axis=0)

    def mean_cardinality_error(self, level: float, mode: str, burn_in: int = 10) -> float:
        """Mean over steps after burn-in of |MC-mean pooled count - truth|."""
        runs = self.select(level, mode)
        est = np.mean([r.estimated_count for r in runs], axis=0)
        truth = np.mean([r.truth_count for r in runs], axis=0)
        return float(np.mean(np.abs(est[burn_in:] - truth[burn_in:])))

    def mean_abs_cardinality_error(self, level: float, mode: str, burn_in: int = 10) -> float:
        """Per-run |count - truth| averaged over runs and steps after burn-in."""
        errs = [np.abs(r.estimated_count[burn_in:] - r.truth_count[burn_in:])
                for r in self.select(level, mode)]
        return float(np.mean(np.concatenate(errs)))


def _run_task(args):
    return run_single(*args)


def run_experiment(scenario: Scenario, confusion_levels: Sequence[float], mc_runs: int,
                   mode: str = "ntype", seed: int | None = None, workers: int = 1) -> MonteCarloReport:
    """Seeded Monte-Carlo sweep over confusion levels for one or both modes.

    ``mode`` may be ``"ntype"``, ``"independent"`` or ``"both"``. Run ``r``
    uses the same random streams at every level and in every mode.
    """
    if mc_runs < 1:
        raise ValueError("mc_runs must be >= 1")
    modes = MODES if mode == "both" else (mode,)
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}; expected 'ntype', 'independent' or 'both'")
    seed = scenario.seed if seed is None else int(seed)
    tasks = [(scenario, float(level), m, r, seed)
             for level in confusion_levels for m in modes for r in range(mc_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        runs = [_run_task(t) for t in tasks]
    return MonteCarloReport(runs=runs, mc_runs=mc_runs, seed=seed)
