"""Closed-loop walking experiments: subject setup, gait preparation, controller runs and tracking reports.

A run walks ``n_sets`` sets of ``n_step_cycles`` cycles from the gait's initial state. The emulated
human drives the four human joints continuously; the prosthesis controller runs at the controller
rate on the measured frame, optionally corrupted by noise and delay.
"""
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
import yaml

from config import Config
from prosthesis.controllers import SENSOR, VARIANTS, ControllerConfig, PdGains, ProsthesisController
from prosthesis.domains import CYCLE, DomainId, HybridGraph, default_graph
from prosthesis.errors import ConfigurationError, SchemaError, StepError, ValidationError
from prosthesis.gait_library import GaitLibrary, load_gait
from prosthesis.gait_opt import GaitOptProblem, gait_from_human_fit, optimize_gait, validate_gait
from prosthesis.human_data import HumanFit, fit_human_bezier, generate_synthetic_human_gait, load_human_gait
from prosthesis.hybrid import HybridState, Policy, Simulator
from prosthesis.model import PA, PK, HumanProsthesisModel
from prosthesis.outputs import CoordinateLayout
from prosthesis.params import GroundSprings, build_from_anthropometry
from prosthesis.sensing import HumanEmulation, SensorDelay, SensorNoise, add_sensor_noise, human_torques
from prosthesis.subsystem import ProsthesisSubsystem
from prosthesis.trace import FLOAT_FORMAT, SimTrace

logger = logging.getLogger(__name__)

TRACKED = {"pk": "knee", "pa": "ankle"}
GRID_POINTS = 101


@dataclass(frozen=True)
class Disturbance:
    """World-frame force step on the distal right thigh."""
    start: float # s
    duration: float # s
    force: tuple = (0.0, 0.0) # N, (x, z)

    def __post_init__(self):
        if self.start < 0 or self.duration <= 0 or len(self.force) != 2:
            raise ValidationError(f"disturbance needs start >= 0, duration > 0 and a 2-vector force, got {self}")

    def __call__(self, t: float) -> np.ndarray:
        if self.start <= t < self.start + self.duration:
            return np.asarray(self.force, dtype=float)
        return np.zeros(2)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    height: float = 1.70 # m
    mass: float = 66.0 # kg
    sex: str = "male"
    human_data: str | None = None # CSV path; synthetic data when absent
    gait: str | None = None # gait JSON path
    optimize: bool = False # optimize a fresh gait instead of walking the human fit
    validate_gait: bool = True
    gait_nodes: int = Config.gait_nodes
    cycle_time: float = Config.cycle_time
    max_iter: int = Config.nlp_max_iter
    variants: tuple = VARIANTS
    controller: dict = field(default_factory=dict) # ControllerConfig overrides
    n_step_cycles: int = Config.n_step_cycles
    n_sets: int = 1
    seed: int = Config.default_seed
    noise: SensorNoise = SensorNoise()
    delay_ticks: int = 0
    disturbance: Disturbance | None = None
    human: HumanEmulation = HumanEmulation(torso_balance=True)
    plant_springs: bool = False
    output_dir: str = "out"
    schema_version: int = Config.experiment_schema_version

    def __post_init__(self):
        if self.schema_version != Config.experiment_schema_version:
            raise SchemaError(f"unsupported experiment schema_version {self.schema_version}")
        if self.n_step_cycles < 1:
            raise ValidationError(f"n_step_cycles must be at least 1, got {self.n_step_cycles}")
        if self.n_sets < 1:
            raise ValidationError(f"n_sets must be at least 1, got {self.n_sets}")
        if self.delay_ticks < 0:
            raise ValidationError(f"delay_ticks must be nonnegative, got {self.delay_ticks}")
        unknown = [variant for variant in self.variants if variant not in VARIANTS]
        if unknown or not self.variants:
            raise ValidationError(f"controller variants must be drawn from {VARIANTS}, got {self.variants}")
        for label, path in (("human_data", self.human_data), ("gait", self.gait)):
            if path is not None and not os.path.isfile(path):
                raise ConfigurationError(f"{label} file {path} does not exist")
        if self.gait is not None and self.optimize:
            raise ConfigurationError("give either a gait file or optimize, not both")

    def controller_config(self, variant: str) -> ControllerConfig:
        options = dict(self.controller)
        gains = options.pop("gains", None)
        if gains is not None:
            options["gains"] = PdGains(**gains)
        try:
            return ControllerConfig(variant=variant, **options)
        except TypeError as exc:
            raise ConfigurationError(f"bad controller options {sorted(self.controller)}: {exc}") from exc


def _section(data: dict, key: str) -> dict:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise SchemaError(f"{key} must be a mapping, got {type(value).__name__}")
    return value


def experiment_config_from_dict(data: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise SchemaError("experiment config must be a mapping")
    if "schema_version" not in data:
        raise SchemaError("experiment config is missing schema_version")
    known = {
        "schema_version", "name", "subject", "human_data", "gait", "controllers", "controller", "n_step_cycles",
        "n_sets", "seed", "noise", "delay_ticks", "disturbance", "human", "plant_springs", "output_dir",
    }
    extra = sorted(set(data).difference(known))
    if extra:
        raise SchemaError(f"unknown experiment config keys {extra}")

    def resolve(path):
        return None if path is None else os.path.normpath(os.path.join(base_dir, path))

    subject = _section(data, "subject")
    gait = _section(data, "gait")
    disturbance = data.get("disturbance")
    try:
        return ExperimentConfig(
            name=str(data.get("name", "experiment")),
            height=float(subject.get("height", 1.70)),
            mass=float(subject.get("mass", 66.0)),
            sex=str(subject.get("sex", "male")),
            human_data=resolve(data.get("human_data")),
            gait=resolve(gait.get("file")),
            optimize=bool(gait.get("optimize", False)),
            validate_gait=bool(gait.get("validate", True)),
            gait_nodes=int(gait.get("nodes", Config.gait_nodes)),
            cycle_time=float(gait.get("cycle_time", Config.cycle_time)),
            max_iter=int(gait.get("max_iter", Config.nlp_max_iter)),
            variants=tuple(data.get("controllers", VARIANTS)),
            controller=_section(data, "controller"),
            n_step_cycles=int(data.get("n_step_cycles", Config.n_step_cycles)),
            n_sets=int(data.get("n_sets", 1)),
            seed=int(data.get("seed", Config.default_seed)),
            noise=SensorNoise(**_section(data, "noise")),
            delay_ticks=int(data.get("delay_ticks", 0)),
            disturbance=None if disturbance is None else Disturbance(
                float(disturbance["start"]), float(disturbance["duration"]), tuple(disturbance["force"])
            ),
            human=HumanEmulation(**{"torso_balance": True, **_section(data, "human")}),
            plant_springs=bool(data.get("plant_springs", False)),
            output_dir=resolve(data.get("output_dir", "out")),
            schema_version=int(data["schema_version"]),
        )
    except (TypeError, KeyError) as exc:
        raise SchemaError(f"malformed experiment config: {exc}") from exc


def load_experiment_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise SchemaError(f"{path} is not valid YAML: {exc}") from exc
    except FileNotFoundError as exc:
        raise ConfigurationError(f"experiment config {path} does not exist") from exc
    return experiment_config_from_dict(data, os.path.dirname(os.path.abspath(path)))


# setup

def experiment_model(config: ExperimentConfig) -> HumanProsthesisModel:
    springs = GroundSprings() if config.plant_springs else None
    return HumanProsthesisModel(build_from_anthropometry(config.height, config.mass, config.sex, springs=springs))


def experiment_human_fit(config: ExperimentConfig) -> HumanFit:
    if config.human_data is not None:
        data = load_human_gait(config.human_data)
    else:
        data = generate_synthetic_human_gait(config.height, config.mass, config.seed)
    return fit_human_bezier(data)


def prepare_gait(config: ExperimentConfig, model: HumanProsthesisModel, human_fit: HumanFit,
                 graph: HybridGraph | None = None) -> GaitLibrary:
    """Load, optimize or build the gait the run will track, and check it against the plant."""
    graph = graph or default_graph()
    if config.gait is not None:
        library = load_gait(config.gait)
    else:
        library = gait_from_human_fit(model, human_fit, graph, config.gait_nodes, config.cycle_time)
        if config.optimize:
            problem = GaitOptProblem(model, graph, nodes=config.gait_nodes)
            library, result = optimize_gait(problem, human_fit, library, config.max_iter)
            logger.info("gait optimization finished with status %s", result.status)

    q0, _ = library.initial_qdot()
    if q0.size != model.n_q:
        raise ConfigurationError(f"gait initial state has {q0.size} coordinates, the plant has {model.n_q}")
    if config.validate_gait:
        report = validate_gait(model, library, graph, simulate=False)
        if not report.passed:
            raise ConfigurationError(f"gait fails validation: {', '.join(report.failures)}")
    return library


class ClosedLoopPolicy(Policy):
    """Emulated human on the human joints, prosthesis controller on the prosthesis joints."""

    def __init__(self, model: HumanProsthesisModel, library: GaitLibrary, controller: ProsthesisController,
                 emulation: HumanEmulation = HumanEmulation(), noise: SensorNoise = SensorNoise(),
                 delay_ticks: int = 0, seed: int = Config.default_seed):
        self.model = model
        self.library = library
        self.controller = controller
        self.emulation = emulation
        self.noise = noise
        self.delay_ticks = delay_ticks
        self.rng = np.random.default_rng(seed)
        self.layout = CoordinateLayout.full(model)
        self.delay = SensorDelay(delay_ticks)
        self.entry_time = 0.0

    def reset(self):
        self.delay = SensorDelay(self.delay_ticks)

    def enter_domain(self, domain, time: float, q, qdot):
        self.entry_time = time
        self.controller.enter_domain(domain, time)

    def tick(self, domain, time: float, q, qdot, frame):
        measured = self.delay(add_sensor_noise(frame, self.noise, self.rng))
        u_s, diagnostics = self.controller.command(measured, q[[PK, PA]], qdot[[PK, PA]], time)
        held = np.zeros(6)
        held[4:] = u_s
        return held, diagnostics

    def torque(self, domain, time: float, q, qdot) -> np.ndarray:
        u = np.zeros(6)
        u[:4] = human_torques(
            self.emulation, self.layout, q, qdot, self.library[domain], time - self.entry_time,
            self.library.torso_pitch, self.controller.graph[domain].stance_side,
        )
        return u


# metrics

def _frame(trace) -> pd.DataFrame:
    return trace.to_frame() if isinstance(trace, SimTrace) else trace


def compute_rmse(trace, gait: GaitLibrary | None = None) -> dict:
    """
    Tracking RMSE of the prosthesis knee and ankle over all controller ticks, rad.
    Desired values come from the trace; ``gait`` and the recorded phase fill them in when they are missing.
    """
    frame = _frame(trace)
    if frame.empty:
        raise ValidationError("cannot compute RMSE of an empty trace")
    rmse = {}
    for joint in TRACKED:
        if f"desired_{joint}" in frame:
            desired = frame[f"desired_{joint}"].to_numpy(dtype=float)
        elif gait is not None and "tau" in frame:
            desired = np.array([
                gait[domain].curve(joint)(tau) if gait[domain].curve(joint) is not None else np.nan
                for domain, tau in zip(frame["domain"], frame["tau"])
            ])
        else:
            raise ValidationError(f"trace has no desired_{joint} column and no gait to recompute it")
        error = frame[f"q_{joint}"].to_numpy(dtype=float) - desired
        error = error[np.isfinite(error)]
        rmse[joint] = float(np.sqrt(np.mean(error ** 2))) if error.size else float("nan")
    return rmse


def _cycle_spans(trace: SimTrace) -> dict:
    """Complete step cycles as {cycle: (start, end)}; a cycle starts at right heel strike."""
    frame = trace.to_frame()
    starts = frame.groupby(frame["domain_index"] // len(CYCLE))["time"].min()
    spans = {}
    for event in trace.events:
        cycle, slot = divmod(event["step"], len(CYCLE))
        if slot == len(CYCLE) - 1 and cycle in starts.index:
            spans[cycle] = (float(starts[cycle]), float(event["time"]))
    return spans


def domain_durations(trace: SimTrace) -> dict:
    """Mean time spent in each domain, s."""
    frame = trace.to_frame()
    entered = frame.groupby("domain_index")["time"].min()
    samples = {}
    for event in trace.events:
        if event["step"] in entered.index:
            samples.setdefault(event["from"], []).append(event["time"] - entered[event["step"]])
    return {domain: float(np.mean(values)) for domain, values in samples.items()}


def mean_tracking_curves(trace: SimTrace, human_fit: HumanFit | None = None, points: int = GRID_POINTS) -> pd.DataFrame:
    """
    Actual and desired prosthesis joint angles averaged over complete cycles on a common gait-percent grid,
    each cycle normalized to 0-100 % before averaging, with the human fit alongside.
    """
    grid = np.linspace(0.0, 100.0, points)
    frame = trace.to_frame()
    spans = _cycle_spans(trace)
    curves = {"percent": grid}
    for joint in TRACKED:
        for kind, column in (("actual", f"q_{joint}"), ("desired", f"desired_{joint}")):
            samples = []
            for cycle, (start, end) in spans.items():
                rows = frame[frame["domain_index"] // len(CYCLE) == cycle]
                percent = 100.0 * (rows["time"].to_numpy() - start) / (end - start)
                samples.append(np.interp(grid, percent, rows[column].to_numpy(dtype=float)))
            curves[f"{joint}_{kind}"] = np.mean(samples, axis=0) if samples else np.full(points, np.nan)
        curves[f"{joint}_human"] = human_fit.evaluate(joint, grid) if human_fit is not None else np.full(points, np.nan)
    return pd.DataFrame(curves)


@dataclass
class Metrics:
    rmse: dict # joint -> rad
    durations: dict # domain -> s
    curves: pd.DataFrame
    n_domains: int
    fallbacks: int

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "durations": self.durations, "n_domains": self.n_domains, "fallbacks": self.fallbacks}


def compute_metrics(trace: SimTrace, library: GaitLibrary | None = None, human_fit: HumanFit | None = None) -> Metrics:
    frame = trace.to_frame()
    fallbacks = int((frame["fallback"].fillna("") != "").sum()) if "fallback" in frame else 0
    return Metrics(
        compute_rmse(frame, library), domain_durations(trace), mean_tracking_curves(trace, human_fit),
        len(trace.events), fallbacks,
    )


@dataclass
class ExperimentResult:
    variant: str
    trace: SimTrace
    metrics: Metrics | None
    fall: dict | None = None # {"set", "step", "code", "message"} when a run ended early

    @property
    def completed(self) -> bool:
        return self.fall is None


def _append_set(trace: SimTrace, part: SimTrace, set_index: int, offset: int):
    for row in part.rows:
        trace.rows.append({**row, "set": set_index, "domain_index": row["domain_index"] + offset})
    for event in part.events:
        trace.events.append({**event, "set": set_index, "step": event["step"] + offset})


def run_experiment(config: ExperimentConfig, variant: str = SENSOR, library: GaitLibrary | None = None,
                   human_fit: HumanFit | None = None, graph: HybridGraph | None = None) -> ExperimentResult:
    """
    Walk ``n_sets`` × ``n_step_cycles`` cycles with one controller variant. The desired hip velocity is
    zero so the human sets the pace. A fall or a failed step ends the run and is reported with the partial trace.
    """
    graph = graph or default_graph()
    model = experiment_model(config)
    human_fit = human_fit or experiment_human_fit(config)
    library = (library or prepare_gait(config, model, human_fit, graph)).with_v_hip(0.0)

    controller = ProsthesisController(ProsthesisSubsystem(model.params), library, config.controller_config(variant), graph)
    policy = ClosedLoopPolicy(model, library, controller, config.human, config.noise, config.delay_ticks, config.seed)
    simulator = Simulator(
        model, policy, graph, rate=controller.config.rate, disturbance=config.disturbance,
        fall_pitch=Config.fall_pitch, fall_height=Config.fall_height_fraction * model.params.leg_length,
    )
    q0, qdot0 = library.initial_qdot()
    n_steps = config.n_step_cycles * len(CYCLE)
    trace = SimTrace(metadata={"variant": variant, "name": config.name, "seed": config.seed})
    fall = None
    for set_index in range(config.n_sets):
        policy.reset()
        try:
            part = simulator.run(HybridState(DomainId.RHS, q0.copy(), qdot0.copy()), n_steps)
        except StepError as exc:
            part = exc.trace or SimTrace()
            fall = {"set": set_index, "step": exc.step_index, "code": exc.code, "message": str(exc.cause)}
            logger.warning("%s run stopped in set %d at step %d: %s", variant, set_index, exc.step_index, exc.cause)
        _append_set(trace, part, set_index, set_index * n_steps)
        if fall is not None:
            break

    metrics = compute_metrics(trace, library, human_fit) if len(trace) else None
    if metrics is not None and metrics.fallbacks:
        logger.warning("%s controller fell back on %d ticks", variant, metrics.fallbacks)
    return ExperimentResult(variant, trace, metrics, fall)


# reports

def _grf_steps(trace: SimTrace, graph: HybridGraph) -> pd.DataFrame:
    """Prosthesis-foot insole readings over each stance, with stance-normalized percent."""
    frame = trace.to_frame()
    stance = frame[[bool(graph[domain].prosthesis_contacts) for domain in frame["domain"]]].copy()
    stance["step"] = stance["domain_index"] // len(CYCLE)
    bounds = stance.groupby("step")["time"].agg(["min", "max"])
    span = (bounds["max"] - bounds["min"]).replace(0.0, np.nan)
    start = stance["step"].map(bounds["min"])
    stance["stance_percent"] = (100.0 * (stance["time"] - start) / stance["step"].map(span)).fillna(0.0)
    return stance[["step", "domain", "time", "stance_percent", "insole_fz", "insole_my", "grf_x"]]


def rmse_table(results) -> pd.DataFrame:
    """One row per controller variant with knee and ankle RMSE in rad."""
    rows = []
    for result in results:
        rmse = result.metrics.rmse if result.metrics is not None else {joint: float("nan") for joint in TRACKED}
        rows.append({"controller": result.variant, **{f"{TRACKED[j]}_rmse": rmse[j] for j in TRACKED}})
    return pd.DataFrame(rows, columns=["controller", *(f"{name}_rmse" for name in TRACKED.values())])


def export_tracking_report(result: ExperimentResult, human_fit: HumanFit | None, out_dir: str,
                           graph: HybridGraph | None = None) -> dict:
    """
    Write the plot-ready CSVs of one run: phase portraits, mean curves, per-step insole forces and the RMSE table.
    :return: {report name: path}
    """
    graph = graph or default_graph()
    os.makedirs(out_dir, exist_ok=True)
    trace = result.trace
    frame = trace.to_frame()
    if frame.empty:
        raise ValidationError(f"{result.variant} run recorded no controller ticks")
    paths = {name: os.path.join(out_dir, f"{name}.csv") for name in ("phase_portrait", "mean_curves", "grf_steps", "rmse_table")}

    portrait = pd.DataFrame({"time": frame["time"], "domain": frame["domain"]})
    for joint in TRACKED:
        portrait[f"theta_{joint}"] = frame[f"q_{joint}"]
        portrait[f"dtheta_{joint}"] = frame[f"dq_{joint}"]
    portrait.to_csv(paths["phase_portrait"], index=False, float_format=FLOAT_FORMAT)

    curves = result.metrics.curves if result.metrics is not None else mean_tracking_curves(trace, human_fit)
    curves.to_csv(paths["mean_curves"], index=False, float_format=FLOAT_FORMAT)
    _grf_steps(trace, graph).to_csv(paths["grf_steps"], index=False, float_format=FLOAT_FORMAT)
    rmse_table([result]).to_csv(paths["rmse_table"], index=False, float_format=FLOAT_FORMAT)
    return paths


def write_run(result: ExperimentResult, human_fit: HumanFit | None, out_dir: str, graph: HybridGraph | None = None) -> dict:
    """Trace, events, metrics and the tracking report of one run."""
    paths = export_tracking_report(result, human_fit, out_dir, graph)
    paths["trace"] = os.path.join(out_dir, "trace.csv")
    paths["events"] = os.path.join(out_dir, "events.csv")
    paths["metrics"] = os.path.join(out_dir, "metrics.yaml")
    result.trace.save_csv(paths["trace"])
    result.trace.save_events(paths["events"])
    summary = {"variant": result.variant, "completed": result.completed, "fall": result.fall}
    if result.metrics is not None:
        summary.update(result.metrics.to_dict())
    with open(paths["metrics"], "w") as handle:
        yaml.safe_dump(summary, handle, sort_keys=False)
    return paths


def compare(config: ExperimentConfig, out_dir: str | None = None, graph: HybridGraph | None = None):
    """
    Run every configured controller variant on the same gait, one after another, each into its own directory.
    :return: (RMSE table, list of ExperimentResult)
    """
    graph = graph or default_graph()
    out_dir = out_dir or config.output_dir
    model = experiment_model(config)
    human_fit = experiment_human_fit(config)
    library = prepare_gait(config, model, human_fit, graph)
    results = []
    for variant in config.variants:
        result = run_experiment(config, variant, library, human_fit, graph)
        write_run(result, human_fit, os.path.join(out_dir, variant), graph)
        results.append(result)
    table = rmse_table(results)
    os.makedirs(out_dir, exist_ok=True)
    table.to_csv(os.path.join(out_dir, "rmse_table.csv"), index=False, float_format=FLOAT_FORMAT)
    return table, results


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Copy of ``config`` with the non-None overrides applied (command-line --seed, --out)."""
    return replace(config, **{key: value for key, value in overrides.items() if value is not None})
