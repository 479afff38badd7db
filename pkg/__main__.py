from time import process_time

import numpy as np

from config import Config
from prosthesis.controllers import SENSOR, ControllerConfig, ProsthesisController
from prosthesis.domains import DomainId, default_graph
from prosthesis.errors import ProsthesisError
from prosthesis.experiment import ClosedLoopPolicy, ExperimentConfig, experiment_human_fit, experiment_model
from prosthesis.gait_opt import gait_from_human_fit
from prosthesis.hybrid import HybridState, Simulator
from prosthesis.model import constrained_forward_dynamics
from prosthesis.qp import QpSpec, solve_qp
from prosthesis.sensing import extract_sensor_frame
from prosthesis.subsystem import ProsthesisSubsystem

# Subject at the default anthropometry walking the fitted human cycle
config = ExperimentConfig(gait_nodes=6, validate_gait=False)
graph = default_graph()
model = experiment_model(config)
library = gait_from_human_fit(model, experiment_human_fit(config), graph, nodes=config.gait_nodes).with_v_hip(0.0)
q, qdot = library.initial_qdot()
contacts = graph[DomainId.RHS].contacts
u = np.zeros(6)

# Measuring constrained dynamics
dynamics_time_0 = process_time()
for i in range(0, 1000):
    qddot, lam, cs = constrained_forward_dynamics(model, q, qdot, u, contacts)
dynamics_time_1 = process_time()
print("Constrained dynamics 1k evaluations took:\t", dynamics_time_1 - dynamics_time_0)

# Measuring QP solve: box-constrained problem the size of the controller QP
rng = np.random.default_rng(Config.default_seed)
M = rng.standard_normal((9, 9))
qps = [
    QpSpec(M @ M.T + np.eye(9), rng.standard_normal(9), ineq_A=np.vstack([np.eye(9), -np.eye(9)]), ineq_b=np.full(18, 0.5))
    for _ in range(100)
]
qp_time_0 = process_time()
for i in range(0, 1000):
    solve_qp(qps[i % 100])
qp_time_1 = process_time()
print("QP solve 1k problems took:  \t\t\t", qp_time_1 - qp_time_0)

# Measuring controller ticks
controller = ProsthesisController(ProsthesisSubsystem(model.params), library, ControllerConfig(variant=SENSOR), graph)
policy = ClosedLoopPolicy(model, library, controller, config.human)
policy.enter_domain(DomainId.RHS, 0.0, q, qdot)
frame = extract_sensor_frame(model, q, qdot, cs, lam)
tick_time_0 = process_time()
for i in range(0, 1000):
    policy.tick(DomainId.RHS, 0.0, q, qdot, frame)
tick_time_1 = process_time()
print("ID-CLF-QP 1k controller ticks took:  \t\t", tick_time_1 - tick_time_0)

# Measuring one domain segment
simulator = Simulator(model, policy, graph)
segment_time_0 = process_time()
try:
    run = simulator.run_domain(HybridState(DomainId.RHS, q.copy(), qdot.copy()))
    outcome = f"{len(run.rows)} ticks into {run.next_state.domain}"
except ProsthesisError as exc:
    outcome = f"stopped: {exc}"
segment_time_1 = process_time()
print("One rhs domain segment took:  \t\t\t", segment_time_1 - segment_time_0, outcome)
