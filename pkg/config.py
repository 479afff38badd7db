"""
Centralized configuration for the simulation and control stack
"""
class Config:
    gravity = 9.81 # m/s^2

    # integration
    physics_step = 1e-4 # s
    event_tol = 1e-10
    event_max_bisections = 200
    max_domain_time = 2.0 # s

    # hybrid execution
    admissibility_tol = 1e-5 # m, active contact height drift
    grf_tol = 1e-8 # N
    transversality_tol = 1e-6
    contact_rank_tol = 1e-8 # smallest singular value of a contact jacobian

    # solvers
    qp_tol = 1e-8
    qp_hessian_floor = 1e-12
    nlp_tol = 1e-6
    nlp_constraint_tol = 1e-6
    nlp_max_iter = 500
    fd_rel_step = 1e-7
    care_residual_tol = 1e-8
    kleinman_iterations = 4
    decoupling_cond_max = 1e8

    # model defaults
    knee_range = (-0.1, 2.0) # rad
    spring_stiffness = 60000.0 # N/m
    spring_damping = 600.0 # N s/m
    sole_mass = 0.05 # kg, carved out of the foot when springs are on
    sole_inertia = 1e-5 # kg m^2
    prosthesis_mass = 5.95 # kg
    worn_system_mass = 10.54 # kg, prosthesis plus human adapter
    mass_check_tol = 0.01 # kg

    # gait outputs
    bezier_degree = 5
    gait_schema_version = 1
    segment_boundaries = (12.0, 31.0, 50.0, 62.0, 81.0, 100.0) # percent of the gait cycle
    min_gait_samples = 50

    # controller
    controller_rate = 111.0 # Hz
    clf_epsilon = 0.1
    sigma = 1.0
    rho = 50.0
    u_max = 80.0 # N m
    reg_weight = 1e-6
    zeta_weight = 1e-8
    kp = 150.0
    kd = 10.0
    kya = 1.0
    kv = 10.0

    # simulated human
    human_kp = 800.0
    human_kd = 60.0
    human_torque_limit = 150.0 # N m
    torso_kp = 600.0
    torso_kd = 60.0

    # experiment
    n_step_cycles = 8
    fall_pitch = 0.6 # rad
    fall_height_fraction = 0.5 # of leg length
    default_seed = 7
    experiment_schema_version = 1

    # gait optimization
    gait_nodes = 10
    cycle_time = 1.1 # s
    torque_weight = 1e-3
    friction = 0.8
    phase_rate_margin = 1e-3
    gait_output_kp = 100.0
    gait_output_kd = 20.0
    gait_velocity_gain = 10.0
    duration_bounds = (0.04, 1.0) # s
    gait_clearance = 0.01 # m, swing points above the ground in gaits built from the human fit
    gait_refine = 4 # path samples per node interval in gaits built from the human fit
    poincare_tol = 1e-3
    pz_tol = 1e-6
    defect_tol = 1e-6
