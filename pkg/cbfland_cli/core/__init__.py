"""cbfland Core Numerics

Geometry and rigid-body dynamics, landing and spherical barriers, the QP
safety filter, the position/velocity/attitude controllers and UGV motion
programs. The simulator, pipeline, export and validation modules depend on
scenario configuration and are imported from their own modules.
"""

from .barriers import D_TOL, BarrierEval, LcbfParams, lcbf_eval, lcbf_value, scbf_eval, shaping_from_peak
from .controllers import (
    AttitudeReference,
    GainSet,
    ThrustModel,
    attitude_control,
    body_force_map,
    desired_attitude,
    nominal_position_control,
    velocity_tracking_control,
)
from .errors import (
    CbfLandError,
    DegenerateThrustError,
    GimbalDegenerateError,
    NearAxisError,
    NonFiniteStateError,
    QpInfeasibleError,
    ScenarioError,
    SimulationHalted,
)
from .geometry import UavParams, UavState, UgvState, hat, step_full_dynamics, step_kinematic, vee
from .motion import MotionProgram, ugv_state_at
from .safety_filter import FilterConfig, FilterResult, assemble_constraints, pair_row_index, solve_qp

__all__ = [
    # Barriers
    'D_TOL',
    'BarrierEval',
    'LcbfParams',
    'lcbf_eval',
    'lcbf_value',
    'scbf_eval',
    'shaping_from_peak',

    # Controllers
    'AttitudeReference',
    'GainSet',
    'ThrustModel',
    'attitude_control',
    'body_force_map',
    'desired_attitude',
    'nominal_position_control',
    'velocity_tracking_control',

    # Errors
    'CbfLandError',
    'DegenerateThrustError',
    'GimbalDegenerateError',
    'NearAxisError',
    'NonFiniteStateError',
    'QpInfeasibleError',
    'ScenarioError',
    'SimulationHalted',

    # Geometry and dynamics
    'UavParams',
    'UavState',
    'UgvState',
    'hat',
    'vee',
    'step_kinematic',
    'step_full_dynamics',

    # Motion programs
    'MotionProgram',
    'ugv_state_at',

    # Safety filter
    'FilterConfig',
    'FilterResult',
    'assemble_constraints',
    'pair_row_index',
    'solve_qp',
]
