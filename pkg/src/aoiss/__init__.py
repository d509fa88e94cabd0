"""Energy-minimal packet transmission under a peak Age-of-Information bound."""

from .power import PowerFunction, Segment, parse_power, schedule_energy, segment_energy
from .model import (
    AoiTrajectory,
    Instance,
    InfeasibleInstanceError,
    Packet,
    Schedule,
    check_feasible,
    trajectory_from_schedule,
    validate_instance,
)
from .causal import Action, PlannedPolicy, PolicyView, simulate
from .greedy import GreedyPolicy, greedy_speed, run_greedy
from .fcfs import fcfs_speed, run_fcfs
from .offline import (
    EnumerationCapError,
    FrameDecomposition,
    StructuralError,
    grid_oracle,
    solve_offline,
    verify_structure,
)
