"""snlab: a numerical laboratory for saddle-node unfoldings of unimodal maps.

Desk-scale machinery around a quadratic fold of a periodic orbit: time
coordinates of the local embedding flow, the crossing-count parameter
ladder, circle-invariant sampling of the return dynamics, parameters with
eventually-periodic critical orbits, induced maps that skip the
bottleneck, bounded-recurrence and binding diagnostics, and quantitative
intermittency statistics.
"""

from .family import (OrbitRecord, UnimodalFamily, evaluate, iterate,
                     lyapunov_slope, quadratic_family, schwarzian_at)
from .saddle import (PeriodicPointTrack, SaddleNodeData, continue_periodic_point,
                     gamma_convention, locate_saddle_node, repelling_points_of_f0)
from .phase import (Geometry, Ladder, PhaseChart, build_chart, gamma_ladder,
                    get_geometry, local_first_hit, tau, tau_bar, theta_map,
                    theta_of_gamma)
from .mather import (MatherTable, MisiurewiczSequence, mather_grid,
                     misiurewicz_sequence, return_map_residual, v_set)
from .induced import (InducedContext, IntervalImage, breve_interval_step,
                      build_induced, induced_orbit_deriv, induced_step)
from .recurrence import (RecurrenceParams, RecurrenceReport, binding_period,
                         br_check, br_scan, delta_partition)
from .intermit import (EmpiricalMeasure, LaminarProfile, chi_estimate,
                       hitting_time_stats, laminar_segments, measure_estimate,
                       scaling_fit, window_detect)
from .sweep import SweepConfig, SweepResult, emit, parse_config, run_sweep

__version__ = "0.1.0"
