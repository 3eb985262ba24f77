"""Non-orthogonal beam design for beamspace NOMA downlinks.

Modules
-------
channel
    ULA steering vectors, the beamspace basis and the multipath drop generator.
clustering
    Angular clustering of UEs and SIC ordering.
rates
    Per-beam SINR, the closed-form rate bound and Monte Carlo ergodic rates.
beamdesign
    WMMSE-type solvers and the MF, SDMA and TDMA baselines.
simcli
    Scenario configs, sweeps, convergence traces and CSV output.
"""

from .beamdesign import (ALGORITHMS, SolverConfig, SolverTrace, baseline_mf, baseline_sdma, baseline_tdma,
                         design_for, solve_full_space, solve_partial_space, solve_single_beam)
from .channel import ArrayConfig, ChannelParams, UEProfile, beamspace_basis, steering_vector
from .clustering import ClusteredScenario, cluster_scenario
from .rates import BeamDesign, RateReport, ergodic_weighted_sum_rate, upper_bound
from .simcli import ScenarioConfig, SweepSpec, load_scenario, run_sweep

__version__ = "0.1.0"
