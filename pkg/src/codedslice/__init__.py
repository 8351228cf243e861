"""Network slicing with coded (RLNC) and un-coded (SR-ARQ) reliability protocols."""

from .analytic import (
    NetworkModel,
    Protocol,
    ProtocolConfig,
    SliceSpec,
    predict,
    predict_slice,
    rlnc_expected_delay,
    rlnc_expected_goodput,
    rlnc_missing_dof_pmf,
    srarq_delay_pmf,
    srarq_expected_delay,
    srarq_expected_goodput,
)
from .errors import ConfigurationError, SimulationAborted, UsageError
from .planner import Requirement, capacity, min_links, plan_partition
from .sim_core import RlncMode, ScenarioConfig, aggregate, run_trials, simulate_slice

__version__ = "0.1.0"
