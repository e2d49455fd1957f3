"""Reachability and risk analysis of filtered control loops under stealthy sensor attacks."""
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidArgumentError,
    SingularDivisionError,
    SingularityError,
    UnsupportedOrderError,
)
from .estimator import DetectorConfig, FilterState, SystemModel, ukf_step, unscented_transform, ut_weights
from .expand import SmoothMap, affine_map, taylor_expand
from .reach import Flowpipe, ReachConfig, run_sra
from .risk import RiskField, RiskReport, RiskSet, build_field, dilute, rr_metric
from .scenario import ForkliftParams, forklift_model, sample_stealth_attacks, simulate_closed_loop
from .sets import Ellipsoid, Interval, Zonotope, intersects, reduce_order
from .taylor import Polynomial, TaylorModel, tm_to_zonotope, zonotope_to_tm

__version__ = "0.1.0"
