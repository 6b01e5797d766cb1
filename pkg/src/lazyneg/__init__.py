"""Matrix-free logarithmic negativity via stochastic Lanczos quadrature."""
__version__ = "0.1.0"

from .mps import BlockSpec, Mps, logneg_mps_blocks, mps_from_dense
from .oracle import exact_logneg, reduce_dense
from .pts import Negativity, PureState, TriPartition, logneg_pts, random_pure_state
from .slq import SlqConfig, TraceEstimate, slq_trace

__all__ = [
    "BlockSpec", "Mps", "Negativity", "PureState", "SlqConfig", "TraceEstimate",
    "TriPartition", "exact_logneg", "logneg_mps_blocks", "logneg_pts",
    "mps_from_dense", "random_pure_state", "reduce_dense", "slq_trace",
]
