"""Over-threshold multiparty private set intersection.

N participants learn which of their elements occur in at least t of the N
sets.  An aggregator collects one share table per participant and finds
those elements by Lagrange interpolation over every t-subset of tables.
"""

from .aggregator import HitRecord, HitReport, reconstruct_hits
from .errors import OtmpsiError, ParameterError, ProtocolError, SessionTimeout
from .ingest import ingest_hourly_sets, oracle_over_threshold
from .keyed_hash import ParticipantKey
from .oprf import OprfKeyShare
from .runtime import run_session_collusion_safe, run_session_noninteractive, simulate_local
from .shares import COLLUSION_SAFE, NON_INTERACTIVE, SessionParams
from .tables import ShareTable, build_share_table

__version__ = "0.1.0"

__all__ = [
    "COLLUSION_SAFE",
    "HitRecord",
    "HitReport",
    "NON_INTERACTIVE",
    "OprfKeyShare",
    "OtmpsiError",
    "ParameterError",
    "ParticipantKey",
    "ProtocolError",
    "SessionParams",
    "SessionTimeout",
    "ShareTable",
    "build_share_table",
    "ingest_hourly_sets",
    "oracle_over_threshold",
    "reconstruct_hits",
    "run_session_collusion_safe",
    "run_session_noninteractive",
    "simulate_local",
]
