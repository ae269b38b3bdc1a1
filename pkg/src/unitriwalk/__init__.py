"""Random walk on unitriangular matrices over Z_q, East models, and mixing certificates."""

from .gfq import FieldScalar, FieldVector, RankBasis, UnitriMatrix
from .walk import EventLog, sample_event_log

__version__ = "0.1.0"

__all__ = ["EventLog", "FieldScalar", "FieldVector", "RankBasis", "UnitriMatrix", "sample_event_log"]
