"""Central-system stub: MLLP results intake, EHR store, supplementary API."""

from .store import CorruptLogLine, EhrRecord, EhrStore, Observation
from .server import SimopacServer

__all__ = ["CorruptLogLine", "EhrRecord", "EhrStore", "Observation",
           "SimopacServer"]
