"""Memory-centric DRAM simulation: read disturbance, mitigations, SMD, PUD and PNM."""

from .geometry import (AddressError, ConfigError, DramGeometry, ProtocolError,
                       RowAddress, TimingParams)
from .disturbance import BitflipEvent, DisturbanceProfile
from .mitigation import MitigationConfig
from .dram import Command, CommandKind, Device, Response, ResponseKind, new_device
from .smd import SmdConfig

__version__ = "0.1.0"

__all__ = [
    "AddressError", "BitflipEvent", "Command", "CommandKind", "ConfigError", "Device",
    "DisturbanceProfile", "DramGeometry", "MitigationConfig", "ProtocolError", "Response",
    "ResponseKind", "RowAddress", "SmdConfig", "TimingParams", "new_device",
]
