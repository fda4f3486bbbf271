"""Face-ID registry shared across edge devices over a small TCP protocol."""

from .device import DeviceCache, DeviceUnreachable, SyncReport, min_pairwise_distance, sync_round
from .protocol import ProtocolError, SyncMessage, decode_stream, encode
from .registry import DEFAULT_THRESHOLD, DimensionMismatch, IdentityRecord, Proposal, Registry, Snapshot
from .server import RegistryClient, RegistryServer, RemoteError

__all__ = [
    "DEFAULT_THRESHOLD",
    "DeviceCache",
    "DeviceUnreachable",
    "DimensionMismatch",
    "IdentityRecord",
    "Proposal",
    "ProtocolError",
    "Registry",
    "RegistryClient",
    "RegistryServer",
    "RemoteError",
    "Snapshot",
    "SyncMessage",
    "SyncReport",
    "decode_stream",
    "encode",
    "min_pairwise_distance",
    "sync_round",
]
