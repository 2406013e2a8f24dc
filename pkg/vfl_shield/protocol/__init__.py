"""Simulated feature-partitioned federated protocol with opaque exchanges."""

from vfl_shield.protocol.centralized import train_centralized
from vfl_shield.protocol.opaque import (
    AuditEvent,
    AuditLog,
    FusionKey,
    OpaqueVec,
    Provenance,
    TrustedThirdParty,
    reveal_for_audit,
    ttp_decrypt,
)
from vfl_shield.protocol.parties import ActiveParty, Party, PassiveParty, party_indices
from vfl_shield.protocol.session import RoundResult, VflSession, make_batch_plan

__all__ = [
    "ActiveParty",
    "AuditEvent",
    "AuditLog",
    "FusionKey",
    "OpaqueVec",
    "Party",
    "PassiveParty",
    "Provenance",
    "RoundResult",
    "TrustedThirdParty",
    "VflSession",
    "make_batch_plan",
    "party_indices",
    "reveal_for_audit",
    "train_centralized",
    "ttp_decrypt",
]
