"""Ciphertext stand-in with an additively homomorphic interface.

``OpaqueVec`` never exposes its payload. Code holding one may add, scale,
linearly recombine rows, add encrypted constants and push it through a
model's parameter-gradient map, which is exactly what additive HE permits.
Plaintext only comes back out through three doors, all recorded in an
``AuditLog``:

* ``TrustedThirdParty.decrypt``: aggregated vectors only.
* ``FusionKey.open_embeddings``: forward embeddings, held by the active party.
* ``reveal_for_audit``: test and diagnostics only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from vfl_shield.errors import AccessViolation, ShapeError, ThreatModelViolation
from vfl_shield.numerics.functional import Array
from vfl_shield.numerics.mlp import Mlp, param_grad_from_output_grads

logger = logging.getLogger(__name__)

MIXED_PARTY = -1
KINDS = ("embedding", "gradient", "param_grad", "constant")


@dataclass(frozen=True)
class Provenance:
    """Who created a ciphertext, for which samples, and at what granularity."""

    party: int
    sample_ids: Tuple[int, ...]
    kind: str
    aggregate: bool = False

    def merge(self, other: "Provenance") -> "Provenance":
        """Provenance of the sum of two ciphertexts."""
        party = self.party if self.party == other.party else MIXED_PARTY
        if other.kind == "constant":
            party = self.party
        return Provenance(
            party=party,
            sample_ids=self.sample_ids,
            kind=self.kind,
            aggregate=self.aggregate and (other.aggregate or other.kind == "constant"),
        )


@dataclass(frozen=True)
class AuditEvent:
    """One plaintext opening."""

    reader: str
    reader_party: Optional[int]
    provenance: Provenance


@dataclass
class AuditLog:
    """Append-only record of every payload opening in a session."""

    events: List[AuditEvent] = field(default_factory=list)

    def record(self, reader: str, reader_party: Optional[int], prov: Provenance):
        """Append an event."""
        self.events.append(AuditEvent(reader, reader_party, prov))

    def opened_by(self, party: int) -> List[AuditEvent]:
        """Events in which ``party`` received plaintext."""
        return [e for e in self.events if e.reader_party == party]

    def sample_level_leaks(self, passive_parties: Sequence[int]) -> List[AuditEvent]:
        """Events where a passive party saw non-aggregated plaintext."""
        passive = set(passive_parties)
        return [
            e
            for e in self.events
            if e.reader_party in passive
            and e.reader != "audit"
            and not e.provenance.aggregate
        ]


class OpaqueVec:
    """Encrypted block of per-sample vectors (one row per sample) or an aggregate.

    The shape is public metadata, as ciphertext sizes are; the values are not.
    """

    __slots__ = ("__payload", "provenance")

    def __init__(self, payload: Array, provenance: Provenance):
        """Wrap a payload. Prefer ``OpaqueVec.encrypt``."""
        self.__payload = np.array(payload, dtype=np.float64, copy=True)
        self.provenance = provenance

    @classmethod
    def encrypt(
        cls,
        plain: Array,
        party: int,
        sample_ids: Sequence[int] = (),
        kind: str = "gradient",
        aggregate: bool = False,
    ) -> "OpaqueVec":
        """Encrypt plaintext under the session's public key.

        Args:
            plain: Rows of per-sample vectors, or a flat aggregate.
            party: Index of the encrypting party.
            sample_ids: Sample ids of the rows.
            kind: One of ``KINDS``.
            aggregate: Whether the payload is batch-level.
        """
        if kind not in KINDS:
            raise ValueError(f"unknown ciphertext kind {kind!r}")
        ids = tuple(int(i) for i in sample_ids)
        return cls(plain, Provenance(party, ids, kind, aggregate))

    @property
    def shape(self) -> Tuple[int, ...]:
        """Ciphertext dimensions."""
        return self.__payload.shape

    def _check_same_shape(self, other: "OpaqueVec") -> None:
        if self.shape != other.shape:
            raise ShapeError(f"cannot combine shapes {self.shape} and {other.shape}")

    def add(self, other: "OpaqueVec") -> "OpaqueVec":
        """Homomorphic addition."""
        self._check_same_shape(other)
        return OpaqueVec(
            self.__payload + other.__payload,
            self.provenance.merge(other.provenance),
        )

    def add_plain(self, constant: Array, party: Optional[int] = None) -> "OpaqueVec":
        """Add an encrypted plaintext constant, [[v]] + [[c]]."""
        constant = np.broadcast_to(np.asarray(constant, dtype=np.float64), self.shape)
        enc = OpaqueVec.encrypt(
            constant,
            party=self.provenance.party if party is None else party,
            kind="constant",
        )
        return self.add(enc)

    def scale(self, alpha: float) -> "OpaqueVec":
        """Multiply by a plaintext scalar."""
        return OpaqueVec(self.__payload * float(alpha), self.provenance)

    def linear_combine(
        self, weights: Array, sample_ids: Optional[Sequence[int]] = None
    ) -> "OpaqueVec":
        """Recombine rows with a plaintext matrix: new_rows = weights @ rows.

        Args:
            weights: Matrix of shape [rows_out, rows_in].
            sample_ids: Sample ids of the output rows; defaults to the input
                ids when the row count is unchanged.
        """
        weights = np.asarray(weights, dtype=np.float64)
        if self.__payload.ndim != 2 or weights.shape[1] != self.shape[0]:
            raise ShapeError(
                f"weights {weights.shape} cannot combine rows of {self.shape}"
            )
        if sample_ids is None:
            sample_ids = (
                self.provenance.sample_ids if weights.shape[0] == self.shape[0] else ()
            )
        prov = Provenance(
            self.provenance.party,
            tuple(int(i) for i in sample_ids),
            self.provenance.kind,
            self.provenance.aggregate,
        )
        return OpaqueVec(weights @ self.__payload, prov)

    def param_grad(self, mlp: Mlp, x: Array, party: int) -> "OpaqueVec":
        """Encrypted batch-mean parameter gradient (1/B) sum_i J_i^T [[g_i]].

        The map is linear in the payload and uses only plaintext model
        quantities, so it is computable under additive HE. The result is
        batch-level and therefore decryptable by the TTP.
        """
        if self.__payload.ndim != 2:
            raise ShapeError("param_grad needs one row per sample")
        flat = param_grad_from_output_grads(mlp, x, self.__payload)
        prov = Provenance(party, self.provenance.sample_ids, "param_grad", True)
        return OpaqueVec(flat, prov)

    def _open(self) -> Array:
        return self.__payload.copy()

    def __repr__(self) -> str:
        p = self.provenance
        return (
            f"OpaqueVec(shape={self.shape}, party={p.party}, kind={p.kind}, "
            f"aggregate={p.aggregate})"
        )

    def __bool__(self) -> bool:
        return True

    def _deny(self, *args, **kwargs):
        raise AccessViolation("OpaqueVec payloads cannot be read directly")

    __array__ = _deny
    __iter__ = _deny
    __getitem__ = _deny
    __float__ = _deny
    __reduce__ = _deny
    __reduce_ex__ = _deny
    __eq__ = _deny
    __hash__ = None  # type: ignore[assignment]


class TrustedThirdParty:
    """Decryption oracle that only ever releases batch-level aggregates."""

    def __init__(self, audit: Optional[AuditLog] = None):
        """Initialize the TTP.

        Args:
            audit: Log shared with the session; a fresh one if omitted.
        """
        self.audit = audit if audit is not None else AuditLog()

    def decrypt(self, opaque: OpaqueVec, requester: Optional[int] = None) -> Array:
        """Decrypt an aggregated ciphertext for ``requester``.

        Raises:
            ThreatModelViolation: If the ciphertext is sample-level.
        """
        if not isinstance(opaque, OpaqueVec):
            raise TypeError("TTP only decrypts OpaqueVec values")
        if not opaque.provenance.aggregate:
            logger.warning(
                "refused per-sample decryption requested by party %s", requester
            )
            raise ThreatModelViolation(
                "only batch-averaged aggregates may be decrypted by the TTP"
            )
        self.audit.record("ttp", requester, opaque.provenance)
        return opaque._open()


def ttp_decrypt(opaque: OpaqueVec, ttp: Optional[TrustedThirdParty] = None) -> Array:
    """Decrypt an aggregate through ``ttp`` (a throwaway TTP if omitted)."""
    return (ttp or TrustedThirdParty()).decrypt(opaque)


class FusionKey:
    """Capability held by the active party to fuse passive embeddings."""

    def __init__(self, party: int, audit: AuditLog):
        """Bind the key to the active party's index and the session log."""
        self.party = party
        self.audit = audit

    def open_embeddings(self, opaque: OpaqueVec) -> Array:
        """Open forward embeddings at the fusion point.

        Raises:
            AccessViolation: If the ciphertext is not an embedding.
        """
        if opaque.provenance.kind != "embedding":
            raise AccessViolation(
                f"fusion key cannot open {opaque.provenance.kind} ciphertexts"
            )
        self.audit.record("fusion", self.party, opaque.provenance)
        return opaque._open()


def reveal_for_audit(opaque: OpaqueVec, audit: Optional[AuditLog] = None) -> Array:
    """Read a payload for tests and diagnostics; the read is logged."""
    if audit is not None:
        audit.record("audit", None, opaque.provenance)
    return opaque._open()
