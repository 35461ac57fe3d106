"""EAT attestation verification: nonces, freshness, signatures, measurements.

The EAT payload profile used here carries {iss, iat, nonce, agent_provider,
agent_model, agent_version, measurement} with the measurement a lowercase
hex SHA-256 digest. Verification is pure except for nonce consumption,
which burns the nonce on any presentation, even when the signature fails.
"""

from __future__ import annotations

import re
import secrets
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .claims import EAT_FORMAT_URN, AttestationEvidence
from .errors import InvalidDigest, MalformedEvidence, MalformedToken
from .keys import (
    PublicKey,
    SigningKeyRecord,
    b64url_encode,
    jws_decode_unverified,
    jws_sign_compact,
    jws_verify_compact,
)
from .store import MemoryStore

_HEX_DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")

CHECKS = ("signature", "nonce", "freshness", "measurement")

DEFAULT_FRESHNESS_WINDOW = 300
DEFAULT_NONCE_TTL = 300


@dataclass
class AttestationPolicy:
    trusted_attestation_keys: Mapping[str, tuple[str, PublicKey]]
    freshness_window_seconds: int = DEFAULT_FRESHNESS_WINDOW
    nonce_ttl_seconds: int = DEFAULT_NONCE_TTL
    reference_measurements: dict[tuple[str, str, str], str] = field(default_factory=dict)

    def __post_init__(self):
        if self.freshness_window_seconds <= 0:
            raise MalformedEvidence("freshness_window_seconds must be positive")
        if self.nonce_ttl_seconds <= 0:
            raise MalformedEvidence("nonce_ttl_seconds must be positive")
        for digest in self.reference_measurements.values():
            _require_digest(digest)

    def register_reference_measurement(
        self, provider: str, model: str, version: str, digest: str
    ) -> None:
        _require_digest(digest)
        self.reference_measurements[(provider, model, version)] = digest


def _require_digest(digest: str) -> None:
    if not isinstance(digest, str) or not _HEX_DIGEST_RE.match(digest):
        raise InvalidDigest("measurement digest must be 64 lowercase hex characters")


@dataclass
class AttestationResult:
    status: str  # verified | failed | unsupported_format
    checks: dict[str, bool]
    agent_binding: dict[str, Optional[str]]
    verified_at: int

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "checks": dict(self.checks),
            "agent_binding": dict(self.agent_binding),
            "verified_at": self.verified_at,
        }


class NonceStore:
    """Single-use nonces bound to an agent, with TTL, on top of the store."""

    OK = "ok"
    UNKNOWN = "unknown_or_expired"
    WRONG_AUDIENCE = "wrong_audience"
    CONSUMED = "consumed"

    def __init__(self, store: MemoryStore, ttl_seconds: int = DEFAULT_NONCE_TTL):
        self._store = store
        self.ttl_seconds = ttl_seconds

    def issue(self, agent_id: str, now: int) -> str:
        if not agent_id:
            raise MalformedEvidence("agent_id must be non-empty")
        value = b64url_encode(secrets.token_bytes(16))
        self._store.put(
            "nonces",
            value,
            {"audience": agent_id, "issued_at": now},
            ttl=self.ttl_seconds,
        )
        return value

    def peek(self, value: str) -> Optional[dict]:
        return self._store.get("nonces", value)

    def consume(self, value: str, agent_id: str) -> str:
        """Atomically burn the nonce; only one caller ever gets OK."""
        record = self._store.get("nonces", value)
        if record is None:
            return self.UNKNOWN
        if not self._store.consume_once("nonces", value):
            return self.CONSUMED
        if record["audience"] != agent_id:
            return self.WRONG_AUDIENCE
        return self.OK


def build_eat_token(
    key: SigningKeyRecord,
    issuer: str,
    nonce: str,
    agent_provider: str,
    agent_model: str,
    agent_version: str,
    measurement: str,
    issued_at: int,
) -> str:
    """Produce a signed EAT evidence token with this module's payload profile."""
    _require_digest(measurement)
    payload = {
        "iss": issuer,
        "iat": issued_at,
        "nonce": nonce,
        "agent_provider": agent_provider,
        "agent_model": agent_model,
        "agent_version": agent_version,
        "measurement": measurement,
    }
    return jws_sign_compact(payload, key, typ="eat+jwt")


def verify_attestation_evidence(
    evidence: AttestationEvidence,
    policy: AttestationPolicy,
    expected_nonce: str,
    now: int,
    nonce_store: NonceStore,
    agent_id: str,
) -> AttestationResult:
    """Run the four attestation checks; status is verified iff all pass."""
    if evidence.format != EAT_FORMAT_URN:
        return AttestationResult(
            status="unsupported_format",
            checks={c: False for c in CHECKS},
            agent_binding={"provider": None, "model": None, "version": None},
            verified_at=now,
        )

    try:
        _, payload, _, _ = jws_decode_unverified(evidence.token)
    except MalformedToken as exc:
        raise MalformedEvidence(f"undecodable attestation token: {exc}") from exc

    checks = {c: False for c in CHECKS}

    # Nonce burns before any other verdict so harvested nonces cannot be
    # probed against the signature oracle.
    consume_outcome = nonce_store.consume(expected_nonce, agent_id)
    checks["nonce"] = (
        consume_outcome == NonceStore.OK and payload.get("nonce") == expected_nonce
    )

    try:
        jws_verify_compact(evidence.token, policy.trusted_attestation_keys)
        checks["signature"] = True
    except MalformedToken:
        checks["signature"] = False
    except Exception:
        checks["signature"] = False

    timestamp = evidence.timestamp if evidence.timestamp is not None else payload.get("iat")
    if isinstance(timestamp, int):
        checks["freshness"] = abs(now - timestamp) <= policy.freshness_window_seconds

    provider = payload.get("agent_provider")
    model = payload.get("agent_model")
    version = payload.get("agent_version")
    reference = policy.reference_measurements.get((provider, model, version))
    measured = payload.get("measurement")
    checks["measurement"] = reference is not None and measured == reference

    return AttestationResult(
        status="verified" if all(checks.values()) else "failed",
        checks=checks,
        agent_binding={"provider": provider, "model": model, "version": version},
        verified_at=now,
    )


def build_attestation_response(
    agent_id: str, result: AttestationResult, signing_key: SigningKeyRecord
) -> str:
    """Signed endpoint response token carrying the verification verdict."""
    payload: dict[str, Any] = {
        "agent_id": agent_id,
        "status": result.status,
        "agent_provider": result.agent_binding.get("provider"),
        "agent_model": result.agent_binding.get("model"),
        "agent_version": result.agent_binding.get("version"),
        "verified_at": result.verified_at,
        "checks": dict(result.checks),
    }
    return jws_sign_compact(payload, signing_key, typ="JWT")
