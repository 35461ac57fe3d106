"""Discovery document construction, agent client registration, key publication."""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional
from urllib.parse import urlparse

from .claims import (
    AGENT_CLAIM_NAMES,
    EAT_FORMAT_URN,
    STANDARD_AGENT_TYPES,
    validate_capability_identifier,
)
from .errors import InvalidCapability, InvalidConfig, InvalidMetadata, UnsupportedAuthMethod
from .keys import KeyRing

REGISTRATION_ENDPOINT = "/register"
DELEGATION_ENDPOINT = "/delegate"
ATTESTATION_ENDPOINT = "/agent/attest"
CAPABILITIES_ENDPOINT = "/agent/capabilities"
VERIFICATION_KEYS_ENDPOINT = "/keys/attestation"
REVOCATION_ENDPOINT = "/revoke"

DELEGATION_METHODS = ("chain",)

SUPPORTED_CONSTRAINT_KEYS = (
    "max_duration_seconds",
    "allowed_resources",
    "max_delegation_depth",
)

_REJECTED_AUTH_METHODS = frozenset(
    {"client_secret_basic", "client_secret_post", "client_secret_jwt"}
)
_ACCEPTED_AUTH_METHODS = frozenset({"private_key_jwt"})


@dataclass(frozen=True)
class DiscoveryDocument:
    issuer: str
    agent_claims_supported: tuple[str, ...]
    agent_types_supported: tuple[str, ...]
    delegation_methods_supported: tuple[str, ...]
    attestation_formats_supported: tuple[str, ...]
    agent_attestation_endpoint: Optional[str] = None
    agent_capabilities_endpoint: Optional[str] = None
    attestation_verification_keys_endpoint: Optional[str] = None

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "issuer": self.issuer,
            "registration_endpoint": self.issuer.rstrip("/") + REGISTRATION_ENDPOINT,
            "agent_claims_supported": list(self.agent_claims_supported),
            "agent_types_supported": list(self.agent_types_supported),
            "delegation_methods_supported": list(self.delegation_methods_supported),
            "attestation_formats_supported": list(self.attestation_formats_supported),
        }
        if self.agent_attestation_endpoint:
            out["agent_attestation_endpoint"] = self.agent_attestation_endpoint
        if self.agent_capabilities_endpoint:
            out["agent_capabilities_endpoint"] = self.agent_capabilities_endpoint
        if self.attestation_verification_keys_endpoint:
            out["attestation_verification_keys_endpoint"] = (
                self.attestation_verification_keys_endpoint
            )
        return out


def build_discovery_document(
    issuer: str,
    attestation_enabled: bool = True,
    capabilities_enabled: bool = True,
    extra_agent_types: tuple[str, ...] = (),
    attestation_formats: tuple[str, ...] = (),
) -> DiscoveryDocument:
    parsed = urlparse(issuer)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise InvalidConfig(f"issuer must be an absolute http(s) URL, got {issuer!r}")
    base = issuer.rstrip("/")
    formats = (EAT_FORMAT_URN,) + tuple(f for f in attestation_formats if f != EAT_FORMAT_URN)
    return DiscoveryDocument(
        issuer=issuer,
        agent_claims_supported=AGENT_CLAIM_NAMES,
        agent_types_supported=tuple(sorted(STANDARD_AGENT_TYPES)) + tuple(extra_agent_types),
        delegation_methods_supported=DELEGATION_METHODS,
        attestation_formats_supported=formats,
        agent_attestation_endpoint=base + ATTESTATION_ENDPOINT if attestation_enabled else None,
        agent_capabilities_endpoint=base + CAPABILITIES_ENDPOINT if capabilities_enabled else None,
        attestation_verification_keys_endpoint=(
            base + VERIFICATION_KEYS_ENDPOINT if attestation_enabled else None
        ),
    )


@dataclass(frozen=True)
class ClientRegistration:
    client_id: str
    agent_provider: str
    agent_models_supported: tuple[str, ...]
    agent_capabilities: tuple[str, ...]
    attestation_formats_supported: tuple[str, ...]
    delegation_methods_supported: tuple[str, ...]
    token_endpoint_auth_method: str = "private_key_jwt"
    jwks: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "client_id": self.client_id,
            "agent_provider": self.agent_provider,
            "agent_models_supported": list(self.agent_models_supported),
            "agent_capabilities": list(self.agent_capabilities),
            "attestation_formats_supported": list(self.attestation_formats_supported),
            "delegation_methods_supported": list(self.delegation_methods_supported),
            "token_endpoint_auth_method": self.token_endpoint_auth_method,
            "jwks": dict(self.jwks),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "ClientRegistration":
        return cls(
            client_id=obj["client_id"],
            agent_provider=obj["agent_provider"],
            agent_models_supported=tuple(obj["agent_models_supported"]),
            agent_capabilities=tuple(obj["agent_capabilities"]),
            attestation_formats_supported=tuple(obj["attestation_formats_supported"]),
            delegation_methods_supported=tuple(obj["delegation_methods_supported"]),
            token_endpoint_auth_method=obj.get("token_endpoint_auth_method", "private_key_jwt"),
            jwks=obj.get("jwks", {}),
        )


def _require_string_list(metadata: Mapping[str, Any], name: str, required: bool = True) -> tuple:
    value = metadata.get(name)
    if value is None:
        if required:
            raise InvalidMetadata(f"missing registration parameter {name!r}", field=name)
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
        raise InvalidMetadata(f"{name} must be an array of non-empty strings", field=name)
    return tuple(value)


def process_registration_request(metadata: Mapping[str, Any]) -> ClientRegistration:
    """Validate agent registration metadata and assign a client_id.

    Shared-secret authentication methods are rejected outright; automated
    agents get asymmetric credentials or nothing.
    """
    if not isinstance(metadata, Mapping):
        raise InvalidMetadata("registration metadata must be a JSON object")

    provider = metadata.get("agent_provider")
    if not isinstance(provider, str) or not provider:
        raise InvalidMetadata("agent_provider must be a non-empty string", field="agent_provider")

    models = _require_string_list(metadata, "agent_models_supported")
    capabilities = _require_string_list(metadata, "agent_capabilities", required=False)
    for cap in capabilities:
        try:
            validate_capability_identifier(cap)
        except InvalidCapability as exc:
            raise InvalidMetadata(
                f"invalid capability identifier {cap!r}", field="agent_capabilities"
            ) from exc
    attestation_formats = _require_string_list(
        metadata, "attestation_formats_supported", required=False
    )
    delegation_methods = _require_string_list(
        metadata, "delegation_methods_supported", required=False
    ) or DELEGATION_METHODS

    auth_method = metadata.get("token_endpoint_auth_method", "private_key_jwt")
    if auth_method in _REJECTED_AUTH_METHODS:
        raise UnsupportedAuthMethod(
            f"shared-secret authentication ({auth_method}) is rejected for agents"
        )
    if auth_method not in _ACCEPTED_AUTH_METHODS:
        raise UnsupportedAuthMethod(f"unsupported authentication method {auth_method!r}")

    jwks = metadata.get("jwks", {})
    if not isinstance(jwks, Mapping):
        raise InvalidMetadata("jwks must be a JSON object", field="jwks")

    return ClientRegistration(
        client_id="agent-" + secrets.token_hex(8),
        agent_provider=provider,
        agent_models_supported=models,
        agent_capabilities=capabilities,
        attestation_formats_supported=attestation_formats,
        delegation_methods_supported=delegation_methods,
        token_endpoint_auth_method=auth_method,
        jwks=dict(jwks),
    )


_PRIVATE_JWK_FIELDS = ("d", "p", "q", "dp", "dq", "qi", "k", "oth")


def publish_verification_keys(keyring: KeyRing) -> dict:
    """Public JWK set for the verification-keys endpoint; never leaks private parts."""
    jwks = keyring.public_jwks()
    for jwk in jwks["keys"]:
        for name in _PRIVATE_JWK_FIELDS:
            assert name not in jwk, f"private JWK member {name!r} would be published"
    return jwks


@dataclass(frozen=True)
class CapabilityDescriptor:
    id: str
    description: str = ""
    supported_constraints: tuple[str, ...] = SUPPORTED_CONSTRAINT_KEYS

    def __post_init__(self):
        validate_capability_identifier(self.id)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "supported_constraints": list(self.supported_constraints),
        }
