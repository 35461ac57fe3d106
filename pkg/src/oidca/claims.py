"""Agent identity claim vocabulary: types, format validation, (de)serialization.

The claim names here are the wire names carried inside agent ID Tokens.
``parse_agent_claims`` accepts a full token payload (standard OIDC claims are
left untouched) and extracts the agent-specific subset.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .errors import (
    InvalidAgentType,
    InvalidCapability,
    MalformedClaim,
    MissingRequiredClaim,
)

EAT_FORMAT_URN = "urn:ietf:params:oauth:token-type:eat"

STANDARD_AGENT_TYPES = frozenset(
    {"assistant", "retrieval", "coding", "domain_specific", "autonomous", "supervised"}
)

_SEGMENT = r"[a-z0-9_.\-]+"
_NAMESPACED_TYPE_RE = re.compile(rf"^{_SEGMENT}:{_SEGMENT}$")
_CAPABILITY_RE = re.compile(rf"^{_SEGMENT}(:{_SEGMENT})*$")

REQUIRED_AGENT_CLAIMS = ("agent_type", "agent_model", "agent_provider", "agent_instance_id")

# Every agent claim name this extension defines, in wire spelling.
AGENT_CLAIM_NAMES = (
    "agent_type",
    "agent_model",
    "agent_version",
    "agent_provider",
    "agent_instance_id",
    "delegator_sub",
    "delegation_chain",
    "delegation_purpose",
    "delegation_constraints",
    "agent_capabilities",
    "agent_trust_level",
    "agent_attestation",
    "agent_context_id",
)


def validate_agent_type(type_string: str) -> None:
    """Accept the six standard types or a lowercase ``vendor:type`` pair."""
    if not isinstance(type_string, str):
        raise InvalidAgentType("agent_type must be a string")
    if type_string in STANDARD_AGENT_TYPES:
        return
    if _NAMESPACED_TYPE_RE.match(type_string):
        return
    raise InvalidAgentType(
        f"agent_type {type_string!r} is neither a standard type nor a valid "
        "namespaced vendor:type identifier"
    )


def is_valid_agent_type(type_string: str) -> bool:
    try:
        validate_agent_type(type_string)
        return True
    except InvalidAgentType:
        return False


def validate_capability_identifier(cap: str) -> None:
    """Capabilities are colon-joined lowercase segments, e.g. ``email:read``."""
    if not isinstance(cap, str) or not _CAPABILITY_RE.match(cap):
        raise InvalidCapability(f"invalid capability identifier: {cap!r}")


def is_valid_capability_identifier(cap: str) -> bool:
    try:
        validate_capability_identifier(cap)
        return True
    except InvalidCapability:
        return False


@dataclass(frozen=True)
class ConstraintSet:
    """Delegation constraints; unrecognized keys are kept verbatim in ``other``."""

    max_duration_seconds: Optional[int] = None
    allowed_resources: Optional[tuple[str, ...]] = None
    max_delegation_depth: Optional[int] = None
    other: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_duration_seconds is not None:
            if not isinstance(self.max_duration_seconds, int) or self.max_duration_seconds < 0:
                raise MalformedClaim("max_duration_seconds must be a non-negative integer")
        if self.max_delegation_depth is not None:
            if not isinstance(self.max_delegation_depth, int) or self.max_delegation_depth < 0:
                raise MalformedClaim("max_delegation_depth must be a non-negative integer")
        if self.allowed_resources is not None:
            object.__setattr__(self, "allowed_resources", tuple(self.allowed_resources))
            if not all(isinstance(r, str) and r for r in self.allowed_resources):
                raise MalformedClaim("allowed_resources entries must be non-empty strings")
        object.__setattr__(self, "other", dict(self.other))

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "ConstraintSet":
        if not isinstance(obj, Mapping):
            raise MalformedClaim("constraints must be a JSON object")
        known = {"max_duration_seconds", "allowed_resources", "max_delegation_depth"}
        other = {k: v for k, v in obj.items() if k not in known}
        allowed = obj.get("allowed_resources")
        if allowed is not None and not isinstance(allowed, list):
            raise MalformedClaim("allowed_resources must be an array")
        return cls(
            max_duration_seconds=obj.get("max_duration_seconds"),
            allowed_resources=tuple(allowed) if allowed is not None else None,
            max_delegation_depth=obj.get("max_delegation_depth"),
            other=other,
        )

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        if self.max_duration_seconds is not None:
            out["max_duration_seconds"] = self.max_duration_seconds
        if self.allowed_resources is not None:
            out["allowed_resources"] = list(self.allowed_resources)
        if self.max_delegation_depth is not None:
            out["max_delegation_depth"] = self.max_delegation_depth
        out.update(self.other)
        return out

    def is_empty(self) -> bool:
        return (
            self.max_duration_seconds is None
            and self.allowed_resources is None
            and self.max_delegation_depth is None
            and not self.other
        )

    # hashability for frozen dataclass with a dict field
    def __hash__(self):
        return hash(
            (
                self.max_duration_seconds,
                self.allowed_resources,
                self.max_delegation_depth,
                tuple(sorted(self.other.items(), key=lambda kv: kv[0])),
            )
        )


@dataclass(frozen=True)
class AttestationEvidence:
    """The ``agent_attestation`` claim value."""

    format: str
    token: Optional[str] = None
    timestamp: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.format, str) or not self.format:
            raise MalformedClaim("attestation evidence must include a non-empty format")
        if self.token is not None and not isinstance(self.token, str):
            raise MalformedClaim("attestation token must be a string")
        if self.timestamp is not None and not isinstance(self.timestamp, int):
            raise MalformedClaim("attestation timestamp must be a NumericDate integer")
        if self.format == EAT_FORMAT_URN:
            if not self.token or self.token.count(".") != 2:
                raise MalformedClaim(
                    "EAT-format evidence requires a three-segment compact token"
                )

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "AttestationEvidence":
        if not isinstance(obj, Mapping):
            raise MalformedClaim("agent_attestation must be a JSON object")
        if "format" not in obj:
            raise MalformedClaim("agent_attestation is missing the format field")
        return cls(
            format=obj["format"], token=obj.get("token"), timestamp=obj.get("timestamp")
        )

    def to_json(self) -> dict:
        out: dict[str, Any] = {"format": self.format}
        if self.token is not None:
            out["token"] = self.token
        if self.timestamp is not None:
            out["timestamp"] = self.timestamp
        return out


@dataclass(frozen=True)
class AgentClaims:
    agent_type: str
    agent_model: str
    agent_provider: str
    agent_instance_id: str
    agent_version: Optional[str] = None
    delegator_sub: Optional[str] = None
    delegation_chain: Optional["DelegationChain"] = None  # noqa: F821
    delegation_purpose: Optional[str] = None
    delegation_constraints: Optional[ConstraintSet] = None
    agent_capabilities: Optional[tuple[str, ...]] = None
    agent_trust_level: Optional[str] = None
    agent_attestation: Optional[AttestationEvidence] = None
    agent_context_id: Optional[str] = None

    def __post_init__(self):
        for name in REQUIRED_AGENT_CLAIMS:
            v = getattr(self, name)
            if not isinstance(v, str) or not v:
                raise MalformedClaim(f"{name} must be a non-empty string")
        validate_agent_type(self.agent_type)
        if self.agent_capabilities is not None:
            object.__setattr__(self, "agent_capabilities", tuple(self.agent_capabilities))
            for cap in self.agent_capabilities:
                validate_capability_identifier(cap)
        chain = self.delegation_chain
        if chain is not None and len(chain.steps) > 0:
            last_sub = chain.steps[-1].sub
            if self.delegator_sub != last_sub:
                raise MalformedClaim(
                    "delegator_sub must equal the sub of the final delegation step "
                    f"({self.delegator_sub!r} != {last_sub!r})"
                )


def parse_agent_claims(claims_document: Mapping[str, Any]) -> Optional[AgentClaims]:
    """Extract agent claims from a token payload.

    Returns None when the document carries no REQUIRED agent claims at all
    (a plain, non-agent token). Raises MissingRequiredClaim when only some
    of the REQUIRED claims are present.
    """
    from .delegation import DelegationChain  # local import: claims <-> delegation

    if not isinstance(claims_document, Mapping):
        raise MalformedClaim("claims document must be a JSON object")

    present_required = [n for n in REQUIRED_AGENT_CLAIMS if n in claims_document]
    if not present_required:
        return None
    if len(present_required) != len(REQUIRED_AGENT_CLAIMS):
        missing = [n for n in REQUIRED_AGENT_CLAIMS if n not in claims_document]
        raise MissingRequiredClaim(
            f"agent token is missing required claims: {', '.join(missing)}",
            missing=missing,
        )

    def _opt_str(name: str) -> Optional[str]:
        v = claims_document.get(name)
        if v is not None and not isinstance(v, str):
            raise MalformedClaim(f"{name} must be a string")
        return v

    chain = None
    raw_chain = claims_document.get("delegation_chain")
    if raw_chain is not None:
        if not isinstance(raw_chain, list):
            raise MalformedClaim("delegation_chain must be an array")
        chain = DelegationChain.from_json(raw_chain)

    constraints = None
    raw_constraints = claims_document.get("delegation_constraints")
    if raw_constraints is not None:
        constraints = ConstraintSet.from_json(raw_constraints)

    evidence = None
    raw_attestation = claims_document.get("agent_attestation")
    if raw_attestation is not None:
        evidence = AttestationEvidence.from_json(raw_attestation)

    caps = claims_document.get("agent_capabilities")
    if caps is not None:
        if not isinstance(caps, list) or not all(isinstance(c, str) for c in caps):
            raise MalformedClaim("agent_capabilities must be an array of strings")
        caps = tuple(caps)

    return AgentClaims(
        agent_type=claims_document["agent_type"],
        agent_model=claims_document["agent_model"],
        agent_provider=claims_document["agent_provider"],
        agent_instance_id=claims_document["agent_instance_id"],
        agent_version=_opt_str("agent_version"),
        delegator_sub=_opt_str("delegator_sub"),
        delegation_chain=chain,
        delegation_purpose=_opt_str("delegation_purpose"),
        delegation_constraints=constraints,
        agent_capabilities=caps,
        agent_trust_level=_opt_str("agent_trust_level"),
        agent_attestation=evidence,
        agent_context_id=_opt_str("agent_context_id"),
    )


def serialize_agent_claims(claims: AgentClaims) -> dict:
    """Emit the wire-name JSON object; absent claims are omitted."""
    out: dict[str, Any] = {
        "agent_type": claims.agent_type,
        "agent_model": claims.agent_model,
        "agent_provider": claims.agent_provider,
        "agent_instance_id": claims.agent_instance_id,
    }
    if claims.agent_version is not None:
        out["agent_version"] = claims.agent_version
    if claims.delegator_sub is not None:
        out["delegator_sub"] = claims.delegator_sub
    if claims.delegation_chain is not None:
        out["delegation_chain"] = claims.delegation_chain.to_json()
    if claims.delegation_purpose is not None:
        out["delegation_purpose"] = claims.delegation_purpose
    if claims.delegation_constraints is not None:
        out["delegation_constraints"] = claims.delegation_constraints.to_json()
    if claims.agent_capabilities is not None:
        out["agent_capabilities"] = list(claims.agent_capabilities)
    if claims.agent_trust_level is not None:
        out["agent_trust_level"] = claims.agent_trust_level
    if claims.agent_attestation is not None:
        out["agent_attestation"] = claims.agent_attestation.to_json()
    if claims.agent_context_id is not None:
        out["agent_context_id"] = claims.agent_context_id
    return out
