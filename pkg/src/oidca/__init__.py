"""OIDC-A: agent identity claims, delegation chains, and attestation for OAuth 2.0."""

from .claims import (
    AGENT_CLAIM_NAMES,
    EAT_FORMAT_URN,
    STANDARD_AGENT_TYPES,
    AgentClaims,
    AttestationEvidence,
    ConstraintSet,
    is_valid_agent_type,
    is_valid_capability_identifier,
    parse_agent_claims,
    serialize_agent_claims,
    validate_agent_type,
    validate_capability_identifier,
)
from .delegation import (
    ChainValidationReport,
    DelegationChain,
    DelegationStep,
    TrustPolicy,
    append_delegation_step,
    check_scope_reduction,
    scope_covers,
    validate_delegation_chain,
)
from .tokens import (
    StandardClaims,
    mint_agent_id_token,
    mint_delegated_token,
    validate_agent_id_token,
)

__version__ = "0.1.0"

__all__ = [
    "AGENT_CLAIM_NAMES",
    "EAT_FORMAT_URN",
    "STANDARD_AGENT_TYPES",
    "AgentClaims",
    "AttestationEvidence",
    "ChainValidationReport",
    "ConstraintSet",
    "DelegationChain",
    "DelegationStep",
    "StandardClaims",
    "TrustPolicy",
    "append_delegation_step",
    "check_scope_reduction",
    "is_valid_agent_type",
    "is_valid_capability_identifier",
    "mint_agent_id_token",
    "mint_delegated_token",
    "parse_agent_claims",
    "scope_covers",
    "serialize_agent_claims",
    "validate_agent_id_token",
    "validate_agent_type",
    "validate_capability_identifier",
    "validate_delegation_chain",
]
