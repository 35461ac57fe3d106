"""Exception hierarchy for the oidca package.

Every error carries a short machine-readable ``code`` so HTTP handlers and
the CLI can map failures to OAuth-style ``{error, error_description}``
bodies without string matching.
"""

from __future__ import annotations


class OidcaError(Exception):
    code = "oidca_error"

    def __init__(self, description: str = "", **details):
        super().__init__(description or self.code)
        self.description = description
        self.details = details


# claims
class MalformedClaim(OidcaError):
    code = "malformed_claim"


class InvalidAgentType(OidcaError):
    code = "invalid_agent_type"


class InvalidCapability(OidcaError):
    code = "invalid_capability"


class MissingRequiredClaim(OidcaError):
    code = "missing_required_claim"


# delegation
class MalformedScope(OidcaError):
    code = "malformed_scope"


class ScopeEscalation(OidcaError):
    code = "scope_escalation"

    def __init__(self, violating_tokens, description: str = ""):
        super().__init__(description or f"scope escalation: {violating_tokens}")
        self.violating_tokens = list(violating_tokens)


class LinkageError(OidcaError):
    code = "linkage_error"


class ChronologyError(OidcaError):
    code = "chronology_error"


class ConstraintConflict(OidcaError):
    code = "constraint_conflict"


# attestation
class MalformedEvidence(OidcaError):
    code = "malformed_evidence"


class InvalidDigest(OidcaError):
    code = "invalid_digest"


# tokens / keys
class SigningFailure(OidcaError):
    code = "signing_failure"


class TokenValidationError(OidcaError):
    code = "invalid_token"


class MalformedToken(TokenValidationError):
    code = "malformed_token"


class BadSignature(TokenValidationError):
    code = "bad_signature"


class Expired(TokenValidationError):
    code = "expired"


class NotYetValid(TokenValidationError):
    code = "not_yet_valid"


class WrongAudience(TokenValidationError):
    code = "wrong_audience"


class WrongIssuer(TokenValidationError):
    code = "wrong_issuer"


# registration / discovery
class InvalidMetadata(OidcaError):
    code = "invalid_metadata"


class UnsupportedAuthMethod(OidcaError):
    code = "unsupported_auth_method"


class NoActiveKeys(OidcaError):
    code = "no_active_keys"


class InvalidConfig(OidcaError):
    code = "invalid_config"


class DelegateeUnknown(OidcaError):
    code = "delegatee_unknown"


# store
class StorageIO(OidcaError):
    code = "storage_io"
