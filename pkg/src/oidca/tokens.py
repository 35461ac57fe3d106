"""Minting and validation of agent ID Tokens, plus delegated-token issuance.

Chain validation is deliberately not part of validate_agent_id_token: relying
parties compose it with validate_delegation_chain under their own TrustPolicy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional

from .claims import (
    AgentClaims,
    ConstraintSet,
    parse_agent_claims,
    serialize_agent_claims,
)
from .delegation import (
    DelegationChain,
    DelegationStep,
    append_delegation_step,
)
from .errors import (
    ConstraintConflict,
    Expired,
    MalformedClaim,
    MalformedToken,
    NotYetValid,
    WrongAudience,
    WrongIssuer,
)
from .keys import PublicKey, SigningKeyRecord, jws_sign_compact, jws_verify_compact

DEFAULT_TOKEN_LIFETIME = 3600


@dataclass(frozen=True)
class StandardClaims:
    iss: str
    sub: str
    aud: str
    exp: int
    iat: int
    auth_time: Optional[int] = None
    nonce: Optional[str] = None
    scope: Optional[str] = None
    jti: Optional[str] = None

    def __post_init__(self):
        for name in ("iss", "sub", "aud"):
            if not getattr(self, name):
                raise MalformedClaim(f"{name} must be non-empty")
        if not (isinstance(self.exp, int) and isinstance(self.iat, int)):
            raise MalformedClaim("exp and iat must be NumericDate integers")
        if self.exp <= self.iat:
            raise MalformedClaim("exp must be after iat")

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "iss": self.iss,
            "sub": self.sub,
            "aud": self.aud,
            "exp": self.exp,
            "iat": self.iat,
        }
        if self.auth_time is not None:
            out["auth_time"] = self.auth_time
        if self.nonce is not None:
            out["nonce"] = self.nonce
        if self.scope is not None:
            out["scope"] = self.scope
        if self.jti is not None:
            out["jti"] = self.jti
        return out

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "StandardClaims":
        missing = [k for k in ("iss", "sub", "aud", "exp", "iat") if k not in payload]
        if missing:
            raise MalformedToken(f"missing standard claims: {', '.join(missing)}")
        return cls(
            iss=payload["iss"],
            sub=payload["sub"],
            aud=payload["aud"],
            exp=payload["exp"],
            iat=payload["iat"],
            auth_time=payload.get("auth_time"),
            nonce=payload.get("nonce"),
            scope=payload.get("scope"),
            jti=payload.get("jti"),
        )


def mint_agent_id_token(
    std: StandardClaims,
    agent: Optional[AgentClaims],
    key: SigningKeyRecord,
    extra_claims: Optional[Mapping[str, Any]] = None,
) -> str:
    """Compact signed token whose payload is the union of standard and agent claims."""
    payload = dict(std.to_json())
    if agent is not None:
        payload.update(serialize_agent_claims(agent))
    if extra_claims:
        payload.update(extra_claims)
    return jws_sign_compact(payload, key, typ="JWT")


def validate_agent_id_token(
    token: str,
    expected_aud: Optional[str],
    issuer_keys: Mapping[str, tuple[str, PublicKey]],
    now: int,
    expected_iss: Optional[str] = None,
    leeway: int = 0,
) -> tuple[StandardClaims, Optional[AgentClaims], dict]:
    """Verify signature and standard claims, then parse agent claims.

    Returns (standard claims, agent claims or None for a plain token, raw
    payload). ``expected_aud``/``expected_iss`` of None skip that check, for
    server-side use where any token the server issued is acceptable.
    """
    _, payload = jws_verify_compact(token, issuer_keys)
    std = StandardClaims.from_json(payload)
    if expected_iss is not None and std.iss != expected_iss:
        raise WrongIssuer(f"issuer {std.iss!r}, expected {expected_iss!r}")
    if expected_aud is not None and std.aud != expected_aud:
        raise WrongAudience(f"audience {std.aud!r}, expected {expected_aud!r}")
    if std.iat > now + leeway:
        raise NotYetValid(f"iat {std.iat} is in the future (now {now})")
    if now >= std.exp + leeway:
        raise Expired(f"token expired at {std.exp} (now {now})")
    agent = parse_agent_claims(payload)
    return std, agent, payload


def delegated_lifetime_cap(
    chain: DelegationChain, now: int, default_lifetime: int = DEFAULT_TOKEN_LIFETIME
) -> int:
    """Seconds of validity left, capped by every inherited max_duration constraint."""
    cap = default_lifetime
    for step in chain.steps:
        cs = step.constraints
        if cs is not None and cs.max_duration_seconds is not None:
            remaining = step.delegated_at + cs.max_duration_seconds - now
            cap = min(cap, remaining)
    return cap


def mint_delegated_token(
    parent_std: StandardClaims,
    parent_agent: Optional[AgentClaims],
    delegatee: AgentClaims,
    requested_scope: str,
    purpose: Optional[str],
    constraints: Optional[ConstraintSet],
    key: SigningKeyRecord,
    now: int,
    issuer: str,
    audience: Optional[str] = None,
    default_lifetime: int = DEFAULT_TOKEN_LIFETIME,
    requested_lifetime: Optional[int] = None,
) -> str:
    """Issue a new ID Token for one delegation hop from the parent token holder.

    The new step's sub is the parent token's subject and its aud the delegatee
    instance; the step is appended against the parent's effective scope, so
    escalation raises before anything is signed.
    """
    parent_chain = (
        parent_agent.delegation_chain
        if parent_agent is not None and parent_agent.delegation_chain is not None
        else DelegationChain()
    )
    parent_scope = parent_std.scope
    if parent_scope is None and parent_chain.steps:
        parent_scope = parent_chain.steps[-1].scope
    if parent_scope is None:
        raise MalformedClaim("parent token carries no scope to delegate from")

    step = DelegationStep(
        iss=issuer,
        sub=parent_std.sub,
        aud=delegatee.agent_instance_id,
        delegated_at=now,
        scope=requested_scope,
        purpose=purpose,
        constraints=constraints,
    )
    chain = append_delegation_step(parent_chain, step, parent_scope)

    lifetime = delegated_lifetime_cap(chain, now, default_lifetime)
    if requested_lifetime is not None:
        if requested_lifetime > lifetime:
            raise ConstraintConflict(
                f"requested lifetime {requested_lifetime}s exceeds inherited cap {lifetime}s"
            )
        lifetime = requested_lifetime
    if lifetime <= 0:
        raise ConstraintConflict("inherited max_duration constraints leave no lifetime")

    agent = AgentClaims(
        agent_type=delegatee.agent_type,
        agent_model=delegatee.agent_model,
        agent_provider=delegatee.agent_provider,
        agent_instance_id=delegatee.agent_instance_id,
        agent_version=delegatee.agent_version,
        delegator_sub=parent_std.sub,
        delegation_chain=chain,
        delegation_purpose=purpose,
        agent_capabilities=delegatee.agent_capabilities,
        agent_trust_level=delegatee.agent_trust_level,
        agent_context_id=delegatee.agent_context_id,
    )
    std = StandardClaims(
        iss=issuer,
        sub=delegatee.agent_instance_id,
        aud=audience or delegatee.agent_instance_id,
        exp=now + lifetime,
        iat=now,
        scope=requested_scope,
        jti=chain.steps[-1].jti,
    )
    return mint_agent_id_token(std, agent, key)
