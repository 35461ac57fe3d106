"""Delegation chains: construction, scope algebra, and the seven-rule validator.

Rule identifiers:
  R1 chronology, R2 issuer trust, R3 audience/subject linkage,
  R4 scope reduction, R5 constraint enforcement, R6 per-step signatures,
  R7 policy (chain length, revocation).
"""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Protocol, Sequence

from .claims import ConstraintSet
from .errors import (
    ChronologyError,
    LinkageError,
    MalformedClaim,
    MalformedScope,
    ScopeEscalation,
)
from .keys import (
    PublicKey,
    SigningKeyRecord,
    b64url_decode,
    b64url_encode,
    sign_raw,
    verify_raw,
)

RULES = ("R1", "R2", "R3", "R4", "R5", "R6", "R7")

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not_applicable"


def parse_scope(scope: str) -> tuple[str, ...]:
    """Split a space-separated scope string; empty or duplicated tokens are errors."""
    if not isinstance(scope, str) or not scope.strip():
        raise MalformedScope("scope must be a non-empty space-separated string")
    tokens = scope.split()
    if len(set(tokens)) != len(tokens):
        raise MalformedScope(f"duplicate scope tokens in {scope!r}")
    return tuple(tokens)


def scope_covers(granted: Iterable[str], requested: str) -> bool:
    """True when requested is granted directly or via hierarchical narrowing.

    A granted token ``calendar`` covers ``calendar:view`` (and deeper),
    never the reverse.
    """
    granted = set(granted)
    if requested in granted:
        return True
    return any(requested.startswith(g + ":") for g in granted)


def check_scope_reduction(parent_scope: str, child_scope: str) -> list[str]:
    """Tokens of child_scope not covered by parent_scope; empty list = reduction holds."""
    parent_tokens = set(parse_scope(parent_scope))
    child_tokens = parse_scope(child_scope)
    return [t for t in child_tokens if not scope_covers(parent_tokens, t)]


def fresh_jti() -> str:
    return b64url_encode(secrets.token_bytes(16))


@dataclass(frozen=True)
class StepSignature:
    """Detached signature over a step's canonical JSON (minus this field)."""

    alg: str
    kid: str
    value: str  # base64url raw signature

    def to_json(self) -> dict:
        return {"alg": self.alg, "kid": self.kid, "value": self.value}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "StepSignature":
        try:
            return cls(alg=obj["alg"], kid=obj["kid"], value=obj["value"])
        except (KeyError, TypeError) as exc:
            raise MalformedClaim(f"malformed step signature: {exc}") from exc


@dataclass(frozen=True)
class DelegationStep:
    iss: str
    sub: str
    aud: str
    delegated_at: int
    scope: str
    purpose: Optional[str] = None
    constraints: Optional[ConstraintSet] = None
    jti: Optional[str] = None
    signature: Optional[StepSignature] = None

    def __post_init__(self):
        for name in ("iss", "sub", "aud"):
            v = getattr(self, name)
            if not isinstance(v, str) or not v:
                raise MalformedClaim(f"delegation step {name} must be a non-empty string")
        if self.sub == self.aud:
            raise MalformedClaim("self-delegation rejected: sub equals aud")
        if not isinstance(self.delegated_at, int):
            raise MalformedClaim("delegated_at must be a NumericDate integer")
        parse_scope(self.scope)  # raises MalformedScope

    @property
    def scope_tokens(self) -> tuple[str, ...]:
        return parse_scope(self.scope)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "DelegationStep":
        if not isinstance(obj, Mapping):
            raise MalformedClaim("delegation step must be a JSON object")
        constraints = None
        if obj.get("constraints") is not None:
            constraints = ConstraintSet.from_json(obj["constraints"])
        signature = None
        if obj.get("signature") is not None:
            signature = StepSignature.from_json(obj["signature"])
        missing = [k for k in ("iss", "sub", "aud", "delegated_at", "scope") if k not in obj]
        if missing:
            raise MalformedClaim(f"delegation step missing fields: {', '.join(missing)}")
        return cls(
            iss=obj["iss"],
            sub=obj["sub"],
            aud=obj["aud"],
            delegated_at=obj["delegated_at"],
            scope=obj["scope"],
            purpose=obj.get("purpose"),
            constraints=constraints,
            jti=obj.get("jti"),
            signature=signature,
        )

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "iss": self.iss,
            "sub": self.sub,
            "aud": self.aud,
            "delegated_at": self.delegated_at,
            "scope": self.scope,
        }
        if self.purpose is not None:
            out["purpose"] = self.purpose
        if self.constraints is not None:
            out["constraints"] = self.constraints.to_json()
        if self.jti is not None:
            out["jti"] = self.jti
        if self.signature is not None:
            out["signature"] = self.signature.to_json()
        return out

    def signing_input(self) -> bytes:
        body = {k: v for k, v in self.to_json().items() if k != "signature"}
        return json.dumps(body, separators=(",", ":"), sort_keys=True).encode("utf-8")


def sign_step(step: DelegationStep, key: SigningKeyRecord) -> DelegationStep:
    sig = sign_raw(step.signing_input(), key)
    return DelegationStep(
        iss=step.iss,
        sub=step.sub,
        aud=step.aud,
        delegated_at=step.delegated_at,
        scope=step.scope,
        purpose=step.purpose,
        constraints=step.constraints,
        jti=step.jti,
        signature=StepSignature(alg=key.alg, kid=key.kid, value=b64url_encode(sig)),
    )


@dataclass(frozen=True)
class DelegationChain:
    steps: tuple[DelegationStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    @classmethod
    def from_json(cls, arr: Sequence[Mapping[str, Any]]) -> "DelegationChain":
        if not isinstance(arr, Sequence) or isinstance(arr, (str, bytes)):
            raise MalformedClaim("delegation_chain must be an array")
        return cls(steps=tuple(DelegationStep.from_json(o) for o in arr))

    def to_json(self) -> list[dict]:
        return [s.to_json() for s in self.steps]


class RevocationView(Protocol):
    def is_revoked(self, jti: str) -> bool: ...


class InMemoryRevocations:
    """Simple set-backed revocation list; revocations never expire."""

    def __init__(self):
        self._revoked: set[str] = set()

    def revoke(self, jti: str) -> None:
        if not jti:
            raise MalformedClaim("jti must be non-empty")
        self._revoked.add(jti)

    def is_revoked(self, jti: str) -> bool:
        return jti in self._revoked


NO_REVOCATIONS = InMemoryRevocations()


@dataclass(frozen=True)
class TrustPolicy:
    trusted_issuers: frozenset[str]
    max_chain_length: int = 5
    root_grant_scopes: Optional[frozenset[str]] = None
    clock_skew_seconds: int = 0
    unknown_constraint_mode: str = "reject"  # reject | ignore
    step_signature_keys: Optional[Mapping[str, tuple[str, PublicKey]]] = None

    def __post_init__(self):
        object.__setattr__(self, "trusted_issuers", frozenset(self.trusted_issuers))
        if self.root_grant_scopes is not None:
            object.__setattr__(self, "root_grant_scopes", frozenset(self.root_grant_scopes))
        if self.max_chain_length < 1:
            raise MalformedClaim("max_chain_length must be >= 1")
        if self.clock_skew_seconds < 0:
            raise MalformedClaim("clock_skew_seconds must be >= 0")
        if self.unknown_constraint_mode not in ("reject", "ignore"):
            raise MalformedClaim("unknown_constraint_mode must be 'reject' or 'ignore'")

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "TrustPolicy":
        return cls(
            trusted_issuers=frozenset(obj.get("trusted_issuers", ())),
            max_chain_length=obj.get("max_chain_length", 5),
            root_grant_scopes=(
                frozenset(obj["root_grant_scopes"]) if obj.get("root_grant_scopes") else None
            ),
            clock_skew_seconds=obj.get("clock_skew_seconds", 0),
            unknown_constraint_mode=obj.get("unknown_constraint_mode", "reject"),
        )


@dataclass(frozen=True)
class Violation:
    rule: str
    step_index: Optional[int]
    detail: str

    def to_json(self) -> dict:
        return {"rule": self.rule, "step_index": self.step_index, "detail": self.detail}


@dataclass
class ChainValidationReport:
    verdict: str  # valid | invalid
    rule_results: dict[str, str]
    violations: list[Violation]
    notes: list[str] = field(default_factory=list)
    effective_constraints: dict[str, Any] = field(default_factory=dict)

    @property
    def is_valid(self) -> bool:
        return self.verdict == "valid"

    def failed_rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "rule_results": dict(self.rule_results),
            "violations": [v.to_json() for v in self.violations],
            "notes": list(self.notes),
            "effective_constraints": dict(self.effective_constraints),
        }


def enforce_constraints(
    step: DelegationStep,
    step_index: int,
    chain: DelegationChain,
    now: int,
    mode: str = "reject",
) -> list[Violation]:
    """Constraint findings for one step, evaluated against the whole chain and now."""
    violations: list[Violation] = []
    cs = step.constraints
    if cs is None:
        return violations
    if cs.max_duration_seconds is not None:
        deadline = step.delegated_at + cs.max_duration_seconds
        if now > deadline:
            violations.append(
                Violation(
                    "R5",
                    step_index,
                    f"max_duration_seconds exceeded: now {now} > {deadline}",
                )
            )
    if cs.max_delegation_depth is not None:
        further_hops = len(chain.steps) - 1 - step_index
        if further_hops > cs.max_delegation_depth:
            violations.append(
                Violation(
                    "R5",
                    step_index,
                    f"max_delegation_depth {cs.max_delegation_depth} exceeded: "
                    f"{further_hops} further hops present",
                )
            )
    if cs.other and mode == "reject":
        keys = ", ".join(sorted(cs.other))
        violations.append(
            Violation("R5", step_index, f"unknown constraint keys rejected: {keys}")
        )
    return violations


def validate_delegation_chain(
    chain: DelegationChain,
    policy: TrustPolicy,
    now: int,
    revocations: RevocationView = NO_REVOCATIONS,
) -> ChainValidationReport:
    """Evaluate rules R1-R7 and report every violation (no fail-fast)."""
    violations: list[Violation] = []
    notes: list[str] = []
    rule_results = {r: PASS for r in RULES}
    steps = chain.steps

    # R1 chronology
    for i in range(1, len(steps)):
        if steps[i].delegated_at + policy.clock_skew_seconds < steps[i - 1].delegated_at:
            violations.append(
                Violation(
                    "R1",
                    i,
                    f"delegated_at {steps[i].delegated_at} precedes previous step's "
                    f"{steps[i - 1].delegated_at}",
                )
            )

    # R2 issuer trust
    for i, step in enumerate(steps):
        if step.iss not in policy.trusted_issuers:
            violations.append(Violation("R2", i, f"untrusted issuer {step.iss!r}"))

    # R3 linkage
    for i in range(1, len(steps)):
        if steps[i].sub != steps[i - 1].aud:
            violations.append(
                Violation(
                    "R3",
                    i,
                    f"sub {steps[i].sub!r} does not match previous aud {steps[i - 1].aud!r}",
                )
            )

    # R4 scope reduction
    if steps and policy.root_grant_scopes is not None:
        escalated = [
            t
            for t in steps[0].scope_tokens
            if not scope_covers(policy.root_grant_scopes, t)
        ]
        if escalated:
            violations.append(
                Violation("R4", 0, f"scope exceeds root grant: {escalated}")
            )
    for i in range(1, len(steps)):
        escalated = check_scope_reduction(steps[i - 1].scope, steps[i].scope)
        if escalated:
            violations.append(
                Violation("R4", i, f"scope not covered by delegator: {escalated}")
            )

    # R5 constraints
    allowed_resources: list[dict] = []
    for i, step in enumerate(steps):
        violations.extend(
            enforce_constraints(step, i, chain, now, policy.unknown_constraint_mode)
        )
        cs = step.constraints
        if cs is not None:
            if cs.allowed_resources is not None:
                allowed_resources.append(
                    {"step_index": i, "allowed_resources": list(cs.allowed_resources)}
                )
            if cs.other and policy.unknown_constraint_mode == "ignore":
                notes.append(
                    f"step {i}: ignored unknown constraint keys {sorted(cs.other)}"
                )

    # R6 per-step signatures (only when a step carries one)
    signed_any = False
    for i, step in enumerate(steps):
        if step.signature is None:
            continue
        signed_any = True
        keys = policy.step_signature_keys or {}
        entry = keys.get(step.signature.kid)
        if entry is None:
            violations.append(
                Violation("R6", i, f"no trusted key for step signature kid {step.signature.kid!r}")
            )
            continue
        alg, public_key = entry
        if alg != step.signature.alg or not verify_raw(
            step.signing_input(), b64url_decode(step.signature.value), public_key, alg
        ):
            violations.append(Violation("R6", i, "step signature verification failed"))
    if not signed_any:
        rule_results["R6"] = NOT_APPLICABLE

    # R7 policy: chain length and revocation
    if len(steps) > policy.max_chain_length:
        violations.append(
            Violation(
                "R7",
                None,
                f"chain length {len(steps)} exceeds maximum {policy.max_chain_length}",
            )
        )
    for i, step in enumerate(steps):
        if step.jti is not None and revocations.is_revoked(step.jti):
            violations.append(Violation("R7", i, f"step jti {step.jti!r} is revoked"))

    for v in violations:
        rule_results[v.rule] = FAIL

    return ChainValidationReport(
        verdict="valid" if not violations else "invalid",
        rule_results=rule_results,
        violations=violations,
        notes=notes,
        effective_constraints={"allowed_resources": allowed_resources},
    )


def append_delegation_step(
    chain: DelegationChain,
    new_step: DelegationStep,
    delegator_scope: str,
) -> DelegationChain:
    """Extend a chain by one step, enforcing linkage, chronology, and scope reduction.

    Assigns a fresh jti when the step carries none, so every issued step is
    revocable.
    """
    if chain.steps:
        last = chain.steps[-1]
        if new_step.sub != last.aud:
            raise LinkageError(
                f"new step sub {new_step.sub!r} does not match chain tail aud {last.aud!r}"
            )
        if new_step.delegated_at < last.delegated_at:
            raise ChronologyError(
                f"new step delegated_at {new_step.delegated_at} precedes "
                f"chain tail {last.delegated_at}"
            )
    escalated = check_scope_reduction(delegator_scope, new_step.scope)
    if escalated:
        raise ScopeEscalation(escalated)
    if new_step.jti is None:
        new_step = DelegationStep(
            iss=new_step.iss,
            sub=new_step.sub,
            aud=new_step.aud,
            delegated_at=new_step.delegated_at,
            scope=new_step.scope,
            purpose=new_step.purpose,
            constraints=new_step.constraints,
            jti=fresh_jti(),
            signature=new_step.signature,
        )
    return DelegationChain(steps=chain.steps + (new_step,))
