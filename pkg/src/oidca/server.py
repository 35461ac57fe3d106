"""Reference Authorization Server: discovery, registration, delegation,
attestation, capabilities, verification keys, and revocation endpoints.

Handlers are stateless; all shared state lives in the store. The attestation
endpoint enforces rate limiting, then authentication, before any signature
work — the ordering is observable through ``ServerConfig.instrument``.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import time as _time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import discovery as disco
from .attestation import (
    AttestationPolicy,
    NonceStore,
    build_attestation_response,
    verify_attestation_evidence,
)
from .claims import AgentClaims, AttestationEvidence, ConstraintSet
from .delegation import TrustPolicy
from .errors import (
    ConstraintConflict,
    MalformedClaim,
    MalformedEvidence,
    MalformedScope,
    OidcaError,
    ScopeEscalation,
    TokenValidationError,
    UnsupportedAuthMethod,
)
from .keys import KeyRing, SigningKeyRecord, generate_signing_key, load_private_key_pem
from .ratelimit import TokenBucketLimiter
from .store import FileStore, MemoryStore, StoreRevocations
from .tokens import (
    DEFAULT_TOKEN_LIFETIME,
    mint_delegated_token,
    validate_agent_id_token,
)

logger = logging.getLogger("oidca.server")


@dataclass
class ServerConfig:
    issuer: str = "http://localhost:8000"
    signing_key: Optional[SigningKeyRecord] = None
    data_dir: Optional[str] = None
    admin_token: Optional[str] = None
    require_registration_token: bool = False
    trusted_issuers: tuple[str, ...] = ()
    max_chain_length: int = 5
    clock_skew_seconds: int = 0
    token_leeway_seconds: int = 60
    default_token_lifetime: int = DEFAULT_TOKEN_LIFETIME
    freshness_window_seconds: int = 300
    nonce_ttl_seconds: int = 300
    rate_limit_capacity: int = 10
    rate_limit_refill_per_second: float = 1.0
    open_attestation: bool = True
    capability_catalog: tuple[str, ...] = ()
    clock: Callable[[], float] = _time.time
    instrument: Optional[Callable[[str], None]] = None

    @classmethod
    def from_file(cls, path: str) -> "ServerConfig":
        """Load config JSON, then apply OIDCA_* environment overrides."""
        with open(path) as fh:
            raw = json.load(fh)
        issuer = os.environ.get("OIDCA_ISSUER", raw.get("issuer", "http://localhost:8000"))
        data_dir = os.environ.get("OIDCA_DATA_DIR", raw.get("data_dir"))
        admin_token = os.environ.get("OIDCA_ADMIN_TOKEN", raw.get("admin_token"))
        key_path = os.environ.get("OIDCA_SIGNING_KEY", raw.get("signing_key"))
        signing_key = None
        if key_path:
            with open(key_path, "rb") as fh:
                signing_key = load_private_key_pem(fh.read())
        policy = raw.get("policy", {})
        return cls(
            issuer=issuer,
            signing_key=signing_key,
            data_dir=data_dir,
            admin_token=admin_token,
            require_registration_token=raw.get("require_registration_token", False),
            trusted_issuers=tuple(policy.get("trusted_issuers", ())),
            max_chain_length=policy.get("max_chain_length", 5),
            clock_skew_seconds=policy.get("clock_skew_seconds", 0),
            token_leeway_seconds=raw.get("token_leeway_seconds", 60),
            default_token_lifetime=raw.get("default_token_lifetime", DEFAULT_TOKEN_LIFETIME),
            freshness_window_seconds=raw.get("freshness_window_seconds", 300),
            nonce_ttl_seconds=raw.get("nonce_ttl_seconds", 300),
            rate_limit_capacity=raw.get("rate_limit_capacity", 10),
            rate_limit_refill_per_second=raw.get("rate_limit_refill_per_second", 1.0),
            open_attestation=raw.get("open_attestation", True),
            capability_catalog=tuple(raw.get("capability_catalog", ())),
        )


class ServerContext:
    """Everything the handlers share: keys, store, policies, limiter."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.keyring = KeyRing(config.signing_key or generate_signing_key("ES256"))
        self.store = (
            FileStore(config.data_dir, clock=config.clock)
            if config.data_dir
            else MemoryStore(clock=config.clock)
        )
        self.revocations = StoreRevocations(self.store)
        self.nonces = NonceStore(self.store, ttl_seconds=config.nonce_ttl_seconds)
        self.attestation_policy = AttestationPolicy(
            trusted_attestation_keys=self.keyring.verification_keys(),
            freshness_window_seconds=config.freshness_window_seconds,
            nonce_ttl_seconds=config.nonce_ttl_seconds,
        )
        self.limiter = TokenBucketLimiter(
            capacity=config.rate_limit_capacity,
            refill_per_second=config.rate_limit_refill_per_second,
            clock=config.clock,
        )
        if config.admin_token is None:
            config.admin_token = secrets.token_urlsafe(24)
            logger.info("generated admin token for this run")

    @property
    def now(self) -> int:
        return int(self.config.clock())

    def trust_policy(self) -> TrustPolicy:
        issuers = set(self.config.trusted_issuers) | {self.config.issuer}
        return TrustPolicy(
            trusted_issuers=frozenset(issuers),
            max_chain_length=self.config.max_chain_length,
            clock_skew_seconds=self.config.clock_skew_seconds,
        )

    def note(self, event: str) -> None:
        if self.config.instrument is not None:
            self.config.instrument(event)


class _HttpError(Exception):
    def __init__(self, status: int, error: str, description: str, **extra):
        self.status = status
        self.error = error
        self.description = description
        self.extra = extra


def _bearer(request: Request) -> Optional[str]:
    header = request.headers.get("authorization", "")
    if header.lower().startswith("bearer "):
        return header[7:].strip()
    return None


def create_app(config: Optional[ServerConfig] = None) -> FastAPI:
    config = config or ServerConfig()
    ctx = ServerContext(config)
    app = FastAPI(title="OIDC-A reference server", docs_url=None, redoc_url=None)
    app.state.ctx = ctx

    def respond(body: dict, status: int = 200) -> JSONResponse:
        body = {"request_id": uuid.uuid4().hex, **body}
        return JSONResponse(body, status_code=status)

    @app.exception_handler(_HttpError)
    async def _handle_http_error(request: Request, exc: _HttpError):
        return respond(
            {"error": exc.error, "error_description": exc.description, **exc.extra},
            status=exc.status,
        )

    def authenticate(request: Request) -> dict:
        """Resolve the bearer credential to {admin: bool, sub, payload}."""
        ctx.note("auth")
        token = _bearer(request)
        if not token:
            raise _HttpError(401, "unauthenticated", "missing bearer credential")
        if token == config.admin_token:
            return {"admin": True, "sub": "admin", "token": token}
        try:
            std, agent, payload = validate_agent_id_token(
                token,
                expected_aud=None,
                issuer_keys=ctx.keyring.verification_keys(),
                now=ctx.now,
                expected_iss=config.issuer,
                leeway=config.token_leeway_seconds,
            )
        except (TokenValidationError, OidcaError) as exc:
            raise _HttpError(401, "unauthenticated", f"invalid bearer token: {exc.code}")
        return {"admin": False, "sub": std.sub, "std": std, "agent": agent,
                "payload": payload, "token": token}

    async def read_json(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise _HttpError(400, "invalid_request", "request body must be JSON")
        if not isinstance(body, dict):
            raise _HttpError(400, "invalid_request", "request body must be a JSON object")
        return body

    @app.get("/.well-known/openid-configuration")
    async def openid_configuration():
        doc = disco.build_discovery_document(config.issuer)
        return respond(doc.to_json())

    @app.get(disco.VERIFICATION_KEYS_ENDPOINT)
    async def verification_keys():
        return respond(disco.publish_verification_keys(ctx.keyring))

    @app.post(disco.REGISTRATION_ENDPOINT)
    async def register(request: Request):
        if config.require_registration_token:
            token = _bearer(request)
            if token != config.admin_token:
                raise _HttpError(401, "unauthenticated", "registration requires an initial access token")
        body = await read_json(request)
        try:
            registration = disco.process_registration_request(body)
        except UnsupportedAuthMethod as exc:
            raise _HttpError(400, exc.code, exc.description)
        except OidcaError as exc:
            raise _HttpError(400, exc.code, exc.description)
        ctx.store.put("clients", registration.client_id, registration.to_json())
        return respond(registration.to_json(), status=201)

    @app.get(disco.CAPABILITIES_ENDPOINT)
    async def capabilities(client_id: Optional[str] = None):
        if client_id is not None:
            record = ctx.store.get("clients", client_id)
            if record is None:
                raise _HttpError(404, "unknown_client", f"no client {client_id!r}")
            caps = record["agent_capabilities"]
        else:
            caps = list(config.capability_catalog)
            for cid in ctx.store.keys("clients"):
                record = ctx.store.get("clients", cid)
                if record:
                    caps.extend(c for c in record["agent_capabilities"] if c not in caps)
        descriptors = [disco.CapabilityDescriptor(id=c).to_json() for c in caps]
        return respond(
            {
                "capabilities": descriptors,
                "supported_constraints": list(disco.SUPPORTED_CONSTRAINT_KEYS),
            }
        )

    def _resolve_delegatee(body: dict) -> AgentClaims:
        client_id = body.get("delegatee_client_id")
        instance_id = body.get("agent_instance_id")
        if client_id:
            record = ctx.store.get("clients", client_id)
            if record is None:
                raise _HttpError(404, "delegatee_unknown", f"no registered client {client_id!r}")
            instance_id = instance_id or "agent_instance_" + secrets.token_hex(6)
            identity = {
                "agent_type": body.get("agent_type", "assistant"),
                "agent_model": body.get("agent_model") or record["agent_models_supported"][0],
                "agent_provider": record["agent_provider"],
                "agent_version": body.get("agent_version"),
                "agent_instance_id": instance_id,
                "client_id": client_id,
                "agent_capabilities": list(record["agent_capabilities"]) or None,
            }
        elif instance_id:
            identity = ctx.store.get("instances", instance_id)
            if identity is None:
                raise _HttpError(
                    404, "delegatee_unknown", f"no known agent instance {instance_id!r}"
                )
        else:
            raise _HttpError(
                400, "invalid_request", "delegatee_client_id or agent_instance_id is required"
            )
        caps = identity.get("agent_capabilities")
        return AgentClaims(
            agent_type=identity["agent_type"],
            agent_model=identity["agent_model"],
            agent_provider=identity["agent_provider"],
            agent_instance_id=identity["agent_instance_id"],
            agent_version=identity.get("agent_version"),
            agent_capabilities=tuple(caps) if caps else None,
        )

    @app.post(disco.DELEGATION_ENDPOINT)
    async def delegate(request: Request):
        caller = authenticate(request)
        if caller["admin"]:
            raise _HttpError(403, "forbidden", "delegation requires the parent token as bearer")
        body = await read_json(request)
        scope = body.get("scope")
        if not isinstance(scope, str) or not scope.strip():
            raise _HttpError(400, "invalid_request", "scope is required")
        delegatee = _resolve_delegatee(body)
        parent_agent = caller["agent"]
        parent_depth = (
            len(parent_agent.delegation_chain.steps)
            if parent_agent is not None and parent_agent.delegation_chain is not None
            else 0
        )
        if parent_depth + 1 > config.max_chain_length:
            raise _HttpError(
                403,
                "chain_too_long",
                f"delegation would exceed the maximum chain length of "
                f"{config.max_chain_length}",
            )
        constraints = None
        if body.get("constraints") is not None:
            try:
                constraints = ConstraintSet.from_json(body["constraints"])
            except MalformedClaim as exc:
                raise _HttpError(400, exc.code, exc.description)
        ctx.note("crypto")
        try:
            token = mint_delegated_token(
                parent_std=caller["std"],
                parent_agent=caller["agent"],
                delegatee=delegatee,
                requested_scope=scope,
                purpose=body.get("purpose"),
                constraints=constraints,
                key=ctx.keyring.active,
                now=ctx.now,
                issuer=config.issuer,
                audience=body.get("audience"),
                default_lifetime=config.default_token_lifetime,
                requested_lifetime=body.get("lifetime"),
            )
        except ScopeEscalation as exc:
            raise _HttpError(
                403, exc.code, exc.description, violating_tokens=exc.violating_tokens
            )
        except (ConstraintConflict, MalformedScope, MalformedClaim) as exc:
            raise _HttpError(400, exc.code, exc.description)
        _, _, payload = validate_agent_id_token(
            token, None, ctx.keyring.verification_keys(), ctx.now,
            leeway=config.token_leeway_seconds,
        )
        jti = payload["delegation_chain"][-1]["jti"]
        instance = payload["agent_instance_id"]
        ctx.store.put(
            "instances",
            instance,
            {
                "agent_type": payload["agent_type"],
                "agent_model": payload["agent_model"],
                "agent_provider": payload["agent_provider"],
                "agent_version": payload.get("agent_version"),
                "agent_instance_id": instance,
                "agent_capabilities": payload.get("agent_capabilities"),
            },
        )
        audit = {
            "jti": jti,
            "delegator": caller["sub"],
            "delegatee": instance,
            "scope": scope,
            "purpose": body.get("purpose"),
            "timestamp": ctx.now,
        }
        ctx.store.put("audit", jti, audit)
        logger.info("delegation issued: %s", json.dumps(audit))
        return respond({"token": token, "jti": jti, "agent_instance_id": instance})

    @app.post(disco.REVOCATION_ENDPOINT)
    async def revoke(request: Request):
        caller = authenticate(request)
        body = await read_json(request)
        jti = body.get("jti")
        if not isinstance(jti, str) or not jti:
            raise _HttpError(400, "invalid_request", "jti is required")
        audit = ctx.store.get("audit", jti)
        if not caller["admin"]:
            if audit is None or audit["delegator"] != caller["sub"]:
                raise _HttpError(
                    403, "forbidden", "only the delegator of the step or an admin may revoke"
                )
        ctx.revocations.revoke(jti)
        logger.info("revoked jti %s by %s", jti, caller["sub"])
        return respond({"revoked": jti})

    @app.post(disco.ATTESTATION_ENDPOINT)
    async def attest(request: Request):
        # rate limit before auth, auth before any signature work
        ctx.note("rate_limit")
        caller_key = _bearer(request) or (request.client.host if request.client else "anon")
        if not ctx.limiter.allow(caller_key):
            raise _HttpError(429, "rate_limited", "attestation rate limit exceeded")
        authenticate(request)
        body = await read_json(request)
        agent_id = body.get("agent_id")
        if not isinstance(agent_id, str) or not agent_id:
            raise _HttpError(400, "invalid_request", "agent_id is required")
        if not config.open_attestation and ctx.store.get("instances", agent_id) is None:
            raise _HttpError(404, "unknown_agent", f"no known agent {agent_id!r}")

        evidence_obj = body.get("evidence")
        if evidence_obj is None:
            # challenge phase: mint a fresh nonce for this agent
            nonce = ctx.nonces.issue(agent_id, ctx.now)
            return respond(
                {"agent_id": agent_id, "nonce": nonce, "expires_in": ctx.nonces.ttl_seconds}
            )

        nonce = body.get("nonce")
        if not isinstance(nonce, str) or not nonce:
            raise _HttpError(400, "invalid_request", "nonce is required with evidence")
        try:
            evidence = AttestationEvidence.from_json(evidence_obj)
        except MalformedClaim as exc:
            raise _HttpError(400, exc.code, exc.description)
        ctx.note("crypto")
        try:
            result = verify_attestation_evidence(
                evidence,
                ctx.attestation_policy,
                expected_nonce=nonce,
                now=ctx.now,
                nonce_store=ctx.nonces,
                agent_id=agent_id,
            )
        except MalformedEvidence as exc:
            raise _HttpError(400, exc.code, exc.description)
        response_token = build_attestation_response(agent_id, result, ctx.keyring.active)
        return respond(
            {
                "agent_id": agent_id,
                "status": result.status,
                "checks": result.checks,
                "attestation_response": response_token,
            }
        )

    return app


def run_server(config: ServerConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_config=None)
