"""oidca command line: key generation, token mint/validate, chain inspection,
attestation fixtures, and the reference server.

All machine-readable output is JSON on stdout; --pretty switches
chain-inspect to a human table. Exit codes: 0 success, 1 validation
failure, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
from typing import Optional

import click

from .attestation import (
    AttestationPolicy,
    NonceStore,
    build_eat_token,
    verify_attestation_evidence,
)
from .claims import AttestationEvidence, parse_agent_claims
from .delegation import DelegationChain, TrustPolicy, validate_delegation_chain
from .errors import OidcaError, TokenValidationError
from .keys import (
    generate_signing_key,
    jws_decode_unverified,
    jws_sign_compact,
    load_private_key_pem,
    load_public_key_pem,
    private_key_to_pem,
    public_key_to_jwk,
    public_key_to_pem,
)
from .store import MemoryStore
from .tokens import StandardClaims, validate_agent_id_token


def _emit(obj: dict) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _load_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _load_verification_keys(key_path: str) -> dict:
    """Accept a private or public PEM and build a kid -> (alg, key) map."""
    with open(key_path, "rb") as fh:
        pem = fh.read()
    if b"PRIVATE" in pem:
        record = load_private_key_pem(pem)
        return {record.kid: (record.alg, record.public_key)}
    public = load_public_key_pem(pem)
    from cryptography.hazmat.primitives.asymmetric import ec

    alg = "ES256" if isinstance(public, ec.EllipticCurvePublicKey) else "RS256"
    jwk = public_key_to_jwk(public, alg)
    return {jwk["kid"]: (alg, public)}


def _load_policy(path: Optional[str]) -> Optional[TrustPolicy]:
    if path is None:
        return None
    return TrustPolicy.from_json(_load_json(path))


@click.group()
def main():
    """OIDC-A agent token toolkit."""


@main.command()
@click.option("--alg", type=click.Choice(["ES256", "RS256"]), default="ES256", show_default=True)
@click.option("--out", "out_prefix", required=True, help="Output path prefix for PEM files.")
def keygen(alg: str, out_prefix: str):
    """Generate a signing key pair and write <out>.pem / <out>.pub.pem."""
    record = generate_signing_key(alg)
    priv_path = out_prefix + ".pem"
    pub_path = out_prefix + ".pub.pem"
    with open(priv_path, "wb") as fh:
        fh.write(private_key_to_pem(record.private_key))
    os.chmod(priv_path, 0o600)
    with open(pub_path, "wb") as fh:
        fh.write(public_key_to_pem(record.public_key))
    _emit({"kid": record.kid, "alg": alg, "private_key": priv_path, "public_key": pub_path})


@main.command()
@click.option("--claims", "claims_path", required=True, help="JSON file with the token payload.")
@click.option("--key", "key_path", required=True, help="Private key PEM.")
def mint(claims_path: str, key_path: str):
    """Mint a compact signed agent ID Token from a claims file."""
    payload = _load_json(claims_path)
    with open(key_path, "rb") as fh:
        record = load_private_key_pem(fh.read())
    try:
        StandardClaims.from_json(payload)
        parse_agent_claims(payload)
    except OidcaError as exc:
        raise click.ClickException(f"{exc.code}: {exc.description}")
    token = jws_sign_compact(payload, record, typ="JWT")
    _emit({"token": token, "kid": record.kid})


@main.command()
@click.argument("token")
@click.option("--key", "key_path", required=True, help="Issuer key PEM (public or private).")
@click.option("--aud", "expected_aud", default=None, help="Expected audience.")
@click.option("--iss", "expected_iss", default=None, help="Expected issuer.")
@click.option("--now", type=int, default=None, help="Validation time (NumericDate).")
@click.option("--policy", "policy_path", default=None,
              help="TrustPolicy JSON; enables delegation-chain validation.")
def validate(token, key_path, expected_aud, expected_iss, now, policy_path):
    """Validate a token; prints a JSON report and exits 1 on failure."""
    import time

    keys = _load_verification_keys(key_path)
    now = now if now is not None else int(time.time())
    report: dict = {"verdict": "valid", "checks": {}}
    try:
        std, agent, payload = validate_agent_id_token(
            token, expected_aud, keys, now, expected_iss=expected_iss
        )
    except (TokenValidationError, OidcaError) as exc:
        _emit({"verdict": "invalid", "error": exc.code, "error_description": exc.description})
        sys.exit(1)
    report["checks"]["signature"] = True
    report["checks"]["standard_claims"] = True
    report["is_agent_token"] = agent is not None
    if agent is not None:
        report["agent_claims"] = {
            "agent_type": agent.agent_type,
            "agent_model": agent.agent_model,
            "agent_provider": agent.agent_provider,
            "agent_instance_id": agent.agent_instance_id,
        }
    policy = _load_policy(policy_path)
    if policy is not None and agent is not None and agent.delegation_chain is not None:
        chain_report = validate_delegation_chain(agent.delegation_chain, policy, now)
        report["chain"] = chain_report.to_json()
        if not chain_report.is_valid:
            report["verdict"] = "invalid"
    _emit(report)
    sys.exit(0 if report["verdict"] == "valid" else 1)


@main.command("chain-inspect")
@click.argument("chain_file")
@click.option("--policy", "policy_path", default=None, help="TrustPolicy JSON.")
@click.option("--now", type=int, default=None, help="Validation time (NumericDate).")
@click.option("--pretty", is_flag=True, help="Render a human-readable table.")
def chain_inspect(chain_file, policy_path, now, pretty):
    """Validate a delegation chain file and annotate each rule R1-R7."""
    import time

    raw = _load_json(chain_file)
    if isinstance(raw, dict):
        raw = raw.get("delegation_chain", [])
    try:
        chain = DelegationChain.from_json(raw)
    except OidcaError as exc:
        _emit({"verdict": "invalid", "error": exc.code, "error_description": exc.description})
        sys.exit(1)
    policy = _load_policy(policy_path) or TrustPolicy(
        trusted_issuers=frozenset(s.iss for s in chain.steps)
    )
    now = now if now is not None else int(time.time())
    report = validate_delegation_chain(chain, policy, now)
    if pretty:
        click.echo(f"{'#':>2}  {'sub':<22} {'aud':<22} {'delegated_at':<13} scope")
        for i, step in enumerate(chain.steps):
            click.echo(
                f"{i:>2}  {step.sub:<22} {step.aud:<22} {step.delegated_at:<13} {step.scope}"
            )
        click.echo("rules: " + "  ".join(f"{r}={v}" for r, v in report.rule_results.items()))
        for v in report.violations:
            click.echo(f"violation {v.rule} step={v.step_index}: {v.detail}")
    else:
        _emit(report.to_json())
    sys.exit(0 if report.is_valid else 1)


@main.command()
@click.option("--parent-token", required=True, help="Validated parent compact token.")
@click.option("--key", "key_path", required=True, help="Issuer private key PEM.")
@click.option("--scope", required=True)
@click.option("--delegatee-instance", required=True)
@click.option("--delegatee-type", default="assistant", show_default=True)
@click.option("--delegatee-model", required=True)
@click.option("--delegatee-provider", required=True)
@click.option("--purpose", default=None)
@click.option("--now", type=int, default=None)
def delegate(parent_token, key_path, scope, delegatee_instance, delegatee_type,
             delegatee_model, delegatee_provider, purpose, now):
    """Mint a delegated token locally (no server round-trip)."""
    import time

    from .claims import AgentClaims
    from .tokens import mint_delegated_token

    with open(key_path, "rb") as fh:
        record = load_private_key_pem(fh.read())
    now = now if now is not None else int(time.time())
    keys = {record.kid: (record.alg, record.public_key)}
    try:
        std, agent, _ = validate_agent_id_token(parent_token, None, keys, now)
        delegatee = AgentClaims(
            agent_type=delegatee_type,
            agent_model=delegatee_model,
            agent_provider=delegatee_provider,
            agent_instance_id=delegatee_instance,
        )
        token = mint_delegated_token(
            parent_std=std,
            parent_agent=agent,
            delegatee=delegatee,
            requested_scope=scope,
            purpose=purpose,
            constraints=None,
            key=record,
            now=now,
            issuer=std.iss,
        )
    except OidcaError as exc:
        _emit({"verdict": "invalid", "error": exc.code, "error_description": exc.description})
        sys.exit(1)
    _emit({"token": token})


@main.group()
def attest():
    """Generate or verify EAT attestation fixtures."""


@attest.command("generate")
@click.option("--key", "key_path", required=True, help="Attester private key PEM.")
@click.option("--issuer", required=True)
@click.option("--nonce", required=True)
@click.option("--provider", required=True)
@click.option("--model", required=True)
@click.option("--version", required=True)
@click.option("--measurement", required=True, help="64 lowercase hex chars.")
@click.option("--now", type=int, default=None)
def attest_generate(key_path, issuer, nonce, provider, model, version, measurement, now):
    """Emit a signed EAT evidence object."""
    import time

    with open(key_path, "rb") as fh:
        record = load_private_key_pem(fh.read())
    now = now if now is not None else int(time.time())
    try:
        token = build_eat_token(record, issuer, nonce, provider, model, version, measurement, now)
    except OidcaError as exc:
        raise click.ClickException(f"{exc.code}: {exc.description}")
    from .claims import EAT_FORMAT_URN

    _emit({"format": EAT_FORMAT_URN, "token": token, "timestamp": now})


@attest.command("verify")
@click.argument("evidence_file")
@click.option("--key", "key_path", required=True, help="Attester key PEM (public or private).")
@click.option("--nonce", required=True, help="Expected nonce value.")
@click.option("--agent-id", required=True)
@click.option("--measurement", default=None,
              help="Reference digest for the evidence's (provider, model, version).")
@click.option("--now", type=int, default=None)
def attest_verify(evidence_file, key_path, nonce, agent_id, measurement, now):
    """Run the four attestation checks against an evidence file."""
    import time

    now = now if now is not None else int(time.time())
    evidence = AttestationEvidence.from_json(_load_json(evidence_file))
    keys = _load_verification_keys(key_path)
    policy = AttestationPolicy(trusted_attestation_keys=keys)
    if measurement is not None:
        _, payload, _, _ = jws_decode_unverified(evidence.token)
        policy.register_reference_measurement(
            payload.get("agent_provider", ""),
            payload.get("agent_model", ""),
            payload.get("agent_version", ""),
            measurement,
        )
    store = MemoryStore()
    nonces = NonceStore(store, ttl_seconds=policy.nonce_ttl_seconds)
    store.put("nonces", nonce, {"audience": agent_id, "issued_at": now},
              ttl=policy.nonce_ttl_seconds)
    result = verify_attestation_evidence(evidence, policy, nonce, now, nonces, agent_id)
    _emit(result.to_json())
    sys.exit(0 if result.status == "verified" else 1)


@main.command()
@click.option("--config", "config_path",
              default=lambda: os.environ.get("OIDCA_CONFIG"),
              help="Server config JSON (default: $OIDCA_CONFIG).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(config_path, host, port):
    """Run the reference Authorization Server."""
    from .server import ServerConfig, run_server

    config = ServerConfig.from_file(config_path) if config_path else ServerConfig()
    run_server(config, host=host, port=port)


if __name__ == "__main__":
    main()
