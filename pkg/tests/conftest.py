import hashlib

import pytest

from oidca.attestation import build_eat_token
from oidca.keys import generate_signing_key

# Fixture timeline: the example token is issued at 1714348800, validated at
# 1714350000, and expires at 1714435200.
TOKEN_IAT = 1714348800
VALIDATION_NOW = 1714350000
TOKEN_EXP = 1714435200

CHAIN_NOW = 1714349000

MEASUREMENT = hashlib.sha256(b"gpt-4/2025-03 runtime image").hexdigest()


@pytest.fixture(scope="session")
def es256_key():
    return generate_signing_key("ES256")


@pytest.fixture(scope="session")
def rs256_key():
    return generate_signing_key("RS256")


@pytest.fixture(scope="session")
def attester_key():
    return generate_signing_key("ES256")


@pytest.fixture(scope="session")
def eat_fixture_token(attester_key):
    return build_eat_token(
        attester_key,
        issuer="https://attester.example.com",
        nonce="n-attest-1",
        agent_provider="openai.com",
        agent_model="gpt-4",
        agent_version="2025-03",
        measurement=MEASUREMENT,
        issued_at=TOKEN_IAT,
    )


@pytest.fixture
def example_token_payload(eat_fixture_token):
    """The worked example ID Token payload for an email-management assistant.

    The attestation token is a real signed EAT fixture; everything else is
    verbatim from the published example.
    """
    return {
        "iss": "https://auth.example.com",
        "sub": "agent_instance_789",
        "aud": "client_123",
        "exp": TOKEN_EXP,
        "iat": TOKEN_IAT,
        "auth_time": TOKEN_IAT,
        "nonce": "n-0S6_WzA2Mj",
        "agent_type": "assistant",
        "agent_model": "gpt-4",
        "agent_version": "2025-03",
        "agent_provider": "openai.com",
        "agent_instance_id": "agent_instance_789",
        "delegator_sub": "user_456",
        "delegation_purpose": "Email management assistant",
        "agent_capabilities": ["email:read", "email:draft", "calendar:view"],
        "agent_trust_level": "verified",
        "agent_context_id": "conversation_123",
        "agent_attestation": {
            "format": "urn:ietf:params:oauth:token-type:eat",
            "token": eat_fixture_token,
            "timestamp": TOKEN_IAT,
        },
        "delegation_chain": [
            {
                "iss": "https://auth.example.com",
                "sub": "user_456",
                "aud": "agent_instance_789",
                "delegated_at": 1714348700,
                "scope": "email profile calendar",
            }
        ],
    }


@pytest.fixture
def two_step_chain_json():
    """Two-hop delegation: a user's email agent hands calendar viewing to a
    scheduling agent."""
    return [
        {
            "iss": "https://auth.example.com",
            "sub": "user_456",
            "aud": "agent_instance_789",
            "delegated_at": 1714348800,
            "scope": "email calendar",
            "purpose": "Manage my emails and calendar",
        },
        {
            "iss": "https://auth.example.com",
            "sub": "agent_instance_789",
            "aud": "agent_instance_101",
            "delegated_at": 1714348830,
            "scope": "calendar:view",
            "purpose": "Analyze available time slots",
        },
    ]
