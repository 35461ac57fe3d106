import pytest

from oidca.errors import BadSignature, MalformedToken, NoActiveKeys
from oidca.keys import (
    KeyRing,
    b64url_decode,
    b64url_encode,
    generate_signing_key,
    jwk_to_public_key,
    jws_decode_unverified,
    jws_sign_compact,
    jws_verify_compact,
    load_private_key_pem,
    private_key_to_pem,
    public_key_to_jwk,
)

from .jose_oracle import independently_verify


class TestB64Url:
    def test_roundtrip_all_lengths(self):
        for n in range(0, 70):
            data = bytes(range(n % 256))[:n]
            assert b64url_decode(b64url_encode(data)) == data

    def test_no_padding_emitted(self):
        assert "=" not in b64url_encode(b"\x00" * 31)


class TestJws:
    @pytest.mark.parametrize("alg", ["ES256", "RS256"])
    def test_sign_verify_roundtrip(self, alg):
        key = generate_signing_key(alg)
        token = jws_sign_compact({"a": 1}, key)
        header, payload = jws_verify_compact(token, {key.kid: (alg, key.public_key)})
        assert header["alg"] == alg
        assert header["kid"] == key.kid
        assert payload == {"a": 1}
        assert independently_verify(token, key.public_key) == {"a": 1}

    def test_wrong_key_rejected(self):
        key = generate_signing_key("ES256")
        other = generate_signing_key("ES256")
        token = jws_sign_compact({"a": 1}, key)
        with pytest.raises(BadSignature):
            jws_verify_compact(token, {key.kid: ("ES256", other.public_key)})

    def test_alg_confusion_rejected(self):
        key = generate_signing_key("ES256")
        token = jws_sign_compact({"a": 1}, key)
        with pytest.raises(BadSignature):
            jws_verify_compact(token, {key.kid: ("RS256", key.public_key)})

    def test_malformed_tokens(self):
        with pytest.raises(MalformedToken):
            jws_decode_unverified("only.two")
        with pytest.raises(MalformedToken):
            jws_decode_unverified("###.###.###")


class TestJwk:
    @pytest.mark.parametrize("alg", ["ES256", "RS256"])
    def test_jwk_roundtrip(self, alg):
        key = generate_signing_key(alg)
        jwk = key.public_jwk()
        restored = jwk_to_public_key(jwk)
        token = jws_sign_compact({"x": True}, key)
        jws_verify_compact(token, {jwk["kid"]: (alg, restored)})

    def test_kid_is_stable_thumbprint(self):
        key = generate_signing_key("ES256")
        pem = private_key_to_pem(key.private_key)
        reloaded = load_private_key_pem(pem)
        assert reloaded.kid == key.kid
        assert reloaded.alg == "ES256"

    def test_jwk_carries_metadata(self):
        jwk = generate_signing_key("ES256").public_jwk()
        assert jwk["use"] == "sig"
        assert jwk["alg"] == "ES256"
        assert jwk["kty"] == "EC"


class TestKeyRing:
    def test_exactly_one_active_after_rotation(self):
        first = generate_signing_key("ES256")
        second = generate_signing_key("ES256")
        ring = KeyRing(first)
        ring.add(second, activate=True)
        assert ring.active.kid == second.kid
        assert not first.active
        assert len([k for k in ring.public_jwks()["keys"]]) == 2

    def test_old_keys_still_verify(self):
        first = generate_signing_key("ES256")
        token = jws_sign_compact({"a": 1}, first)
        ring = KeyRing(first)
        ring.add(generate_signing_key("ES256"), activate=True)
        jws_verify_compact(token, ring.verification_keys())

    def test_empty_ring_has_no_active(self):
        with pytest.raises(NoActiveKeys):
            KeyRing().active
