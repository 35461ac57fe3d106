"""Key management and compact JWS signing/verification.

Supports ES256 (primary) and RS256. Key ids are RFC 7638-style JWK
thumbprints so a key loaded from PEM always recovers the same kid.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Union

from cryptography.exceptions import InvalidSignature as _CryptoInvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from .errors import BadSignature, MalformedToken, NoActiveKeys, SigningFailure

PrivateKey = Union[ec.EllipticCurvePrivateKey, rsa.RSAPrivateKey]
PublicKey = Union[ec.EllipticCurvePublicKey, rsa.RSAPublicKey]

SUPPORTED_ALGS = ("ES256", "RS256")


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(data: str) -> bytes:
    pad = "=" * (-len(data) % 4)
    return base64.urlsafe_b64decode(data + pad)


def _json_compact(obj: Any) -> bytes:
    return json.dumps(obj, separators=(",", ":"), sort_keys=False).encode("utf-8")


def jwk_thumbprint(jwk: Mapping[str, str]) -> str:
    """SHA-256 thumbprint over the required JWK members (RFC 7638)."""
    if jwk["kty"] == "EC":
        canon = {"crv": jwk["crv"], "kty": "EC", "x": jwk["x"], "y": jwk["y"]}
    elif jwk["kty"] == "RSA":
        canon = {"e": jwk["e"], "kty": "RSA", "n": jwk["n"]}
    else:
        raise SigningFailure(f"unsupported kty {jwk['kty']!r}")
    digest = hashlib.sha256(json.dumps(canon, separators=(",", ":"), sort_keys=True).encode()).digest()
    return b64url_encode(digest)


def public_key_to_jwk(key: PublicKey, alg: str, kid: Optional[str] = None) -> dict:
    if isinstance(key, ec.EllipticCurvePublicKey):
        nums = key.public_numbers()
        size = (key.curve.key_size + 7) // 8
        jwk = {
            "kty": "EC",
            "crv": "P-256",
            "x": b64url_encode(nums.x.to_bytes(size, "big")),
            "y": b64url_encode(nums.y.to_bytes(size, "big")),
        }
    elif isinstance(key, rsa.RSAPublicKey):
        nums = key.public_numbers()
        n_bytes = nums.n.to_bytes((nums.n.bit_length() + 7) // 8, "big")
        e_bytes = nums.e.to_bytes((nums.e.bit_length() + 7) // 8, "big")
        jwk = {"kty": "RSA", "n": b64url_encode(n_bytes), "e": b64url_encode(e_bytes)}
    else:
        raise SigningFailure(f"unsupported public key type {type(key).__name__}")
    jwk["alg"] = alg
    jwk["use"] = "sig"
    jwk["kid"] = kid or jwk_thumbprint(jwk)
    return jwk


def jwk_to_public_key(jwk: Mapping[str, str]) -> PublicKey:
    if jwk["kty"] == "EC":
        x = int.from_bytes(b64url_decode(jwk["x"]), "big")
        y = int.from_bytes(b64url_decode(jwk["y"]), "big")
        return ec.EllipticCurvePublicNumbers(x, y, ec.SECP256R1()).public_key()
    if jwk["kty"] == "RSA":
        n = int.from_bytes(b64url_decode(jwk["n"]), "big")
        e = int.from_bytes(b64url_decode(jwk["e"]), "big")
        return rsa.RSAPublicNumbers(e, n).public_key()
    raise MalformedToken(f"unsupported kty {jwk.get('kty')!r}")


@dataclass
class SigningKeyRecord:
    kid: str
    alg: str
    private_key: PrivateKey
    active: bool = True

    @property
    def public_key(self) -> PublicKey:
        return self.private_key.public_key()

    def public_jwk(self) -> dict:
        return public_key_to_jwk(self.public_key, self.alg, self.kid)


def generate_signing_key(alg: str = "ES256") -> SigningKeyRecord:
    if alg == "ES256":
        priv = ec.generate_private_key(ec.SECP256R1())
    elif alg == "RS256":
        priv = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    else:
        raise SigningFailure(f"unsupported algorithm {alg!r}")
    kid = public_key_to_jwk(priv.public_key(), alg)["kid"]
    return SigningKeyRecord(kid=kid, alg=alg, private_key=priv)


def _alg_for_private(key: PrivateKey) -> str:
    return "ES256" if isinstance(key, ec.EllipticCurvePrivateKey) else "RS256"


def load_private_key_pem(pem: bytes, alg: Optional[str] = None) -> SigningKeyRecord:
    priv = serialization.load_pem_private_key(pem, password=None)
    alg = alg or _alg_for_private(priv)
    kid = public_key_to_jwk(priv.public_key(), alg)["kid"]
    return SigningKeyRecord(kid=kid, alg=alg, private_key=priv)


def private_key_to_pem(key: PrivateKey) -> bytes:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )


def public_key_to_pem(key: PublicKey) -> bytes:
    return key.public_bytes(
        serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def load_public_key_pem(pem: bytes) -> PublicKey:
    return serialization.load_pem_public_key(pem)


def sign_raw(signing_input: bytes, key: SigningKeyRecord) -> bytes:
    try:
        if key.alg == "ES256":
            der = key.private_key.sign(signing_input, ec.ECDSA(hashes.SHA256()))
            r, s = decode_dss_signature(der)
            return r.to_bytes(32, "big") + s.to_bytes(32, "big")
        if key.alg == "RS256":
            return key.private_key.sign(
                signing_input, padding.PKCS1v15(), hashes.SHA256()
            )
    except Exception as exc:  # pragma: no cover - cryptography failures are rare
        raise SigningFailure(str(exc)) from exc
    raise SigningFailure(f"unsupported algorithm {key.alg!r}")


def verify_raw(signing_input: bytes, signature: bytes, public_key: PublicKey, alg: str) -> bool:
    try:
        if alg == "ES256":
            if len(signature) != 64 or not isinstance(public_key, ec.EllipticCurvePublicKey):
                return False
            r = int.from_bytes(signature[:32], "big")
            s = int.from_bytes(signature[32:], "big")
            der = encode_dss_signature(r, s)
            public_key.verify(der, signing_input, ec.ECDSA(hashes.SHA256()))
            return True
        if alg == "RS256":
            if not isinstance(public_key, rsa.RSAPublicKey):
                return False
            public_key.verify(signature, signing_input, padding.PKCS1v15(), hashes.SHA256())
            return True
    except _CryptoInvalidSignature:
        return False
    except Exception:
        return False
    return False


def jws_sign_compact(
    payload: Mapping[str, Any],
    key: SigningKeyRecord,
    typ: str = "JWT",
    extra_header: Optional[Mapping[str, Any]] = None,
) -> str:
    header = {"alg": key.alg, "typ": typ, "kid": key.kid}
    if extra_header:
        header.update(extra_header)
    signing_input = (
        b64url_encode(_json_compact(header)) + "." + b64url_encode(_json_compact(dict(payload)))
    )
    sig = sign_raw(signing_input.encode("ascii"), key)
    return signing_input + "." + b64url_encode(sig)


def jws_decode_unverified(token: str) -> tuple[dict, dict, bytes, bytes]:
    """Split a compact token into (header, payload, signing_input, signature)."""
    parts = token.split(".")
    if len(parts) != 3:
        raise MalformedToken("compact token must have exactly three segments")
    try:
        header = json.loads(b64url_decode(parts[0]))
        payload = json.loads(b64url_decode(parts[1]))
        signature = b64url_decode(parts[2])
    except (ValueError, json.JSONDecodeError) as exc:
        raise MalformedToken(f"undecodable token segment: {exc}") from exc
    if not isinstance(header, dict) or not isinstance(payload, dict):
        raise MalformedToken("token header and payload must be JSON objects")
    signing_input = ".".join(parts[:2]).encode("ascii")
    return header, payload, signing_input, signature


def jws_verify_compact(token: str, keys: Mapping[str, tuple[str, PublicKey]]) -> tuple[dict, dict]:
    """Verify a compact token against a kid -> (alg, public key) map."""
    header, payload, signing_input, signature = jws_decode_unverified(token)
    kid = header.get("kid")
    if kid not in keys:
        raise BadSignature(f"no trusted key with kid {kid!r}")
    alg, public_key = keys[kid]
    if header.get("alg") != alg:
        raise BadSignature(
            f"token alg {header.get('alg')!r} does not match key alg {alg!r}"
        )
    if not verify_raw(signing_input, signature, public_key, alg):
        raise BadSignature("signature verification failed")
    return header, payload


class KeyRing:
    """Holds the server's signing keys; exactly one is active at a time."""

    def __init__(self, initial: Optional[SigningKeyRecord] = None):
        self._records: dict[str, SigningKeyRecord] = {}
        self._active_kid: Optional[str] = None
        if initial is not None:
            self.add(initial, activate=True)

    def add(self, record: SigningKeyRecord, activate: bool = False) -> None:
        self._records[record.kid] = record
        if activate or self._active_kid is None:
            self.activate(record.kid)

    def activate(self, kid: str) -> None:
        if kid not in self._records:
            raise NoActiveKeys(f"unknown kid {kid!r}")
        for rec in self._records.values():
            rec.active = rec.kid == kid
        self._active_kid = kid

    @property
    def active(self) -> SigningKeyRecord:
        if self._active_kid is None:
            raise NoActiveKeys("no active signing key")
        return self._records[self._active_kid]

    def verification_keys(self) -> dict[str, tuple[str, PublicKey]]:
        return {rec.kid: (rec.alg, rec.public_key) for rec in self._records.values()}

    def public_jwks(self) -> dict:
        if not self._records:
            raise NoActiveKeys("no keys to publish")
        return {"keys": [rec.public_jwk() for rec in self._records.values()]}


def jwks_to_verification_keys(jwks: Mapping[str, Any]) -> dict[str, tuple[str, PublicKey]]:
    out = {}
    for jwk in jwks.get("keys", []):
        out[jwk["kid"]] = (jwk.get("alg", "ES256"), jwk_to_public_key(jwk))
    return out
