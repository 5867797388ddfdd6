"""Signature schemes for neighbor-list certificates.

The default :class:`KeyedHashScheme` is a simulation stand-in: a signature
is an HMAC under the private key, and verification looks the private key up
in a registry of issued key pairs. Forgery is outside the simulated threat
model, so this only has to give byte-exact accept/reject behaviour and be
fast. :class:`Ed25519Scheme` is a real asymmetric drop-in.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes


class KeyedHashScheme:
    name = "keyed-hash"

    def __init__(self):
        self._registry = {}

    def generate(self, rng):
        secret = rng.bytes(32)
        public = hashlib.sha256(b"pisces-public|" + secret).digest()
        self._registry[public] = secret
        return KeyPair(public, secret)

    def sign(self, keypair, message):
        return hmac.new(keypair.private_key, message, hashlib.sha256).digest()

    def verify(self, public_key, message, signature):
        secret = self._registry.get(public_key)
        if secret is None:
            return False
        expect = hmac.new(secret, message, hashlib.sha256).digest()
        return hmac.compare_digest(expect, signature)


class Ed25519Scheme:
    name = "ed25519"

    def generate(self, rng):
        sk = Ed25519PrivateKey.from_private_bytes(rng.bytes(32))
        pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(pk, sk.private_bytes_raw())

    def sign(self, keypair, message):
        return Ed25519PrivateKey.from_private_bytes(keypair.private_key).sign(message)

    def verify(self, public_key, message, signature):
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True
