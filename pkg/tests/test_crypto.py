import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pisces.crypto import Ed25519Scheme, KeyedHashScheme


@pytest.fixture(params=[KeyedHashScheme, Ed25519Scheme], ids=["keyed-hash", "ed25519"])
def scheme(request):
    return request.param()


def test_sign_verify(scheme):
    kp = scheme.generate(np.random.default_rng(1))
    sig = scheme.sign(kp, b"hello")
    assert scheme.verify(kp.public_key, b"hello", sig)
    other = scheme.generate(np.random.default_rng(2))
    assert not scheme.verify(other.public_key, b"hello", sig)


def test_deterministic_keys(scheme):
    a = scheme.generate(np.random.default_rng(5))
    b = type(scheme)().generate(np.random.default_rng(5))
    assert a == b


@given(msg=st.binary(min_size=1, max_size=64), bit=st.integers(0, 10_000), in_sig=st.booleans())
def test_any_bit_flip_rejected(msg, bit, in_sig):
    for scheme in (KeyedHashScheme(), Ed25519Scheme()):
        kp = scheme.generate(np.random.default_rng(3))
        sig = scheme.sign(kp, msg)
        target = bytearray(sig if in_sig else msg)
        i = bit % (8 * len(target))
        target[i // 8] ^= 1 << (i % 8)
        if in_sig:
            assert not scheme.verify(kp.public_key, msg, bytes(target))
        else:
            assert not scheme.verify(kp.public_key, bytes(target), sig)
