import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efpsn.paillier import (
    Ciphertext,
    Keypair,
    SignedResidue,
    decode_fixed_point,
    decrypt,
    encode_fixed_point,
    encrypt,
    generate_keypair,
    homomorphic_add,
    keypair_from_primes,
    sample_unit,
)


@pytest.fixture(scope="module")
def kp64():
    return generate_keypair(bit_length=32, seed=7)


def test_tiny_keypair_arithmetic():
    # a=5, b=7: f=35, gcd(35, 24)=1, lambda=lcm(4,6)=12
    kp = keypair_from_primes(5, 7)
    assert kp.f == 35
    assert math.gcd(35, 4 * 6) == 1
    assert kp.lam == 12
    assert kp.g == 36


def test_keygen_deterministic():
    assert generate_keypair(24, seed=123) == generate_keypair(24, seed=123)
    assert generate_keypair(24, seed=123) != generate_keypair(24, seed=124)


def test_keygen_rejects_small_bits():
    with pytest.raises(ValueError):
        generate_keypair(8, seed=0)


@pytest.mark.parametrize("deterministic_g", [True, False])
def test_mu_identity_128bit(deterministic_g):
    # mu * ((g^lambda mod f^2) - 1)/f = 1 (mod f), checked by direct
    # modular arithmetic independent of the keygen internals.
    kp = generate_keypair(128, seed=99, deterministic_g=deterministic_g)
    u = (pow(kp.g, kp.lam, kp.f * kp.f) - 1) // kp.f
    assert kp.mu * u % kp.f == 1


def test_encrypt_zero_with_unit_randomizer():
    kp = keypair_from_primes(5, 7)
    c = encrypt(SignedResidue(0, 35), kp.public, r=1)
    assert c.value == 1  # g^0 * 1^35 = 1


def test_encrypt_matches_modular_exponentiation_oracle():
    kp = keypair_from_primes(5, 7)
    c = encrypt(SignedResidue(4, 35), kp.public, r=2)
    assert c.value == pow(36, 4, 1225) * pow(2, 35, 1225) % 1225


def test_encrypt_rejects_bad_randomizer_and_plaintext():
    kp = keypair_from_primes(5, 7)
    with pytest.raises(ValueError):
        encrypt(SignedResidue(1, 35), kp.public, r=5)  # gcd(5, 35) != 1
    with pytest.raises(ValueError):
        encrypt(SignedResidue(35, 35), kp.public, r=2)


def test_round_trip_random_plaintexts(kp64):
    rng = random.Random(42)
    for _ in range(1000):
        p = rng.randrange(kp64.f)
        r = sample_unit(kp64.f, rng)
        assert decrypt(encrypt(SignedResidue(p, kp64.f), kp64.public, r), kp64).residue == p


def test_round_trip_boundary(kp64):
    rng = random.Random(1)
    r = sample_unit(kp64.f, rng)
    c = encrypt(SignedResidue(kp64.f - 1, kp64.f), kp64.public, r)
    assert decrypt(c, kp64).residue == kp64.f - 1


def test_tampered_ciphertext_breaks_round_trip(kp64):
    rng = random.Random(2)
    p = 12345
    c = encrypt(SignedResidue(p, kp64.f), kp64.public, sample_unit(kp64.f, rng))
    tampered = Ciphertext(value=c.value * 7 % kp64.f_squared, modulus=kp64.f)
    out = decrypt(tampered, kp64)
    assert 0 <= out.residue < kp64.f
    assert out.residue != p


def test_decrypt_rejects_modulus_mismatch(kp64):
    other = generate_keypair(32, seed=8)
    c = encrypt(SignedResidue(3, kp64.f), kp64.public, r=5)
    with pytest.raises(ValueError):
        decrypt(c, other)


def test_homomorphic_sum_small(kp64):
    rng = random.Random(3)
    cs = [
        encrypt(SignedResidue(3, kp64.f), kp64.public, sample_unit(kp64.f, rng)),
        encrypt(SignedResidue(4, kp64.f), kp64.public, sample_unit(kp64.f, rng)),
    ]
    assert decrypt(homomorphic_add(cs, kp64.public), kp64).residue == 7


def test_homomorphic_single_element_is_identity(kp64):
    c = encrypt(SignedResidue(9, kp64.f), kp64.public, r=11)
    assert homomorphic_add([c], kp64.public) == c


def test_homomorphic_random_lists_match_integer_sums(kp64):
    rng = random.Random(4)
    for _ in range(100):
        values = [rng.randrange(kp64.f // 200) for _ in range(rng.randrange(2, 8))]
        cs = [
            encrypt(SignedResidue(v, kp64.f), kp64.public, sample_unit(kp64.f, rng))
            for v in values
        ]
        total = decrypt(homomorphic_add(cs, kp64.public), kp64)
        assert total.residue == sum(values)


def test_homomorphic_rejects_mixed_keys(kp64):
    other = generate_keypair(32, seed=5)
    c1 = encrypt(SignedResidue(1, kp64.f), kp64.public, r=3)
    c2 = encrypt(SignedResidue(1, other.f), other.public, r=3)
    with pytest.raises(ValueError):
        homomorphic_add([c1, c2], kp64.public)


def test_randomized_encryption_differs(kp64):
    p = SignedResidue(21, kp64.f)
    assert encrypt(p, kp64.public, r=3) != encrypt(p, kp64.public, r=5)


def test_fixed_point_zero():
    s = encode_fixed_point(0.0, 4, 1_000_003)
    assert s.residue == 0
    assert decode_fixed_point(s, 4) == 0.0


def test_fixed_point_negative_threshold_rule():
    f = 1_000_003
    s = encode_fixed_point(-1.5, 2, f)
    assert s.residue == f - 150
    assert decode_fixed_point(s, 2) == -1.50


def test_fixed_point_overflow_rejected():
    with pytest.raises(OverflowError):
        encode_fixed_point(1e9, 6, 1_000_003)


def test_fixed_point_flooring_error_bound():
    f = 10**18 + 9
    rng = random.Random(5)
    for _ in range(10_000):
        x = rng.uniform(-1e3, 1e3)
        p = rng.randrange(1, 7)
        back = decode_fixed_point(encode_fixed_point(x, p, f), p)
        assert x - 10**-p <= back <= x + 1e-12


@given(st.integers(min_value=-(10**8), max_value=10**8))
def test_signed_encoding_identity(v):
    f = 2_000_000_011
    assert SignedResidue.from_signed(v, f).to_signed() == v


@settings(max_examples=25, deadline=None)
@given(
    p=st.integers(min_value=0),
    r_seed=st.integers(min_value=0, max_value=2**32),
    key_seed=st.integers(min_value=0, max_value=50),
)
def test_property_round_trip(p, r_seed, key_seed):
    kp = generate_keypair(24, seed=key_seed)
    rng = random.Random(r_seed)
    residue = p % kp.f
    r = sample_unit(kp.f, rng)
    assert decrypt(encrypt(SignedResidue(residue, kp.f), kp.public, r), kp).residue == residue


@settings(max_examples=25, deadline=None)
@given(
    values=st.lists(st.integers(min_value=0, max_value=1000), min_size=1, max_size=6),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_property_homomorphism(values, seed):
    kp = generate_keypair(24, seed=11)
    rng = random.Random(seed)
    cs = [
        encrypt(SignedResidue(v, kp.f), kp.public, sample_unit(kp.f, rng)) for v in values
    ]
    assert decrypt(homomorphic_add(cs, kp.public), kp).residue == sum(values) % kp.f


def test_keypair_json_round_trip(kp64):
    assert Keypair.from_json(kp64.to_json()) == kp64
