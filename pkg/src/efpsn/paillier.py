"""Paillier cryptosystem with signed fixed-point plaintexts.

Additively homomorphic public-key encryption over Z_f: multiplying
ciphertexts decrypts to the sum of the plaintexts.  Real-valued noise
shares enter the integer plaintext space through a base-10 fixed-point
encoding, with negative values embedded above the f/2 threshold.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

MILLER_RABIN_ROUNDS = 40
KEYGEN_MAX_RETRIES = 10_000
MIN_TEST_BITS = 16
MIN_SECURE_BITS = 512


def is_probable_prime(n: int, rng: random.Random, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Miller-Rabin primality test with `rounds` random witnesses."""
    if n < 2:
        return False
    for small in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % small == 0:
            return n == small
    # n - 1 = 2^r * d with d odd
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: random.Random) -> int:
    for _ in range(KEYGEN_MAX_RETRIES):
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(candidate, rng):
            return candidate
    raise RuntimeError(f"no {bits}-bit prime found in {KEYGEN_MAX_RETRIES} draws")


@dataclass(frozen=True)
class PublicKey:
    """Public half of a keypair: modulus f and generator g in Z*_{f^2}."""

    f: int
    g: int

    @property
    def f_squared(self) -> int:
        return self.f * self.f


@dataclass(frozen=True)
class Keypair:
    """Paillier keypair.

    f = a*b for equal-bit-length primes a, b; lam = lcm(a-1, b-1);
    mu satisfies mu * L(g^lam mod f^2) = 1 (mod f) with L(x) = (x-1)/f.
    """

    f: int
    g: int
    lam: int
    mu: int
    bit_length: int

    @property
    def public(self) -> PublicKey:
        return PublicKey(self.f, self.g)

    @property
    def f_squared(self) -> int:
        return self.f * self.f

    def to_json(self) -> str:
        """Serialize with big integers as decimal strings."""
        return json.dumps(
            {
                "f": str(self.f),
                "g": str(self.g),
                "lambda": str(self.lam),
                "mu": str(self.mu),
                "bit_length": self.bit_length,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Keypair":
        obj = json.loads(text)
        return cls(
            f=int(obj["f"]),
            g=int(obj["g"]),
            lam=int(obj["lambda"]),
            mu=int(obj["mu"]),
            bit_length=int(obj["bit_length"]),
        )


@dataclass(frozen=True)
class Ciphertext:
    """Encrypted residue in Z_{f^2}, tagged with the modulus it belongs to."""

    value: int
    modulus: int

    def to_decimal(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class SignedResidue:
    """Residue in Z_f encoding a signed integer via the f/2 threshold."""

    residue: int
    modulus: int

    def to_signed(self) -> int:
        if self.residue > self.modulus // 2:
            return self.residue - self.modulus
        return self.residue

    @classmethod
    def from_signed(cls, value: int, modulus: int) -> "SignedResidue":
        if 2 * abs(value) >= modulus:
            raise OverflowError(
                f"signed value {value} does not fit below modulus/2 = {modulus // 2}"
            )
        return cls(value % modulus, modulus)


def _mu_for(g: int, lam: int, f: int) -> int:
    """Modular inverse of L(g^lam mod f^2); raises if it does not exist."""
    u = (pow(g, lam, f * f) - 1) // f
    return pow(u, -1, f)


def keypair_from_primes(a: int, b: int, g: int | None = None) -> Keypair:
    """Build a keypair from explicit primes (no size floor; used by tests)."""
    if a == b:
        raise ValueError("primes must be distinct")
    f = a * b
    if math.gcd(f, (a - 1) * (b - 1)) != 1:
        raise ValueError("gcd(ab, (a-1)(b-1)) must be 1")
    lam = math.lcm(a - 1, b - 1)
    if g is None:
        g = f + 1
    mu = _mu_for(g, lam, f)
    return Keypair(f=f, g=g, lam=lam, mu=mu, bit_length=max(a.bit_length(), b.bit_length()))


def generate_keypair(
    bit_length: int,
    seed: int,
    deterministic_g: bool = True,
) -> Keypair:
    """Generate a keypair with two `bit_length`-bit primes, deterministic given seed.

    bit_length >= 16 is accepted for test-scale keys; use >= 512 for
    anything secret.  With deterministic_g the generator is f+1, which
    always admits the required modular inverse; otherwise g is sampled
    from Z*_{f^2} until the inverse exists.
    """
    if bit_length < MIN_TEST_BITS:
        raise ValueError(f"bit_length must be >= {MIN_TEST_BITS}")
    rng = random.Random(seed)
    for _ in range(KEYGEN_MAX_RETRIES):
        a = _random_prime(bit_length, rng)
        b = _random_prime(bit_length, rng)
        if a == b:
            continue
        f = a * b
        if math.gcd(f, (a - 1) * (b - 1)) != 1:
            continue
        lam = math.lcm(a - 1, b - 1)
        if deterministic_g:
            g = f + 1
        else:
            g = _sample_generator(f, lam, rng)
        try:
            mu = _mu_for(g, lam, f)
        except ValueError:
            continue
        return Keypair(f=f, g=g, lam=lam, mu=mu, bit_length=bit_length)
    raise RuntimeError("key generation failed after bounded retries")


def _sample_generator(f: int, lam: int, rng: random.Random) -> int:
    f2 = f * f
    for _ in range(KEYGEN_MAX_RETRIES):
        g = rng.randrange(2, f2)
        if math.gcd(g, f2) != 1:
            continue
        u = (pow(g, lam, f2) - 1) // f
        if math.gcd(u % f, f) == 1:
            return g
    raise RuntimeError("no usable generator found")


def sample_unit(f: int, rng: random.Random) -> int:
    """Uniform element of Z*_f by rejection on shared factors."""
    while True:
        r = rng.randrange(1, f)
        if math.gcd(r, f) == 1:
            return r


def encrypt(plaintext: SignedResidue, pk: PublicKey, r: int) -> Ciphertext:
    """c = g^p * r^f mod f^2 for p in Z_f and r in Z*_f."""
    if plaintext.modulus != pk.f:
        raise ValueError("plaintext encoded under a different modulus")
    p = plaintext.residue
    if not 0 <= p < pk.f:
        raise ValueError("plaintext residue outside Z_f")
    if not 0 < r < pk.f or math.gcd(r, pk.f) != 1:
        raise ValueError("randomizer must lie in Z*_f")
    f2 = pk.f_squared
    if pk.g == pk.f + 1:
        # (1+f)^p = 1 + p*f (mod f^2)
        gp = (1 + p * pk.f) % f2
    else:
        gp = pow(pk.g, p, f2)
    return Ciphertext(value=gp * pow(r, pk.f, f2) % f2, modulus=pk.f)


def decrypt(c: Ciphertext, kp: Keypair) -> SignedResidue:
    """p = L(c^lam mod f^2) * mu mod f with L(x) = (x-1)/f."""
    if c.modulus != kp.f:
        raise ValueError("ciphertext does not match this keypair")
    u = (pow(c.value, kp.lam, kp.f_squared) - 1) // kp.f
    return SignedResidue(residue=u * kp.mu % kp.f, modulus=kp.f)


def homomorphic_add(ciphertexts: list[Ciphertext], pk: PublicKey) -> Ciphertext:
    """Product of ciphertexts mod f^2; decrypts to the sum of plaintexts."""
    if not ciphertexts:
        raise ValueError("need at least one ciphertext")
    acc = 1
    f2 = pk.f_squared
    for c in ciphertexts:
        if c.modulus != pk.f:
            raise ValueError("ciphertexts under mixed keys")
        acc = acc * c.value % f2
    return Ciphertext(value=acc, modulus=pk.f)


def encode_fixed_point(x: float, precision: int, modulus: int) -> SignedResidue:
    """Embed floor(10^precision * x) into Z_f as a signed residue."""
    scaled = math.floor(x * 10**precision)
    return SignedResidue.from_signed(scaled, modulus)


def decode_fixed_point(s: SignedResidue, precision: int) -> float:
    """Recover the signed integer through the f/2 threshold and rescale."""
    return s.to_signed() / 10**precision
