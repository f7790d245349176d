"""Sparse multivariate polynomials and orthonormal systems on [-1, 1]^m.

Monomial integrals over the hypercube are exact rationals, so the
Gram-Schmidt orthogonalization runs entirely in Fraction arithmetic and
floats appear only in the final normalization.  The resulting systems
back the linear coefficients<->function maps used to turn noise vectors
into perturbing polynomials.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np

DEGENERATE_NORM_TOL = 1e-12
SPAN_RESIDUAL_TOL = 1e-6

Exponents = tuple[int, ...]

_SYSTEM_SEED_TAG = 0x6F727468  # stream domain separator for monomial sampling


@dataclass(frozen=True)
class Polynomial:
    """Sparse polynomial in m variables: exponent tuple -> coefficient.

    Coefficients may be Fractions (exact mode) or floats; zero
    coefficients are never stored.  Instances are immutable.
    """

    m: int
    terms: dict[Exponents, object] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {}
        for alpha, coef in self.terms.items():
            if len(alpha) != self.m:
                raise ValueError(f"exponent tuple {alpha} does not have {self.m} entries")
            if any(e < 0 for e in alpha):
                raise ValueError("negative exponents are not polynomials")
            if coef != 0:
                cleaned[tuple(alpha)] = coef
        object.__setattr__(self, "terms", cleaned)

    @classmethod
    def zero(cls, m: int) -> "Polynomial":
        return cls(m, {})

    @classmethod
    def constant(cls, value, m: int) -> "Polynomial":
        return cls(m, {(0,) * m: value})

    @classmethod
    def monomial(cls, alpha: Exponents, coef=1) -> "Polynomial":
        return cls(len(alpha), {tuple(alpha): coef})

    @property
    def degree(self) -> int:
        """Maximum total order over stored terms; zero polynomial has degree 0."""
        return max((sum(a) for a in self.terms), default=0)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if self.m != other.m:
            raise ValueError("mixed variable counts")
        out = dict(self.terms)
        for alpha, coef in other.terms.items():
            out[alpha] = out.get(alpha, 0) + coef
        return Polynomial(self.m, out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        if self.m != other.m:
            raise ValueError("mixed variable counts")
        out: dict[Exponents, object] = {}
        for a1, c1 in self.terms.items():
            for a2, c2 in other.terms.items():
                key = tuple(x + y for x, y in zip(a1, a2))
                out[key] = out.get(key, 0) + c1 * c2
        return Polynomial(self.m, out)

    def scale(self, factor) -> "Polynomial":
        return Polynomial(self.m, {a: factor * c for a, c in self.terms.items()})

    def to_float(self) -> "Polynomial":
        return Polynomial(self.m, {a: float(c) for a, c in self.terms.items()})

    def eval(self, x) -> float:
        """Direct term-by-term evaluation at a point of length m."""
        total = 0.0
        for alpha, coef in self.terms.items():
            term = float(coef)
            for xi, e in zip(x, alpha):
                if e:
                    term *= xi**e
            total += term
        return total

    def partial(self, j: int) -> "Polynomial":
        """Exact symbolic partial derivative with respect to variable j."""
        out: dict[Exponents, object] = {}
        for alpha, coef in self.terms.items():
            if alpha[j] == 0:
                continue
            lowered = list(alpha)
            lowered[j] -= 1
            key = tuple(lowered)
            out[key] = out.get(key, 0) + coef * alpha[j]
        return Polynomial(self.m, out)

    def gradient_at(self, x) -> np.ndarray:
        return np.array([self.partial(j).eval(x) for j in range(self.m)])

    def coefficient(self, alpha: Exponents):
        return self.terms.get(tuple(alpha), 0)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for alpha in sorted(self.terms, key=lambda a: (sum(a), a), reverse=True):
            coef = self.terms[alpha]
            factors = [
                f"x{j + 1}" + (f"^{e}" if e > 1 else "")
                for j, e in enumerate(alpha)
                if e > 0
            ]
            mono = "*".join(factors)
            c = float(coef)
            if mono:
                parts.append(f"{c:+.4g}*{mono}")
            else:
                parts.append(f"{c:+.4g}")
        text = " ".join(parts)
        return text[1:] if text.startswith("+") else text


def monomial_integral(alpha: Exponents) -> Fraction:
    """Exact integral of x^alpha over [-1, 1]^len(alpha).

    Zero when any exponent is odd; otherwise the product of 2/(e+1).
    """
    result = Fraction(1)
    for e in alpha:
        if e % 2 == 1:
            return Fraction(0)
        result *= Fraction(2, e + 1)
    return result


def inner_product(p: Polynomial, q: Polynomial):
    """L2 inner product over [-1, 1]^m; exact when both operands are exact."""
    if p.m != q.m:
        raise ValueError("mixed variable counts")
    total = 0
    for a1, c1 in p.terms.items():
        for a2, c2 in q.terms.items():
            weight = monomial_integral(tuple(x + y for x, y in zip(a1, a2)))
            if weight:
                total += c1 * c2 * weight
    return total


def l2_norm(p: Polynomial) -> float:
    return math.sqrt(float(inner_product(p, p)))


def monomials_up_to_degree(max_degree: int, m: int) -> list[Exponents]:
    """All exponent tuples with total order <= max_degree, in graded order."""
    out: list[Exponents] = [(0,) * m]
    for d in range(1, max_degree + 1):
        seen = set()
        for combo in combinations_with_replacement(range(m), d):
            alpha = [0] * m
            for j in combo:
                alpha[j] += 1
            seen.add(tuple(alpha))
        out.extend(sorted(seen))
    return out


@dataclass(frozen=True)
class OrthonormalSystem:
    """Ordered orthonormal polynomials on [-1, 1]^m with total degree <= max_degree."""

    elements: tuple[Polynomial, ...]
    monomials: tuple[Exponents, ...]
    max_degree: int
    m: int
    seed: int | None = None

    @property
    def size(self) -> int:
        return len(self.elements)

    def to_json(self) -> str:
        return json.dumps(
            {
                "K": self.max_degree,
                "m": self.m,
                "N": self.size,
                "seed": self.seed,
                "monomials": [list(a) for a in self.monomials],
                "elements": [
                    [
                        {"exponents": list(a), "coefficient": float(c)}
                        for a, c in sorted(e.terms.items())
                    ]
                    for e in self.elements
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "OrthonormalSystem":
        obj = json.loads(text)
        elements = tuple(
            Polynomial(
                obj["m"],
                {tuple(t["exponents"]): t["coefficient"] for t in terms},
            )
            for terms in obj["elements"]
        )
        return cls(
            elements=elements,
            monomials=tuple(tuple(a) for a in obj["monomials"]),
            max_degree=obj["K"],
            m=obj["m"],
            seed=obj["seed"],
        )


def _orthogonalize(selected: list[Exponents], m: int) -> list[Polynomial]:
    # Modified Gram-Schmidt in exact rationals with one reorthogonalization
    # sweep; floats enter only through the final normalization.
    basis: list[Polynomial] = []
    basis_norms_sq: list[Fraction] = []
    for alpha in selected:
        v = Polynomial.monomial(alpha, Fraction(1))
        for _ in range(2):
            for u, nsq in zip(basis, basis_norms_sq):
                proj = inner_product(v, u)
                if proj:
                    v = v - u.scale(proj / nsq)
        nsq = inner_product(v, v)
        if float(nsq) < DEGENERATE_NORM_TOL**2:
            raise ValueError(f"monomial {alpha} is degenerate against the current system")
        basis.append(v)
        basis_norms_sq.append(nsq)
    return [
        v.to_float().scale(1.0 / math.sqrt(float(nsq)))
        for v, nsq in zip(basis, basis_norms_sq)
    ]


def generate_system(
    max_degree: int,
    m: int,
    size: int,
    seed: int = 0,
    monomials: list[Exponents] | None = None,
) -> OrthonormalSystem:
    """Orthonormalize `size` distinct monomials of total degree <= max_degree.

    Monomials are sampled without replacement from the full pool in a
    seeded order, or taken verbatim from `monomials` (fixed-list mode,
    preserving the given order).  Output elements are unit-norm and
    pairwise orthogonal under exact hypercube integration.
    """
    pool = monomials_up_to_degree(max_degree, m)
    if monomials is not None:
        selected = [tuple(a) for a in monomials]
        if len(set(selected)) != len(selected):
            raise ValueError("fixed monomial list contains duplicates")
        for alpha in selected:
            if len(alpha) != m:
                raise ValueError(f"monomial {alpha} does not have {m} variables")
            if sum(alpha) > max_degree:
                raise ValueError(f"monomial {alpha} exceeds total degree {max_degree}")
        if len(selected) != size:
            raise ValueError("fixed monomial list length disagrees with requested size")
    else:
        if size > len(pool):
            raise ValueError(
                f"requested {size} elements but only {len(pool)} monomials of degree <= {max_degree}"
            )
        rng = np.random.default_rng([_SYSTEM_SEED_TAG, seed, max_degree, m, size])
        idx = rng.choice(len(pool), size=size, replace=False)
        selected = [pool[i] for i in idx]
    elements = _orthogonalize(selected, m)
    return OrthonormalSystem(
        elements=tuple(elements),
        monomials=tuple(selected),
        max_degree=max_degree,
        m=m,
        seed=None if monomials is not None else seed,
    )


def to_polynomial(coefficients, system: OrthonormalSystem) -> Polynomial:
    """Linear combination sum_k c_k e_k of the system elements."""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (system.size,):
        raise ValueError(
            f"coefficient vector has length {coefficients.shape}, system has {system.size}"
        )
    total = Polynomial.zero(system.m)
    for c, e in zip(coefficients, system.elements):
        if c:
            total = total + e.scale(float(c))
    return total


def to_coefficients(p: Polynomial, system: OrthonormalSystem) -> np.ndarray:
    """Project p onto the system; rejects polynomials outside the span."""
    coefficients = np.array([float(inner_product(p, e)) for e in system.elements])
    residual = p - to_polynomial(coefficients, system)
    if l2_norm(residual) > SPAN_RESIDUAL_TOL:
        raise ValueError("polynomial lies outside the span of the system")
    return coefficients


_MONO_FACTOR = re.compile(r"^x(\d+)(?:\^(\d+))?$")


def parse_monomial(text: str, m: int) -> Exponents:
    """Parse "1", "x2", or "x1^2*x2" into an exponent tuple of length m."""
    text = text.strip().replace(" ", "")
    alpha = [0] * m
    if text in ("1", ""):
        return tuple(alpha)
    for factor in text.split("*"):
        match = _MONO_FACTOR.match(factor)
        if not match:
            raise ValueError(f"cannot parse monomial factor {factor!r}")
        var = int(match.group(1))
        if not 1 <= var <= m:
            raise ValueError(f"variable x{var} outside 1..{m}")
        alpha[var - 1] += int(match.group(2) or 1)
    return tuple(alpha)


def parse_monomial_list(text: str, m: int) -> list[Exponents]:
    return [parse_monomial(part, m) for part in text.split(",")]
