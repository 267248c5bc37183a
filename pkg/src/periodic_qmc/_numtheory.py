"""Small integer helpers: factorization, primality, totient."""

from __future__ import annotations

import math


def factorize(n: int) -> dict[int, int]:
    """Prime factorization by trial division (moduli here are < 1e7)."""
    if n < 1:
        raise ValueError("factorize needs n >= 1")
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % d for d in range(3, math.isqrt(n) + 1, 2))


def is_prime_power(n: int) -> bool:
    return n >= 2 and len(factorize(n)) == 1


def totient(n: int) -> int:
    phi = n
    for p in factorize(n):
        phi -= phi // p
    return phi
