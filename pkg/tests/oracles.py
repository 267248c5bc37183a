"""Reference implementations used only by the tests."""

import itertools
import math
from fractions import Fraction
from functools import lru_cache

from periodic_qmc.special_fn import bernoulli_number
from periodic_qmc.spod_weights import weight_of_subset


@lru_cache(maxsize=None)
def _bernoulli_at(alpha: int, num: int, n: int) -> Fraction:
    x = Fraction(num, n)
    return sum(math.comb(alpha, k) * bernoulli_number(k) * x ** (alpha - k)
               for k in range(alpha + 1))


def exact_wce(n, z, spec, alpha):
    """P_alpha from its subset-sum definition.

    The lattice averages of products of Bernoulli polynomials are exact
    rationals; only the final combination with the weights is in floating
    point, and every subset contributes a nonnegative amount.
    """
    C = (2 * math.pi) ** alpha / ((-1) ** (alpha // 2 + 1) * math.factorial(alpha))
    s = len(z)
    total = 0.0
    for size in range(1, s + 1):
        for u in itertools.combinations(range(s), size):
            acc = Fraction(0)
            for k in range(n):
                prod = Fraction(1)
                for j in u:
                    prod *= _bernoulli_at(alpha, k * z[j] % n, n)
                acc += prod
            total += weight_of_subset(spec, u) * C**size * float(acc / n)
    return total
