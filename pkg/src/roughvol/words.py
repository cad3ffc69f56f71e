"""Word calculus over {I, J}.

A word w = w_1 ... w_m encodes a chain of the moment operators

    I^N F = rho N f(y) sum_j d_{x_j} F K(t_j, s)
    J^N F = N (N - 1) / 2 f(y)^2 F,

applied right-to-left to the constant 1, with N the weighted length of the
prefix ending at the letter. Each application appends a new variable (y, s)
as the last coordinate, so variable 1 carries the largest time. Replacing K
by K(eta(t), s) gives the Euler-scheme twin.
"""
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .gaussian import SymbolicFactor
from .kernel import discrete_K, liouville_K

LENGTH = {"I": 1, "J": 2}
MAX_ORDER = 12


@dataclass(frozen=True)
class Word:
    letters: str

    def __post_init__(self):
        if not self.letters or set(self.letters) - set(LENGTH):
            raise PreconditionError(f"a word is a non-empty string over {{I, J}}, got '{self.letters}'")

    @property
    def size(self) -> int:
        return len(self.letters)

    @property
    def length(self) -> int:
        return sum(LENGTH[c] for c in self.letters)

    @property
    def rho_power(self) -> int:
        return 2 * self.size - self.length

    def __str__(self):
        return self.letters


def _as_word(w):
    return w if isinstance(w, Word) else Word(str(w))


def enumerate_words(N: int):
    """All words of weighted length N in lexicographic order."""
    if N < 1:
        raise PreconditionError("moment order must be at least 1")
    if N > MAX_ORDER:
        raise PreconditionError(f"moment order {N} exceeds the combinatorial guard {MAX_ORDER}")

    def build(rest):
        if rest == 0:
            return [""]
        out = []
        for letter in "IJ":
            if LENGTH[letter] <= rest:
                out += [letter + tail for tail in build(rest - LENGTH[letter])]
        return out

    return [Word(s) for s in build(N)]


def is_trivial(w) -> bool:
    """Words ending in I annihilate the constant function."""
    return _as_word(w).letters[-1] == "I"


@dataclass(frozen=True)
class IntegrandTerm:
    """coefficient * psi(x_1..x_m) * prod_{j >= 2, alpha(j) > 0} K(t_alpha(j), t_j).

    `orders[j]` lists the derivative orders of the f-factors at variable j;
    `edges[j]` is alpha(j + 1) with 0 standing for the constant kernel.
    """

    word: str
    coefficient: float
    base: int
    rho_power: int
    orders: tuple
    edges: tuple
    discrete: bool = False

    @property
    def m(self):
        return len(self.orders)

    @property
    def psi(self):
        return SymbolicFactor.elementary(self.orders)

    def kernel_pattern(self):
        return tuple((a, j + 1) for j, a in enumerate(self.edges) if a)

    def evaluate(self, f, x, t, H, n=None):
        """Integrand value at states x and times t (t_1 > t_2 > ...)."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        val = self.coefficient * self.psi.evaluate(f, x)
        for a, j in self.kernel_pattern():
            if self.discrete:
                val = val * discrete_K(t[..., a - 1], t[..., j - 1], H, n)
            else:
                val = val * liouville_K(t[..., a - 1], t[..., j - 1], H)
        return val


def embedding(w, f=None):
    """Apply the operator chain of w to 1.

    Returns {(orders, edges): integer coefficient} without the rho power.
    Terms whose f-derivatives vanish identically are dropped when f is given.
    """
    w = _as_word(w)
    terms = {((), ()): 1}
    N = w.length
    for letter in reversed(w.letters):
        new = Counter()
        if letter == "J":
            factor = N * (N - 1) // 2
            for (orders, edges), c in terms.items():
                new[(orders + ((0, 0),), edges + (0,))] += c * factor
        else:
            for (orders, edges), c in terms.items():
                for j, ords in enumerate(orders):
                    for d, mult in Counter(ords).items():
                        bumped = list(ords)
                        bumped.remove(d)
                        bumped.append(d + 1)
                        key = (orders[:j] + (tuple(sorted(bumped)),) + orders[j + 1:] + ((0,),),
                               edges + (j + 1,))
                        new[key] += c * N * mult
        terms = dict(new)
        N -= LENGTH[letter]
    if f is not None:
        top = max((d for orders, _ in terms for o in orders for d in o), default=0)
        if top > f.max_derivative_order:
            raise PreconditionError(
                f"word {w} needs derivative order {top}, beyond {f.max_derivative_order} for this f")
        terms = {k: c for k, c in terms.items()
                 if not any(f.vanishes(d) for o in k[0] for d in o)}
    return terms


def expand_word(w, f=None, rho=1.0, discrete=False):
    """Fully expanded integrand terms of a nontrivial word, sorted canonically."""
    w = _as_word(w)
    if is_trivial(w):
        raise PreconditionError(f"word {w} ends in I and contributes nothing")
    k = w.rho_power
    scale = float(rho) ** k
    return [IntegrandTerm(w.letters, c * scale, c, k, orders, edges, bool(discrete))
            for (orders, edges), c in sorted(embedding(w, f).items())]


def closed_form_Cw(w, rho) -> float:
    """|rho|^{2|w| - l(w)} 2^{l(w) - |w|} l(w)!, kept only to document its mismatch
    with the operator recursion (JJ: 96 here against 6 from the recursion)."""
    w = _as_word(w)
    if is_trivial(w):
        raise PreconditionError(f"word {w} ends in I")
    return abs(rho) ** w.rho_power * 2.0 ** (w.length - w.size) * math.factorial(w.length)


def cw_comparison(w, rho=1.0):
    """(closed-form value, sum of |coefficients| from the recursion)."""
    terms = expand_word(w, rho=rho)
    return closed_form_Cw(w, rho), float(sum(abs(t.coefficient) for t in terms))


def expansion_to_dict(w, f=None, rho=1.0, discrete=False):
    w = _as_word(w)
    terms = expand_word(w, f, rho, discrete)
    return {
        "word": w.letters,
        "length": w.length,
        "rho": float(rho),
        "discrete": bool(discrete),
        "terms": [
            {
                "coefficient": t.coefficient,
                "base": t.base,
                "rho_power": t.rho_power,
                "psi": [list(o) for o in t.orders],
                "alpha": list(t.edges),
            }
            for t in terms
        ],
    }


def expansion_json(w, f=None, rho=1.0, discrete=False) -> str:
    return json.dumps(expansion_to_dict(w, f, rho, discrete), indent=2, sort_keys=True)
