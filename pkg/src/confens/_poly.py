# Sparse multivariate polynomials as {exponent tuple: coefficient} dicts.
import re
from math import comb, factorial

import sympy

_TOL = 0.0


def clean(p):
    return {k: v for k, v in p.items() if v != _TOL}


def add(*ps):
    out = {}
    for p in ps:
        for k, v in p.items():
            out[k] = out.get(k, 0.0) + v
    return clean(out)


def scale(p, c):
    return clean({k: c * v for k, v in p.items()})


def mul(p, q):
    out = {}
    for a, ca in p.items():
        for b, cb in q.items():
            k = tuple(i + j for i, j in zip(a, b))
            out[k] = out.get(k, 0.0) + ca * cb
    return clean(out)


def deriv(p, var, order=1):
    out = {}
    for k, c in p.items():
        e = k[var]
        if e < order:
            continue
        kk = list(k)
        kk[var] = e - order
        out[tuple(kk)] = out.get(tuple(kk), 0.0) + c * factorial(e) / factorial(e - order)
    return clean(out)


def degree(p, var):
    return max((k[var] for k in p), default=0)


def evaluate(p, values):
    """Evaluate at (possibly array-valued) variables; returns 0.0 for the zero polynomial."""
    out = 0.0
    for k, c in sorted(p.items()):
        term = c
        for v, e in zip(values, k):
            if e:
                term = term * v ** e
        out = out + term
    return out


def bidiff(f, g, pairs, order):
    """f Λ^order g for the bidifferential Λ = Σ (←∂_a →∂_b − ←∂_b →∂_a)."""
    # pairs: list of (position var, momentum var) index pairs
    if order == 0:
        return mul(f, g)
    out = {}
    # expand (Σ_i Λ_i)^order via multinomial over the pairs, then each Λ_i^r binomially
    def rec(i, remaining, fp, gp, coeff):
        nonlocal out
        if i == len(pairs) - 1:
            r = remaining
            q, p = pairs[i]
            for j in range(r + 1):
                fd = deriv(deriv(fp, q, r - j), p, j)
                gd = deriv(deriv(gp, q, j), p, r - j)
                if fd and gd:
                    out = add(out, scale(mul(fd, gd), coeff * comb(r, j) * (-1) ** j))
            return
        for r in range(remaining + 1):
            q, p = pairs[i]
            for j in range(r + 1):
                fd = deriv(deriv(fp, q, r - j), p, j)
                gd = deriv(deriv(gp, q, j), p, r - j)
                if fd and gd:
                    rec(i + 1, remaining - r, fd, gd, coeff * comb(remaining, r) * comb(r, j) * (-1) ** j)
    rec(0, order, f, g, 1.0)
    return out


def moyal_bracket(f, g, pairs, hbar):
    """Weyl symbol of [F, G]/(iħ) for Weyl symbols f, g (terminates for polynomials)."""
    out = {}
    s = 1
    while True:
        term = bidiff(f, g, pairs, s)
        if not term:
            # higher orders vanish once a derivative order exceeds every degree
            maxdeg = max(sum(k) for k in list(f) + list(g)) if (f or g) else 0
            if s > maxdeg:
                break
        else:
            c = (-1) ** ((s - 1) // 2) * (hbar / 2) ** (s - 1) / factorial(s)
            out = add(out, scale(term, c))
        s += 2
    return out


def poisson_bracket(f, g, pairs):
    return bidiff(f, g, pairs, 1)


_NUMBER = re.compile(r"(?<![A-Za-z_])(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def parse(text, names, aliases=None):
    """Parse an arithmetic expression into a polynomial over ``names``."""
    aliases = aliases or {}
    src = text
    for old, new in aliases.items():
        src = src.replace(old, new)
    # sympify would otherwise resolve stray names to its own objects (E, Q, pi, ...)
    bare = _NUMBER.sub(" ", src)
    unknown = sorted(set(_IDENT.findall(bare)) - set(names))
    if unknown:
        raise ValueError(f"unknown symbols {unknown} in {text!r}; allowed: {names}")
    symbols = sympy.symbols(names)
    local = dict(zip(names, symbols))
    try:
        expr = sympy.sympify(src, locals=local, convert_xor=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ValueError(f"cannot parse polynomial {text!r}: {exc}") from None
    extra = expr.free_symbols - set(symbols)
    if extra:
        raise ValueError(f"unknown symbols {sorted(map(str, extra))} in {text!r}; allowed: {names}")
    try:
        poly = sympy.Poly(sympy.expand(expr), *symbols)
    except sympy.PolynomialError as exc:
        raise ValueError(f"{text!r} is not a polynomial: {exc}") from None
    return clean({tuple(int(e) for e in k): float(c) for k, c in poly.terms()})


def to_string(p, names):
    if not p:
        return "0"
    parts = []
    for k in sorted(p, key=lambda k: (sum(k), k)):
        c = p[k]
        factors = []
        for n, e in zip(names, k):
            if e == 1:
                factors.append(n)
            elif e > 1:
                factors.append(f"{n}^{e}")
        if not factors:
            parts.append(repr(c))
        elif c == 1.0:
            parts.append("*".join(factors))
        else:
            parts.append(repr(c) + "*" + "*".join(factors))
    return " + ".join(parts).replace("+ -", "- ")
