"""Bit-blasting of finite-domain expressions to CNF.

Bounded integers are encoded in ceil(log2(size)) bits as an offset from
their lower bound, with range-blocking clauses on declared variables;
enums use a binary index encoding, also range-blocked.  Arithmetic is
exact (intermediate widths grow as needed) and saturation is applied by
`clamp` where results flow into a declared variable.

The gate builder keeps a structural cache, folds constants, and writes
Tseitin clauses straight into the backing solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .model import (BinOp, BoolDomain, Const, Domain, EnumDomain, Expr,
                    IntRange, Ite, Not, Ref)


def width_for(n: int) -> int:
    """Bits needed to represent offsets 0..n."""
    w = 0
    while (1 << w) <= n:
        w += 1
    return w if n > 0 else 0


@dataclass(frozen=True)
class BV:
    """Unsigned offset vector: value = lo + sum(bits_i * 2^i), with the
    bit sum semantically bounded by max_off."""
    bits: tuple[int, ...]
    lo: int
    max_off: int

    @property
    def hi(self) -> int:
        return self.lo + self.max_off


@dataclass(frozen=True)
class EnumV:
    bits: tuple[int, ...]
    domain: EnumDomain


class Gates:
    """Tseitin gate builder over a solver exposing new_var/add_clause."""

    def __init__(self, solver):
        self.solver = solver
        self.T = solver.new_var()
        solver.add_clause([self.T])
        self._cache: dict = {}

    def const(self, b: bool) -> int:
        return self.T if b else -self.T

    def is_true(self, lit: int) -> bool:
        return lit == self.T

    def is_false(self, lit: int) -> bool:
        return lit == -self.T

    def land(self, a: int, b: int) -> int:
        if self.is_false(a) or self.is_false(b) or a == -b:
            return -self.T
        if self.is_true(a):
            return b
        if self.is_true(b) or a == b:
            return a
        key = ("&", min(a, b), max(a, b))
        g = self._cache.get(key)
        if g is None:
            g = self.solver.new_var()
            self.solver.add_clause([-g, a])
            self.solver.add_clause([-g, b])
            self.solver.add_clause([g, -a, -b])
            self._cache[key] = g
        return g

    def lor(self, a: int, b: int) -> int:
        return -self.land(-a, -b)

    def land_many(self, lits) -> int:
        out = self.T
        for l in lits:
            out = self.land(out, l)
        return out

    def lor_many(self, lits) -> int:
        out = -self.T
        for l in lits:
            out = self.lor(out, l)
        return out

    def lite(self, c: int, t: int, e: int) -> int:
        if self.is_true(c):
            return t
        if self.is_false(c):
            return e
        if t == e:
            return t
        if self.is_true(t):
            return self.lor(c, e)
        if self.is_false(t):
            return self.land(-c, e)
        if self.is_true(e):
            return self.lor(-c, t)
        if self.is_false(e):
            return self.land(c, t)
        if t == -e:
            return self.liff(c, t)
        key = ("?", c, t, e)
        g = self._cache.get(key)
        if g is None:
            g = self.solver.new_var()
            self.solver.add_clause([-g, -c, t])
            self.solver.add_clause([-g, c, e])
            self.solver.add_clause([g, -c, -t])
            self.solver.add_clause([g, c, -e])
            self._cache[key] = g
        return g

    def liff(self, a: int, b: int) -> int:
        if self.is_true(a):
            return b
        if self.is_false(a):
            return -b
        if self.is_true(b):
            return a
        if self.is_false(b):
            return -a
        if a == b:
            return self.T
        if a == -b:
            return -self.T
        if abs(a) > abs(b):
            a, b = b, a
        if a < 0:
            a, b = -a, -b
        key = ("=", a, b)
        g = self._cache.get(key)
        if g is None:
            g = self.solver.new_var()
            self.solver.add_clause([-g, -a, b])
            self.solver.add_clause([-g, a, -b])
            self.solver.add_clause([g, -a, -b])
            self.solver.add_clause([g, a, b])
            self._cache[key] = g
        return g

    def lxor(self, a: int, b: int) -> int:
        return -self.liff(a, b)

    def assert_iff(self, a: int, b: int) -> None:
        self.solver.add_clause([-a, b])
        self.solver.add_clause([a, -b])

    # -- bit-vector circuits -------------------------------------------------

    def add_bits(self, a: tuple[int, ...], b: tuple[int, ...], max_sum: int) -> tuple[int, ...]:
        """Ripple-carry sum of two unsigned bit vectors, sized for max_sum."""
        w = width_for(max_sum)
        out = []
        carry = -self.T
        for i in range(w):
            x = a[i] if i < len(a) else -self.T
            y = b[i] if i < len(b) else -self.T
            s = self.lxor(self.lxor(x, y), carry)
            carry = self.lor(self.land(x, y), self.land(carry, self.lxor(x, y)))
            out.append(s)
        return tuple(out)

    def add_const_bits(self, a: tuple[int, ...], c: int, max_sum: int) -> tuple[int, ...]:
        assert c >= 0
        cbits = tuple(self.const(bool((c >> i) & 1)) for i in range(width_for(c)))
        return self.add_bits(a, cbits, max_sum)

    def sub_const_bits(self, a: tuple[int, ...], c: int) -> tuple[int, ...]:
        """a - c for a semantically >= c (garbage otherwise; callers guard)."""
        assert c >= 0
        out = []
        borrow = -self.T
        for i in range(len(a)):
            d = (c >> i) & 1
            if d:
                out.append(self.liff(a[i], borrow))
                borrow = self.lor(-a[i], borrow)
            else:
                out.append(self.lxor(a[i], borrow))
                borrow = self.land(-a[i], borrow)
        return tuple(out)

    def rsub_const_bits(self, c: int, b: tuple[int, ...]) -> tuple[int, ...]:
        """c - b for b semantically <= c (garbage otherwise)."""
        assert c >= 0
        w = max(width_for(c), len(b))
        out = []
        borrow = -self.T
        for i in range(w):
            ci = (c >> i) & 1
            bi = b[i] if i < len(b) else -self.T
            if ci:
                out.append(self.liff(bi, borrow))
                borrow = self.land(bi, borrow)
            else:
                out.append(self.lxor(bi, borrow))
                borrow = self.lor(bi, borrow)
        return tuple(out[:width_for(c)])

    def ult_bits(self, a: tuple[int, ...], b: tuple[int, ...]) -> int:
        w = max(len(a), len(b))
        acc = -self.T
        for i in range(w):
            x = a[i] if i < len(a) else -self.T
            y = b[i] if i < len(b) else -self.T
            acc = self.lite(self.liff(x, y), acc, self.land(-x, y))
        return acc

    def ueq_bits(self, a: tuple[int, ...], b: tuple[int, ...]) -> int:
        w = max(len(a), len(b))
        acc = self.T
        for i in range(w):
            x = a[i] if i < len(a) else -self.T
            y = b[i] if i < len(b) else -self.T
            acc = self.land(acc, self.liff(x, y))
        return acc

    # -- integer (offset) operations ------------------------------------------

    def bv_const(self, v: int) -> BV:
        return BV((), v, 0)

    def bv_add(self, x: BV, y: BV) -> BV:
        m = x.max_off + y.max_off
        return BV(self.add_bits(x.bits, y.bits, m), x.lo + y.lo, m)

    def bv_sub(self, x: BV, y: BV) -> BV:
        m = x.max_off + y.max_off
        neg = self.rsub_const_bits(y.max_off, y.bits)
        return BV(self.add_bits(x.bits, neg, m), x.lo - y.lo - y.max_off, m)

    def _aligned(self, x: BV, y: BV) -> tuple[tuple[int, ...], tuple[int, ...]]:
        c = x.lo - y.lo
        if c >= 0:
            return self.add_const_bits(x.bits, c, x.max_off + c), y.bits
        return x.bits, self.add_const_bits(y.bits, -c, y.max_off - c)

    def int_lt(self, x: BV, y: BV) -> int:
        if x.hi < y.lo:
            return self.T
        if y.hi <= x.lo:
            return -self.T
        a, b = self._aligned(x, y)
        return self.ult_bits(a, b)

    def int_le(self, x: BV, y: BV) -> int:
        return -self.int_lt(y, x)

    def int_eq(self, x: BV, y: BV) -> int:
        if x.hi < y.lo or y.hi < x.lo:
            return -self.T
        a, b = self._aligned(x, y)
        return self.ueq_bits(a, b)

    def bv_ite(self, c: int, x: BV, y: BV) -> BV:
        lo = min(x.lo, y.lo)
        hi = max(x.hi, y.hi)
        m = hi - lo
        w = width_for(m)
        xb = self.add_const_bits(x.bits, x.lo - lo, m) if x.lo != lo or len(x.bits) < w else x.bits
        yb = self.add_const_bits(y.bits, y.lo - lo, m) if y.lo != lo or len(y.bits) < w else y.bits
        bits = tuple(self.lite(c,
                               xb[i] if i < len(xb) else -self.T,
                               yb[i] if i < len(yb) else -self.T)
                     for i in range(w))
        return BV(bits, lo, m)

    def clamp(self, x: BV, dom: IntRange) -> BV:
        """Saturate x into dom: values below map to dom.lo, above to dom.hi."""
        m = dom.hi - dom.lo
        w = width_for(m)
        if x.lo >= dom.lo and x.hi <= dom.hi:
            # already in range: just re-base the offset
            bits = self.add_const_bits(x.bits, x.lo - dom.lo, x.hi - dom.lo)[:w] \
                if x.lo != dom.lo else x.bits[:w]
            bits = tuple(bits) + tuple(-self.T for _ in range(w - len(bits)))
            return BV(bits, dom.lo, m)
        below = self.int_lt(x, self.bv_const(dom.lo))
        above = self.int_lt(self.bv_const(dom.hi), x)
        if x.lo >= dom.lo:
            mid = self.add_const_bits(x.bits, x.lo - dom.lo, x.max_off + x.lo - dom.lo)
        else:
            mid = self.sub_const_bits(x.bits, dom.lo - x.lo)
        out = []
        for i in range(w):
            hi_bit = self.const(bool((m >> i) & 1))
            mid_bit = mid[i] if i < len(mid) else -self.T
            out.append(self.lite(below, -self.T, self.lite(above, hi_bit, mid_bit)))
        return BV(tuple(out), dom.lo, m)


# ---------------------------------------------------------------------------
# Declared variables and expression encoding
# ---------------------------------------------------------------------------

EncodedVar = Union[int, BV, EnumV]


def alloc_var(gates: Gates, dom: Domain) -> EncodedVar:
    """Fresh bits for a declared variable, with range blocking."""
    sol = gates.solver
    if isinstance(dom, BoolDomain):
        return sol.new_var()
    size = dom.size
    w = width_for(size - 1)
    bits = tuple(sol.new_var() for _ in range(w))
    for pattern in range(size, 1 << w):
        sol.add_clause([-bits[i] if (pattern >> i) & 1 else bits[i] for i in range(w)])
    if isinstance(dom, IntRange):
        return BV(bits, dom.lo, size - 1)
    return EnumV(bits, dom)


def decode_var(enc: EncodedVar, model_bits: list[bool], dom: Domain):
    if isinstance(dom, BoolDomain):
        lit = enc
        return model_bits[abs(lit)] if lit > 0 else not model_bits[abs(lit)]
    bits = enc.bits
    off = 0
    for i, b in enumerate(bits):
        v = model_bits[abs(b)] if b > 0 else not model_bits[abs(b)]
        if v:
            off |= 1 << i
    if isinstance(dom, IntRange):
        return dom.lo + off
    return dom.constants[min(off, dom.size - 1)]


def enum_const(gates: Gates, dom: EnumDomain, name: str) -> EnumV:
    idx = dom.index(name)
    w = width_for(dom.size - 1)
    return EnumV(tuple(gates.const(bool((idx >> i) & 1)) for i in range(w)), dom)


def encode_expr(e: Expr, gates: Gates,
                look: Callable[[str, str], EncodedVar]) -> EncodedVar:
    """Encode an expression; `look(space, name)` supplies variable bits.
    Returns a literal for boolean sorts, a BV for integers, an EnumV for
    enums."""
    if isinstance(e, Const):
        if isinstance(e.domain, BoolDomain):
            return gates.const(e.value)
        if isinstance(e.domain, IntRange):
            return gates.bv_const(e.value)
        return enum_const(gates, e.domain, e.value)
    if isinstance(e, Ref):
        return look(e.space, e.name)
    if isinstance(e, Not):
        return -encode_expr(e.a, gates, look)
    if isinstance(e, Ite):
        c = encode_expr(e.cond, gates, look)
        t = encode_expr(e.then, gates, look)
        o = encode_expr(e.other, gates, look)
        if isinstance(t, BV):
            return gates.bv_ite(c, t, o)
        if isinstance(t, EnumV):
            bits = tuple(gates.lite(c, t.bits[i], o.bits[i]) for i in range(len(t.bits)))
            return EnumV(bits, t.domain)
        return gates.lite(c, t, o)
    if isinstance(e, BinOp):
        op = e.op
        a = encode_expr(e.a, gates, look)
        if op in ("&&", "||", "=>"):
            b = encode_expr(e.b, gates, look)
            if op == "&&":
                return gates.land(a, b)
            if op == "||":
                return gates.lor(a, b)
            return gates.lor(-a, b)
        b = encode_expr(e.b, gates, look)
        if op in ("+", "-"):
            return gates.bv_add(a, b) if op == "+" else gates.bv_sub(a, b)
        if op == "<":
            return gates.int_lt(a, b)
        if op == "<=":
            return gates.int_le(a, b)
        # equality family
        if isinstance(a, BV):
            eq = gates.int_eq(a, b)
        elif isinstance(a, EnumV):
            eq = gates.ueq_bits(a.bits, b.bits)
        else:
            eq = gates.liff(a, b)
        return eq if op == "==" else -eq
    raise TypeError(f"cannot encode {e!r}")


def assert_assignment(gates: Gates, target: EncodedVar, value: EncodedVar,
                      dom: Domain) -> None:
    """Constrain a declared variable's bits to equal an encoded value,
    saturating integers into the declared range."""
    if isinstance(dom, BoolDomain):
        gates.assert_iff(target, value)
        return
    if isinstance(dom, IntRange):
        clamped = gates.clamp(value, dom)
        for i in range(len(target.bits)):
            vb = clamped.bits[i] if i < len(clamped.bits) else -gates.T
            gates.assert_iff(target.bits[i], vb)
        return
    for i in range(len(target.bits)):
        gates.assert_iff(target.bits[i], value.bits[i])
