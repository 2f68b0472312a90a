"""Concrete combinatory models: SK trees and their numeric codes.

The SK model stores elements as closed applicative trees over the constants
K and S in weak normal form, i.e. exactly the shapes K, S, K t, S t, S t u
with t, u themselves normal.  Application normalizes via leftmost-outermost
weak reduction under a fuel meter.  Nodes are hash-consed, so structural
equality is pointer equality and the discrete order is `is`.

The numeric model is the same algebra transported along a bijective Goedel
code (K -> 0, S -> 1, App(x,y) -> 2 + pair(code x, code y) with the
standard diagonal pairing).  Diagonal pairing doubles bit-length per tree
level, so very deep values exceed any practical capacity; the model guards
encoding and reports capacity exhaustion as FuelExhausted, which keeps
apply deterministic and total as a map into outcomes.

Also here: finite oracle tables with an optional default, their file
format, and compilation of a numeral-keyed table into a combinator program.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterator, Optional

from .kernel import (
    DEFAULT_FUEL,
    Defined,
    Element,
    EvalError,
    Fuel,
    FuelExhausted,
    FuelMeter,
    Outcome,
    OutOfFuel,
    run_bounded,
)

K_TAG, S_TAG, APP_TAG, POISON_TAG = 0, 1, 2, 3


class PoisonFired(Exception):
    """The poison constant was applied.  Test instrumentation only."""


class SkElement:
    """A hash-consed closed SK tree in weak normal form.

    Do not construct directly; use the module-level leaves and sk_app.
    Equality and hashing are identity, which coincides with structural
    equality because construction is interned.
    """

    __slots__ = ("tag", "fn", "arg", "head_tag", "nargs", "normal", "size")

    def __init__(self, tag: int, fn, arg):
        self.tag = tag
        self.fn = fn
        self.arg = arg
        if tag == APP_TAG:
            self.head_tag = fn.head_tag
            self.nargs = fn.nargs + 1
            redex = (
                (self.head_tag == K_TAG and self.nargs >= 2)
                or (self.head_tag == S_TAG and self.nargs >= 3)
                or (self.head_tag == POISON_TAG and self.nargs >= 1)
            )
            self.normal = fn.normal and arg.normal and not redex
            self.size = fn.size + arg.size
        else:
            self.head_tag = tag
            self.nargs = 0
            self.normal = True
            self.size = 1

    def __repr__(self) -> str:
        return f"<sk {sk_format(self)}>"


SK_K = SkElement(K_TAG, None, None)
SK_S = SkElement(S_TAG, None, None)
SK_POISON = SkElement(POISON_TAG, None, None)

_APP_INTERN: dict = {}


def sk_app(fn: SkElement, arg: SkElement) -> SkElement:
    """The interned application node fn arg (not reduced)."""
    key = (id(fn), id(arg))
    node = _APP_INTERN.get(key)
    if node is None:
        node = SkElement(APP_TAG, fn, arg)
        _APP_INTERN[key] = node
    return node


# Fixed subtrees the rest of the package pattern-matches against.
SK_I = sk_app(sk_app(SK_S, SK_K), SK_K)
SK_TOP = SK_K
SK_BOT = sk_app(SK_K, SK_I)


def sk_normalize(t: SkElement, meter: FuelMeter) -> SkElement:
    """Leftmost-outermost reduction of t to weak normal form.

    Graph reduction with call-by-need sharing: an argument duplicated by
    the S rule is one shared node, and a per-call redirect table records
    each fired redex so a shared redex is charged exactly once.  The fuel
    count is therefore a function of the input alone (tables never outlive
    the call), and sharing changes cost only, never the normal form.

    Iterative throughout: spine walks and argument frames live on explicit
    stacks, so reduction depth is bounded by memory, not the interpreter
    recursion limit.
    """
    redirect: dict = {}
    memo_nf: dict = {}

    def follow(x: SkElement) -> SkElement:
        r = redirect.get(id(x))
        if r is None:
            return x
        chain = []
        while r is not None:
            chain.append(x)
            x = r
            r = redirect.get(id(x))
        for c in chain:
            redirect[id(c)] = x
        return x

    def whnf(x: SkElement) -> SkElement:
        # apps[i] is the application node supplying spine argument i,
        # outermost first; apps[-1] carries the head's first argument.
        apps: list = []
        cur = x
        while True:
            cur = follow(cur)
            if cur.tag == APP_TAG:
                apps.append(cur)
                cur = cur.fn
                continue
            if cur.tag == K_TAG and len(apps) >= 2:
                meter.spend()
                a1 = apps.pop()
                a2 = apps.pop()
                res = a1.arg
                if a2 is not res:
                    redirect[id(a2)] = res
                cur = res
                continue
            if cur.tag == S_TAG and len(apps) >= 3:
                meter.spend()
                a1 = apps.pop()
                a2 = apps.pop()
                a3 = apps.pop()
                z = a3.arg
                res = sk_app(sk_app(a1.arg, z), sk_app(a2.arg, z))
                redirect[id(a3)] = res
                cur = res
                continue
            if cur.tag == POISON_TAG and apps:
                raise PoisonFired()
            # Stuck head: rebuild the surviving spine, updating each node.
            built = cur
            for i in range(len(apps) - 1, -1, -1):
                built = sk_app(built, apps[i].arg)
                if built is not apps[i]:
                    redirect[id(apps[i])] = built
            return built

    frames: list = []
    cur = t
    while True:
        cur = follow(cur)
        nf = memo_nf.get(id(cur))
        if nf is None and cur.normal:
            nf = cur
        if nf is None:
            orig = cur
            w = whnf(cur)
            if w.normal:
                memo_nf[id(orig)] = w
                nf = w
            else:
                head = w
                args: list = []
                while head.tag == APP_TAG:
                    args.append(head.arg)
                    head = head.fn
                args.reverse()
                frames.append([orig, head, args, 0])
                cur = args[0]
                continue
        while frames:
            frame = frames[-1]
            frame[2][frame[3]] = nf
            frame[3] += 1
            if frame[3] < len(frame[2]):
                cur = frame[2][frame[3]]
                break
            frames.pop()
            built = frame[1]
            for a in frame[2]:
                built = sk_app(built, a)
            memo_nf[id(frame[0])] = built
            nf = built
        else:
            return nf


def sk_format(e: SkElement) -> str:
    """Compact constant-tree text: juxtaposition, parens on argument apps."""
    def walk(t: SkElement, parens: bool) -> str:
        if t.tag == K_TAG:
            return "K"
        if t.tag == S_TAG:
            return "S"
        if t.tag == POISON_TAG:
            return "P"
        s = f"{walk(t.fn, False)} {walk(t.arg, True)}"
        return f"({s})" if parens else s

    return walk(e, False)


def sk_parse(text: str) -> SkElement:
    """Inverse of sk_format (whitespace-insensitive)."""
    pos = 0
    n = len(text)

    def skip():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def atom() -> SkElement:
        nonlocal pos
        skip()
        if pos >= n:
            raise EvalError("unexpected end of element literal")
        c = text[pos]
        if c == "K":
            pos += 1
            return SK_K
        if c == "S":
            pos += 1
            return SK_S
        if c == "P":
            pos += 1
            return SK_POISON
        if c == "(":
            pos += 1
            e = expr()
            skip()
            if pos >= n or text[pos] != ")":
                raise EvalError("unbalanced parens in element literal")
            pos += 1
            return e
        raise EvalError(f"bad element literal at {pos}: {text[pos:pos + 10]!r}")

    def expr() -> SkElement:
        nonlocal pos
        e = atom()
        while True:
            skip()
            if pos >= n or text[pos] == ")":
                return e
            e = sk_app(e, atom())

    e = expr()
    skip()
    if pos != n:
        raise EvalError(f"trailing input in element literal: {text[pos:]!r}")
    return e


def sk_pair_parts(e: SkElement) -> Optional[tuple]:
    """Destructure the canonical pair normal form S (S I (K a)) (K b)."""
    if e.tag != APP_TAG:
        return None
    left, right = e.fn, e.arg
    if left.tag != APP_TAG or left.fn is not SK_S:
        return None
    if right.tag != APP_TAG or right.fn is not SK_K:
        return None
    m = left.arg
    if m.tag != APP_TAG or m.arg.tag != APP_TAG:
        return None
    if m.fn.tag != APP_TAG or m.fn.fn is not SK_S or m.fn.arg is not SK_I:
        return None
    if m.arg.fn is not SK_K:
        return None
    return (m.arg.arg, right.arg)


def sk_numeral_value(e: SkElement) -> Optional[int]:
    """The n with e = numeral(n), else None.  Numerals are I and p-bot chains."""
    n = 0
    while True:
        if e is SK_I:
            return n
        parts = sk_pair_parts(e)
        if parts is None or parts[0] is not SK_BOT:
            return None
        n += 1
        e = parts[1]


def sk_seq_elements(e: SkElement) -> Optional[list]:
    """Decode a coded sequence p len chain, or None."""
    parts = sk_pair_parts(e)
    if parts is None:
        return None
    length = sk_numeral_value(parts[0])
    if length is None:
        return None
    out = []
    chain = parts[1]
    for _ in range(length):
        link = sk_pair_parts(chain)
        if link is None:
            return None
        out.append(link[0])
        chain = link[1]
    if chain is not SK_I:
        return None
    return out


class SkModel:
    """The absolute PCA of SK normal forms under weak reduction."""

    name = "sk"

    @property
    def k(self) -> SkElement:
        return SK_K

    @property
    def s(self) -> SkElement:
        return SK_S

    def apply_metered(self, a: SkElement, b: SkElement, meter: FuelMeter) -> SkElement:
        return sk_normalize(sk_app(a, b), meter)

    def apply(self, a: SkElement, b: SkElement, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
        return run_bounded(fuel, lambda m: self.apply_metered(a, b, m))

    def leq(self, a: SkElement, b: SkElement) -> bool:
        return a is b

    def in_filter(self, a: SkElement) -> bool:
        return True

    # --- structural views used by printers and host procedures ---

    def pair_parts(self, e: SkElement):
        return sk_pair_parts(e)

    def numeral_value(self, e: SkElement):
        return sk_numeral_value(e)

    def seq_elements(self, e: SkElement):
        return sk_seq_elements(e)

    def format_element(self, e: SkElement) -> str:
        return sk_format(e)

    def parse_element(self, text: str) -> SkElement:
        return sk_parse(text)

    def random_element(self, rng: random.Random, max_size: int = 10) -> SkElement:
        """A random weak normal form of at most max_size leaves."""
        size = rng.randint(1, max_size)

        def gen(budget: int) -> SkElement:
            if budget <= 1:
                return SK_K if rng.random() < 0.5 else SK_S
            shape = rng.randrange(3)
            if shape == 0:
                return sk_app(SK_K, gen(budget - 1))
            if shape == 1:
                return sk_app(SK_S, gen(budget - 1))
            left = rng.randint(1, budget - 1) if budget > 2 else 1
            return sk_app(sk_app(SK_S, gen(left)), gen(budget - 1 - left))

        return gen(size)


# =====================================================================
# Numeric twin
# =====================================================================


def pair_nat(x: int, y: int) -> int:
    """Standard diagonal pairing (x+y)(x+y+1)/2 + y."""
    w = x + y
    return w * (w + 1) // 2 + y


def unpair_nat(z: int) -> tuple:
    w = (math.isqrt(8 * z + 1) - 1) // 2
    t = w * (w + 1) // 2
    y = z - t
    return w - y, y


class CapacityError(Exception):
    """The numeric code of a value would exceed the configured bit capacity."""


def godel_encode(e: SkElement, bit_limit: int = 1_000_000) -> int:
    """Total bijective code of an SK tree.  Raises CapacityError past the limit.

    Iterative with a memo keyed on node identity, so shared subtrees encode
    once and deep spines stay off the call stack.
    """
    memo: dict = {}
    work = [e]
    while work:
        t = work[-1]
        if id(t) in memo:
            work.pop()
            continue
        if t.tag == K_TAG:
            memo[id(t)] = 0
            work.pop()
            continue
        if t.tag == S_TAG:
            memo[id(t)] = 1
            work.pop()
            continue
        if t.tag == POISON_TAG:
            raise EvalError("poison has no numeric code")
        cf = memo.get(id(t.fn))
        if cf is None:
            work.append(t.fn)
            continue
        ca = memo.get(id(t.arg))
        if ca is None:
            work.append(t.arg)
            continue
        code = 2 + pair_nat(cf, ca)
        if code.bit_length() > bit_limit:
            raise CapacityError(code.bit_length())
        memo[id(t)] = code
        work.pop()
    return memo[id(e)]


def godel_decode(n: int) -> SkElement:
    """Inverse of godel_encode, total on the naturals."""
    if n < 0:
        raise EvalError("codes are non-negative")
    memo: dict = {}
    work = [n]
    while work:
        m = work[-1]
        if m in memo:
            work.pop()
            continue
        if m == 0:
            memo[m] = SK_K
            work.pop()
            continue
        if m == 1:
            memo[m] = SK_S
            work.pop()
            continue
        x, y = unpair_nat(m - 2)
        ex = memo.get(x)
        ey = memo.get(y)
        if ex is None:
            work.append(x)
            continue
        if ey is None:
            work.append(y)
            continue
        memo[m] = sk_app(ex, ey)
        work.pop()
    return memo[n]


class NumModel:
    """The SK algebra transported along the Goedel bijection.

    Elements are codes of weak normal forms.  apply decodes, normalizes in
    the SK machine under the shared meter, and re-encodes.  Encoding past
    the bit capacity surfaces as FuelExhausted: the computation does not
    complete within desk resources, and the answer is stable across budgets.
    """

    name = "num"

    def __init__(self, bit_limit: int = 1_000_000):
        self.bit_limit = bit_limit
        self._sk = SkModel()

    @property
    def k(self) -> int:
        return 0

    @property
    def s(self) -> int:
        return 1

    def apply_metered(self, a: int, b: int, meter: FuelMeter) -> int:
        ta = godel_decode(a)
        tb = godel_decode(b)
        nf = sk_normalize(sk_app(ta, tb), meter)
        try:
            return godel_encode(nf, self.bit_limit)
        except CapacityError:
            meter.remaining = 0
            raise OutOfFuel()

    def apply(self, a: int, b: int, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
        return run_bounded(fuel, lambda m: self.apply_metered(a, b, m))

    def leq(self, a: int, b: int) -> bool:
        return a == b

    def in_filter(self, a: int) -> bool:
        return True

    def pair_parts(self, e: int):
        parts = sk_pair_parts(godel_decode(e))
        if parts is None:
            return None
        return (godel_encode(parts[0], self.bit_limit),
                godel_encode(parts[1], self.bit_limit))

    def numeral_value(self, e: int):
        return sk_numeral_value(godel_decode(e))

    def seq_elements(self, e: int):
        elems = sk_seq_elements(godel_decode(e))
        if elems is None:
            return None
        return [godel_encode(x, self.bit_limit) for x in elems]

    def format_element(self, e: int) -> str:
        return str(e)

    def parse_element(self, text: str) -> int:
        try:
            v = int(text.strip())
        except ValueError:
            raise EvalError(f"bad numeric element literal: {text!r}")
        if v < 0:
            raise EvalError("numeric elements are non-negative codes")
        return v

    def random_element(self, rng: random.Random, max_size: int = 5) -> int:
        return godel_encode(self._sk.random_element(rng, max_size), self.bit_limit)


# =====================================================================
# Oracle tables
# =====================================================================


class OracleTable:
    """A finite partial function on elements, with an optional default.

    The default, when present, makes the function total: non-keys map to it.
    """

    def __init__(self, entries=None, default: Element = None, has_default: bool = None):
        self.entries = dict(entries or {})
        if has_default is None:
            has_default = default is not None
        self.has_default = has_default
        self.default = default

    def lookup(self, key: Element):
        """The value at key, or None when the table has no claim."""
        if key in self.entries:
            return self.entries[key]
        if self.has_default:
            return self.default
        return None

    def __eq__(self, other) -> bool:
        return (isinstance(other, OracleTable)
                and self.entries == other.entries
                and self.has_default == other.has_default
                and (not self.has_default or self.default == other.default))

    def __repr__(self) -> str:
        return f"OracleTable({len(self.entries)} entries, default={self.has_default})"


def format_table(table: OracleTable, kit, machine: bool = False) -> str:
    """Canonical table text: one `key -> value` line per entry, sorted by key text."""
    from .terms import format_element

    lines = []
    for key, value in table.entries.items():
        lines.append(f"{format_element(key, kit, machine)} -> {format_element(value, kit, machine)}")
    lines.sort()
    if table.has_default:
        lines.append(f"default -> {format_element(table.default, kit, machine)}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_table(text: str, kit) -> OracleTable:
    """Parse the table file format.

    Lines are `<key-term> -> <value-term>`; `default -> <value>` sets the
    default.  A line whose first non-blank character is '#' and which has no
    '->' is a comment (so keys like '#k' stay parseable); blank lines are
    skipped.  Key and value terms must be closed and evaluate within a small
    budget.
    """
    from .terms import eval_term, parse

    def element_of(src: str) -> Element:
        t = parse(src, kit)
        o = eval_term(t, {}, kit, fuel=DEFAULT_FUEL)
        if not isinstance(o, Defined):
            raise EvalError(f"table entry does not evaluate: {src!r} -> {o!r}")
        return o.value

    entries = {}
    default = None
    has_default = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#") and "->" not in line:
            continue
        if "->" not in line:
            raise EvalError(f"bad table line (no '->'): {raw!r}")
        left, right = line.split("->", 1)
        left = left.strip()
        right = right.strip()
        value = element_of(right)
        if left == "default":
            default = value
            has_default = True
        else:
            entries[element_of(left)] = value
    return OracleTable(entries, default=default, has_default=has_default)


def load_table(path: str, kit) -> OracleTable:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_table(fh.read(), kit)


def save_table(path: str, table: OracleTable, kit) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_table(table, kit))


def table_to_code(table: OracleTable, kit, fuel: Fuel = DEFAULT_FUEL) -> Element:
    """Compile a numeral-keyed table into a combinator program.

    The program tests its argument against each key with the recursive
    numeral-equality combinator under the strong conditional, returns the
    matching value, and falls through to the default when one is present.
    Without a default the fall-through arm diverges, so non-keys exhaust
    fuel, never guess.

    One key is dispatched per compiled stage, with the rest of the chain
    baked in as a constant; nesting every conditional in a single term
    would reify each level inside the thunks of the one above and blow up
    geometrically.
    """
    from .terms import App, Const, Var, compile_term, strong_if

    model = kit.model
    for key in table.entries:
        if model.numeral_value(key) is None:
            raise EvalError("table_to_code requires numeral keys")

    x = Var("x")
    if table.has_default:
        chain = compile_term(Const(table.default), ["x"], kit, fuel=fuel)
    else:
        chain = compile_term(App(Const(kit.sii), Const(kit.sii)), ["x"], kit, fuel=fuel)
    items = sorted(table.entries.items(),
                   key=lambda kv: model.numeral_value(kv[0]), reverse=True)
    for key, value in items:
        guard = App(App(Const(kit.nat_eq), x), Const(key))
        body = strong_if(guard, Const(value), App(Const(chain), x), kit)
        chain = compile_term(body, ["x"], kit, fuel=fuel)
    return chain
