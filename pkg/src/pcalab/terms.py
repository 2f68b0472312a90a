"""Terms over a combinatory model: syntax, abstraction, evaluation, kit.

Surface grammar
---------------
    expr   := '\\' ident+ '.' expr | app
    app    := atom atom*                 (left associative)
    atom   := ident | '#' name | decimal | '(' expr ')' | '{' literal '}'

Identifiers are variables.  `#name` looks up a kit constant, `#num:7` and
bare decimals denote Curry-style numerals, and a braced literal is handed
to the model's own element parser.  Lambdas are sugar: they are expanded
at parse time by bracket abstraction, so every Term is just variables,
constants and application (plus the strong conditional node below).

Bracket abstraction is the plain three-clause scheme: the bound variable
maps to i, an application splits through s, anything else is guarded by
k.  No eta step, no occurs-check shortcut, so the cost model is uniform.

The strong conditional is a Term node.  Compilation expands it into the
case-combinator form (selector, two reified thunks, a forcing argument),
which never touches the dead branch under weak reduction.  `eval_term`
with checked=True instead interprets the node natively and reports a
non-boolean guard as definitely undefined.

Variable names beginning with '__' are reserved for generated thunk
binders; the parser rejects them.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .kernel import (
    DEFAULT_FUEL,
    Defined,
    Element,
    EvalError,
    Fuel,
    FuelMeter,
    Outcome,
    PcaModel,
    ProvablyUndefined,
    UndefinedReason,
    run_bounded,
)


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: Any

    def __repr__(self) -> str:
        return f"Const({self.value!r})"


@dataclass(frozen=True)
class App:
    fn: "Term"
    arg: "Term"


@dataclass(frozen=True)
class If:
    """Strong conditional: guard must evaluate to a boolean."""
    guard: "Term"
    then_branch: "Term"
    else_branch: "Term"


Term = Any

_fresh_counter = itertools.count()


def _fresh_var() -> str:
    return f"__if{next(_fresh_counter)}"


def free_vars(t: Term) -> set:
    out: set = set()
    seen: set = set()
    stack = [t]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, App):
            stack.append(node.fn)
            stack.append(node.arg)
        elif isinstance(node, If):
            stack.append(node.guard)
            stack.append(node.then_branch)
            stack.append(node.else_branch)
    return out


def strong_if(guard: Term, then_branch: Term, else_branch: Term, kit=None) -> Term:
    return If(guard, then_branch, else_branch)


def bracket_abstract(t: Term, var: str, kit) -> Term:
    """Abstract `var` out of an If-free term.

    Every application diffuses into an S node and every foreign leaf
    gets a K guard, with no constant-subterm or eta shortcuts: the full
    diffusion is what keeps compiled thunks and self-application guards
    passive until an argument arrives, which the recursion combinators
    and the lazy conditional depend on.  The price is a size factor of
    about three per abstracted variable, so multi-parameter programs
    should pack state into pairs rather than take many parameters.
    Iterative with a memo on node identity: shared subterms are
    abstracted once and stay shared, so nested abstraction grows the
    dag, not a tree.
    """
    k_const = Const(kit.k)
    s_const = Const(kit.s)
    i_const = Const(kit.i)
    done: Dict[int, Term] = {}
    stack = [t]
    while stack:
        node = stack[-1]
        nid = id(node)
        if nid in done:
            stack.pop()
            continue
        if isinstance(node, App):
            fd = done.get(id(node.fn))
            if fd is None:
                stack.append(node.fn)
                continue
            ad = done.get(id(node.arg))
            if ad is None:
                stack.append(node.arg)
                continue
            done[nid] = App(App(s_const, fd), ad)
        elif isinstance(node, Var) and node.name == var:
            done[nid] = i_const
        elif isinstance(node, If):
            raise EvalError("expand strong conditionals before abstraction")
        else:
            done[nid] = App(k_const, node)
        stack.pop()
    return done[id(t)]


def expand_if(t: Term, kit) -> Term:
    """Replace every If node by the case-combinator encoding.

    The encoding is case guard thunk1 thunk2 i with both branches wrapped
    in a fresh-variable abstraction, so their applications are reified and
    the unselected branch is never reduced.
    """
    case_const: Optional[Const] = None
    i_const: Optional[Const] = None
    done: Dict[int, Term] = {}
    stack = [t]
    while stack:
        node = stack[-1]
        nid = id(node)
        if nid in done:
            stack.pop()
            continue
        if isinstance(node, App):
            fd = done.get(id(node.fn))
            if fd is None:
                stack.append(node.fn)
                continue
            ad = done.get(id(node.arg))
            if ad is None:
                stack.append(node.arg)
                continue
            done[nid] = App(fd, ad)
        elif isinstance(node, If):
            g = done.get(id(node.guard))
            if g is None:
                stack.append(node.guard)
                continue
            tb = done.get(id(node.then_branch))
            if tb is None:
                stack.append(node.then_branch)
                continue
            eb = done.get(id(node.else_branch))
            if eb is None:
                stack.append(node.else_branch)
                continue
            fresh = _fresh_var()
            th1 = bracket_abstract(tb, fresh, kit)
            th2 = bracket_abstract(eb, fresh, kit)
            if case_const is None:
                case_const = Const(kit.case_)
                i_const = Const(kit.i)
            done[nid] = App(App(App(App(case_const, g), th1), th2), i_const)
        else:
            done[nid] = node
        stack.pop()
    return done[id(t)]


# =====================================================================
# Evaluation
# =====================================================================


def classify_boolean(model, kit, e: Element, meter: FuelMeter):
    """True / False / None for an element in boolean position.

    Models may supply their own `classify_boolean(e, kit, meter)`; the
    default compares against the kit booleans in the model order.
    """
    hook = getattr(model, "classify_boolean", None)
    if hook is not None:
        return hook(e, kit, meter)
    if model.leq(e, kit.top):
        return True
    if model.leq(e, kit.bot):
        return False
    return None


def eval_metered(t: Term, env: Dict[str, Element], kit, meter: FuelMeter,
                 checked: bool = False) -> Element:
    """Evaluate a term under a meter.  Iterative, memoized on node identity.

    Without `checked`, If nodes must have been expanded away.  With it,
    guards are classified and a non-boolean guard raises ProvablyUndefined;
    only the selected branch is evaluated.
    """
    model = kit.model
    memo: Dict[int, Element] = {}
    stack = [t]
    while stack:
        node = stack[-1]
        nid = id(node)
        if nid in memo:
            stack.pop()
            continue
        if isinstance(node, Var):
            if node.name not in env:
                raise EvalError(f"unbound variable {node.name!r}")
            memo[nid] = env[node.name]
            stack.pop()
        elif isinstance(node, Const):
            memo[nid] = node.value
            stack.pop()
        elif isinstance(node, App):
            f = memo.get(id(node.fn))
            if f is None:
                stack.append(node.fn)
                continue
            a = memo.get(id(node.arg))
            if a is None:
                stack.append(node.arg)
                continue
            memo[nid] = model.apply_metered(f, a, meter)
            stack.pop()
        elif isinstance(node, If):
            if not checked:
                raise EvalError("unexpanded strong conditional in plain evaluation")
            g = memo.get(id(node.guard))
            if g is None:
                stack.append(node.guard)
                continue
            verdict = classify_boolean(model, kit, g, meter)
            if verdict is None:
                raise ProvablyUndefined(UndefinedReason.NOT_A_BOOLEAN)
            branch = node.then_branch if verdict else node.else_branch
            b = memo.get(id(branch))
            if b is None:
                stack.append(branch)
                continue
            memo[nid] = b
            stack.pop()
        else:
            raise EvalError(f"not a term: {node!r}")
    return memo[id(t)]


def eval_term(t: Term, env: Dict[str, Element], kit, fuel: Fuel = DEFAULT_FUEL,
              checked: bool = False) -> Outcome:
    if not checked:
        t = expand_if(t, kit)
    return run_bounded(fuel, lambda m: eval_metered(t, env, kit, m, checked=checked))


def compile_term(t: Term, params: Sequence[str], kit, fuel: Fuel = DEFAULT_FUEL) -> Element:
    """Close a term over the given parameters and evaluate it to an element.

    Conditionals are expanded first, parameters abstracted right to left.
    Compilation must converge; a fuel or definedness failure here is a
    construction bug, reported as EvalError.
    """
    t = expand_if(t, kit)
    for p in reversed(list(params)):
        t = bracket_abstract(t, p, kit)
    out = eval_term(t, {}, kit, fuel=fuel)
    if not isinstance(out, Defined):
        raise EvalError(f"compilation did not converge: {out!r}")
    return out.value


def compile_src(src: str, kit, extra: Optional[Dict[str, Element]] = None,
                fuel: Fuel = DEFAULT_FUEL) -> Element:
    """Parse a closed source string and evaluate it to an element."""
    t = parse(src, kit, extra=extra)
    out = eval_term(t, {}, kit, fuel=fuel)
    if not isinstance(out, Defined):
        raise EvalError(f"program did not converge: {out!r}")
    return out.value


# =====================================================================
# Parsing
# =====================================================================

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<lambda>\\)|(?P<dot>\.)|(?P<lparen>\()|(?P<rparen>\))"
    r"|(?P<lbrace>\{)|(?P<hash>\#[A-Za-z0-9_:]+)|(?P<num>[0-9]+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_']*))"
)


def _tokenize(text: str) -> List[tuple]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == m.start():
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise EvalError(f"bad token at {pos}: {rest[:12]!r}")
        if m.lastgroup == "lbrace":
            depth = 1
            j = m.end()
            while j < n and depth:
                if text[j] == "{":
                    depth += 1
                elif text[j] == "}":
                    depth -= 1
                j += 1
            if depth:
                raise EvalError("unterminated element literal")
            tokens.append(("brace", text[m.end():j - 1]))
            pos = j
            continue
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


def parse(text: str, kit, extra: Optional[Dict[str, Element]] = None) -> Term:
    """Parse surface syntax into a Term, expanding lambdas on the way."""
    tokens = _tokenize(text)
    pos = 0

    def lookup_hash(name: str) -> Element:
        if name.startswith("num:"):
            try:
                return numeral(int(name[4:]), kit)
            except ValueError:
                raise EvalError(f"bad numeral name #{name}")
        if extra and name in extra:
            return extra[name]
        if name in kit.names:
            return kit.names[name]
        raise EvalError(f"unknown constant #{name}")

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, None)

    def parse_expr() -> Term:
        nonlocal pos
        kind, val = peek()
        if kind == "lambda":
            pos += 1
            params = []
            while True:
                k2, v2 = peek()
                if k2 == "ident":
                    if v2.startswith("__"):
                        raise EvalError(f"variable {v2!r} uses the reserved prefix")
                    params.append(v2)
                    pos += 1
                elif k2 == "dot":
                    pos += 1
                    break
                else:
                    raise EvalError("malformed lambda: expected parameters then '.'")
            if not params:
                raise EvalError("lambda with no parameters")
            body = parse_expr()
            for p in reversed(params):
                body = bracket_abstract(body, p, kit)
            return body
        return parse_app()

    def parse_app() -> Term:
        nonlocal pos
        t = parse_atom()
        while True:
            kind, _ = peek()
            if kind in ("ident", "hash", "num", "lparen", "brace"):
                t = App(t, parse_atom())
            else:
                return t

    def parse_atom() -> Term:
        nonlocal pos
        kind, val = peek()
        if kind == "ident":
            if val.startswith("__"):
                raise EvalError(f"variable {val!r} uses the reserved prefix")
            pos += 1
            return Var(val)
        if kind == "hash":
            pos += 1
            return Const(lookup_hash(val[1:]))
        if kind == "num":
            pos += 1
            return Const(numeral(int(val), kit))
        if kind == "brace":
            pos += 1
            return Const(kit.model.parse_element(val))
        if kind == "lparen":
            pos += 1
            t = parse_expr()
            k2, _ = peek()
            if k2 != "rparen":
                raise EvalError("expected ')'")
            pos += 1
            return t
        raise EvalError(f"unexpected token {val!r}" if val else "unexpected end of input")

    t = parse_expr()
    if pos != len(tokens):
        raise EvalError(f"trailing input from token {pos}")
    return t


# =====================================================================
# Printing
# =====================================================================


def format_element(e: Element, kit, machine: bool = False) -> str:
    """Canonical text for an element.

    Human mode prefers a numeral reading, then a kit name, then the model
    literal in braces.  Machine mode is purely structural: `num:<n>` for
    numerals, a braced literal otherwise.
    """
    n = kit.model.numeral_value(e)
    if n is not None:
        return f"num:{n}" if machine else str(n)
    if not machine:
        name = kit.name_of(e)
        if name is not None:
            return f"#{name}"
    return "{" + kit.model.format_element(e) + "}"


# =====================================================================
# Numerals and sequences
# =====================================================================


def strict_apply(model, a: Element, b: Element, fuel: Fuel = DEFAULT_FUEL) -> Element:
    o = model.apply(a, b, fuel=fuel)
    if not isinstance(o, Defined):
        raise EvalError(f"application did not converge: {o!r}")
    return o.value


def strict_chain(model, e: Element, *args: Element, fuel: Fuel = DEFAULT_FUEL) -> Element:
    for a in args:
        e = strict_apply(model, e, a, fuel=fuel)
    return e


def numeral(n: int, kit) -> Element:
    """The n-th numeral: zero is i, successor pairs a false flag on front."""
    if n < 0:
        raise EvalError("numerals are non-negative")
    cache = kit._numerals
    while len(cache) <= n:
        cache.append(strict_chain(kit.model, kit.pair, kit.bot, cache[-1]))
    return cache[n]


def seq_code(elems: Iterable[Element], kit) -> Element:
    """The coded sequence: length numeral paired onto a right-nested chain."""
    elems = list(elems)
    chain = kit.i
    for e in reversed(elems):
        chain = strict_chain(kit.model, kit.pair, e, chain)
    return strict_chain(kit.model, kit.pair, numeral(len(elems), kit), chain)


# =====================================================================
# The kit
# =====================================================================


class Kit:
    """The standard program kit over one model.

    Holds the booleans, pairing, numeral operations, sequence operations,
    recursion combinators, and a name table for the surface syntax.  Build
    with build_kit; all programs are compiled once per kit.
    """

    def __init__(self, model: PcaModel):
        self.model = model
        self.names: Dict[str, Element] = {}
        self._by_element: Dict[Any, str] = {}
        self._numerals: List[Element] = []

    def register(self, name: str, e: Element) -> Element:
        self.names[name] = e
        self._by_element.setdefault(e, name)
        return e

    def name_of(self, e: Element) -> Optional[str]:
        try:
            return self._by_element.get(e)
        except TypeError:
            return None


def build_kit(model: PcaModel, fuel: Fuel = DEFAULT_FUEL) -> Kit:
    """Compile the standard kit over a model.

    Construction is dependency ordered; each program is a closed source
    string compiled by bracket abstraction, so the same definitions work
    over any model of the combinator axioms.
    """
    kit = Kit(model)
    app = lambda a, b: strict_apply(model, a, b, fuel=fuel)

    kit.k = kit.register("k", model.k)
    kit.s = kit.register("s", model.s)
    kit.i = kit.register("i", app(app(model.s, model.k), model.k))
    kit.top = kit.register("top", kit.k)
    kit.kbar = kit.register("kbar", app(kit.k, kit.i))
    kit.bot = kit.register("bot", kit.kbar)
    kit.case_ = kit.register("case", kit.i)
    kit._numerals.append(kit.i)

    def prog(name: str, src: str, extra: Optional[Dict[str, Element]] = None) -> Element:
        return kit.register(name, compile_src(src, kit, extra=extra, fuel=fuel))

    kit.pair = prog("p", r"\x y z. z x y")
    kit.p0 = prog("p0", r"\x. x #top")
    kit.p1 = prog("p1", r"\x. x #kbar")

    turing = compile_src(r"\x y. y (x x y)", kit, fuel=fuel)
    kit.y = kit.register("y", app(turing, turing))
    guarded = compile_src(r"\x y z. y (x x y) z", kit, fuel=fuel)
    kit.z = kit.register("z", app(guarded, guarded))

    kit.zero = kit.register("zero", kit.p0)
    kit.suc = prog("suc", r"\x. #p #kbar x")
    kit.pred = prog("pred", r"\x. #p0 x #i (#p1 x)")
    kit.lh = kit.register("lh", kit.p0)
    kit.one = prog("one", r"\n. #zero (#pred n)")

    # Strict selector: the guard itself picks a thunk, i forces it.
    kit.ifte = prog("ifte", r"\c a b. c a b #i")

    w_rec = compile_src(
        r"\f a b n. #ifte (#zero n) (\w. a) (\w. b (#pred n) (f a b (#pred n)))",
        kit, fuel=fuel)
    kit.rec = kit.register("rec", app(kit.z, w_rec))

    w_tail = compile_src(
        r"\f n ch. #ifte (#zero n) (\w. ch) (\w. f (#pred n) (#p1 ch))",
        kit, fuel=fuel)
    kit.tailn = kit.register("tailn", app(kit.z, w_tail))

    kit.read = prog("read", r"\u j. #p0 (#tailn j (#p1 u))")
    kit.fst = prog("fst", r"\u. #p0 (#p1 u)")
    kit.unit = prog("unit", r"\a. #p 1 (#p a #i)")
    kit.add = prog("add", r"\m n. #rec m (\j acc. #suc acc) n")
    kit.monus = prog("monus", r"\m n. #rec m (\j acc. #pred acc) n")

    w_takebody = compile_src(
        r"\f n ch. #ifte (#zero n) (\w. #i) (\w. #p (#p0 ch) (f (#pred n) (#p1 ch)))",
        kit, fuel=fuel)
    takebody = app(kit.z, w_takebody)
    kit.take = prog("take", r"\n u. #p n (#TB n (#p1 u))", extra={"TB": takebody})

    kit.drop = prog("drop", r"\n u. #p (#monus (#lh u) n) (#tailn n (#p1 u))")
    kit.register("dropn", kit.drop)

    w_cat = compile_src(
        r"\f m cu cv. #ifte (#zero m) (\w. cv) (\w. #p (#p0 cu) (f (#pred m) (#p1 cu) cv))",
        kit, fuel=fuel)
    catbody = app(kit.z, w_cat)
    kit.concat = prog(
        "concat", r"\u v. #p (#add (#lh u) (#lh v)) (#CAT (#lh u) (#p1 u) (#p1 v))",
        extra={"CAT": catbody})
    kit.ext = prog("ext", r"\u a. #concat u (#unit a)")
    kit.subseq = prog("subseq", r"\a b u. #take (#monus b a) (#drop a u)")

    w_eq = compile_src(
        r"\f m n. #ifte (#zero m) (\w. #zero n)"
        r" (\w. #ifte (#zero n) (\v. #bot) (\v. f (#pred m) (#pred n)))",
        kit, fuel=fuel)
    kit.nat_eq = kit.register("nat_eq", app(kit.z, w_eq))

    kit.sii = kit.register("sii", app(app(kit.s, kit.i), kit.i))
    return kit
