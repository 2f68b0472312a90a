"""Partial functions on a base model, made into a model themselves.

An element here (BElem) is a partial function on base elements: a finite
table, a host procedure, or a lazy composite of two others.  Application
is total: it just forms the composite.  Querying a composite at a point
runs the same interrogation protocol as oracle application, with the
left function consulted as the program and the right as the oracle.

The order is reverse subfunction: alpha <= beta when the graph of alpha
extends the graph of beta.  It is decided exactly on tables and checked
pointwise everywhere else, since a composite's graph is only observable
by querying.

A BElem may carry a code: a base element whose plain applicative
behavior matches the function.  Codes compose through an in-algebra
interrogation loop, so the coded fragment is closed under application.

The distinguished combinators: the constant-maker is a coded program;
the substitution element is a host procedure that replays the three
answer streams of its nested protocol through a simulation of the
substituted application.  That procedure is the one place the package
computes a protocol answer outside the algebra; everything else it does
is observable protocol behavior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

from .kernel import (
    DEFAULT_FUEL,
    Defined,
    DefinitelyUndefined,
    Element,
    EvalError,
    Fuel,
    FuelExhausted,
    FuelMeter,
    Outcome,
    OutOfFuel,
    ProvablyUndefined,
    UndefinedReason,
    run_bounded,
)
from .models import OracleTable
from .oracle import OracleTrace, WitnessPack, interrogate_metered
from .terms import (
    Kit,
    classify_boolean,
    compile_src,
    numeral,
    seq_code,
    strict_apply,
    strict_chain,
)


class ChainError(Exception):
    """The given functions do not form a chain in the reverse subfunction order."""


# Composite trees larger than this refuse to build a composed code; see
# BElem.composed_code.  Each replay-loop level rescans its program once
# per protocol round, so the cost of running a composed code grows
# exponentially with nesting depth and the cutoff has to stay in the
# single digits for the agreement checks to finish.
_COMPOSE_LIMIT = 8


# =====================================================================
# Elements
# =====================================================================


class BElem:
    """A partial function on base elements.

    kind is one of "table", "host", "coded", "composite".  The point
    cache stores defined and definitely-undefined answers together with
    the query's own fuel cost and the child queries it made, so a hit
    can charge the canonical price of the whole subcomputation: within
    one bounded run each distinct (function, point) pair costs its own
    work exactly once and every repeat costs a single step.  The total
    for a run is therefore a pure function of what was queried, never
    of cache warmth, which keeps caching invisible to outcomes.
    Fuel-exhausted queries are never cached.
    """

    __slots__ = ("kind", "kit", "table", "proc", "code", "alpha", "beta",
                 "basic", "label", "_cache", "_nocode")

    def __init__(self, kind: str, kit: Kit, table=None, proc=None, code=None,
                 alpha=None, beta=None, basic: bool = False,
                 label: Optional[str] = None):
        self.kind = kind
        self.kit = kit
        self.table = table
        self.proc = proc
        self.code = code
        self.alpha = alpha
        self.beta = beta
        self.basic = basic
        self.label = label
        self._cache: dict = {}
        self._nocode = False

    # --- constructors ---

    @staticmethod
    def from_table(table: OracleTable, kit: Kit, code: Element = None,
                   label: Optional[str] = None) -> "BElem":
        return BElem("table", kit, table=table, code=code, label=label)

    @staticmethod
    def from_host(proc: Callable, kit: Kit, code: Element = None,
                  basic: bool = False, label: Optional[str] = None) -> "BElem":
        return BElem("host", kit, proc=proc, code=code, basic=basic, label=label)

    @staticmethod
    def from_code(code: Element, kit: Kit, label: Optional[str] = None) -> "BElem":
        return BElem("coded", kit, code=code, label=label)

    # --- querying ---

    def query_metered(self, x: Element, meter: FuelMeter) -> Element:
        st = meter.scratch
        if st is None:
            st = meter.scratch = (set(), [])
        seen, stack = st
        key = (id(self), x)
        hit = self._cache.get(x)
        if hit is not None:
            before = meter.remaining
            if key in seen:
                meter.spend(1)
            else:
                _charge_recorded(self, x, meter, seen)
            if stack:
                stack[-1][0] += before - meter.remaining
                stack[-1][1].append((self, x))
            if hit[0] == "def":
                return hit[1]
            raise ProvablyUndefined(hit[1])
        frame = [0, []]
        stack.append(frame)
        before = meter.remaining
        try:
            v = self._query_raw(x, meter)
        except ProvablyUndefined as pu:
            spent = before - meter.remaining
            self._cache[x] = ("undef", pu.reason, spent - frame[0],
                              tuple(frame[1]))
            seen.add(key)
            stack.pop()
            if stack:
                stack[-1][0] += spent
                stack[-1][1].append((self, x))
            raise
        except BaseException:
            stack.pop()
            raise
        spent = before - meter.remaining
        self._cache[x] = ("def", v, spent - frame[0], tuple(frame[1]))
        seen.add(key)
        stack.pop()
        if stack:
            stack[-1][0] += spent
            stack[-1][1].append((self, x))
        return v

    def _query_raw(self, x: Element, meter: FuelMeter) -> Element:
        if self.kind == "table":
            v = self.table.lookup(x)
            if v is None:
                raise ProvablyUndefined(UndefinedReason.ORACLE_UNDEFINED)
            return v
        if self.kind == "host":
            v = self.proc(x, meter)
            if v is None:
                raise ProvablyUndefined(UndefinedReason.ORACLE_UNDEFINED)
            return v
        if self.kind == "coded":
            return self.kit.model.apply_metered(self.code, x, meter)
        step = lambda seq, m: self.alpha.query_metered(seq, m)
        return interrogate_metered(step, self.beta, x, self.kit, meter)

    def composed_code(self) -> Optional[Element]:
        """A code for this function, composing composite codes on first
        demand.  Queries never route through it: a composed replay loop
        rescans its program once per protocol round, so its cost grows
        exponentially with nesting depth while the recursive dialogue
        stays linear.  It exists as the in-algebra witness that coded
        functions are closed under the interrogative application, and
        the agreement laws exercise it directly.

        Returns None when some leaf has no code, and refuses trees with
        more than _COMPOSE_LIMIT composite nodes to keep the witness
        checks affordable.
        """
        if self.code is not None or self.kind != "composite":
            return self.code
        if self._nocode:
            return None
        size = 0
        seen = set()
        walk = [self]
        while walk:
            node = walk.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node.kind != "composite" or node.code is not None:
                continue
            size += 1
            if size > _COMPOSE_LIMIT:
                self._nocode = True
                return None
            walk.append(node.alpha)
            walk.append(node.beta)
        stack = [self]
        while stack:
            node = stack[-1]
            if node.code is not None or node.kind != "composite":
                stack.pop()
                continue
            ca, cb = node.alpha.code, node.beta.code
            if ca is None and node.alpha.kind == "composite":
                stack.append(node.alpha)
                continue
            if cb is None and node.beta.kind == "composite":
                stack.append(node.beta)
                continue
            if ca is None or cb is None:
                return None
            node.code = rep_compose(ca, cb, node.kit)
            stack.pop()
        return self.code

    def query_by_dialogue(self, x: Element, meter: FuelMeter) -> Element:
        """One uncached query via the recursive interrogation engine.
        The agreement laws use it to check the composed code against the
        dialogue it replaces.
        """
        if self.kind != "composite":
            return self._query_raw(x, meter)
        step = lambda seq, m: self.alpha.query_metered(seq, m)
        return interrogate_metered(step, self.beta, x, self.kit, meter)

    def query(self, x: Element, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
        return run_bounded(fuel, lambda m: self.query_metered(x, m))

    def describe(self) -> str:
        if self.label:
            return f"<fn {self.label}>"
        if self.kind == "table":
            d = "+default" if self.table.has_default else ""
            return f"<fn table:{len(self.table.entries)}{d}>"
        if self.kind == "composite":
            return f"<fn {self.alpha.describe()} . {self.beta.describe()}>"
        return f"<fn {self.kind}>"

    def __repr__(self) -> str:
        return self.describe()


def _charge_recorded(elem: BElem, x: Element, meter: FuelMeter,
                     seen: set) -> None:
    """Charge the canonical price of a cached query against this run.

    Walks the recorded child graph: every (function, point) pair not yet
    seen by the meter costs its own recorded work and is marked seen,
    every repeat costs one step.  The total a run pays is then the same
    whether an answer is recomputed or served from cache.
    """
    walk = [(elem, x)]
    while walk:
        e, p = walk.pop()
        k = (id(e), p)
        if k in seen:
            meter.spend(1)
            continue
        ent = e._cache.get(p)
        if ent is None:
            meter.spend(1)
            continue
        seen.add(k)
        if ent[2]:
            meter.spend(ent[2])
        walk.extend(ent[3])


def b_app_fn(alpha: BElem, beta: BElem, kit: Kit) -> BElem:
    """The composite function: alpha interrogated with beta as oracle.
    Construction is constant-time; all cost sits in the queries.
    """
    return BElem("composite", kit, alpha=alpha, beta=beta)


def b_apply_at(alpha: BElem, beta: BElem, x: Element, kit: Kit,
               fuel: Fuel = DEFAULT_FUEL) -> Tuple[Outcome, OracleTrace]:
    """Query the composite at one point, keeping the dialogue."""
    trace = OracleTrace()
    step = lambda seq, m: alpha.query_metered(seq, m)
    out = run_bounded(
        fuel,
        lambda m: interrogate_metered(step, beta, x, kit, m, rounds=trace.rounds))
    if isinstance(out, Defined):
        trace.verdict = "defined"
        trace.value = out.value
    elif isinstance(out, DefinitelyUndefined):
        trace.verdict = out.reason.value
    return out, trace


# =====================================================================
# Distinguished codes
# =====================================================================


def build_kappa_code(kit: Kit) -> Element:
    """Constant maker: first consultation digs the argument out of the
    doubly nested history and asks the oracle; the second returns a
    finished inner protocol carrying that answer."""
    return compile_src(
        r"\v. #ifte (#one (#lh v))"
        r" (\w. #p #kbar (#fst (#fst v)))"
        r" (\w. #p #top (#p #top (#read v 1)))",
        kit)


def build_tau_code(kit: Kit) -> Element:
    """Application on embedded constants: fetch both embedded values,
    then finish with their plain application."""
    return compile_src(
        r"\u. #ifte (#one (#lh u))"
        r" (\w. #ifte (#one (#lh (#fst u)))"
        r"      (\q. #p #top (#p #kbar #i))"
        r"      (\q. #p #kbar #i))"
        r" (\w. #p #top (#p #top ((#read u 1) (#read (#fst u) 1))))",
        kit)


def build_nu_code(kit: Kit) -> Element:
    """Evaluate an embedded code on the argument: one consultation at a
    throwaway point, then apply answer to argument."""
    return compile_src(
        r"\v. #ifte (#one (#lh v))"
        r" (\w. #p #kbar #i)"
        r" (\w. #p #top ((#read v 1) (#fst v)))",
        kit)


def build_rho_code(kit: Kit) -> Element:
    """Representing program: asks its oracle at the point the outer
    history supplies, then hands the answer out as a constant."""
    return compile_src(
        r"\v. #ifte (#one (#lh v))"
        r" (\w. #ifte (#one (#lh (#fst v)))"
        r"      (\q. #p #top (#p #kbar #i))"
        r"      (\q. #p #kbar (#read (#fst v) 1)))"
        r" (\w. #p #top (#p #top (#read v 1)))",
        kit)


def build_interchange_code(kit: Kit) -> Element:
    """Drive a protocol-shaped oracle as if it were a program: feed it
    ever longer histories of the one argument until it finishes."""
    w_rep = compile_src(
        r"\f n x. #ifte (#zero n) (\w. #unit #i) (\w. #ext (f (#pred n) x) x)",
        kit)
    rep = strict_apply(kit.model, kit.z, w_rep)
    last = compile_src(r"\v. #read v (#pred (#lh v))", kit)
    return compile_src(
        r"\v. #ifte (#one (#lh v))"
        r" (\w. #p #kbar (#unit #i))"
        r" (\w. #ifte (#p0 (#LAST v))"
        r"      (\q. #p #top (#p1 (#LAST v)))"
        r"      (\q. #p #kbar (#REP (#pred (#lh v)) (#fst v))))",
        kit, extra={"REP": rep, "LAST": last})


def rep_loop(kit: Kit) -> Element:
    """The in-algebra interrogation loop, compiled once per kit.

    Applied to a program code, an answer code, and a coded history it
    drives the protocol entirely by plain application.
    """
    loop = getattr(kit, "_rep_loop", None)
    if loop is None:
        w = compile_src(
            r"\f x y u."
            r" #ifte (#p0 (x u))"
            r" (\w. #p1 (x u))"
            r" (\w. f x y (#ext u (y (#p1 (x u)))))",
            kit)
        loop = strict_apply(kit.model, kit.z, w)
        kit._rep_loop = loop
    return loop


def rep_compose(r: Element, t: Element, kit: Kit) -> Element:
    """Compose codes: run r's protocol, answering its queries through t."""
    cache = getattr(kit, "_compose_cache", None)
    if cache is None:
        cache = kit._compose_cache = {}
    key = (id(r), id(t))
    got = cache.get(key)
    if got is None:
        got = compile_src(r"\a. #T #r #t (#unit a)", kit,
                          extra={"T": rep_loop(kit), "r": r, "t": t})
        cache[key] = (got, r, t)
        return got
    return got[0]


def embed(a: Element, kit: Kit, label: Optional[str] = None) -> BElem:
    """The canonical embedding: the total constant function at a.

    Its code is the constant combinator applied to a.
    """
    return BElem.from_table(
        OracleTable({}, default=a, has_default=True), kit,
        code=strict_apply(kit.model, kit.k, a),
        label=label or "const")


def build_kappa(kit: Kit) -> BElem:
    b = BElem.from_code(build_kappa_code(kit), kit, label="const-maker")
    b.basic = True
    return b


def build_tau(kit: Kit) -> BElem:
    return BElem.from_code(build_tau_code(kit), kit, label="apply-consts")


def build_nu(kit: Kit) -> BElem:
    return BElem.from_code(build_nu_code(kit), kit, label="eval-code")


def build_rho(kit: Kit) -> BElem:
    return BElem.from_code(build_rho_code(kit), kit, label="representer")


# =====================================================================
# The substitution element
# =====================================================================


class _NeedAnswer(Exception):
    def __init__(self, depth: int, query: Element):
        self.depth = depth
        self.query = query


def _sigma_value(kit: Kit, w: Element, meter: FuelMeter) -> Optional[Element]:
    """One consultation of the substitution element.

    The triply nested history carries the final argument plus the three
    answer streams.  Replay the substituted application against those
    streams; the first missing answer decides the reply, a finished
    simulation returns the result at full protocol depth.
    """
    model = kit.model

    def mk_pair(x: Element, y: Element) -> Element:
        return model.apply_metered(
            model.apply_metered(kit.pair, x, meter), y, meter)

    outer = model.seq_elements(w)
    if not outer:
        return None
    mid = model.seq_elements(outer[0])
    if not mid:
        return None
    inner = model.seq_elements(mid[0])
    if not inner:
        return None
    arg = inner[0]
    gamma_stream = inner[1:]
    beta_stream = mid[1:]
    alpha_stream = outer[1:]
    gi = bi = ai = 0

    def next_alpha(q: Element) -> Element:
        nonlocal ai
        if ai < len(alpha_stream):
            v = alpha_stream[ai]
            ai += 1
            return v
        raise _NeedAnswer(1, q)

    def next_beta(q: Element) -> Element:
        nonlocal bi
        if bi < len(beta_stream):
            v = beta_stream[bi]
            bi += 1
            return v
        raise _NeedAnswer(2, q)

    def next_gamma(q: Element) -> Element:
        nonlocal gi
        if gi < len(gamma_stream):
            v = gamma_stream[gi]
            gi += 1
            return v
        raise _NeedAnswer(3, q)

    def protocol(consult: Callable, answer: Callable, b: Element) -> Element:
        seq = [b]
        while True:
            r = consult(seq_code(seq, kit))
            flag = model.apply_metered(kit.p0, r, meter)
            verdict = classify_boolean(model, kit, flag, meter)
            if verdict is None:
                raise ProvablyUndefined(UndefinedReason.NOT_A_BOOLEAN)
            payload = model.apply_metered(kit.p1, r, meter)
            if verdict:
                return payload
            seq.append(answer(payload))

    def left_at(s: Element) -> Element:
        return protocol(next_alpha, next_gamma, s)

    def right_at(q: Element) -> Element:
        return protocol(next_beta, next_gamma, q)

    try:
        result = protocol(left_at, right_at, arg)
    except _NeedAnswer as need:
        if need.depth == 1:
            return mk_pair(kit.bot, need.query)
        if need.depth == 2:
            return mk_pair(kit.top, mk_pair(kit.bot, need.query))
        return mk_pair(kit.top, mk_pair(kit.top, mk_pair(kit.bot, need.query)))
    return mk_pair(kit.top, mk_pair(kit.top, mk_pair(kit.top, result)))


def build_sigma_code(kit: Kit) -> Element:
    """The in-algebra twin of the substitution replay.

    A four-mode tail loop threads the growing outer history, the current
    inner history, and the three stream cursors.  Modes: 0 starts a left
    replay on the outer history, 1 consumes one left-stream answer, 2
    checks the outer verdict, 3 consumes one right-stream answer.  Gaps
    in a stream abort with the depth-coded query exactly as the host
    replay does.  Agreement with the host is only claimed on well-formed
    replay histories; garbage inputs that the host rejects outright can
    make the code diverge or produce junk instead.
    """
    code = getattr(kit, "_sigma_code", None)
    if code is not None:
        return code
    lt = compile_src(r"\a b. #zero (#monus (#suc a) b)", kit)

    # The seven machine registers travel as one right-nested pair so the
    # loop takes three parameters; abstraction cost grows by a factor of
    # three per parameter, so unpacked registers would be prohibitive.
    m_ = "(#p0 st)"
    o_ = "(#p0 (#p1 st))"
    i_ = "(#p0 (#p1 (#p1 st)))"
    ai = "(#p0 (#p1 (#p1 (#p1 st))))"
    bi = "(#p0 (#p1 (#p1 (#p1 (#p1 st)))))"
    gi = "(#p0 (#p1 (#p1 (#p1 (#p1 (#p1 st))))))"
    pe = "(#p1 (#p1 (#p1 (#p1 (#p1 (#p1 st))))))"

    def pack(m: str, o: str, i: str, a: str, b: str, g: str, p: str) -> str:
        return f"(#p {m} (#p {o} (#p {i} (#p {a} (#p {b} (#p {g} {p}))))))"

    need3 = r"(\q. #p #top (#p #top (#p #bot (#p1 r))))"
    left_step = (
        f"(\\q. #ifte (#LT {ai} (#pred (#lh w)))"
        f" (\\q. (\\r. #ifte (#p0 r)"
        f"  (\\q. f w {pack('2', o_, i_, f'(#suc {ai})', bi, gi, '(#p1 r)')})"
        f"  (\\q. #ifte (#LT {gi} (#pred (#lh (#fst (#fst w)))))"
        f"   (\\q. f w {pack('1', o_, f'(#ext {i_} (#read (#fst (#fst w)) (#suc {gi})))', f'(#suc {ai})', bi, f'(#suc {gi})', pe)}) "
        + need3 + "))"
        f" (#read w (#suc {ai})))"
        f" (\\q. #p #bot {i_}))")
    outer_check = (
        f"(\\q. #ifte (#p0 {pe})"
        f" (\\q. #p #top (#p #top (#p #top (#p1 {pe}))))"
        f" (\\q. f w {pack('3', o_, f'(#unit (#p1 {pe}))', ai, bi, gi, pe)}))")
    right_step = (
        f"(\\q. #ifte (#LT {bi} (#pred (#lh (#fst w))))"
        f" (\\q. (\\r. #ifte (#p0 r)"
        f"  (\\q. f w {pack('0', f'(#ext {o_} (#p1 r))', i_, ai, f'(#suc {bi})', gi, pe)})"
        f"  (\\q. #ifte (#LT {gi} (#pred (#lh (#fst (#fst w)))))"
        f"   (\\q. f w {pack('3', o_, f'(#ext {i_} (#read (#fst (#fst w)) (#suc {gi})))', ai, f'(#suc {bi})', f'(#suc {gi})', pe)}) "
        + need3 + "))"
        f" (#read (#fst w) (#suc {bi})))"
        f" (\\q. #p #top (#p #bot {i_})))")
    body = compile_src(
        f"\\f w st. #ifte (#nat_eq {m_} 0)"
        f" (\\q. f w {pack('1', o_, f'(#unit {o_})', ai, bi, gi, pe)})"
        f" (\\q. #ifte (#nat_eq {m_} 1) " + left_step +
        f" (\\q. #ifte (#nat_eq {m_} 2) " + outer_check + " " + right_step + "))",
        kit, extra={"LT": lt})
    loop = strict_apply(kit.model, kit.z, body)
    code = compile_src(
        "\\w. #L w "
        + pack("0", "(#unit (#fst (#fst (#fst w))))", "#i", "0", "0", "0", "#i"),
        kit, extra={"L": loop})
    kit._sigma_code = code
    return code


def build_sigma(kit: Kit) -> BElem:
    proc = lambda w, meter: _sigma_value(kit, w, meter)
    return BElem.from_host(proc, kit, code=build_sigma_code(kit),
                           basic=True, label="substitution")


# =====================================================================
# The model
# =====================================================================


class BAModel:
    """Partial functions on the base model as a combinatory model.

    Application always succeeds and costs one unit; all real work is
    deferred to queries.  The order is reverse subfunction, decided
    exactly on tables only.  The filter holds the coded functions plus
    the basic combinators.
    """

    def __init__(self, base_kit: Kit, name: Optional[str] = None):
        self.base_kit = base_kit
        self.base = base_kit.model
        self.name = name or f"{self.base.name}-fn"
        self._kappa: Optional[BElem] = None
        self._sigma: Optional[BElem] = None
        self._probes: Optional[List[Element]] = None

    @property
    def k(self) -> BElem:
        if self._kappa is None:
            self._kappa = build_kappa(self.base_kit)
        return self._kappa

    @property
    def s(self) -> BElem:
        if self._sigma is None:
            self._sigma = build_sigma(self.base_kit)
        return self._sigma

    def apply_metered(self, a: BElem, b: BElem, meter: FuelMeter) -> BElem:
        meter.spend()
        return b_app_fn(a, b, self.base_kit)

    def apply(self, a: BElem, b: BElem, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
        return run_bounded(fuel, lambda m: self.apply_metered(a, b, m))

    def leq(self, a: BElem, b: BElem) -> bool:
        if a is b:
            return True
        if a.kind == "table" and b.kind == "table":
            return table_subfn(b.table, a.table)
        return False

    def in_filter(self, a: BElem) -> bool:
        if a.code is not None or a.basic:
            return True
        # A composite is in the filter when every leaf is, without
        # forcing the compile that composed_code would run.
        stack = [a]
        while stack:
            node = stack.pop()
            if node.code is not None or node.basic:
                continue
            if node.kind != "composite":
                return False
            stack.append(node.alpha)
            stack.append(node.beta)
        return True

    # Functions have no numeral or pair structure to inspect.

    def pair_parts(self, e: BElem):
        return None

    def numeral_value(self, e: BElem):
        return None

    def seq_elements(self, e: BElem):
        return None

    def format_element(self, e: BElem) -> str:
        return e.describe()

    def parse_element(self, text: str) -> BElem:
        raise EvalError("functions have no literal syntax")

    def random_element(self, rng, max_size: int = 6) -> BElem:
        return embed(self.base.random_element(rng, max_size), self.base_kit)

    def classify_boolean(self, e: BElem, kit, meter: FuelMeter):
        """Probe the function against the two booleans of `kit` at base
        points until one is separated; None when no probe separates."""
        if e is kit.top:
            return True
        if e is kit.bot:
            return False
        base_kit = self.base_kit
        if self._probes is None:
            # Cheapest point first: the bare identity already separates
            # the canonical booleans, and the nested sequence points cost
            # orders of magnitude more to query.
            base_i = base_kit.i
            self._probes = [
                base_i,
                seq_code([base_i], base_kit),
                seq_code([seq_code([base_i], base_kit)], base_kit),
            ]
        for probe in self._probes:
            try:
                tv = kit.top.query_metered(probe, meter)
            except ProvablyUndefined:
                tv = None
            try:
                bv = kit.bot.query_metered(probe, meter)
            except ProvablyUndefined:
                bv = None
            try:
                ev = e.query_metered(probe, meter)
            except ProvablyUndefined:
                ev = None
            if ev is None:
                if tv is None and bv is not None:
                    return True
                if bv is None and tv is not None:
                    return False
                continue
            teq = tv is not None and self.base.leq(ev, tv) and self.base.leq(tv, ev)
            beq = bv is not None and self.base.leq(ev, bv) and self.base.leq(bv, ev)
            if teq and not beq:
                return True
            if beq and not teq:
                return False
        return None


# =====================================================================
# Order helpers
# =====================================================================


def table_subfn(smaller: OracleTable, larger: OracleTable) -> bool:
    """Is the graph of `smaller` contained in the graph of `larger`?"""
    for key, value in smaller.entries.items():
        got = larger.lookup(key)
        if got is None or got != value:
            return False
    if smaller.has_default:
        if not larger.has_default or larger.default != smaller.default:
            return False
        for key, value in larger.entries.items():
            if key not in smaller.entries and value != smaller.default:
                return False
    return True


def pointwise_leq(alpha: BElem, beta: BElem, probes: Sequence[Element],
                  fuel: Fuel = DEFAULT_FUEL) -> Optional[bool]:
    """Probe the reverse subfunction order: wherever beta answers, alpha
    must answer the same.  False on a witnessed violation, True when all
    probes check out, None when fuel left some probe unresolved."""
    base = alpha.kit.model
    unresolved = False
    for x in probes:
        ob = beta.query(x, fuel=fuel)
        if isinstance(ob, FuelExhausted):
            unresolved = True
            continue
        if isinstance(ob, DefinitelyUndefined):
            continue
        oa = alpha.query(x, fuel=fuel)
        if isinstance(oa, FuelExhausted):
            unresolved = True
            continue
        if isinstance(oa, DefinitelyUndefined):
            return False
        if not (base.leq(oa.value, ob.value) and base.leq(ob.value, oa.value)):
            return False
    return None if unresolved else True


def chain_meet(links: Sequence[BElem]) -> BElem:
    """Greatest lower bound of a chain of table functions: the union of
    their graphs.  Raises ChainError when the graphs are not nested."""
    if not links:
        raise ChainError("empty chain")
    kit = links[0].kit
    for b in links:
        if b.kind != "table":
            raise ChainError("chain meet needs table functions")
    for i in range(len(links)):
        for j in range(i + 1, len(links)):
            ti, tj = links[i].table, links[j].table
            if not (table_subfn(ti, tj) or table_subfn(tj, ti)):
                raise ChainError("graphs are not nested")
    entries: dict = {}
    default = None
    has_default = False
    for b in links:
        t = b.table
        for key, value in t.entries.items():
            if key in entries and entries[key] != value:
                raise ChainError("conflicting values in chain")
            entries[key] = value
        if t.has_default:
            if has_default and default != t.default:
                raise ChainError("conflicting defaults in chain")
            default = t.default
            has_default = True
    return BElem.from_table(OracleTable(entries, default=default,
                                        has_default=has_default), kit)


# =====================================================================
# Extension tracking
# =====================================================================


def extension_tracker(kit: Kit, pack: Optional[WitnessPack] = None) -> Element:
    """The in-algebra interrogation loop, parameterized by a witness pack.

    Applied to a program code and an answer function it runs the protocol
    entirely through the pack's tracked operations.  The default pack is
    the identity: plain application, literal booleans, the kit's own
    sequence operators.
    """
    if pack is None:
        pack = WitnessPack(
            app=compile_src(r"\x y. x y", kit),
            decide=kit.i,
            represent=kit.i,
            p0_img=kit.p0, p1_img=kit.p1,
            unit_img=kit.unit, ext_img=kit.ext, i_img=kit.i)
    extra = {
        "t": pack.app, "d": pack.decide,
        "p0i": pack.p0_img, "p1i": pack.p1_img,
        "uniti": pack.unit_img, "exti": pack.ext_img,
    }
    p0p = compile_src(r"\x. #t #p0i x", kit, extra=extra)
    p1p = compile_src(r"\x. #t #p1i x", kit, extra=extra)
    extp = compile_src(r"\u v. #t (#t #exti u) v", kit, extra=extra)
    unitp = compile_src(r"\y. #t #uniti y", kit, extra=extra)
    extra.update({"p0p": p0p, "p1p": p1p, "extp": extp, "unitp": unitp})
    w = compile_src(
        r"\f x y v."
        r" #ifte (#d (#p0p (#t x v)))"
        r" (\w. #p1p (#t x v))"
        r" (\w. f x y (#extp v (y (#p1p (#t x v)))))",
        kit, extra=extra)
    loop = strict_apply(kit.model, kit.z, w)
    return compile_src(r"\x y a. #LOOP x y (#unitp a)", kit,
                       extra={"LOOP": loop, "unitp": unitp})
