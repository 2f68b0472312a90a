"""Type-two functionals, fixpoint stages, and the type-three tower.

A type-two functional consumes a partial function on base elements and
produces a base element.  Relativized to a changing oracle it induces a
stage sequence: stage zero is the empty oracle, and stage n+1 answers a
query program q with the functional's value on the function q computes
under stage n.  The stages are monotone, so finitely consulting programs
stabilize at a finite stage.

The same construction lifts one level: a type-three functional consumes
a type-two one, and the stage sequence runs over the function model,
where query programs are themselves partial functions.  Everything here
is generic over the model precisely so that one FixpointStages class
serves both levels.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .kernel import (DEFAULT_FUEL, Defined, DefinitelyUndefined, Element,
                     Fuel, FuelMeter, Outcome, OutOfFuel, ProvablyUndefined,
                     UndefinedReason, is_defined, run_bounded)
from .terms import Kit, build_kit, compile_src, numeral, strict_apply
from .models import OracleTable
from .oracle import OracleModel, oracle_apply_metered
from .funcpca import BAModel, BElem, embed, rep_loop

__all__ = [
    "Functional2", "const_functional", "eval0_functional", "kleene_exists",
    "lift_program", "tilde", "FixpointStages", "outcomes_agree",
    "probe_const", "probe_consult",
    "z_representer", "z_representer_check",
    "Functional3", "phi_const", "phi_eval_id", "identity_fn",
    "tilde_phi", "f_hat", "type3_coherence",
    "phi_representer", "build_type3_t", "hatted_const_code",
    "hatted_eval0_code", "build_fix_tower", "tau_contract_value",
    "type2_registry", "get_functional", "get_z_representer",
    "type3_registry", "get_type3",
]


# --- type-two functionals ---

class Functional2:
    """A named map from partial functions to elements.

    The action receives the argument function (anything with
    query_metered), the kit of the level it runs at, and a fuel meter;
    it returns an element or raises ProvablyUndefined / OutOfFuel.
    """

    def __init__(self, name: str, action: Callable):
        self.name = name
        self.action = action

    def evaluate(self, pfn, kit: Kit, meter: FuelMeter) -> Element:
        return self.action(pfn, kit, meter)

    def __repr__(self) -> str:
        return f"<functional {self.name}>"


def const_functional(value: Element, name: str = "const") -> Functional2:
    """Ignores its argument entirely."""
    return Functional2(name, lambda pfn, kit, meter: value)


def eval0_functional() -> Functional2:
    """Queries its argument at the zero numeral."""
    def act(pfn, kit: Kit, meter: FuelMeter) -> Element:
        return pfn.query_metered(numeral(0, kit), meter)
    return Functional2("eval0", act)


def kleene_exists(probe_bound: int = 64) -> Functional2:
    """Existence test: 1 when the argument is nonzero somewhere, 0 when
    it is zero on every numeral.

    The negative side is decided exactly for finite tables with a
    default.  Elsewhere numerals are probed in order up to probe_bound:
    a nonzero hit answers 1, a gap is undefined, and running out of
    probes claims nothing (the meter is drained so the caller sees fuel
    exhaustion rather than a verdict).
    """
    def act(pfn, kit: Kit, meter: FuelMeter) -> Element:
        one = numeral(1, kit)
        zero = numeral(0, kit)
        model = kit.model
        if isinstance(pfn, BElem) and pfn.kind == "table" and pfn.table.has_default:
            nv = getattr(model, "numeral_value", None)
            if nv is not None:
                for key, val in pfn.table.entries.items():
                    if nv(key) is None:
                        continue
                    if nv(val) != 0:
                        return one
                return zero if nv(pfn.table.default) == 0 else one
        for n in range(probe_bound):
            v = pfn.query_metered(numeral(n, kit), meter)
            if model.numeral_value(v) != 0:
                return one
        meter.remaining = 0
        raise OutOfFuel()
    return Functional2("kleeneE", act)


# --- relativization ---

def lift_program(model, kit: Kit, prog: Element, oracle) -> BElem:
    """The partial function a program computes under a fixed oracle."""
    def proc(x: Element, meter: FuelMeter) -> Element:
        return oracle_apply_metered(model, kit, prog, x, oracle, meter)
    return BElem.from_host(proc, kit, label="lifted")


class tilde:
    """A functional relativized to explicit oracles.

    at(oracle, prog) hands the functional the function prog computes
    under that oracle.
    """

    def __init__(self, functional: Functional2, model, kit: Kit):
        self.functional = functional
        self.model = model
        self.kit = kit

    def function_of(self, oracle, prog: Element) -> BElem:
        return lift_program(self.model, self.kit, prog, oracle)

    def at(self, oracle, prog: Element, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
        lifted = self.function_of(oracle, prog)
        return run_bounded(
            fuel, lambda m: self.functional.evaluate(lifted, self.kit, m))


class FixpointStages:
    """The stage sequence of a functional's self-referential oracle.

    Stage zero is the empty oracle.  Stage n+1 answers a query q with
    the functional applied to the function q computes under stage n.
    Each stage is a cached partial function, so a run pays for any one
    question at a stage once and for repeats at a single step each.
    """

    def __init__(self, functional: Functional2, model, kit: Kit):
        self.functional = functional
        self.model = model
        self.kit = kit
        empty = BElem.from_table(OracleTable({}), kit, label="stage0")
        self._stages: List[BElem] = [empty]
        self.query_log: List[Tuple[int, Element]] = []

    def stage(self, n: int) -> BElem:
        while len(self._stages) <= n:
            level = len(self._stages)
            prev = self._stages[-1]

            def proc(q, meter, _level=level, _prev=prev):
                self.query_log.append((_level, q))
                lifted = lift_program(self.model, self.kit, q, _prev)
                return self.functional.evaluate(lifted, self.kit, meter)

            self._stages.append(
                BElem.from_host(proc, self.kit, label=f"stage{level}"))
        return self._stages[n]

    def value_at(self, n: int, q, fuel: Fuel = DEFAULT_FUEL) -> Outcome:
        return self.stage(n).query(q, fuel)

    def stabilized(self, q, max_stage: int = 8,
                   fuel: Fuel = DEFAULT_FUEL) -> Tuple[Optional[int], Outcome]:
        """First stage whose answer at q is defined and repeated by the
        next stage.

        Undefined agreement between consecutive stages proves nothing
        (an answer can appear later), but the stages are monotone, so a
        defined value confirmed once is settled.  Returns (None, last
        outcome) when nothing settles within max_stage.
        """
        cur = self.value_at(0, q, fuel)
        for n in range(max_stage + 1):
            if n > 0:
                cur = self.value_at(n, q, fuel)
            if is_defined(cur) and outcomes_agree(
                    self.model, cur, self.value_at(n + 1, q, fuel)):
                return n, cur
        return None, cur


def outcomes_agree(model, a: Outcome, b: Outcome) -> bool:
    """Same verdict and, when defined, equal values in the model order."""
    if is_defined(a) and is_defined(b):
        return model.leq(a.value, b.value) and model.leq(b.value, a.value)
    if isinstance(a, DefinitelyUndefined) and isinstance(b, DefinitelyUndefined):
        return a.reason == b.reason
    return False


# --- stage probes ---

def probe_const(kit: Kit, c: int) -> Element:
    """A query program that answers its argument immediately with c."""
    return compile_src(r"\u. #p #top #C", kit, extra={"C": numeral(c, kit)})


def probe_consult(kit: Kit, inner: Element) -> Element:
    """A query program that asks its oracle about inner and returns the
    answer unchanged.  Its stage value settles one level after inner's.
    """
    return compile_src(
        r"\u. #ifte (#one (#lh u)) (\w. #p #bot #Q) (\w. #p #top (#read u 1))",
        kit, extra={"Q": inner})


# --- in-algebra representers ---

def _z_const_rep(kit: Kit, value: Element) -> Element:
    return compile_src(r"\x a. #V", kit, extra={"V": value})


def _z_eval0_rep(kit: Kit) -> Element:
    return compile_src(r"\x a. #W a x (#unit 0)", kit,
                       extra={"W": rep_loop(kit)})


def _z_exists_rep(kit: Kit) -> Element:
    """Search upward for a nonzero value; no negative answers."""
    w = compile_src(
        r"\f a x n."
        r" #ifte (#zero (#W a x (#unit n)))"
        r" (\w. f a x (#suc n))"
        r" (\w. 1)",
        kit, extra={"W": rep_loop(kit)})
    search = strict_apply(kit.model, kit.z, w)
    return compile_src(r"\x a. #S a x 0", kit, extra={"S": search})


def z_representer(name: str, kit: Kit) -> Element:
    """The element whose plain applicative behaviour tracks the stage
    limit of the named functional: answers to its queries are produced
    by recursive self-application through the z combinator.
    """
    family, arg = _canonical(name, kit)
    spec = _REGISTRY.get(family)
    if spec is None or spec.get("zrep") is None:
        raise KeyError(f"no representer for functional {name!r}")
    rep = spec["zrep"](kit, arg)
    return strict_apply(kit.model, kit.z, rep)


def z_representer_check(zrep: Element, stages: FixpointStages,
                        probes: Sequence[Element], kit: Kit,
                        max_stage: int = 6,
                        fuel: Fuel = DEFAULT_FUEL) -> List[dict]:
    """Compare plain application of the representer against the
    stabilized stage value, probe by probe.
    """
    model = kit.model
    out = []
    for q in probes:
        stage_n, expect = stages.stabilized(q, max_stage=max_stage, fuel=fuel)
        got = model.apply(zrep, q, fuel)
        ok = stage_n is not None and outcomes_agree(model, expect, got)
        out.append({"probe": q, "stage": stage_n, "stage_value": expect,
                    "z_value": got, "ok": ok})
    return out


# --- type-three functionals ---

class Functional3:
    """A named map from type-two functionals to elements.

    The action receives the argument as a host callable g(alpha, meter)
    taking a partial function to an element, plus the base kit and a
    meter.
    """

    def __init__(self, name: str, action: Callable):
        self.name = name
        self.action = action

    def evaluate(self, g: Callable, kit: Kit, meter: FuelMeter) -> Element:
        return self.action(g, kit, meter)

    def __repr__(self) -> str:
        return f"<functional {self.name}>"


def phi_const(value: Element, name: str = "phi-const") -> Functional3:
    return Functional3(name, lambda g, kit, meter: value)


def identity_fn(kit: Kit) -> BElem:
    """The total identity as a partial function."""
    return BElem.from_host(lambda x, meter: x, kit, label="id")


def phi_eval_id() -> Functional3:
    """Feeds its argument the identity function."""
    def act(g: Callable, kit: Kit, meter: FuelMeter) -> Element:
        return g(identity_fn(kit), meter)
    return Functional3("phi-eval-id", act)


def tilde_phi(phi: Functional3, ba_kit: Kit) -> Functional2:
    """A type-three functional viewed as type-two over the function model.

    The argument is a partial function on functions; it is collapsed to
    a type-two functional by sampling each value at the base identity,
    and the result is embedded back as a constant function.
    """
    base_kit = ba_kit.model.base_kit
    base_i = base_kit.i

    def act(pfn, kit: Kit, meter: FuelMeter) -> BElem:
        def g(alpha: BElem, m: FuelMeter) -> Element:
            beta = pfn.query_metered(alpha, m)
            return beta.query_metered(base_i, m)
        v = phi.evaluate(g, base_kit, meter)
        return embed(v, base_kit, label=f"{phi.name}-value")

    return Functional2(f"lift:{phi.name}", act)


def f_hat(f2: Functional2, ba_kit: Kit) -> BElem:
    """A type-two functional as a function-level partial function whose
    values are constant functions.
    """
    base_kit = ba_kit.model.base_kit

    def proc(alpha: BElem, meter: FuelMeter) -> BElem:
        v = f2.evaluate(alpha, base_kit, meter)
        return embed(v, base_kit, label=f"{f2.name}-value")

    return BElem.from_host(proc, ba_kit, label=f"hat:{f2.name}")


def type3_coherence(phi: Functional3, f2: Functional2, ba_kit: Kit,
                    fuel: Fuel = DEFAULT_FUEL) -> dict:
    """Applying the lifted functional to the hatted argument must agree
    with embedding the direct value.
    """
    base_kit = ba_kit.model.base_kit
    model = base_kit.model
    lifted = tilde_phi(phi, ba_kit)
    hat = f_hat(f2, ba_kit)
    lhs = run_bounded(fuel, lambda m: lifted.evaluate(hat, ba_kit, m))
    rhs = run_bounded(
        fuel,
        lambda m: phi.evaluate(
            lambda alpha, m2: f2.evaluate(alpha, base_kit, m2), base_kit, m))
    if is_defined(lhs) and is_defined(rhs):
        got = lhs.value.query(base_kit.i, fuel)
        ok = is_defined(got) and model.leq(got.value, rhs.value) \
            and model.leq(rhs.value, got.value)
    elif isinstance(lhs, DefinitelyUndefined) and isinstance(rhs, DefinitelyUndefined):
        ok = lhs.reason == rhs.reason
    else:
        ok = False
    return {"phi": phi.name, "f2": f2.name, "lhs": lhs, "rhs": rhs, "ok": ok}


# --- the applicative type-three transforms ---

def phi_representer(name: str, kit: Kit) -> Element:
    """An element acting the named type-three functional out on codes of
    collapsed arguments.
    """
    if name == "phi-const:k":
        return strict_apply(kit.model, kit.k, kit.k)
    if name == "phi-eval-id":
        return compile_src(r"\g. g #i", kit)
    raise KeyError(f"no representer for type-three functional {name!r}")


def build_type3_t(kit: Kit, phi_rep: Element) -> Element:
    """Base-level transform: turn a code of a hatted functional into a
    code of the constant function at the functional's collapsed value.
    """
    return compile_src(r"\x. #k (#PR (\y. x y #i))", kit,
                       extra={"PR": phi_rep})


def hatted_const_code(kit: Kit, value: Element) -> Element:
    """Code of the hatted constant functional."""
    return compile_src(r"\y. #k #V", kit, extra={"V": value})


def hatted_eval0_code(kit: Kit) -> Element:
    """Code of the hatted evaluate-at-zero functional."""
    return compile_src(r"\y. #k (y 0)", kit)


def _minimal_kit(model, fuel: Fuel) -> Kit:
    """Just enough of a kit to abstract and compile: k, s, i."""
    kit = Kit(model)
    kit.k = kit.register("k", model.k)
    kit.s = kit.register("s", model.s)
    i = run_bounded(fuel, lambda m: model.apply_metered(
        model.apply_metered(model.s, model.k, m), model.k, m))
    if not is_defined(i):
        raise RuntimeError("identity did not settle while building kit")
    kit.i = kit.register("i", i.value)
    return kit


def build_fix_tower(phi: Functional3, base_kit: Kit, stage_bound: int = 2,
                    fuel: Fuel = DEFAULT_FUEL) -> dict:
    """The interrogation model over functions whose oracle is the stage
    limit of the lifted type-three functional, together with the
    transform compiled inside it.

    The transform routes its argument x through the substitution-and-
    representer producer and hands the resulting query program to the
    oracle, so applying it to x yields the oracle's (constant-function)
    answer directly.
    """
    from .funcpca import build_rho
    from .oracle import build_rf, build_tf

    ba = BAModel(base_kit)
    ba_kit = build_kit(ba, fuel=fuel)
    stages = FixpointStages(tilde_phi(phi, ba_kit), ba, ba_kit)
    f_dagger = stages.stage(stage_bound)
    om = OracleModel(ba, ba_kit, f_dagger, name=f"{ba.name}+{phi.name}")
    mk = _minimal_kit(om, fuel)
    rf = build_rf(ba_kit)
    tf = build_tf(ba_kit)
    rho = build_rho(base_kit)
    producer = run_bounded(fuel, lambda m: om.apply_metered(tf, rho, m))
    if not is_defined(producer):
        raise RuntimeError("producer did not settle while building tower")
    tau = compile_src(r"\x. #RF (\y. x (#SP y))", mk,
                      extra={"RF": rf, "SP": producer.value}, fuel=fuel)
    return {"ba": ba, "ba_kit": ba_kit, "stages": stages,
            "f_dagger": f_dagger, "om": om, "min_kit": mk,
            "rf": rf, "producer": producer.value, "tau": tau}


def tau_contract_value(tower: dict, x: BElem, probe: Element,
                       fuel: Fuel = DEFAULT_FUEL) -> Outcome:
    """Apply the tower transform to x and sample the resulting function
    at a base point.  The transform's output is constant, so the probe
    choice must not matter.
    """
    om = tower["om"]
    res = om.apply(tower["tau"], x, fuel)
    if not is_defined(res):
        return res
    return res.value.query(probe, fuel)


# --- registry ---

def _canonical(name: str, kit: Kit) -> Tuple[str, Optional[Element]]:
    """Split parameterized names like const:k into (family, element)."""
    if name.startswith("const:"):
        tail = name[len("const:"):]
        if tail in kit.names:
            return "const", kit.names[tail]
        return "const", numeral(int(tail), kit)
    return name, None


_REGISTRY: Dict[str, dict] = {
    "const": {
        "build": lambda kit, arg: const_functional(
            arg if arg is not None else kit.k, "const"),
        "zrep": lambda kit, arg: _z_const_rep(
            kit, arg if arg is not None else kit.k),
    },
    "eval0": {
        "build": lambda kit, arg: eval0_functional(),
        "zrep": lambda kit, arg: _z_eval0_rep(kit),
    },
    "kleeneE": {
        "build": lambda kit, arg: kleene_exists(),
        "zrep": lambda kit, arg: _z_exists_rep(kit),
    },
}


def type2_registry() -> List[str]:
    return ["const:k", "eval0", "kleeneE"]


def get_functional(name: str, kit: Kit) -> Functional2:
    family, arg = _canonical(name, kit)
    spec = _REGISTRY.get(family)
    if spec is None:
        raise KeyError(f"unknown functional {name!r}")
    f = spec["build"](kit, arg)
    f.name = name
    return f


def get_z_representer(name: str, kit: Kit) -> Element:
    return z_representer(name, kit)


def type3_registry() -> List[str]:
    return ["phi-const:k", "phi-eval-id"]


def get_type3(name: str, kit: Kit) -> Functional3:
    if name == "phi-const:k":
        return phi_const(kit.k, "phi-const:k")
    if name == "phi-eval-id":
        return phi_eval_id()
    raise KeyError(f"unknown type-three functional {name!r}")
