import itertools
import random

from hypothesis import given, settings
from hypothesis import strategies as st

from clonecheck.interp import Obj, State
from clonecheck.lang import Policy
from clonecheck.paths import (
    ABSENT,
    AccessPath,
    PolicyVerdict,
    eval_path,
    path_in_policy,
    policy_holds,
    secure_call_check,
)
from support import (
    brute_policy_holds,
    load_corpus,
    program_from,
    random_state,
    two_class_program,
)


def test_eval_path_base_step_and_partiality():
    heap = {1: Obj("C", {"f": None})}
    env = {"x": 1}
    assert eval_path(env, heap, AccessPath("x")) == 1
    assert eval_path(env, heap, AccessPath("x", ("f",))) is None  # null value
    assert eval_path(env, heap, AccessPath("x", ("f", "g"))) is ABSENT
    assert eval_path(env, heap, AccessPath("nope")) is ABSENT


def test_path_parse_str_round_trip():
    ap = AccessPath.parse("x.next.next")
    assert ap == AccessPath("x", ("next", "next")) and str(ap) == "x.next.next"


def list_policy_map():
    p = load_corpus("list")
    return p.policy_map["List.default"], p.policy_map


def test_bare_root_satisfies_any_policy():
    tau, pmap = list_policy_map()
    assert path_in_policy(AccessPath("x"), tau, pmap)
    assert path_in_policy(AccessPath("x"), Policy(frozenset()), pmap)


def test_recursive_deep_chain():
    tau, pmap = list_policy_map()
    assert path_in_policy(AccessPath("x", ("next", "next")), tau, pmap)


def test_shallow_field_not_in_policy():
    tau, pmap = list_policy_map()
    assert not path_in_policy(AccessPath("x", ("value",)), tau, pmap)
    assert not path_in_policy(AccessPath("x", ("next", "value")), tau, pmap)


def test_policy_holds_sole_variable():
    tau, pmap = list_policy_map()
    heap = {1: Obj("List", {"value": None, "next": None})}
    assert policy_holds({"x": 1}, heap, "x", tau, pmap)


def test_policy_holds_fails_on_direct_alias():
    tau, pmap = list_policy_map()
    heap = {1: Obj("List", {"value": None, "next": None})}
    env = {"x": 1, "y": 1}
    assert not policy_holds(env, heap, "x", tau, pmap)
    assert not brute_policy_holds(env, heap, "x", tau, pmap)


def test_policy_holds_spine_copy_with_shared_values():
    tau, pmap = list_policy_map()
    heap = {
        0: Obj("List", {"value": 4, "next": 1}),
        1: Obj("List", {"value": 5, "next": None}),
        2: Obj("List", {"value": 4, "next": 3}),
        3: Obj("List", {"value": 5, "next": None}),
        4: Obj("Obj", {}),
        5: Obj("Obj", {}),
    }
    env = {"x": 2, "y": 0}
    assert policy_holds(env, heap, "x", tau, pmap)
    assert brute_policy_holds(env, heap, "x", tau, pmap)
    # sharing one spine cell breaks it
    heap[2].fields["next"] = 1
    assert not policy_holds(env, heap, "x", tau, pmap)
    assert not brute_policy_holds(env, heap, "x", tau, pmap)


def test_agrees_with_brute_force_on_exhaustive_small_heaps():
    p = two_class_program()
    pmap = p.policy_map
    policies = [pmap["P.a"], pmap["P.b"], pmap["P.none"]]
    count = 0
    for fields0 in itertools.product([None, 0, 1], repeat=2):
        for fields1 in itertools.product([None, 0, 1], repeat=2):
            heap = {
                0: Obj("P", dict(zip(("f", "g"), fields0))),
                1: Obj("P", dict(zip(("f", "g"), fields1))),
            }
            for env_vals in itertools.product([None, 0, 1], repeat=2):
                env = dict(zip(("x", "y"), env_vals))
                for tau in policies:
                    fast = policy_holds(env, heap, "x", tau, pmap)
                    slow = brute_policy_holds(env, heap, "x", tau, pmap)
                    assert fast == slow, (heap, env, tau)
                    count += 1
    assert count == 81 * 9 * 3


def test_agrees_with_brute_force_on_random_heaps():
    p = two_class_program()
    pmap = p.policy_map
    rng = random.Random(99)
    for _ in range(800):
        s = random_state(p, rng, max_locs=6)
        tau = pmap[rng.choice(sorted(pmap))]
        assert policy_holds(s.env, s.heap, "x", tau, pmap) == brute_policy_holds(
            s.env, s.heap, "x", tau, pmap
        )


@given(st.integers(0, 2**30), st.data())
@settings(max_examples=120, deadline=None)
def test_policy_monotone_under_inclusion(seed, data):
    # a stricter (larger) policy holding implies every weaker one holds
    p = two_class_program()
    pmap = p.policy_map
    rng = random.Random(seed)
    s = random_state(p, rng, max_locs=5)
    big_entries = data.draw(
        st.sets(
            st.tuples(st.sampled_from(sorted(pmap)), st.sampled_from(("f", "g", "h"))),
            max_size=4,
        )
    )
    big = Policy(frozenset(big_entries))
    small = Policy(frozenset(data.draw(st.sets(st.sampled_from(sorted(big_entries)))))
                   if big_entries else frozenset())
    if policy_holds(s.env, s.heap, "x", big, pmap):
        assert policy_holds(s.env, s.heap, "x", small, pmap)


# -- secure_call_check ---------------------------------------------------------


def caller_with_alias():
    s = State()
    s.heap[0] = Obj("List", {"value": 4, "next": 1})
    s.heap[1] = Obj("List", {"value": None, "next": None})
    s.heap[4] = Obj("Obj", {})
    s.env = {"x": None, "y": 0, "tail": 1}
    return s


def test_secure_call_list_clone_holds():
    p = load_corpus("list")
    s = caller_with_alias()
    for seed in range(10):
        res = secure_call_check(p, s, "x", "List", "List.default", "clone", "y",
                                random.Random(seed))
        assert res.verdict in (PolicyVerdict.HOLDS, PolicyVerdict.VACUOUS)
        assert res.verdict is not PolicyVerdict.VIOLATION


def test_secure_call_broken_clone_violates():
    p = program_from(
        """
        class List {
          fields: value, next;
          policy default { deep(default) next; }
          copy(default) clone(x) { return x; }
        }
        """
    )
    s = caller_with_alias()
    res = secure_call_check(p, s, "x", "List", "List.default", "clone", "y",
                            random.Random(0))
    assert res.verdict is PolicyVerdict.VIOLATION


def test_secure_call_null_receiver_vacuous():
    p = load_corpus("list")
    s = caller_with_alias()
    s.env["y"] = None
    res = secure_call_check(p, s, "x", "List", "List.default", "clone", "y",
                            random.Random(0))
    assert res.verdict is PolicyVerdict.VACUOUS
