import random
from fractions import Fraction

import pytest

from helpers import (
    PHI_OR_TEXT, bottom_state_instance, satisfied_instance,
)

from pctlfg.closure import closure_update
from pctlfg.formula import (
    Atom, PathFormula, PathOp, Prob, formula_sets, fragment_classify,
    parse_formula,
)
from pctlfg.markov import MarkovChain, validate
from pctlfg.measure import model_size_bound
from pctlfg.modelcheck import ModelChecker
from pctlfg.progress import (
    FragmentError, ProgressLoop, SearchSpaceExceeded, bscc_reduce,
    build_loop_model, caratheodory_reduce, compress_model, exit_obligations,
    loop_return_probability, search_loop_generic, search_loop_l2,
    simple_loop_components, successor_selection, verify_loop,
    verify_selection,
)

pf = parse_formula


def example_loop(psi):
    l0 = frozenset({
        psi,
        pf(f"G=1[{PHI_OR_TEXT}]"),
        pf(PHI_OR_TEXT),
        pf("F>=0.5[a & F>=0.2[!a]]"),
        pf("F=1[G=1[a]]"),
        pf("!a"),
    })
    l1 = frozenset({pf(PHI_OR_TEXT), pf("a")})
    l2 = frozenset({
        pf(PHI_OR_TEXT),
        pf("F>=0.5[a & F>=0.2[!a]]"),
        pf("a & F>=0.2[!a]"),
        pf("a"),
        pf("F>=0.2[!a]"),
    })
    return ProgressLoop((l0, l1, l2))


def expected_obligations():
    return frozenset({pf(f"G=1[{PHI_OR_TEXT}]"), pf("F=1[G=1[a]]")})


@pytest.fixture
def running(fig1, fig1_checker, psi):
    X = closure_update(fig1, "s", {psi}, checker=fig1_checker)
    return fig1, fig1_checker, psi, X


# -- exit obligations --------------------------------------------------------

def test_exit_obligations_example_loop(running, psi):
    assert exit_obligations(example_loop(psi)) == expected_obligations()


def test_exit_obligations_no_prob_members():
    loop = ProgressLoop((frozenset({Atom("a")}),))
    assert exit_obligations(loop) == frozenset()


def test_exit_obligations_served_suffix():
    loop = ProgressLoop((frozenset({pf("F=1[a]"), Atom("a")}),))
    assert exit_obligations(loop) == frozenset()


def test_exit_obligations_eventuality_after_the_fact():
    # body only occurs before the F=1 member's set: still an obligation
    loop = ProgressLoop((frozenset({Atom("a")}),
                         frozenset({pf("F=1[a]"), Atom("b")})))
    assert exit_obligations(loop) == frozenset({pf("F=1[a]")})


# -- verify_loop -------------------------------------------------------------

def test_verify_example_loop(running, psi):
    fig1, mc, _, X = running
    assert verify_loop(fig1, "s", X, example_loop(psi), checker=mc) == []


def test_verify_detects_missing_g_body(running, psi):
    fig1, mc, _, X = running
    loop = example_loop(psi)
    broken = ProgressLoop((loop.sets[0], loop.sets[1] - {pf(PHI_OR_TEXT)},
                           loop.sets[2]))
    problems = verify_loop(fig1, "s", X, broken, checker=mc)
    assert any("condition (3)" in p for p in problems)


def test_verify_detects_duplicates(running, psi):
    fig1, mc, _, X = running
    loop = example_loop(psi)
    doubled = ProgressLoop((loop.sets[0], loop.sets[1], loop.sets[1]))
    problems = verify_loop(fig1, "s", X, doubled, checker=mc)
    assert any("condition (2)" in p for p in problems)


def test_verify_detects_missing_anchor(running, psi):
    fig1, mc, _, X = running
    loop = example_loop(psi)
    no_anchor = ProgressLoop(loop.sets[1:])
    problems = verify_loop(fig1, "s", X, no_anchor, checker=mc)
    assert any("condition (1)" in p for p in problems)


def test_verify_reports_all_violations(running, psi):
    fig1, mc, _, X = running
    loop = example_loop(psi)
    broken = ProgressLoop((loop.sets[1], loop.sets[1]))
    problems = verify_loop(fig1, "s", X, broken, checker=mc)
    assert len(problems) >= 2


# -- searches ----------------------------------------------------------------

def test_generic_search_running_example(running):
    fig1, mc, _, X = running
    loop = search_loop_generic(fig1, "s", X, 3, checker=mc)
    assert loop is not None
    assert verify_loop(fig1, "s", X, loop, checker=mc) == []


def test_generic_search_atom():
    chain = MarkovChain(["s"], {("s", "s"): Fraction(1)}, {"s": ["a"]})
    X = frozenset({Atom("a")})
    loop = search_loop_generic(chain, "s", X, 2)
    assert loop is not None and X <= loop.sets[0]


def test_generic_search_bound_exhausted(running):
    fig1, mc, _, X = running
    # the running example needs at least two distinct sets
    assert search_loop_generic(fig1, "s", X, 0, checker=mc) is None


def test_generic_search_budget_signal(running):
    fig1, mc, _, X = running
    with pytest.raises(SearchSpaceExceeded):
        search_loop_generic(fig1, "s", X, 3, node_budget=3, checker=mc)


def test_l2_search_running_example(running):
    fig1, mc, _, X = running
    loop = search_loop_l2(fig1, "s", X, checker=mc)
    assert verify_loop(fig1, "s", X, loop, checker=mc) == []
    # constructed obligations stay inside X
    assert exit_obligations(loop) <= X
    # some set serves the outer eventuality, some set holds its body
    outer = pf("F>=0.5[a & F>=0.2[!a]]")
    assert any(outer in level for level in loop.sets)
    assert any(pf("a & F>=0.2[!a]") in level for level in loop.sets)


def test_l2_search_atom(fig1, fig1_checker):
    X = frozenset({Atom("a")})
    loop = search_loop_l2(fig1, "t", X, checker=fig1_checker)
    assert len(loop.sets) == 1


def test_l2_search_fragment_violation(fig1, fig1_checker):
    outside = pf("G>=0.5[F>=0.5[G>=0.5[a]]]")  # quantitative G around F around G
    assert not fragment_classify(outside).in_l2
    sat = ModelChecker(fig1).sat_set(outside)
    if sat:
        state = sorted(sat)[0]
        X = closure_update(fig1, state, {outside}, checker=fig1_checker)
        with pytest.raises(FragmentError):
            search_loop_l2(fig1, state, X, checker=fig1_checker)


def test_searches_agree_on_random_l2_instances():
    from pctlfg.measure import progress_measure

    rng = random.Random(79)
    found = 0
    while found < 30:
        chain, state, f, mc = satisfied_instance(rng, max_states=5, depth=3)
        if not fragment_classify(f).in_l2:
            continue
        X = closure_update(chain, state, {f}, checker=mc)
        loop = search_loop_l2(chain, state, X, checker=mc)
        assert verify_loop(chain, state, X, loop, checker=mc) == []
        residue = exit_obligations(loop)
        assert progress_measure(chain, state, residue, checker=mc) <= \
            progress_measure(chain, state, X, checker=mc)
        found += 1


def test_exit_obligations_inside_sub_x():
    from helpers import collect_loops

    for chain, state, X, loop, mc in collect_loops(127, 40):
        assert exit_obligations(loop) <= formula_sets(X).sub


# -- successor selection -----------------------------------------------------

def test_caratheodory_1d_example():
    points = [(Fraction(1, 5),), (Fraction(4, 5),), (Fraction(1, 2),)]
    weights = [Fraction(1, 4), Fraction(1, 4), Fraction(1, 2)]
    target = sum((w * p[0] for w, p in zip(weights, points)), Fraction(0))
    reduced = caratheodory_reduce(points, weights)
    assert sum(1 for w in reduced if w > 0) <= 2
    assert sum(reduced, Fraction(0)) == 1
    assert sum((w * p[0] for w, p in zip(reduced, points)), Fraction(0)) == target


def test_caratheodory_preserves_combination_randomized():
    rng = random.Random(83)
    for _ in range(60):
        dim = rng.randint(1, 3)
        count = rng.randint(dim + 2, dim + 5)
        points = [tuple(Fraction(rng.randint(0, 4), 4) for _ in range(dim))
                  for _ in range(count)]
        raw = [rng.randint(1, 5) for _ in range(count)]
        total = sum(raw)
        weights = [Fraction(w, total) for w in raw]
        target = [sum((w * p[d] for w, p in zip(weights, points)), Fraction(0))
                  for d in range(dim)]
        reduced = caratheodory_reduce(points, weights)
        assert sum(1 for w in reduced if w > 0) <= dim + 1
        assert sum(reduced, Fraction(0)) == 1
        assert all(w >= 0 for w in reduced)
        for d in range(dim):
            assert sum((w * p[d] for w, p in zip(reduced, points)),
                       Fraction(0)) == target[d]


def test_selection_running_example(running):
    fig1, mc, _, X = running
    residue = expected_obligations()
    sel = successor_selection(fig1, "s", residue, checker=mc)
    assert sel.support == ("u",)
    assert sel.weights == {"u": Fraction(1)}
    f_path = PathFormula(PathOp.F, pf("G=1[a]"))
    g_path = PathFormula(PathOp.G, pf(PHI_OR_TEXT))
    assert sel.paths == (f_path, g_path)  # eventualities first
    assert sel.achieved[("u", f_path)] == 1
    assert sel.achieved[("u", g_path)] == 1
    assert verify_selection(fig1, "s", residue, sel, checker=mc) == []


def test_selection_no_eventualities(fig1, fig1_checker):
    # G-only obligations: the vectors are constant, so one point remains
    residue = frozenset({pf(f"G=1[{PHI_OR_TEXT}]")})
    sel = successor_selection(fig1, "s", residue, checker=fig1_checker)
    assert len(sel.support) == 1
    assert verify_selection(fig1, "s", residue, sel, checker=fig1_checker) == []


def test_selection_conditions_randomized():
    rng = random.Random(89)
    checked = 0
    while checked < 60:
        chain, state, f, mc = satisfied_instance(rng, max_states=5, depth=3)
        X = closure_update(chain, state, {f}, checker=mc)
        try:
            loop = search_loop_generic(chain, state, X, 2,
                                       node_budget=30_000, checker=mc)
        except SearchSpaceExceeded:
            continue
        if loop is None:
            continue
        residue = exit_obligations(loop)
        sel = successor_selection(chain, state, residue, checker=mc)
        assert verify_selection(chain, state, residue, sel, checker=mc) == []
        checked += 1


# -- model construction ------------------------------------------------------

def u_submodel():
    return MarkovChain(["u"], {("u", "u"): Fraction(1)}, {"u": ["a"]})


def test_build_loop_model_running_example(running, psi):
    fig1, mc, _, X = running
    loop = example_loop(psi)
    assert loop_return_probability(loop) == Fraction(3, 4)
    model, entry = build_loop_model(loop, [(u_submodel(), "u", Fraction(1))],
                                    entry_for=X)
    assert validate(model) == []
    assert len(model.states) == 4
    assert entry == "L0"
    assert model.probability("L2", "L0") == Fraction(3, 4)
    assert model.probability("L2", "u") == Fraction(1, 4)
    built_mc = ModelChecker(model)
    assert built_mc.check(entry, X)
    assert simple_loop_components(model) == []


def test_build_loop_model_in_loop_eventualities_beat_return_mass(running, psi):
    # every F formula the loop discharges itself is satisfied from every
    # loop state with probability at least the loop-return probability
    fig1, mc, _, X = running
    loop = example_loop(psi)
    model, _ = build_loop_model(loop, [(u_submodel(), "u", Fraction(1))],
                                entry_for=X)
    built_mc = ModelChecker(model)
    stay = loop_return_probability(loop)
    residue = exit_obligations(loop)
    union = loop.union()
    in_loop_fs = [g for g in union
                  if isinstance(g, Prob) and g.op is PathOp.F
                  and g not in residue]
    assert in_loop_fs
    for g in in_loop_fs:
        for i in range(len(loop.sets)):
            path = g.path_formula
            assert built_mc.probability(f"L{i}", path) >= stay


def test_build_loop_model_single_set():
    loop = ProgressLoop((frozenset({Atom("a")}),))
    model, entry = build_loop_model(loop, [(u_submodel(), "u", Fraction(1))])
    assert validate(model) == []
    assert loop_return_probability(loop) == Fraction(1, 2)
    assert model.probability("L0", "L0") == Fraction(1, 2)
    assert ModelChecker(model).holds(entry, Atom("a"))


def test_build_loop_model_weight_validation(psi):
    loop = example_loop(psi)
    with pytest.raises(ValueError):
        build_loop_model(loop, [(u_submodel(), "u", Fraction(1, 2))])


def test_build_loop_model_renames_collisions(psi):
    sub = MarkovChain(["L0"], {("L0", "L0"): Fraction(1)}, {"L0": ["a"]})
    loop = ProgressLoop((frozenset({Atom("a")}),))
    model, _ = build_loop_model(loop, [(sub, "L0", Fraction(1))])
    assert "m0_L0" in model.states


def test_bscc_reduce_singleton(fig1, fig1_checker):
    model, entry = bscc_reduce(fig1, "u", {pf("G=1[a]")}, checker=fig1_checker)
    assert model.states == ("u",)
    assert model.probability("u", "u") == 1
    assert entry == "u"


def test_bscc_reduce_uniform_cycle():
    chain = MarkovChain(
        ["a0", "a1", "a2"],
        {("a0", "a1"): Fraction(1), ("a1", "a2"): Fraction(1),
         ("a2", "a0"): Fraction(1)},
        {"a0": ["a"], "a1": ["a"], "a2": ["a"]},
    )
    model, entry = bscc_reduce(chain, "a0", {pf("G=1[a]")})
    assert len(model.states) == 1
    assert ModelChecker(model).holds(entry, pf("G=1[a]"))


def test_bscc_reduce_two_classes():
    chain = MarkovChain(
        ["x", "y", "z"],
        {("x", "y"): Fraction(1), ("y", "z"): Fraction(1),
         ("z", "x"): Fraction(1)},
        {"x": ["a"], "y": ["a"], "z": ["b"]},
    )
    X = {pf("F=1[a]"), pf("F=1[b]")}
    model, entry = bscc_reduce(chain, "x", X)
    assert len(model.states) == 2
    assert ModelChecker(model).check(entry, X)


def test_bscc_reduce_rejects_non_bottom(fig1):
    with pytest.raises(ValueError):
        bscc_reduce(fig1, "s", {pf("!a")})


def test_bscc_reduce_randomized():
    rng = random.Random(97)
    for _ in range(60):
        chain, state, f, mc = bottom_state_instance(rng)
        X = closure_update(chain, state, {f}, checker=mc)
        model, entry = bscc_reduce(chain, state, X, checker=mc)
        assert validate(model) == []
        assert len(model.states) <= 2 ** len(formula_sets(X).sub)
        assert ModelChecker(model).check(entry, X)


def test_compress_running_example(running, psi):
    fig1, mc, _, X = running
    model, entry, trace = compress_model(fig1, "s", psi, fragment="l2")
    assert validate(model) == []
    assert len(model.states) <= 10
    assert ModelChecker(model).holds(entry, psi)
    assert simple_loop_components(model) == []
    assert trace.measure == 7
    assert trace.base == 21
    assert trace.mode == "loop"
    assert trace.children and trace.children[0].mode == "bscc"
    # strict decrease into the recursion
    assert trace.children[0].measure < trace.measure
    # the documented bound holds at every level
    def walk(node):
        assert node.size <= node.bound
        assert node.bound == model_size_bound(node.base, node.measure + 1)
        for child in node.children:
            walk(child)
    walk(trace)


def test_compress_generic_mode(running, psi):
    fig1, mc, _, X = running
    model, entry, _ = compress_model(fig1, "s", psi, fragment="generic", max_n=3)
    assert ModelChecker(model).holds(entry, psi)


def test_compress_bscc_base_case():
    chain = MarkovChain(
        ["x", "y"],
        {("x", "y"): Fraction(1), ("y", "x"): Fraction(1)},
        {"x": ["a"], "y": ["a"]},
    )
    model, entry, trace = compress_model(chain, "x", pf("G=1[a]"))
    assert trace.mode == "bscc"
    assert len(model.states) == 1
    assert ModelChecker(model).holds(entry, pf("G=1[a]"))


def test_compress_randomized_l2():
    rng = random.Random(101)
    done = 0
    while done < 25:
        chain, state, f, mc = satisfied_instance(rng, max_states=5, depth=3)
        if not fragment_classify(f).in_l2:
            continue
        model, entry, trace = compress_model(chain, state, f, fragment="l2",
                                             checker=mc)
        assert validate(model) == []
        assert ModelChecker(model).holds(entry, f)
        assert simple_loop_components(model) == []
        def walk(node):
            assert node.size <= node.bound
            for child in node.children:
                if child.mode == "loop":
                    assert child.measure < node.measure
                walk(child)
        walk(trace)
        done += 1


def test_compress_two_level_recursion():
    # the exit successor t is not in a bottom SCC, so the pipeline must
    # recurse through a second loop before reaching the absorbing state
    chain = MarkovChain(
        ["s", "t", "u"],
        {("s", "t"): Fraction(1), ("t", "s"): Fraction(1, 2),
         ("t", "u"): Fraction(1, 2), ("u", "u"): Fraction(1)},
        {"s": [], "t": ["b"], "u": ["a"]},
    )
    nested = pf("F=1[b & F=1[G=1[a]]] & !b")
    assert fragment_classify(nested).in_l2
    model, entry, trace = compress_model(chain, "s", nested, fragment="l2")
    assert validate(model) == []
    assert ModelChecker(model).holds(entry, nested)
    assert simple_loop_components(model) == []
    assert trace.mode == "loop"
    assert len(trace.children) == 1
    middle = trace.children[0]
    assert middle.mode == "loop"
    assert middle.measure < trace.measure
    assert len(middle.children) == 1
    assert middle.children[0].mode == "bscc"
    # the generic search handles the same instance
    model2, entry2, _ = compress_model(chain, "s", nested, fragment="generic",
                                       max_n=3)
    assert ModelChecker(model2).holds(entry2, nested)


def test_compress_randomized_other_fragments():
    # formulas outside L2 (or in any family) go through the generic search
    rng = random.Random(131)
    done = 0
    attempts = 0
    while done < 20 and attempts < 2000:
        attempts += 1
        chain, state, f, mc = satisfied_instance(rng, max_states=5, depth=3)
        flags = fragment_classify(f)
        if flags.in_l2 or not (flags.in_l1 or flags.in_l3 or flags.in_l4):
            continue
        if len(formula_sets(closure_update(chain, state, {f}, checker=mc)).sub) > 9:
            continue
        try:
            model, entry, _ = compress_model(chain, state, f,
                                             fragment="generic", max_n=3,
                                             checker=mc)
        except SearchSpaceExceeded:
            continue
        assert validate(model) == []
        assert ModelChecker(model).holds(entry, f)
        done += 1
    assert done >= 20


def test_compress_trace_serializable(running, psi):
    import json

    fig1, mc, _, X = running
    _, _, trace = compress_model(fig1, "s", psi, fragment="l2")
    text = json.dumps(trace.to_dict())
    data = json.loads(text)
    assert data["measure"] == 7
    assert data["mode"] == "loop"
    assert data["successors"] == [{"state": "u", "weight": "1"}]
