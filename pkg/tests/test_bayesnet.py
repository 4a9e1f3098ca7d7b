import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from continuum.bayesnet import (
    BayesNet,
    Cpt,
    ImpossibleEvidence,
    Variable,
    bic_score,
    d_separated,
    discretize,
    enumerate_joint,
    equal_width_cuts,
    infer,
    learn_structure,
    log_evidence,
    marginalize_joint,
    markov_blanket,
    surprise,
    update_parameters,
)
from continuum.bayesnet.inference import MAX_JOINT
from continuum.bayesnet.learning import family_bic

from conftest import all_assignments, dsep_paths, random_net, sample

B = lambda name, role="context": Variable(name, 2, role)  # noqa: E731


def prior_net(p):
    return BayesNet([B("A")], [Cpt.from_probs("A", (), p, scale=10)])


def chain_net(det=True):
    a = Cpt.from_probs("A", (), [0.3, 0.7], scale=10)
    b = Cpt.from_probs("B", ("A",), [[1.0, 0.0], [0.0, 1.0]] if det else [[0.9, 0.1], [0.2, 0.8]], scale=10)
    return BayesNet([B("A"), B("B")], [a, b])


def collider():
    a = Cpt.from_probs("A", (), [0.3, 0.7])
    b = Cpt.from_probs("B", (), [0.6, 0.4])
    c = Cpt.from_probs("C", ("A", "B"), [[[0.9, 0.1], [0.5, 0.5]], [[0.4, 0.6], [0.2, 0.8]]])
    return BayesNet([B("A"), B("B"), B("C")], [a, b, c])


# -- variables and discretize -------------------------------------------


def test_discretize_boundary_goes_to_lower_bin():
    assert discretize(100.0, (100, 200)) == 0


def test_discretize_above_top_cut():
    assert discretize(250, (100, 200)) == 2


def test_discretize_infinity_is_top_bin():
    assert discretize(math.inf, (100, 200)) == 2


def test_discretize_rejects_nan():
    with pytest.raises(ValueError):
        discretize(float("nan"), (1.0,))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6, unique=True), st.floats(-2e6, 2e6))
def test_discretize_matches_first_cut_not_below(cuts, value):
    cuts = sorted(cuts)
    expected = next((i for i, c in enumerate(cuts) if c >= value), len(cuts))
    assert discretize(value, cuts) == expected


def test_equal_width_cuts():
    assert equal_width_cuts(0, 20, 4) == (5.0, 10.0, 15.0)


def test_variable_rejects_bad_cuts():
    with pytest.raises(ValueError):
        Variable("x", 3, cuts=(2.0, 1.0))
    with pytest.raises(ValueError):
        Variable("x", 3, cuts=(1.0,))
    with pytest.raises(ValueError):
        Variable("x", 1)


# -- network invariants -------------------------------------------------


def test_cpt_rejects_zero_counts_without_opt_in():
    with pytest.raises(ValueError):
        Cpt("A", (), [1.0, 0.0])


def test_cycle_rejected():
    with pytest.raises(ValueError, match="cycle"):
        BayesNet([B("A"), B("B")], [Cpt.uniform("A", ("B",), (2, 2)), Cpt.uniform("B", ("A",), (2, 2))])


def test_cpt_shape_must_match_parents():
    with pytest.raises(ValueError):
        BayesNet([B("A"), B("B")], [Cpt.uniform("A", (), (2,)), Cpt.uniform("B", ("A",), (3, 2))])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_probability_rows_sum_to_one(seed, n):
    net = random_net(np.random.default_rng(seed), n)
    for cpt in net.cpts.values():
        assert np.allclose(cpt.probs.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(cpt.probs > 0) and np.all(cpt.probs < 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_serialization_round_trip_is_exact(seed, n):
    rng = np.random.default_rng(seed)
    net = random_net(rng, n)
    net = update_parameters(net, sample(net, rng, 5))
    back = BayesNet.from_text(net.to_text())
    assert back == net
    assert back.to_text() == net.to_text()


# -- inference ----------------------------------------------------------


def test_root_marginal_is_its_prior():
    net = prior_net([0.3, 0.7])
    q = infer(net, ["A"])
    assert np.allclose(q.table, [0.3, 0.7], atol=1e-15)


def test_deterministic_chain_propagates():
    q = infer(chain_net(), ["B"], {"A": 1})
    assert q.table[1] == pytest.approx(1.0, abs=1e-15)


def test_impossible_evidence_is_explicit():
    net = chain_net()
    assert infer(net, ["A"], {"B": 1}).table[1] == pytest.approx(1.0)
    bad = infer(net, [], {"A": 0, "B": 1})
    assert isinstance(bad, ImpossibleEvidence)
    assert log_evidence(net, {"A": 0, "B": 1}) == -math.inf


def test_query_evidence_overlap_rejected():
    with pytest.raises(ValueError):
        infer(chain_net(), ["A"], {"A": 0})


def test_evidence_out_of_range_rejected():
    with pytest.raises(ValueError):
        infer(chain_net(), ["A"], {"B": 2})


def test_enumerate_single_variable():
    assert np.allclose(enumerate_joint(prior_net([0.3, 0.7])).table, [0.3, 0.7])


def test_enumerate_independent_pair_is_outer_product():
    net = BayesNet([B("A"), B("B")], [Cpt.from_probs("A", (), [0.3, 0.7]), Cpt.from_probs("B", (), [0.6, 0.4])])
    assert np.allclose(enumerate_joint(net).table, np.outer([0.3, 0.7], [0.6, 0.4]))


def test_enumerate_collider_hand_multiplied():
    j = enumerate_joint(collider())
    pa, pb = [0.3, 0.7], [0.6, 0.4]
    pc = {(0, 0): [0.9, 0.1], (0, 1): [0.5, 0.5], (1, 0): [0.4, 0.6], (1, 1): [0.2, 0.8]}
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                assert j.prob({"A": a, "B": b, "C": c}) == pytest.approx(pa[a] * pb[b] * pc[(a, b)][c], abs=1e-15)
    assert j.table.sum() == pytest.approx(1.0, abs=1e-12)


def test_enumerate_size_bound():
    vs = [Variable(f"v{i}", 4) for i in range(11)]  # 4**11 > 2**20
    net = BayesNet.from_edges(vs, [])
    assert 4**11 > MAX_JOINT
    with pytest.raises(ValueError, match="exceeds"):
        enumerate_joint(net)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_variable_elimination_matches_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    net = random_net(rng, n, max_parents=3)
    joint = enumerate_joint(net)
    names = net.names
    for _ in range(5):
        perm = list(rng.permutation(names))
        k = int(rng.integers(1, min(3, n) + 1))
        query = perm[:k]
        ev_vars = perm[k : k + int(rng.integers(0, n - k + 1))]
        evidence = {v: int(rng.integers(2)) for v in ev_vars}
        ve = infer(net, query, evidence)
        oracle = marginalize_joint(joint, query, evidence)
        assert np.max(np.abs(ve.table - oracle.table)) <= 1e-9
        assert ve.table.sum() == pytest.approx(1.0, abs=1e-9)


def test_surprise_uniform_binary_is_ln2():
    net = BayesNet.from_edges([B("A")], [])
    assert surprise(net, {"A": 0}) == pytest.approx(math.log(2), abs=1e-15)
    assert surprise(net, {"A": 1}) == pytest.approx(0.6931, abs=1e-4)


def test_surprise_deterministic_chain_only_prior_term():
    net = chain_net()
    assert surprise(net, {"A": 1, "B": 1}) == pytest.approx(-math.log(0.7), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_surprise_matches_joint_lookup_and_is_positive(seed, n):
    rng = np.random.default_rng(seed)
    net = random_net(rng, n)
    joint = enumerate_joint(net)
    a = {v: int(rng.integers(2)) for v in net.names}
    s = surprise(net, a)
    assert s == pytest.approx(-math.log(joint.prob(a)), rel=1e-12)
    assert 0 < s < math.inf


# -- markov blanket and d-separation -------------------------------------


def test_blanket_of_isolated_node_is_empty():
    net = BayesNet.from_edges([B("A"), B("B")], [])
    assert markov_blanket(net, ["A"]).members == frozenset()


def test_blanket_collider_child_and_coparent():
    mb = markov_blanket(collider(), ["A"])
    assert mb.members == {"C", "B"}
    assert set(mb.net.names) == {"A", "B", "C"}


def test_blanket_errors():
    with pytest.raises(KeyError):
        markov_blanket(collider(), ["Z"])
    with pytest.raises(ValueError):
        markov_blanket(collider(), [])


def test_d_separation_textbook_cases():
    net = collider()
    assert d_separated(net, ["A"], ["B"])
    assert not d_separated(net, ["A"], ["B"], ["C"])
    chain = BayesNet.from_edges([B("A"), B("B"), B("C")], [("A", "B"), ("B", "C")])
    assert not d_separated(chain, ["A"], ["C"])
    assert d_separated(chain, ["A"], ["C"], ["B"])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_bayes_ball_matches_path_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    net = random_net(rng, n, max_parents=3, edge_p=0.4)
    names = net.names
    for _ in range(6):
        x, y = rng.choice(names, 2, replace=False)
        rest = [v for v in names if v not in (x, y)]
        z = {v for v in rest if rng.random() < 0.3}
        assert d_separated(net, [x], [y], z) == dsep_paths(net, x, y, z)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_blanket_separates_target_from_everything_else(seed, n):
    net = random_net(np.random.default_rng(seed), n, max_parents=3, edge_p=0.4)
    for t in net.names:
        mb = markov_blanket(net, [t]).members
        for y in net.names:
            if y == t:
                continue
            if y in mb:
                assert not dsep_paths(net, t, y, set(mb) - {y})
            else:
                assert dsep_paths(net, t, y, set(mb))


def test_blanket_conditional_independence_numerically():
    rng = np.random.default_rng(5)
    net = random_net(rng, 6, edge_p=0.6)
    joint = enumerate_joint(net)
    t = "x2"
    mb = sorted(markov_blanket(net, [t]).members)
    others = [v for v in net.names if v not in mb and v != t]
    for a in all_assignments(net):
        ev_mb = {v: a[v] for v in mb}
        ev_all = {**ev_mb, **{v: a[v] for v in others}}
        p1 = marginalize_joint(joint, [t], ev_mb).table
        p2 = marginalize_joint(joint, [t], ev_all).table
        assert np.allclose(p1, p2, atol=1e-12)


# -- parameter learning -------------------------------------------------


def test_update_empty_batch_is_identity():
    net = chain_net(det=False)
    assert update_parameters(net, []) is net


def test_single_dirichlet_update():
    net = BayesNet.from_edges([B("A")], [])
    assert np.array_equal(update_parameters(net, [{"A": 0}]).cpts["A"].counts, [2.0, 1.0])
    assert np.array_equal(update_parameters(net, [{"A": 1}]).cpts["A"].counts, [1.0, 2.0])


def test_update_rejects_out_of_range_and_incomplete():
    net = chain_net(det=False)
    with pytest.raises(ValueError):
        update_parameters(net, [{"A": 0, "B": 2}])
    with pytest.raises(ValueError):
        update_parameters(net, [{"A": 0}])


def test_update_keeps_structure():
    net = BayesNet.from_edges([B("A"), B("B")], [("A", "B")])
    new = update_parameters(net, [{"A": 1, "B": 0}])
    assert new.edges == net.edges
    assert np.array_equal(new.cpts["B"].counts, [[1, 1], [2, 1]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_update_is_order_insensitive(seed, rnd):
    rng = np.random.default_rng(seed)
    net = random_net(rng, 5)
    batch = sample(net, rng, 20)
    shuffled = list(batch)
    rnd.shuffle(shuffled)
    fresh = BayesNet.from_edges(net.variables.values(), net.edges)
    assert update_parameters(fresh, batch) == update_parameters(fresh, shuffled)


def known_five_node():
    """A -> B, A -> C, (B, C) -> D, D -> E with moderate parent frequencies."""
    cpts = [
        Cpt.from_probs("A", (), [0.6, 0.4]),
        Cpt.from_probs("B", ("A",), [[0.8, 0.2], [0.3, 0.7]]),
        Cpt.from_probs("C", ("A",), [[0.9, 0.1], [0.25, 0.75]]),
        Cpt.from_probs("D", ("B", "C"), [[[0.9, 0.1], [0.4, 0.6]], [[0.7, 0.3], [0.15, 0.85]]]),
        Cpt.from_probs("E", ("D",), [[0.85, 0.15], [0.2, 0.8]]),
    ]
    return BayesNet([B(n) for n in "ABCDE"], cpts)


def max_row_l1(learned: BayesNet, truth: BayesNet) -> float:
    worst = 0.0
    for name, cpt in truth.cpts.items():
        diff = np.abs(learned.cpts[name].probs - cpt.probs).sum(axis=-1)
        worst = max(worst, float(diff.max()))
    return worst


def test_learning_recovers_known_cpts():
    truth = known_five_node()
    data = sample(truth, np.random.default_rng(2024), 10_000)
    fresh = BayesNet.from_edges(truth.variables.values(), truth.edges)
    assert max_row_l1(update_parameters(fresh, data), truth) <= 0.05


def test_count_decay_moves_counts_toward_prior():
    net = update_parameters(BayesNet.from_edges([B("A")], []), [{"A": 0}] * 9)  # counts (10, 1)
    decayed = update_parameters(net, [], decay=0.5)
    assert np.allclose(decayed.cpts["A"].counts, [5.5, 1.0])


# -- structure learning -------------------------------------------------


def test_structure_from_independent_data_is_empty():
    rng = np.random.default_rng(11)
    vs = [B("A"), B("B"), B("C")]
    data = [{v.name: int(rng.integers(2)) for v in vs} for _ in range(1000)]
    # every single-edge addition lowers BIC on this sample
    for a in "ABC":
        for b in "ABC":
            if a != b:
                assert bic_score({"A": (), "B": (), "C": (), b: (a,)}, data, vs) < bic_score(
                    {"A": (), "B": (), "C": ()}, data, vs
                )
    assert learn_structure(vs, data).edges == []


def test_structure_deterministic_chain_tie_break():
    rng = np.random.default_rng(3)
    data = []
    for _ in range(1000):
        a = int(rng.integers(2))
        data.append({"A": a, "B": a})
    vs = [B("A"), B("B")]
    fwd = bic_score({"A": (), "B": ("A",)}, data, vs)
    rev = bic_score({"A": ("B",), "B": ()}, data, vs)
    assert fwd == pytest.approx(rev, abs=1e-9)
    # learn with the variables listed in either order
    assert learn_structure(vs, data).edges == [("A", "B")]
    assert learn_structure(vs[::-1], data).edges == [("A", "B")]


def test_structure_max_parents_zero_is_edgeless():
    data = [{"A": i % 2, "B": i % 2} for i in range(200)]
    assert learn_structure([B("A"), B("B")], data, max_parents=0).edges == []


def test_structure_respects_candidates_and_fits_counts():
    data = [{"A": i % 2, "B": i % 2} for i in range(200)]
    net = learn_structure([B("A"), B("B")], data, candidates=[("B", "A")])
    assert net.edges == [("B", "A")]
    assert net.cpts["B"].counts.sum() == 200 + 2


def test_structure_errors():
    with pytest.raises(ValueError):
        learn_structure([B("A")], [])
    with pytest.raises(ValueError):
        learn_structure([B("A")], [{"A": 0}], max_parents=4)


def test_family_bic_penalty():
    data = np.zeros((100, 1), dtype=np.intp)
    # all-zero column: likelihood 0, one free parameter
    assert family_bic(data, [2], 0, []) == pytest.approx(-0.5 * math.log(100))
