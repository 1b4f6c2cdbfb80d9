import random

from chainforge.engine import (EngineConfig, FAILED, MINIMAL, MINIMISED, MULTI,
                               generate_chain, partition_vertex_sets)
from chainforge.model import Property, TRUE, disj, eval_expr, replay, run_trace
from chainforge.oracle import (oracle_min_chain, pair_min_weights,
                               random_model, reachability_diameter, state_eq,
                               table_model)


def _check_chain(model, props, final_expr, chain):
    """Every emitted chain must replay: right trace, full coverage with
    assertions holding, ending in the final set."""
    assert list(chain.trace) == run_trace(model, chain.trace[0], chain.inputs)
    assert eval_expr(final_expr, chain.trace[-1])
    for p in props:
        k = chain.covers.get(p.name)
        if k is None:
            continue
        assert eval_expr(p.assumption, chain.trace[k], chain.inputs[k])
        assert eval_expr(p.assertion, chain.trace[k], chain.inputs[k],
                         chain.trace[k + 1])


def test_cruise_single_chain(cruise_model, cruise_props, cruise_final):
    res = generate_chain(cruise_model, cruise_props, cruise_final, cruise_final)
    assert res.status == MINIMAL
    assert len(res.chains) == 1
    assert res.total_length == 9
    _check_chain(cruise_model, cruise_props, cruise_final, res.chains[0])
    assert set(res.chains[0].covers) == {"p1", "p2", "p3", "p4"}
    rep = replay(cruise_model, cruise_props, cruise_final, res.chains[0].inputs)
    assert rep.ok


def test_cruise_zero_properties(cruise_model, cruise_final):
    res = generate_chain(cruise_model, [], cruise_final, cruise_final)
    assert len(res.chains) == 1 and res.total_length == 0


def test_cruise_bound_exceeded(cruise_model, cruise_props, cruise_final):
    res = generate_chain(cruise_model, cruise_props, cruise_final, cruise_final,
                         EngineConfig(k_max=1))
    assert res.status == FAILED
    assert "bound 1" in res.reason


def test_repair_example(cruise_model, broken_chain_props, cruise_final):
    res = generate_chain(cruise_model, broken_chain_props, cruise_final,
                         cruise_final)
    assert res.status == MINIMISED     # multi-state triggers: no certificate
    assert res.total_length == 4
    st = res.stats
    assert st.initial_abstract_weights == [0, 1, 2]
    assert st.first_failed_path == ["I", "p1", "p2"]
    assert st.repair_increments == 1
    assert st.refinement_splits == 0
    # stretched weights still account for the whole chain
    assert st.abstract_weights == [0, 2, 2]
    assert sum(st.abstract_weights) == res.total_length
    _check_chain(cruise_model, broken_chain_props, cruise_final, res.chains[0])
    assert oracle_min_chain(cruise_model, broken_chain_props, cruise_final,
                            cruise_final) == 4


def test_already_feasible_path_needs_no_repair(cruise_model, cruise_props,
                                               cruise_final):
    res = generate_chain(cruise_model, cruise_props, cruise_final, cruise_final)
    assert res.stats.repair_increments == 0
    assert res.stats.first_failed_path is None


# -- refinement: repair cannot fix a trigger member that is a dead end -------

def _refinement_scenario():
    """Trigger of p1 = {0, 4}; 0 is an initial-state trap, 4 sits right
    before p2's trigger.  The cheapest abstract path pins p1 at the trap
    and cannot be repaired; splitting p1's vertex re-routes through p2."""
    table = [
        [0, 0],   # 0: trap, in I and in trig(p1)
        [2, 1],   # 1: second initial state, heads for p2's trigger
        [3, 2],   # 2: transit
        [4, 4],   # 3: trig(p2); covering lands on 4
        [3, 1],   # 4: trig(p1); can cover onward to 3 or return home
    ]
    import dataclasses
    m = table_model("refine", table)
    i_expr = disj(state_eq(m, 0), state_eq(m, 1))
    p1 = Property("p1", disj(state_eq(m, 0), state_eq(m, 4)), TRUE)
    p2 = Property("p2", state_eq(m, 3), TRUE)
    m = dataclasses.replace(m, init_values=(), init_pred=i_expr)
    return m, [p1, p2], i_expr


def test_refinement_splits_and_finds_chain():
    model, props, i_expr = _refinement_scenario()
    res = generate_chain(model, props, i_expr, i_expr, EngineConfig(k_max=10))
    assert res.chains, res.reason
    assert res.stats.refinement_splits == 1
    assert res.total_length == 4
    assert oracle_min_chain(model, props, i_expr, i_expr) == 4
    _check_chain(model, props, i_expr, res.chains[0])
    # after the split, the optimiser re-routes through p2 first
    assert res.stats.abstract_path == ["I", "p2", "p1", "F"]
    assert sum(res.stats.abstract_weights) == res.total_length
    # the split vertex joined the original's refinement group
    groups = res.graph.group_members()
    assert any(len(members) == 2 for members in groups.values())


def test_refinement_scenario_weights_are_as_designed():
    model, props, i_expr = _refinement_scenario()
    w = pair_min_weights(model, props, i_expr, i_expr)
    assert w[("I", "p1")] == 0
    assert w[("p1", "p2")] == 1
    assert w[("I", "p2")] == 2
    assert w[("p2", "p1")] == 1
    assert w[("p1", "F")] == 1
    assert w[("p2", "F")] == 2


# -- partitioning -------------------------------------------------------------

def _two_cluster_scenario():
    table = [
        [1, 2],   # 0: init; input chooses the cluster
        [1, 1],   # 1: cluster A
        [2, 2],   # 2: cluster B
    ]
    m = table_model("clusters", table)
    pa = Property("pa", state_eq(m, 1), TRUE)
    pb = Property("pb", state_eq(m, 2), TRUE)
    return m, [pa, pb], state_eq(m, 0)


def test_partition_two_unreachable_clusters():
    model, props, i_expr = _two_cluster_scenario()
    final = TRUE
    res = generate_chain(model, props, i_expr, final, EngineConfig(k_max=8))
    assert res.status == MULTI
    assert len(res.chains) == 2
    covered = set()
    for c in res.chains:
        _check_chain(model, props, final, c)
        covered |= set(c.covers)
    assert covered == {"pa", "pb"}


def test_partition_disabled_fails():
    model, props, i_expr = _two_cluster_scenario()
    res = generate_chain(model, props, i_expr, TRUE,
                         EngineConfig(k_max=8, allow_partition=False))
    assert res.status == FAILED
    assert not res.chains


def test_partition_unreachable_final_reports_vertex():
    model, props, i_expr = _two_cluster_scenario()
    # final = init: neither cluster can return, so no chain set exists
    res = generate_chain(model, props, i_expr, i_expr, EngineConfig(k_max=8))
    assert res.status == FAILED
    assert "unreachable" in res.reason


def test_partition_vertex_sets_no_conflicts():
    assert partition_vertex_sets([1, 2, 3], []) == [{1, 2, 3}]


def test_partition_vertex_sets_pairwise_conflicts():
    out = partition_vertex_sets([1, 2], [(1, 2)])
    assert sorted(sorted(s) for s in out) == [[1], [2]]
    out = partition_vertex_sets([1, 2, 3], [(1, 2)])
    assert len(out) == 2
    for s in out:
        assert not ({1, 2} <= s)
    assert set().union(*out) == {1, 2, 3}


def test_partition_vertex_sets_random_validity():
    from util import chromatic_number
    rng = random.Random(31)
    for case in range(200):
        n = rng.randint(2, 7)
        vertices = list(range(n))
        conflicts = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.3:
                    conflicts.append((i, j))
        out = partition_vertex_sets(vertices, conflicts)
        assert set().union(*out) == set(vertices)
        bad = {frozenset(c) for c in conflicts}
        for s in out:
            for c in bad:
                assert not (c <= s), (vertices, conflicts, out)
        # near-minimal: within one class of the true optimum
        assert len(out) <= chromatic_number(vertices, conflicts) + 1, \
            (vertices, conflicts, out)


def test_strengthened_invariant_keeps_result(cruise_model, cruise_props,
                                             cruise_final):
    res = generate_chain(cruise_model, cruise_props, cruise_final, cruise_final,
                         EngineConfig(strengthen_invariant=True))
    assert res.total_length == 9
    assert {e for e in res.graph.named_edges()} == {
        ("I", "p1", 2), ("I", "p3", 2), ("I", "p4", 2),
        ("p1", "p2", 2), ("p1", "p3", 1),
        ("p2", "p1", 1), ("p2", "p3", 1),
        ("p3", "p1", 2), ("p3", "F", 2),
        ("p4", "p1", 2), ("p4", "p3", 2),
    }


def test_oracle_lower_bound_on_random_models():
    rng = random.Random(41)
    for case in range(8):
        gen = random_model(rng.randrange(1 << 30), n_states=rng.randint(5, 9),
                           n_inputs=2, n_props=2)
        res = generate_chain(gen.model, gen.props, gen.init_expr, gen.final_expr,
                             EngineConfig(k_max=16))
        opt = oracle_min_chain(gen.model, gen.props, gen.init_expr, gen.final_expr)
        if res.chains and len(res.chains) == 1:
            assert opt is not None
            assert res.total_length >= opt
            for c in res.chains:
                _check_chain(gen.model, gen.props, gen.final_expr, c)


def test_refine_degenerate_split_isolates_clone():
    """Splitting a vertex whose only edges are the failing in/out pair
    leaves the clone with no onward edge and the original unreachable, so
    the existence check fails and partitioning takes over."""
    from chainforge.engine import refine
    from chainforge.model import TRUE as T
    from chainforge.reachgraph import ReachGraph, Vertex, exists_covering_path
    vs = [Vertex(0, "I", "init", T), Vertex(1, "p", "prop", T, T),
          Vertex(2, "F", "final", T)]
    g = ReachGraph(vs, final_idx=2)
    g.weights = {(0, 1): 1, (1, 2): 1}
    assert exists_covering_path(g)
    clone = refine(g, pred=0, mid=1, succ=2)
    assert (0, 1) not in g.weights           # original lost the incoming edge
    assert (0, clone) in g.weights           # clone took it
    assert all(b != 2 for (a, b) in g.weights if a == clone)  # no onward edge
    assert not exists_covering_path(g)


def test_generation_with_external_solver_backend(cruise_model,
                                                 broken_chain_props,
                                                 cruise_final, monkeypatch):
    import sys
    from pathlib import Path
    stub = Path(__file__).parent / "external_stub.py"
    monkeypatch.setenv("CHAINFORGE_SOLVER", f"external:{sys.executable} {stub}")
    res = generate_chain(cruise_model, broken_chain_props, cruise_final,
                         cruise_final, EngineConfig(k_max=8))
    assert res.total_length == 4
    _check_chain(cruise_model, broken_chain_props, cruise_final, res.chains[0])


def test_generation_with_model_verification(cruise_model, cruise_props,
                                            cruise_final):
    from chainforge.sat import Solver
    cfg = EngineConfig(solver_factory=lambda: Solver(verify_models=True))
    res = generate_chain(cruise_model, cruise_props, cruise_final, cruise_final,
                         cfg)
    assert res.total_length == 9


def test_exhaust_mode_reaches_diameter(cruise_model, cruise_props, cruise_final):
    d = reachability_diameter(cruise_model)
    res = generate_chain(cruise_model, cruise_props, cruise_final, cruise_final,
                         EngineConfig(k_max=d, exhaust_k=True))
    assert res.total_length == 9
    # with every pair resolved, the graph holds all finite weights <= d
    w = pair_min_weights(cruise_model, cruise_props, cruise_final, cruise_final)
    got = {(a, b): x for (a, b, x) in res.graph.named_edges()}
    assert got == {k: v for k, v in w.items() if v <= d}
