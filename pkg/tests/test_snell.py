"""Envelope of an obstacle process on a tree: dominance, minimality, hits."""

import pytest

from conftest import binary_tree, chain_tree, random_tree
from impulsolve import snell
from impulsolve.rng import SplitMix64


def test_chain_peak_pulls_back():
    # obstacle 0, 5, 0 on a two-step chain: the peak propagates to the root
    tree = chain_tree(2)
    obstacle = snell.AdaptedProcess({"n0": 0.0, "n1": 5.0, "n2": 0.0})
    env = snell.backward_envelope(tree, obstacle)
    assert env["n0"] == 5.0
    assert env["n1"] == 5.0
    assert env["n2"] == 0.0


def test_fork_averages_leaves():
    # leaves worth 2 and 4 at probability 1/2 each: continuation 3 at the root
    tree = binary_tree(1)
    leaves = tree.leaves()
    obstacle = snell.AdaptedProcess({tree.root_id: 0.0,
                                     leaves[0]: 2.0, leaves[1]: 4.0})
    env = snell.backward_envelope(tree, obstacle)
    assert env[tree.root_id] == 3.0


def test_terminal_value_floors_leaves():
    tree = chain_tree(1)
    obstacle = snell.AdaptedProcess({"n0": 0.0, "n1": 1.0}, terminal_value=7.0)
    env = snell.backward_envelope(tree, obstacle)
    assert env["n1"] == 7.0
    assert env["n0"] == 7.0
    assert env.terminal_value == 7.0


def test_envelope_dominates_and_is_supermartingale():
    rng = SplitMix64(31)
    tree = random_tree(rng, 5)
    obstacle = snell.AdaptedProcess(
        {nid: rng.next_uniform() * 2.0 - 1.0 for nid in tree.nodes})
    env = snell.backward_envelope(tree, obstacle)
    for nid, node in tree.nodes.items():
        assert env[nid] >= obstacle[nid]
        if node.children:
            cont = sum(p * env[cid] for cid, p in node.children)
            assert env[nid] >= cont - 1e-12
            # minimality: the envelope is exactly max(continuation, obstacle)
            assert abs(env[nid] - max(cont, obstacle[nid])) < 1e-12


def test_neg_inf_obstacle_means_pure_expectation():
    tree = binary_tree(2)
    obstacle = {nid: float("-inf") for nid in tree.nodes}
    for lid in tree.leaves():
        obstacle[lid] = tree.node(lid).state[0]
    env = snell.backward_envelope(tree, snell.AdaptedProcess(obstacle))
    want = sum(s.probability * tree.node(s.node_ids[-1]).state[0]
               for s in tree.paths())
    assert abs(env[tree.root_id] - want) < 1e-12


def test_plain_mapping_is_accepted():
    tree = chain_tree(1)
    env = snell.backward_envelope(tree, snell.AdaptedProcess({"n0": 0.0, "n1": 2.0}))
    env2 = snell.backward_envelope(
        tree, snell.AdaptedProcess(dict(env.values)))
    assert env2["n0"] == env["n0"]


def test_is_hit_relative_tolerance():
    assert snell.is_hit(1.0, 1.0)
    assert snell.is_hit(1.0, 1.0 - 1e-10)
    assert not snell.is_hit(1.0, 1.0 - 1e-6)
    assert not snell.is_hit(float("inf"), float("inf"))
    assert snell.is_hit(0.0, 0.0)


def test_hitting_region_is_first_touch_antichain():
    tree = chain_tree(2)
    obstacle = snell.AdaptedProcess({"n0": 0.0, "n1": 5.0, "n2": 0.0})
    env = snell.backward_envelope(tree, obstacle)
    region = snell.hitting_region(tree, env, obstacle)
    assert region.node_ids == frozenset({"n1"})
    assert region.is_antichain(tree)
    assert "n1" in region and "n0" not in region
    # raising from_time past the hit pushes the region later
    region2 = snell.hitting_region(tree, env, obstacle, from_time=2)
    assert region2.node_ids == frozenset({"n2"})


def test_hitting_region_random_tree_properties():
    rng = SplitMix64(77)
    tree = random_tree(rng, 5)
    obstacle = snell.AdaptedProcess(
        {nid: rng.next_uniform() for nid in tree.nodes})
    env = snell.backward_envelope(tree, obstacle)
    region = snell.hitting_region(tree, env, obstacle)
    assert region.is_antichain(tree)
    for nid in region.node_ids:
        assert snell.is_hit(env[nid], obstacle[nid])
    # every path hits somewhere: at the leaf the envelope equals the obstacle
    for sample in tree.paths():
        assert any(nid in region for nid in sample.node_ids)


def test_missing_node_value_raises():
    tree = chain_tree(1)
    with pytest.raises(KeyError):
        snell.backward_envelope(tree, snell.AdaptedProcess({"n0": 0.0}))
