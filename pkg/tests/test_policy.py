import pytest

from nudgem.policy import (
    PolicyError,
    PolicyFn,
    all_strings,
    count_twos,
    enumerate_policies,
    fcfs_policy,
    increment_edges,
    named_policy,
    nudge_k_policy,
    nudge_kl_policy,
    nudge_km_policy,
    nudge_l_policy,
    nudge_m_policy,
    nudge_ml_policy,
    policy_from_table_file,
)


def test_fcfs_is_zero():
    pol = fcfs_policy(3)
    assert all(pol(s) == 0 for s in all_strings(3))


def test_nudge_m_passes_all_twos():
    pol = nudge_m_policy(4)
    assert pol((2, 2, 1, 2)) == 3
    assert pol((1, 1, 1, 1)) == 0
    assert all(pol(s) == count_twos(s) for s in all_strings(4))


def test_nudge_k_leading_twos_only():
    pol = nudge_k_policy(3)
    assert pol((2, 2, 1)) == 2
    assert pol((1, 2, 2)) == 0
    assert pol((2, 2, 2)) == 3


def test_nudge_l_caps_at_one():
    pol = nudge_l_policy(3)
    assert pol((2, 2, 2)) == 1
    assert pol((1, 1, 1)) == 0


def test_nudge_km_caps_at_k():
    pol = nudge_km_policy(2, 4)
    assert pol((2, 2, 2, 2)) == 2
    assert pol((1, 2, 1, 1)) == 1


def test_nudge_ml_counts_twos_before_lth_one():
    pol = nudge_ml_policy(4, 2)
    # the second type-1 appears at position 3: only the twos before it count
    assert pol((2, 1, 1, 2)) == 1
    assert pol((2, 2, 1, 2)) == 3
    assert pol((1, 1, 2, 2)) == 0


def test_nudge_kl_window_and_count():
    pol = nudge_kl_policy(2, 3)
    assert pol.m == 4
    assert pol((2, 2, 1, 1)) == 2
    # third one reached before the second two: stop with one pass
    assert pol((2, 1, 1, 1)) == 1


def test_condition_c1_enforced():
    table = {s: count_twos(s) for s in all_strings(2)}
    table[(1, 1)] = 1
    with pytest.raises(PolicyError):
        PolicyFn(2, table)


def test_condition_c2_enforced():
    # n jumps by 2 when a two is prepended: violates the one-step growth rule
    table = {s: 0 for s in all_strings(2)}
    table[(2, 2)] = 2
    with pytest.raises(PolicyError):
        PolicyFn(2, table)


def test_enumeration_counts_frozen():
    # exhaustive counts of valid tables, frozen after independent enumeration
    assert sum(1 for _ in enumerate_policies(1)) == 2
    assert sum(1 for _ in enumerate_policies(2)) == 7
    for pol in enumerate_policies(2):
        PolicyFn(pol.m, pol.table)  # revalidates (C1)/(C2)


def test_increment_edges_stay_in_family():
    pol = nudge_km_policy(1, 2)
    edges = list(increment_edges(pol))
    assert edges
    for s, nxt in edges:
        assert nxt.table[s] == pol.table[s] + 1
        changed = [u for u in all_strings(2) if nxt.table[u] != pol.table[u]]
        assert changed == [s]


def test_named_policy_dispatch():
    assert named_policy("nudge-m", m=3) == nudge_m_policy(3)
    assert named_policy("nudge-kl", k=2, l=2) == nudge_kl_policy(2, 2)
    with pytest.raises(PolicyError):
        named_policy("lifo")


def test_table_file_round_trip(tmp_path):
    pol = nudge_km_policy(2, 3)
    path = tmp_path / "table.txt"
    lines = ["# window 3"]
    for s, n in sorted(pol.table.items()):
        lines.append("".join(map(str, s)) + " " + str(n))
    path.write_text("\n".join(lines))
    assert policy_from_table_file(path) == pol
