import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qapm.errors import GenerationError, ParameterError
from qapm.graphgen import (
    Graph,
    InstanceConfig,
    NoiseSpec,
    compose,
    erdos_renyi,
    generate_records,
    make_instance,
    permute,
    perturb,
    random_regular,
    read_dataset,
    record_to_sample,
    sample_to_record,
    write_dataset,
)


def path3():
    return Graph.from_edges(3, [[0, 1], [1, 2]])


def test_er_extremes():
    assert erdos_renyi(3, 0.0, 1) == Graph(np.zeros((3, 3)))
    assert erdos_renyi(3, 1.0, 1) == Graph(np.ones((3, 3)) - np.eye(3))


def test_er_rejects_bad_probability():
    with pytest.raises(ParameterError):
        erdos_renyi(5, 1.5, 0)


def test_er_deterministic_given_seed():
    assert erdos_renyi(30, 0.3, 42) == erdos_renyi(30, 0.3, 42)
    assert erdos_renyi(30, 0.3, 42) != erdos_renyi(30, 0.3, 43)


def test_er_mean_edge_count_monte_carlo():
    counts = np.array([len(erdos_renyi(50, 0.2, s).edges()) for s in range(1000)])
    expected = 0.2 * comb(50, 2)
    se = np.sqrt(comb(50, 2) * 0.2 * 0.8 / 1000)
    assert abs(counts.mean() - expected) < 3 * se


def test_regular_k4_is_forced():
    assert random_regular(4, 3, 0) == Graph(np.ones((4, 4)) - np.eye(4))


def _cycle_lengths(g):
    seen, lengths = set(), []
    for start in range(g.n):
        if start in seen:
            continue
        stack, comp = [start], set()
        while stack:
            v = stack.pop()
            if v in comp:
                continue
            comp.add(v)
            stack.extend(int(u) for u in np.nonzero(g.adj[v])[0])
        seen |= comp
        lengths.append(len(comp))
    return lengths


@pytest.mark.parametrize("seed", range(5))
def test_regular_two_is_union_of_cycles(seed):
    g = random_regular(6, 2, seed)
    assert np.all(g.degrees == 2)
    # every component of a 2-regular simple graph is a cycle of length >= 3
    lengths = _cycle_lengths(g)
    assert sum(lengths) == 6 and min(lengths) >= 3


@pytest.mark.parametrize("seed", range(5))
def test_regular_50_10(seed):
    g = random_regular(50, 10, seed)
    assert np.all(g.degrees == 10)
    assert np.all(np.diag(g.adj) == 0)
    assert set(np.unique(g.adj)) <= {0.0, 1.0}


def test_regular_errors():
    with pytest.raises(ParameterError):
        random_regular(5, 3, 0)
    with pytest.raises(ParameterError):
        random_regular(4, 4, 0)


def test_regular_generation_error(monkeypatch):
    import qapm.graphgen as gg

    monkeypatch.setattr(gg, "_pairing_attempt", lambda n, d, rng: None)
    with pytest.raises(GenerationError):
        gg.random_regular(10, 3, 0)


def test_permute_identity_and_p3_automorphism():
    g = erdos_renyi(10, 0.4, 3)
    assert permute(g, np.arange(10)) == g
    assert permute(path3(), np.array([2, 1, 0])) == path3()


def test_permute_relabels_edges():
    g = erdos_renyi(12, 0.3, 5)
    pi = np.random.default_rng(0).permutation(12)
    h = permute(g, pi)
    for i in range(12):
        for j in range(12):
            assert h.adj[pi[i], pi[j]] == g.adj[i, j]
    assert sorted(h.degrees) == sorted(g.degrees)


def test_permute_length_mismatch():
    with pytest.raises(ParameterError):
        permute(path3(), np.array([0, 1]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.integers(0, 2**31 - 1))
def test_permute_is_group_action(n, seed):
    rng = np.random.default_rng(seed)
    g = erdos_renyi(n, 0.5, rng)
    sigma, tau = rng.permutation(n), rng.permutation(n)
    assert permute(permute(g, sigma), tau) == permute(g, compose(tau, sigma))


def test_noise_spec_derived_probability():
    spec = NoiseSpec(0.2, 0.2)
    assert spec.p_e2 == pytest.approx(0.05)
    with pytest.raises(ParameterError):
        NoiseSpec(0.9, 0.6)


def test_perturb_extremes():
    g = erdos_renyi(20, 0.3, 1)
    assert perturb(g, NoiseSpec(0.0, 0.3), 5) == g
    h = perturb(g, NoiseSpec(1.0, 0.3), 5)
    assert np.all(h.adj[g.adj > 0] == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_perturb_symmetric_zero_diagonal(n, p_e, seed):
    g = erdos_renyi(n, 0.3, seed)
    h = perturb(g, NoiseSpec(p_e, 0.3), seed + 1)
    assert np.array_equal(h.adj, h.adj.T)
    assert np.all(np.diag(h.adj) == 0)


def test_perturb_mean_degree():
    n, p, pe = 50, 0.2, 0.2
    degs = []
    for s in range(1000):
        g1 = erdos_renyi(n, p, [s, 0])
        degs.append(perturb(g1, NoiseSpec(pe, p), [s, 1]).degrees.mean())
    degs = np.array(degs)
    assert abs(degs.mean() - 9.8) < 0.15
    se = degs.std(ddof=1) / np.sqrt(len(degs))
    assert abs(degs.mean() - (n - 1) * p) < 3 * se


def test_make_instance_forced_identity():
    g1, g2, pi = make_instance(InstanceConfig(n=20), 3, pi=np.arange(20))
    assert g1 == g2


def test_make_instance_isomorphic_without_noise():
    for model in ("er", "regular"):
        g1, g2, pi = make_instance(InstanceConfig(model=model, n=30, deg=4), 11)
        for i, j in g1.edges():
            assert g2.adj[pi[i], pi[j]] == 1
        assert len(g1.edges()) == len(g2.edges())


def test_make_instance_flip_count():
    cfg = InstanceConfig(n=50, p=0.2, p_e=0.05)
    diffs = []
    for s in range(400):
        g1, g2, pi = make_instance(cfg, s)
        diffs.append(np.triu(permute(g1, pi).adj != g2.adj, 1).sum())
    diffs = np.array(diffs)
    se = diffs.std(ddof=1) / np.sqrt(len(diffs))
    assert abs(diffs.mean() - 24.5) < 4 * se


def test_dataset_round_trip(tmp_path):
    cfg = InstanceConfig(n=15, p=0.3, p_e=0.1)
    recs = list(generate_records(cfg, 5, seed=7))
    path = tmp_path / "d.jsonl"
    assert write_dataset(path, recs) == 5
    back = list(read_dataset(path))
    assert back == json.loads(json.dumps(recs))
    for rec in back:
        g1, g2, pi = record_to_sample(rec)
        assert sample_to_record(g1, g2, pi, cfg, rec["seed"]) == rec
        assert all(i < j for i, j in rec["edges1"] + rec["edges2"])
