from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from elsrgm.embed import spherical_embedding
from elsrgm.errors import InputError
from elsrgm.features import FeatureSpec, feature_vector
from elsrgm.graph import Graph, hamming_distance, make_graph, random_walk_neighborhood
from elsrgm.mixture import MixtureModel, fit_pi
from elsrgm.samplers import (DpOptions, DpState, acceptance_probability, direct_sample,
                             log_proposal, mcmc_dp_sample, mh_sample, perturb_example, propose)
from elsrgm.vmf import VmfParams, vmf_log_density

SPEC4 = FeatureSpec(("edge", "kstar2", "kstar3", "triangle"))


def enumerated_model(n, kappa_h=20.0, seed=0, spec=SPEC4):
    """Every labeled ``n``-node graph is an atom at its feature's embedded point."""
    graphs = [Graph(n, b) for b in range(1 << (n * (n - 1) // 2))]
    feats = [feature_vector(g, spec) for g in graphs]
    uniq = list(dict.fromkeys(feats))
    emb = spherical_embedding(uniq, p=3)
    row = {x: i for i, x in enumerate(uniq)}
    atoms = np.vstack([emb.points[row[x]] for x in feats])
    pi = np.random.default_rng(seed).dirichlet(np.ones(len(graphs)))
    f = VmfParams(emb.points[row[feats[-1]]], 5.0)
    return MixtureModel(atoms, pi, kappa_h, f, 0.0, graphs), emb


def exact_posterior(model, y):
    s = model.atom_log_scores(y)
    p = np.exp(s - s.max())
    return p / p.sum()


def test_direct_sample_examples():
    gs = [make_graph(3, []), make_graph(3, [(0, 1)]), make_graph(3, [(1, 2)]),
          make_graph(3, [(0, 2)])]
    assert set(direct_sample(gs, [0, 1, 0, 0], 50, seed=0)) == {gs[1]}
    draws = direct_sample(gs, [0.25] * 4, 100_000, seed=1)
    freq = Counter(g.bits for g in draws)
    assert all(abs(freq[g.bits] / 1e5 - 0.25) <= 0.01 for g in gs)
    with pytest.raises(InputError):
        direct_sample(gs, [0.5, 0.5], 3)


def test_direct_sample_chi_square():
    rng = np.random.default_rng(2)
    gs = [Graph(6, int(b)) for b in rng.choice(2 ** 15, size=20, replace=False)]
    pi = rng.dirichlet(np.ones(20))
    draws = direct_sample(gs, pi, 20_000, seed=3)
    idx = {g.bits: k for k, g in enumerate(gs)}
    counts = np.bincount([idx[g.bits] for g in draws], minlength=20)
    assert chisquare(counts, 20_000 * pi).pvalue > 0.01


def test_propose_is_uniform_single_toggle():
    g = make_graph(5, [(0, 1), (2, 3)])
    rng = np.random.default_rng(0)
    counts = Counter()
    for _ in range(100_000):
        h = propose(g, rng)
        assert hamming_distance(g, h) == 1
        counts[(g.bits ^ h.bits).bit_length() - 1] += 1
    p = 1 / 10
    sigma = math.sqrt(1e5 * p * (1 - p))
    assert len(counts) == 10
    assert all(abs(c - 1e5 * p) <= 3 * sigma for c in counts.values())
    assert propose(make_graph(2, []), 0) == make_graph(2, [(0, 1)])
    assert log_proposal(g, propose(g, 1)) == -math.log(10)


def test_acceptance_probability_is_min_one_r():
    assert acceptance_probability(math.log(0.2), math.log(0.4)) == pytest.approx(0.5)
    assert acceptance_probability(math.log(0.4), math.log(0.2)) == 1.0
    assert acceptance_probability(0.0, 0.0, math.log(0.3), math.log(0.6)) == pytest.approx(0.5)


def test_perturb_example_moves_one_or_two_edges():
    g = make_graph(6, [(0, 1), (1, 2)])
    seen = {hamming_distance(g, perturb_example(g, s)) for s in range(200)}
    assert seen == {1, 2}


def test_two_graph_space_accepts_everything():
    gs = [make_graph(2, []), make_graph(2, [(0, 1)])]
    atoms = np.array([[0.6, 0.8, 0.0], [-0.6, 0.8, 0.0]])
    f = VmfParams(np.array([0.0, 1.0, 0.0]), 3.0)
    model = MixtureModel(atoms, np.array([0.5, 0.5]), 30.0, f, 0.0, gs)
    res = mh_sample(model, f, 500, seed=4, start=gs[0], y_star=f.mu)
    assert res.state.acceptance_rate == 1.0


def test_concentrated_posterior_pins_the_chain():
    model, _ = enumerated_model(4, kappa_h=400.0)
    pi = np.full(model.K, 1e-6)
    target = 37
    pi[target] = 1.0
    model = MixtureModel(model.atoms, pi / pi.sum(), 400.0, model.baseline, 0.0,
                         model.graph_refs)
    y = model.atoms[target]
    res = mh_sample(model, model.baseline, 20_000, seed=0, start=model.graph_refs[0],
                    y_star=y, track=True)
    assert res.counts[target] / 20_000 > 0.95


def test_occupancy_matches_exact_posterior():
    model, _ = enumerated_model(4, kappa_h=20.0, seed=1)
    y = model.baseline.mu
    res = mh_sample(model, model.baseline, 200_000, seed=5, start=model.graph_refs[0],
                    y_star=y, track=True)
    tv = 0.5 * np.abs(res.counts / res.counts.sum() - exact_posterior(model, y)).sum()
    assert tv <= 0.03


def test_detailed_balance_on_n3():
    model, _ = enumerated_model(3, kappa_h=5.0, seed=2,
                                spec=FeatureSpec(("edge", "kstar2", "triangle")))
    y = model.baseline.mu
    rng = np.random.default_rng(9)
    cur = model.graph_refs[0]
    flows = Counter()
    for _ in range(30_000):
        nxt = mh_sample(model, model.baseline, 1, rng, start=cur, y_star=y).graph
        if nxt != cur:
            flows[(cur.bits, nxt.bits)] += 1
        cur = nxt
    for (a, b), nab in flows.items():
        nba = flows[(b, a)]
        assert abs(nab - nba) <= 4 * math.sqrt(nab + nba) + 2


def test_mh_seed_determinism_and_errors():
    model, _ = enumerated_model(4)
    ex = model.graph_refs[10]
    a = mh_sample(model, model.baseline, 3000, seed=8, example=ex)
    b = mh_sample(model, model.baseline, 3000, seed=8, example=ex)
    assert a.graph == b.graph and a.state.accepted == b.state.accepted
    assert np.array_equal(a.state.y_star, b.state.y_star)
    with pytest.raises(InputError):
        mh_sample(model, model.baseline, 0, seed=1, example=ex)
    with pytest.raises(InputError):
        mh_sample(model, model.baseline, 10, seed=1)


def neighborhood_model(alpha, seed=0, size=60):
    ex = make_graph(7, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (0, 3), (2, 5)])
    nb = random_walk_neighborhood(ex, 5000, max_edit=2, seed=seed, max_members=size)
    graphs = list(nb.members)
    spec = SPEC4
    feats = [feature_vector(g, spec) for g in graphs]
    uniq = list(dict.fromkeys(feats))
    emb = spherical_embedding(uniq, p=3)
    row = {x: i for i, x in enumerate(uniq)}
    atoms = np.vstack([emb.points[row[x]] for x in feats])
    f = VmfParams(emb.points[row[feature_vector(ex, spec)]], 20.0)
    pi = fit_pi(atoms, f, 100.0, mc_samples=1000, max_iter=100).pi
    return MixtureModel(atoms, pi, 100.0, f, alpha, graphs), emb, ex, spec


def test_dp_with_zero_alpha_equals_restricted_mh():
    model, emb, ex, spec = neighborhood_model(alpha=0.0)
    opts = DpOptions(spec, mc_samples=500)
    for seed in range(5):
        dp = mcmc_dp_sample(model, model.baseline, emb, 800, seed, opts, example=ex)
        mh = mh_sample(model, model.baseline, 800, seed, example=ex)
        assert dp.report.final_K == dp.report.initial_K == model.K
        assert not dp.report.new_graphs
        assert dp.graph == mh.graph and dp.state.accepted == mh.state.accepted


def test_dp_with_large_alpha_grows():
    model, emb, ex, spec = neighborhood_model(alpha=1e6)
    res = mcmc_dp_sample(model, model.baseline, emb, 1000, 3,
                         DpOptions(spec, mc_samples=500, refit_iters=10), example=ex)
    assert res.report.final_K > res.report.initial_K
    assert model.K == res.report.initial_K  # caller's model untouched


def test_dp_bookkeeping_counts_unseen_graphs():
    model, emb, ex, spec = neighborhood_model(alpha=0.5, size=40)
    st = DpState(model, emb, ex, 20.0, DpOptions(spec, mc_samples=500, refit_every=5,
                                                 reembed_every=10, refit_iters=10))
    known = {g.bits for g in model.graph_refs}
    total_new = 0
    for seed in range(6):
        res = mcmc_dp_sample(st.model, st.baseline, st.emb, 400, seed, example=ex,
                             dp_state=st)
        bits = [g.bits for g in res.report.new_graphs]
        assert len(set(bits)) == len(bits) and not known & set(bits)
        known |= set(bits)
        total_new += len(bits)
        assert res.report.final_K - res.report.initial_K == len(bits)
    assert st.model.K == model.K + total_new == len(st.model.graph_refs)
    assert np.allclose(np.linalg.norm(st.model.atoms, axis=1), 1.0)
    assert abs(st.model.pi.sum() - 1) < 1e-9


def test_dp_atom_cap_stops_growth():
    model, emb, ex, spec = neighborhood_model(alpha=1e6, size=40)
    opts = DpOptions(spec, mc_samples=500, refit_iters=5, max_atoms=45)
    res = mcmc_dp_sample(model, model.baseline, emb, 1000, 1, opts, example=ex)
    assert res.report.final_K == 45


def test_reembed_keeps_frame_and_dimension():
    model, emb, ex, spec = neighborhood_model(alpha=0.5)
    st = DpState(model, emb, ex, 20.0, DpOptions(spec, mc_samples=500))
    before = st.model.atoms.copy()
    st.reembed()
    assert st.emb.p == emb.p
    # same features, so the aligned recompute reproduces the old atoms
    assert np.max(np.abs(st.model.atoms - before)) < 1e-6
    assert vmf_log_density(st.baseline.mu, st.baseline) >= vmf_log_density(
        st.model.atoms[0], st.baseline)
