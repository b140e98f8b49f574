from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import orthogonal_procrustes
from scipy.stats import spearmanr

from elsrgm.embed import (Embedding, check_dissimilarity, dissimilarity_matrix,
                          embed_dissimilarity, gram_from_radius, optimal_radius, out_of_sample,
                          smallest_eigenvalue, spherical_embedding)
from elsrgm.errors import InputError


def sphere_points(k, p, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(k, p))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def geodesic(x, rho):
    return rho * np.arccos(np.clip(x @ x.T, -1.0, 1.0)) * (1 - np.eye(len(x)))


def test_dissimilarity_examples():
    assert dissimilarity_matrix([(0, 0), (3, 4)])[0, 1] == 5.0
    D = dissimilarity_matrix([(1, 2), (1, 2), (0, 0)])
    assert D[0, 1] == 0.0 and np.all(np.diag(D) == 0)
    eq = dissimilarity_matrix([(0, 0), (2, 0), (1, math.sqrt(3))])
    off = eq[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 2.0, atol=1e-12)
    with pytest.raises(InputError):
        dissimilarity_matrix([(0, 0)])
    with pytest.raises(InputError):
        check_dissimilarity(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_gram_examples():
    D = np.array([[0.0, math.pi / 2 * 3], [math.pi / 2 * 3, 0.0]])
    Z = gram_from_radius(D, 3.0)
    assert Z[0, 0] == 9.0 and abs(Z[0, 1]) < 1e-12
    D3 = np.full((3, 3), 2 * math.pi / 3) - np.diag([2 * math.pi / 3] * 3)
    ev = np.sort(np.linalg.eigvalsh(gram_from_radius(D3, 1.0)))
    assert np.allclose(ev, [0.0, 1.5, 1.5], atol=1e-12)
    with pytest.raises(InputError):
        gram_from_radius(D3, 0.5)


def test_lanczos_and_dense_eigenvalue_agree():
    x = sphere_points(260, 4, 0)
    Z = gram_from_radius(geodesic(x, 2.0) * 1.05, 3.0)
    assert smallest_eigenvalue(Z) == pytest.approx(np.linalg.eigvalsh(Z)[0], abs=1e-9)


@pytest.mark.parametrize("p,rho,seed", [(3, 1.0, 0), (3, 7.5, 1), (4, 2.0, 2)])
def test_radius_and_gram_recovery(p, rho, seed):
    x = sphere_points(50, p, seed)
    D = geodesic(x, rho)
    emb = embed_dissimilarity(D)
    assert abs(emb.radius - rho) <= 1e-3 * rho
    Zhat = gram_from_radius(D, emb.radius) / emb.radius ** 2
    assert emb.p == p
    assert np.linalg.norm(emb.points @ emb.points.T - Zhat) <= 1e-6


def test_radius_scale_equivariance():
    D = geodesic(sphere_points(30, 3, 5), 1.0)
    r1 = optimal_radius(D)
    assert optimal_radius(4.0 * D) == pytest.approx(4.0 * r1, rel=1e-6)


def test_two_points_are_antipodal():
    emb = spherical_embedding([(0, 0), (6, 8)])
    assert emb.K == 2 and emb.p == 2
    assert emb.radius == pytest.approx(10 / math.pi, rel=1e-9)
    assert emb.points[0] @ emb.points[1] == pytest.approx(-1.0, abs=1e-9)


def test_equidistant_triple():
    emb = spherical_embedding([(0, 0), (2, 0), (1, math.sqrt(3))], p=2)
    G = emb.points @ emb.points.T
    assert np.allclose(G[~np.eye(3, dtype=bool)], -0.5, atol=1e-6)


def test_noisy_distances_keep_rank_order():
    rng = np.random.default_rng(3)
    x = sphere_points(60, 3, 3)
    D = geodesic(x, 1.0)
    noise = rng.normal(scale=0.03, size=D.shape)
    Dn = np.clip(D + (noise + noise.T) / 2 * (1 - np.eye(60)), 0.0, None)
    emb = embed_dissimilarity(Dn, p=3)
    ang = np.arccos(np.clip(emb.points @ emb.points.T, -1, 1))
    iu = np.triu_indices(60, 1)
    assert spearmanr(Dn[iu], ang[iu]).statistic >= 0.95


def test_points_are_unit_and_residual_falls_with_p():
    feats = np.random.default_rng(0).integers(0, 30, size=(40, 5))
    res = []
    for p in (2, 3, 4, 5):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            emb = spherical_embedding(feats, p=p)
        assert np.allclose(np.linalg.norm(emb.points, axis=1), 1.0, atol=1e-9)
        Zhat = np.clip(gram_from_radius(dissimilarity_matrix(feats), emb.radius)
                       / emb.radius ** 2, None, None)
        res.append(np.linalg.norm(emb.raw @ emb.raw.T - Zhat))
    assert all(b <= a + 1e-9 for a, b in zip(res, res[1:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    feats = rng.integers(0, 20, size=(12, 3))
    if len({tuple(f) for f in feats}) < 12:
        return
    perm = rng.permutation(12)
    a = spherical_embedding(feats, p=3)
    b = spherical_embedding(feats[perm], p=3)
    # the search stops at a relative bracket of 1e-10; eigensolver rounding
    # on the permuted matrix can move the end point by a few times that
    assert b.radius == pytest.approx(a.radius, rel=1e-7)
    Ga, Gb = a.points @ a.points.T, b.points @ b.points.T
    assert np.allclose(Gb, Ga[np.ix_(perm, perm)], atol=1e-6)


def test_out_of_sample_returns_source_point():
    feats = np.random.default_rng(1).integers(0, 30, size=(25, 4))
    emb = spherical_embedding(feats)
    for k in (0, 7, 24):
        assert np.allclose(out_of_sample(emb, feats[k]), emb.points[k], atol=1e-6)


def test_out_of_sample_bisector():
    feats = [(0.0, 0.0), (10.0, 0.0), (5.0, 30.0), (5.0, -30.0)]
    emb = spherical_embedding(feats, p=2)
    y = out_of_sample(emb, (5.0, 0.0))
    # the swap of sources 0 and 1 is a symmetry of the configuration; the
    # new point must be equally close to both
    assert y @ emb.points[0] == pytest.approx(y @ emb.points[1], abs=1e-6)


def test_out_of_sample_agrees_with_full_reembedding():
    rng = np.random.default_rng(7)
    centres = sphere_points(200, 3, 7) * 50
    held = rng.choice(200, size=20, replace=False)
    train = np.setdiff1d(np.arange(200), held)
    emb = spherical_embedding(centres[train], p=3)
    full = spherical_embedding(centres, p=3)
    R, _ = orthogonal_procrustes(emb.points, full.points[train])
    placed = np.array([out_of_sample(emb, centres[h]) for h in held]) @ R
    ang = np.arccos(np.clip(np.sum(placed * full.points[held], axis=1), -1, 1))
    assert np.median(ang) <= 0.1


def test_embedding_round_trip_is_bit_equal():
    emb = spherical_embedding(np.random.default_rng(2).integers(0, 9, size=(15, 3)))
    back = Embedding.from_json(emb.to_json())
    for name in ("points", "source_features", "eigen_spectrum", "raw"):
        assert np.array_equal(getattr(back, name), getattr(emb, name))
    assert (back.p, back.radius, back.clamp) == (emb.p, emb.radius, emb.clamp)


def test_dimension_too_large_warns_and_errors():
    with pytest.warns(UserWarning):
        emb = spherical_embedding([(0, 0), (1, 0), (2, 0)], p=3)
    assert emb.p <= 3
    with pytest.raises(InputError):
        spherical_embedding([(0, 0), (1, 0), (2, 0)], p=1)
    with pytest.raises(InputError):
        out_of_sample(embed_dissimilarity(np.array([[0.0, 1.0], [1.0, 0.0]])), (0.0,))
