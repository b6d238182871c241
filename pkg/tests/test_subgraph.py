import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from hsnet import oracles
from hsnet.errors import DimensionError, ParameterError, ShapeError
from hsnet.subgraph import (
    SSIM_C2,
    PatchSet,
    SGBConfig,
    aggregate_neighbors,
    build_knn_graph,
    downsample_half,
    extract_patches,
    patch_ssim,
    sgb_forward,
)


def pset(x):
    x = torch.as_tensor(np.asarray(x, dtype=np.float64))
    return PatchSet(x, coords=torch.zeros(x.shape[-2], 2, dtype=torch.long))


# --- extract_patches -------------------------------------------------------

def test_single_patch_is_whole_map():
    f = torch.tensor([[[1.0, 2.0], [3.0, 4.0]]])
    ps = extract_patches(f, patch=2, stride=2)
    assert ps.n == 1
    assert ps.vectors[0].tolist() == [1.0, 2.0, 3.0, 4.0]


def test_4x4_stride2_patches():
    f = torch.arange(16.0).reshape(1, 4, 4)
    ps = extract_patches(f, patch=2, stride=2)
    assert ps.n == 4
    assert ps.vectors[0].tolist() == [0, 1, 4, 5]
    assert ps.coords.tolist() == [[0, 0], [0, 2], [2, 0], [2, 2]]


def test_4x4_patch3_stride1_corners():
    ps = extract_patches(torch.zeros(1, 4, 4), patch=3, stride=1)
    assert ps.coords.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def test_channel_major_flattening_matches_loops(rng):
    f = rng.normal(size=(2, 5, 6))
    ps = extract_patches(torch.from_numpy(f), patch=3, stride=2)
    rows = []
    for r in range(0, 5 - 3 + 1, 2):
        for c in range(0, 6 - 3 + 1, 2):
            rows.append([f[ch, r + i, c + j] for ch in range(2) for i in range(3) for j in range(3)])
    np.testing.assert_array_equal(ps.vectors.numpy(), np.array(rows))


def test_patch_larger_than_map():
    with pytest.raises(DimensionError):
        extract_patches(torch.zeros(1, 2, 5), patch=3, stride=1)


# --- downsample_half --------------------------------------------------------

def test_downsample_constant():
    out = downsample_half(torch.full((2, 4, 6), 0.7, dtype=torch.float64))
    assert out.shape == (2, 2, 3)
    assert torch.allclose(out, torch.tensor(0.7, dtype=torch.float64))


def test_downsample_block_mean():
    assert downsample_half(torch.tensor([[[1.0, 3.0], [5.0, 7.0]]])).item() == 4.0


def test_downsample_matches_loop_oracle(rng):
    f = rng.normal(size=(2, 8, 8))
    np.testing.assert_allclose(downsample_half(torch.from_numpy(f)).numpy(), oracles.loop_block_mean(f), atol=1e-12)


def test_downsample_odd_rejected():
    with pytest.raises(DimensionError):
        downsample_half(torch.zeros(1, 3, 4))


# --- patch_ssim -------------------------------------------------------------

def test_ssim_identical_is_one(rng):
    p = torch.from_numpy(rng.normal(size=27))
    assert patch_ssim(p, p).item() == pytest.approx(1.0, abs=1e-12)


def test_ssim_equal_constants_is_one():
    p = torch.full((9,), 0.3, dtype=torch.float64)
    assert patch_ssim(p, p.clone()).item() == pytest.approx(1.0, abs=1e-12)


def test_ssim_negated_zero_mean():
    p = torch.tensor([1.0, -1.0, 2.0, -2.0], dtype=torch.float64)
    var = (1 + 1 + 4 + 4) / 4
    # means vanish, so the luminance term is C1/C1 = 1
    expected = (-2 * var + SSIM_C2) / (2 * var + SSIM_C2)
    got = patch_ssim(p, -p).item()
    assert got == pytest.approx(expected, rel=1e-12)
    assert got < 0


def test_ssim_length_mismatch():
    with pytest.raises(ShapeError):
        patch_ssim(torch.zeros(4), torch.zeros(5))


# --- build_knn_graph --------------------------------------------------------

def test_knn_complete_graph_sorted(rng):
    q, c = pset(rng.normal(size=(5, 4))), pset(rng.normal(size=(7, 4)))
    e = build_knn_graph(q, c, 7)
    assert sorted(e.neighbor_idx[0].tolist()) == list(range(7))
    assert torch.all(e.distances[:, 1:] >= e.distances[:, :-1])


def test_knn_hand_example():
    q = pset([[0.0, 0.0]])
    c = pset([[3.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    e = build_knn_graph(q, c, 2)
    assert e.neighbor_idx.tolist() == [[1, 2]]
    assert e.distances.tolist() == [[1.0, 2.0]]


def test_knn_random_matches_exhaustive(rng):
    q, c = rng.normal(size=(16, 12)), rng.normal(size=(64, 12))
    e = build_knn_graph(pset(q), pset(c), 8)
    idx, dist = oracles.exhaustive_knn(q, c, 8)
    np.testing.assert_array_equal(e.neighbor_idx.numpy(), idx)
    np.testing.assert_allclose(e.distances.numpy(), dist, atol=1e-9)


def test_knn_duplicates_lower_index_wins():
    c = pset([[1.0, 1.0], [5.0, 5.0], [1.0, 1.0]])
    e = build_knn_graph(pset([[0.0, 0.0]]), c, 2)
    assert e.neighbor_idx.tolist() == [[0, 2]]


def test_knn_ssim_attribute(rng):
    q, c = rng.normal(size=(3, 9)), rng.normal(size=(6, 9))
    e = build_knn_graph(pset(q), pset(c), 2)
    j = int(e.neighbor_idx[1, 0])
    assert e.ssim[1, 0].item() == pytest.approx(patch_ssim(torch.from_numpy(q[1]), torch.from_numpy(c[j])).item())
    assert torch.all(e.ssim.abs() <= 1.0)


def test_knn_k_too_large():
    with pytest.raises(ParameterError):
        build_knn_graph(pset(np.zeros((1, 2))), pset(np.zeros((3, 2))), 4)


@given(st.integers(1, 20), st.integers(1, 40), st.integers(1, 6), st.data())
def test_knn_property_matches_oracle(nq, nc, d, data):
    k = data.draw(st.integers(1, nc))
    seed = data.draw(st.integers(0, 2**31))
    g = np.random.default_rng(seed)
    # coarse grid values force plenty of exact ties
    q = g.integers(-2, 3, size=(nq, d)).astype(float)
    c = g.integers(-2, 3, size=(nc, d)).astype(float)
    e = build_knn_graph(pset(q), pset(c), k, with_ssim=False)
    idx, _ = oracles.exhaustive_knn(q, c, k)
    np.testing.assert_array_equal(e.neighbor_idx.numpy(), idx)


# --- aggregate_neighbors ----------------------------------------------------

def test_aggregate_k1_is_nearest(rng):
    q, c = pset(rng.normal(size=(4, 5))), pset(rng.normal(size=(9, 5)))
    e = build_knn_graph(q, c, 1)
    y = aggregate_neighbors(q, c, e, temperature=2.0)
    assert torch.equal(y, c.vectors[e.neighbor_idx[:, 0]])


def test_aggregate_equidistant_is_mean():
    q = pset([[0.0, 0.0]])
    c = pset([[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    y = aggregate_neighbors(q, c, build_knn_graph(q, c, 2), temperature=1.0)
    np.testing.assert_allclose(y.numpy(), [[0.5, 0.5]], atol=1e-15)


def test_aggregate_full_matches_dense_oracle(rng):
    q, c = rng.normal(size=(20, 6)), rng.normal(size=(30, 6))
    e = build_knn_graph(pset(q), pset(c), 30)
    y = aggregate_neighbors(pset(q), pset(c), e, temperature=6.0)
    np.testing.assert_allclose(y.numpy(), oracles.dense_nonlocal(q, c, 6.0), atol=1e-10)


def test_aggregate_weights_are_convex(rng):
    q, c = pset(rng.normal(size=(10, 4))), pset(rng.normal(size=(15, 4)))
    e = build_knn_graph(q, c, 5)
    # one-hot values expose the weight vector of every query
    w = aggregate_neighbors(q, c, e, temperature=1.5, values=torch.eye(15, dtype=torch.float64))
    assert torch.all(w >= 0)
    assert torch.all((w.sum(1) - 1).abs() < 1e-6)
    for i in range(10):
        assert set(torch.nonzero(w[i]).ravel().tolist()) <= set(e.neighbor_idx[i].tolist())


def test_aggregate_low_temperature_picks_nearest(rng):
    q, c = pset(rng.normal(size=(8, 4))), pset(rng.normal(size=(12, 4)))
    e = build_knn_graph(q, c, 4)
    y = aggregate_neighbors(q, c, e, temperature=1e-4)
    nearest = c.vectors[e.neighbor_idx[:, 0]]
    assert torch.max((y - nearest).abs()).item() < 1e-3


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_aggregate_bad_temperature(rng, t):
    q = pset(rng.normal(size=(2, 3)))
    with pytest.raises(ParameterError):
        aggregate_neighbors(q, q, build_knn_graph(q, q, 1), temperature=t)


# --- sgb_forward ------------------------------------------------------------

def eye(c):
    return torch.eye(c, dtype=torch.float64)


def test_sgb_constant_identity_doubles():
    f = torch.full((3, 8, 8), 0.25, dtype=torch.float64)
    out = sgb_forward(f, eye(3), eye(3), eye(3))
    torch.testing.assert_close(out, 2 * f)


def test_sgb_zero_out_projection_is_residual(rng):
    f = torch.from_numpy(rng.normal(size=(4, 8, 8)))
    out = sgb_forward(f, eye(4), eye(4), torch.zeros(4, 4, dtype=torch.float64))
    assert torch.equal(out, f)


def test_sgb_shape_and_finite(rng):
    f = torch.from_numpy(rng.normal(size=(4, 8, 8)))
    th = [torch.from_numpy(rng.normal(size=(4, 4))) for _ in range(3)]
    out = sgb_forward(f, *th)
    assert out.shape == (4, 8, 8)
    assert torch.isfinite(out).all()


def test_sgb_channel_permutation(rng):
    c = 4
    f = torch.from_numpy(rng.normal(size=(c, 10, 10)))
    th = [torch.from_numpy(rng.normal(size=(c, c))) for _ in range(3)]
    perm = torch.tensor([2, 0, 3, 1])
    base = sgb_forward(f, *th)
    permuted = sgb_forward(f[perm], *[t[perm][:, perm] for t in th])
    torch.testing.assert_close(permuted, base[perm])


def test_sgb_batched_equals_single(rng):
    f = torch.from_numpy(rng.normal(size=(3, 2, 12, 10)))
    th = [torch.from_numpy(rng.normal(size=(2, 2))) for _ in range(3)]
    batched = sgb_forward(f, *th)
    for b in range(3):
        torch.testing.assert_close(batched[b], sgb_forward(f[b], *th))


def test_sgb_small_map_falls_back_to_same_scale(rng):
    # 4x4 cannot host a 3x3 patch after halving
    f = torch.from_numpy(rng.normal(size=(2, 4, 4)))
    out = sgb_forward(f, eye(2), eye(2), eye(2), SGBConfig(k=5))
    assert out.shape == f.shape and torch.isfinite(out).all()


def test_sgb_gradients_reach_embeddings(rng):
    # 16x16 leaves 9 half-scale candidates, so the weights are not trivially 1
    f = torch.from_numpy(rng.normal(size=(2, 16, 16)))
    th = [torch.from_numpy(rng.normal(size=(2, 2))).requires_grad_() for _ in range(3)]
    sgb_forward(f, *th).square().sum().backward()
    assert all(t.grad is not None and t.grad.abs().sum() > 0 for t in th)
