import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

import oracles
from mcoco.kmeans import kmeans
from mcoco.model import Architecture, MCoCoNet, init_centroids, soft_assign


def toy_net(dtype=torch.float64, seed=0):
    arch = Architecture(view_dims=[6, 5], latent_dim=3, n_clusters=3,
                        hidden_dims=[[4], [4]], generator_hidden=8)
    return MCoCoNet(arch, seed=seed, dtype=dtype)


def test_default_architecture_follows_dec_widths():
    arch = Architecture(view_dims=[784, 79])
    assert arch.hidden_dims == [[500, 500, 2000], [500, 500, 2000]]
    net = MCoCoNet(arch)
    widths = [m.out_features for m in net.encoders[0] if isinstance(m, torch.nn.Linear)]
    assert widths == [500, 500, 2000, 10]
    widths = [m.out_features for m in net.decoders[1] if isinstance(m, torch.nn.Linear)]
    assert widths == [2000, 500, 500, 79]


def test_init_is_fan_in_uniform_zero_bias():
    net = MCoCoNet(Architecture(view_dims=[50, 20], hidden_dims=[[40], [40]]), seed=3)
    first = net.encoders[0][0]
    assert first.weight.abs().max() <= 1 / np.sqrt(50)
    assert torch.all(first.bias == 0)
    other = MCoCoNet(Architecture(view_dims=[50, 20], hidden_dims=[[40], [40]]), seed=3)
    for a, b in zip(net.parameters(), other.parameters()):
        assert torch.equal(a, b)


def test_encode_decode_shapes():
    net = toy_net()
    assert net.encode(0, torch.zeros(0, 6, dtype=torch.float64)).shape == (0, 3)
    assert net.decode(1, torch.zeros(0, 3, dtype=torch.float64)).shape == (0, 5)
    x = torch.rand(7, 5, dtype=torch.float64)
    assert net.decode(1, net.encode(1, x)).shape == x.shape


def test_encode_rejects_wrong_width():
    net = toy_net()
    with pytest.raises(ValueError, match="expected"):
        net.encode(0, torch.zeros(2, 5, dtype=torch.float64))
    with pytest.raises(ValueError):
        net.semantic_labels(torch.zeros(2, 4, dtype=torch.float64))


def test_duplicate_rows_map_identically():
    net = toy_net()
    x = torch.rand(1, 6, dtype=torch.float64).repeat(3, 1)
    z = net.encode(0, x)
    assert torch.equal(z[0], z[1]) and torch.equal(z[1], z[2])
    s = net.semantic_labels(z)
    assert torch.equal(s[0], s[2])


def test_encoder_gradient_matches_finite_differences():
    net = toy_net()
    x = torch.rand(5, 6, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    probe = torch.linspace(-1, 1, 15, dtype=torch.float64).reshape(5, 3)
    weight = net.encoders[0][0].weight
    loss = (net.encode(0, x) * probe).sum()
    (grad,) = torch.autograd.grad(loss, weight)
    h = 1e-5
    for idx in [(0, 0), (1, 3), (3, 5), (2, 2)]:
        with torch.no_grad():
            orig = weight[idx].item()
            weight[idx] = orig + h
            up = (net.encode(0, x) * probe).sum().item()
            weight[idx] = orig - h
            down = (net.encode(0, x) * probe).sum().item()
            weight[idx] = orig
        fd = (up - down) / (2 * h)
        assert abs(fd - grad[idx].item()) <= 1e-4 * max(abs(fd), abs(grad[idx].item())) + 1e-9


def test_semantic_labels_row_stochastic_and_shared():
    net = toy_net()
    z = torch.randn(10, 3, dtype=torch.float64) * 5
    s = net.semantic_labels(z)
    assert torch.all(s >= 0)
    assert torch.allclose(s.sum(1), torch.ones(10, dtype=torch.float64), atol=1e-5)

    x0 = torch.rand(4, 6, dtype=torch.float64)
    x1 = torch.rand(4, 5, dtype=torch.float64)
    before0 = net.semantic_labels(net.encode(0, x0)).detach().clone()
    before1 = net.semantic_labels(net.encode(1, x1)).detach().clone()
    with torch.no_grad():
        net.encoders[0][0].weight.add_(0.5)
    assert not torch.equal(net.semantic_labels(net.encode(0, x0)), before0)
    assert torch.equal(net.semantic_labels(net.encode(1, x1)), before1)
    with torch.no_grad():
        net.generator[0].weight.add_(0.5)
    assert not torch.equal(net.semantic_labels(net.encode(1, x1)), before1)


def test_soft_assign_examples():
    mu = torch.tensor([[0.0, 0.0], [1.0, 0.0]], dtype=torch.float64)
    q = soft_assign(torch.tensor([[0.0, 0.0]], dtype=torch.float64), mu)
    assert torch.allclose(q, torch.tensor([[2 / 3, 1 / 3]], dtype=torch.float64), atol=1e-15)

    mu = torch.tensor([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], dtype=torch.float64)
    q = soft_assign(torch.zeros(1, 2, dtype=torch.float64), mu)
    assert torch.allclose(q, torch.full((1, 4), 0.25, dtype=torch.float64))


def test_soft_assign_matches_loop_oracle(rng):
    for _ in range(20):
        z = rng.normal(size=(5, 3))
        mu = rng.normal(size=(4, 3))
        q = soft_assign(torch.tensor(z), torch.tensor(mu)).numpy()
        np.testing.assert_allclose(q, oracles.student_t(z, mu), atol=1e-6, rtol=0)


def test_soft_assign_rejects_nonfinite():
    with pytest.raises(ValueError):
        soft_assign(torch.tensor([[np.nan, 0.0]]), torch.zeros(2, 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_soft_assign_properties(n, k, seed):
    g = np.random.default_rng(seed)
    z = torch.tensor(g.normal(scale=3, size=(n, 4)))
    mu = torch.tensor(g.normal(scale=3, size=(k, 4)))
    q = soft_assign(z, mu)
    assert torch.all(q > 0)
    assert torch.allclose(q.sum(1), torch.ones(n, dtype=torch.float64), atol=1e-5)
    perm = torch.as_tensor(g.permutation(k))
    assert torch.allclose(soft_assign(z, mu[perm]), q[:, perm], atol=1e-12)


def test_kmeans_recovers_separated_clouds(rng):
    centers = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0], [50.0, 50.0]])
    groups = [c + rng.uniform(-1, 1, size=(30, 2)) for c in centers]
    x = np.concatenate(groups)
    found, _, _ = kmeans(x, 4, seed=1)
    truth = np.array([g.mean(0) for g in groups])
    cost = ((found[:, None] - truth[None]) ** 2).sum(-1)
    rows, cols = linear_sum_assignment(cost)
    np.testing.assert_allclose(found[rows], truth[cols], atol=1e-3)


def test_kmeans_degenerate_cases(rng):
    x = rng.normal(size=(20, 3))
    c, labels, wcss = kmeans(x, 1)
    np.testing.assert_allclose(c[0], x.mean(0), atol=1e-12)
    pts = rng.normal(size=(5, 2))
    c, labels, wcss = kmeans(pts, 5)
    assert wcss == 0
    assert sorted(map(tuple, c)) == sorted(map(tuple, pts))
    with pytest.raises(ValueError):
        kmeans(pts, 6)


def test_kmeans_with_duplicate_points_keeps_k_centers():
    x = np.array([[0.0, 0.0]] * 6 + [[1.0, 1.0]] * 2)
    c, labels, _ = kmeans(x, 3, n_restarts=3)
    assert c.shape == (3, 2)
    assert np.isfinite(c).all()


def test_init_centroids_per_view(rng):
    z0 = np.concatenate([rng.normal(size=(10, 3)), rng.normal(size=(10, 3)) + 30])
    z1 = np.concatenate([rng.normal(size=(10, 3)) - 30, rng.normal(size=(10, 3))])
    cents = init_centroids([z0, z1], 2)
    assert len(cents) == 2 and cents[0].shape == (2, 3)
    assert not np.allclose(cents[0][0], cents[0][1])
    with pytest.raises(ValueError):
        init_centroids([z0[:1], z1[:1]], 2)
