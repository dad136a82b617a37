import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from exsr.errors import ConfigurationError, ShapeError
from exsr.fusion import (ExemplarEncoder, ExemplarFeatures, GuideGenerator,
                         Scale, WeightNet, fuse, normalize_weights)

from conftest import rand_images, tiny_model_config


# ---------------------------------------------------------------------------
# normalize_weights

def test_normalize_simple_pair():
    scores = torch.tensor([0.5, 1.5]).reshape(1, 2, 1, 1, 1)
    w = normalize_weights(scores)
    assert torch.allclose(w.flatten(), torch.tensor([0.25, 0.75]))


def test_normalize_single_exemplar_is_one():
    scores = torch.rand(3, 1, 1, 4, 4) + 0.1
    w = normalize_weights(scores)
    assert torch.equal(w, torch.ones_like(w))


def test_normalize_all_zero_falls_back_to_uniform():
    scores = torch.zeros(1, 4, 1, 2, 2)
    w = normalize_weights(scores)
    assert torch.allclose(w, torch.full_like(w, 0.25))


def test_normalize_rejects_bad_rank():
    with pytest.raises(ShapeError):
        normalize_weights(torch.rand(2, 3, 4, 4))


@settings(max_examples=40, deadline=None)
@given(
    k=st.integers(1, 5),
    hw=st.integers(1, 6),
    seed=st.integers(0, 2**31 - 1),
)
def test_normalize_properties(k, hw, seed):
    g = torch.Generator().manual_seed(seed)
    scores = torch.rand(2, k, 1, hw, hw, generator=g) * 3.0
    # zero out a random pixel column to exercise the fallback
    scores[0, :, 0, 0, 0] = 0.0
    w = normalize_weights(scores)
    assert (w >= 0).all()
    sums = w.sum(dim=1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)


# ---------------------------------------------------------------------------
# fuse

def brute_force_fuse(features: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Element-wise loop oracle for the weighted sum."""
    n, k, c, h, w = features.shape
    out = torch.zeros(n, 1, c, h, w, dtype=features.dtype)
    for ni in range(n):
        for ci in range(c):
            for yi in range(h):
                for xi in range(w):
                    acc = 0.0
                    for ki in range(k):
                        acc += float(weights[ni, ki, 0, yi, xi]) * \
                            float(features[ni, ki, ci, yi, xi])
                    out[ni, 0, ci, yi, xi] = acc
    return out


def test_fuse_hand_example():
    feats = torch.tensor([1.0, 2.0, 4.0]).reshape(1, 3, 1, 1, 1)
    weights = torch.tensor([0.5, 0.25, 0.25]).reshape(1, 3, 1, 1, 1)
    fused = fuse(feats, weights)
    assert fused.item() == pytest.approx(2.0)


def test_fuse_matches_loop_oracle():
    feats = rand_images(2, 3, 4, 5, 5, seed=1)
    weights = normalize_weights(torch.rand(2, 3, 1, 5, 5) + 0.01)
    assert torch.allclose(fuse(feats, weights), brute_force_fuse(feats, weights),
                          atol=1e-6)


def test_fuse_uniform_weights_is_mean():
    feats = rand_images(1, 4, 3, 6, 6, seed=2)
    weights = torch.full((1, 4, 1, 6, 6), 0.25)
    assert torch.allclose(fuse(feats, weights).squeeze(1), feats.mean(dim=1),
                          atol=1e-6)


def test_fuse_one_hot_selects_exemplar():
    feats = rand_images(1, 3, 2, 4, 4, seed=3)
    weights = torch.zeros(1, 3, 1, 4, 4)
    weights[:, 1] = 1.0
    assert torch.allclose(fuse(feats, weights).squeeze(1), feats[:, 1], atol=1e-7)


def test_fuse_shape_mismatch():
    with pytest.raises(ShapeError):
        fuse(torch.rand(1, 3, 2, 4, 4), torch.rand(1, 2, 1, 4, 4))


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 4), seed=st.integers(0, 2**31 - 1))
def test_fuse_convexity(k, seed):
    g = torch.Generator().manual_seed(seed)
    feats = torch.rand(1, k, 3, 4, 4, generator=g) * 4 - 2
    weights = normalize_weights(torch.rand(1, k, 1, 4, 4, generator=g) + 1e-3)
    fused = fuse(feats, weights)
    lo = feats.min(dim=1, keepdim=True).values
    hi = feats.max(dim=1, keepdim=True).values
    assert (fused >= lo - 1e-5).all() and (fused <= hi + 1e-5).all()


# ---------------------------------------------------------------------------
# encoder

def test_encoder_two_scales_paper_resolution():
    cfg = tiny_model_config(scale_factor=8, num_upsample_blocks=3,
                            lr_height=16, lr_width=16, num_exemplars=3,
                            feat_channels=8)
    enc = ExemplarEncoder(cfg)
    f_lr, f_2x = enc(rand_images(1, 3, 3, 128, 128, seed=4))
    assert f_lr.scale is Scale.LR and f_2x.scale is Scale.X2
    assert f_lr.data.shape == (1, 3, 8, 16, 16)
    assert f_2x.data.shape == (1, 3, 8, 32, 32)


def test_encoder_single_exemplar(tiny_config):
    enc = ExemplarEncoder(tiny_config)
    f_lr, f_2x = enc(rand_images(2, 1, 3, 32, 32, seed=5))
    assert f_lr.data.shape[1] == 1 and f_2x.data.shape[1] == 1


def test_encoder_identical_exemplars_give_identical_slices(tiny_config):
    enc = ExemplarEncoder(tiny_config)
    one = rand_images(1, 1, 3, 32, 32, seed=6)
    stack = one.expand(1, 2, 3, 32, 32).contiguous()
    f_lr, f_2x = enc(stack)
    assert torch.equal(f_lr.data[:, 0], f_lr.data[:, 1])
    assert torch.equal(f_2x.data[:, 0], f_2x.data[:, 1])


def test_encoder_rejects_wrong_resolution(tiny_config):
    enc = ExemplarEncoder(tiny_config)
    with pytest.raises(ConfigurationError):
        enc(rand_images(1, 2, 3, 16, 16, seed=7))


# ---------------------------------------------------------------------------
# weight net

def _features_and_guide(k=3, c=8, hw=8, seed=0):
    feats = ExemplarFeatures(rand_images(2, k, c, hw, hw, seed=seed), Scale.LR)
    guide = rand_images(2, 3, hw, hw, seed=seed + 100)
    return feats, guide


def test_weight_net_satisfies_invariants():
    torch.manual_seed(0)
    feats, guide = _features_and_guide()
    net = WeightNet(8)
    w = net(feats, guide)
    assert w.shape == (2, 3, 1, 8, 8)
    assert (w >= 0).all()
    sums = w.sum(dim=1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)


def test_weight_net_depends_on_guide():
    torch.manual_seed(0)
    feats, guide = _features_and_guide()
    net = WeightNet(8)
    w1 = net(feats, guide)
    w2 = net(feats, guide + 0.3)
    assert (w1 - w2).abs().max() > 1e-6


def test_weight_net_guide_mismatch():
    feats, _ = _features_and_guide(hw=8)
    net = WeightNet(8)
    with pytest.raises(ShapeError):
        net(feats, rand_images(2, 3, 4, 4, seed=1))


def test_weight_net_permutation_equivariance():
    torch.manual_seed(1)
    feats, guide = _features_and_guide(k=4)
    net = WeightNet(8)
    perm = torch.tensor([2, 0, 3, 1])
    w = net(feats, guide)
    w_perm = net(ExemplarFeatures(feats.data[:, perm], feats.scale), guide)
    assert torch.allclose(w_perm, w[:, perm], atol=1e-5)
    fused = fuse(feats.data, w)
    fused_perm = fuse(feats.data[:, perm], w_perm)
    assert torch.allclose(fused, fused_perm, atol=1e-5)


def test_single_exemplar_identity_through_fusion():
    torch.manual_seed(2)
    feats, guide = _features_and_guide(k=1)
    net = WeightNet(8)
    fused = fuse(feats.data, net(feats, guide))
    assert torch.equal(fused.squeeze(1), feats.data.squeeze(1))


def test_identical_exemplars_fuse_to_single_slice():
    torch.manual_seed(3)
    base = rand_images(1, 1, 8, 8, 8, seed=8)
    feats = ExemplarFeatures(base.expand(1, 3, 8, 8, 8).contiguous(), Scale.LR)
    guide = rand_images(1, 3, 8, 8, seed=9)
    net = WeightNet(8)
    fused = fuse(feats.data, net(feats, guide))
    assert torch.allclose(fused.squeeze(1), base.squeeze(1), atol=1e-5)


def test_fusion_path_gradient_check():
    """Analytic grads of a scalar loss through weights+fusion vs central
    finite differences, double precision, tiny problem (C=4, 4x4, K=2)."""
    torch.manual_seed(4)
    net = WeightNet(4, hidden=8).double()
    feats_data = rand_images(1, 2, 4, 4, 4, seed=10, dtype=torch.float64)
    guide = rand_images(1, 3, 4, 4, seed=11, dtype=torch.float64)
    target = rand_images(1, 1, 4, 4, 4, seed=12, dtype=torch.float64)

    def loss_value() -> torch.Tensor:
        feats = ExemplarFeatures(feats_data, Scale.LR)
        return (fuse(feats_data, net(feats, guide)) - target).pow(2).mean()

    loss = loss_value()
    params = [p for p in net.parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss, params)

    rng = np.random.default_rng(0)
    eps = 1e-6
    checked = 0
    for p, g in zip(params, grads):
        flat, gflat = p.data.view(-1), g.view(-1)
        for idx in rng.choice(flat.numel(), size=min(4, flat.numel()), replace=False):
            orig = flat[idx].item()
            flat[idx] = orig + eps
            up = loss_value().item()
            flat[idx] = orig - eps
            down = loss_value().item()
            flat[idx] = orig
            fd = (up - down) / (2 * eps)
            denom = max(abs(fd), abs(gflat[idx].item()), 1e-8)
            assert abs(fd - gflat[idx].item()) / denom < 1e-3
            checked += 1
    assert checked >= 10


# ---------------------------------------------------------------------------
# guide generator

@pytest.mark.parametrize("hw", [16, 8])
def test_guide_generator_doubles_resolution(hw):
    torch.manual_seed(5)
    gs = GuideGenerator(hidden=8)
    out = gs(rand_images(2, 3, hw, hw, seed=13))
    assert out.shape == (2, 3, 2 * hw, 2 * hw)


def test_guide_generator_output_in_image_range():
    torch.manual_seed(6)
    gs = GuideGenerator(hidden=8)
    out = gs(rand_images(4, 3, 8, 8, seed=14) * 5)
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_guide_generator_rejects_bad_input():
    gs = GuideGenerator()
    with pytest.raises(ShapeError):
        gs(torch.rand(2, 1, 8, 8))
