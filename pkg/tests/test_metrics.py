import json
from pathlib import Path

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from exsr.errors import ShapeError
from exsr.fusion import normalize_weights
from exsr.metrics import (MetricReport, psnr, render_weight_heatmap, ssim)

from conftest import rand_images

FIXTURES = Path(__file__).parent / "fixtures"


def unit_images(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(*shape, generator=g)


# ---------------------------------------------------------------------------
# psnr

def test_psnr_identical_capped():
    x = unit_images(2, 3, 16, 16, seed=0)
    assert torch.all(psnr(x, x) == 99.0)


def test_psnr_constant_error():
    x = unit_images(1, 3, 16, 16, seed=1) * 0.8
    assert psnr(x, x + 0.1)[0].item() == pytest.approx(20.0, abs=1e-6)


def test_psnr_symmetry_and_monotonicity():
    x = unit_images(1, 3, 16, 16, seed=2) * 0.5
    values = [psnr(x, x + e)[0].item() for e in (0.05, 0.1, 0.2, 0.4)]
    assert values == sorted(values, reverse=True)
    assert psnr(x, x + 0.2)[0].item() == pytest.approx(psnr(x + 0.2, x)[0].item())


def test_psnr_nonnegative_in_unit_range():
    a = unit_images(4, 3, 16, 16, seed=3)
    b = unit_images(4, 3, 16, 16, seed=4)
    assert (psnr(a, b) >= 0).all()


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 16, 16))


# ---------------------------------------------------------------------------
# ssim

def test_ssim_identical_is_exactly_one():
    x = unit_images(3, 3, 16, 16, seed=5)
    assert torch.all(ssim(x, x) == 1.0)


def test_ssim_constant_images_luminance_only():
    a = torch.full((1, 3, 16, 16), 0.25)
    b = torch.full((1, 3, 16, 16), 0.75)
    # flat images: contrast/structure terms are 1, luminance term remains
    c1 = 0.01 ** 2
    expected = (2 * 0.25 * 0.75 + c1) / (0.25 ** 2 + 0.75 ** 2 + c1)
    assert ssim(a, b)[0].item() == pytest.approx(expected, abs=1e-6)
    assert expected == pytest.approx(0.6001, abs=1e-4)


def test_ssim_symmetry():
    a = unit_images(1, 3, 24, 24, seed=6)
    b = unit_images(1, 3, 24, 24, seed=7)
    assert ssim(a, b)[0].item() == pytest.approx(ssim(b, a)[0].item(), abs=1e-12)


def test_ssim_rejects_small_images():
    with pytest.raises(ShapeError):
        ssim(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_ssim_bounded(seed):
    g = torch.Generator().manual_seed(seed)
    a = torch.rand(1, 3, 16, 16, generator=g)
    b = torch.rand(1, 3, 16, 16, generator=g)
    v = ssim(a, b)[0].item()
    assert -1.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# parity with the pinned independent reference

def _oracle_pairs(n_pairs=20, size=48, seed=123):
    rng = np.random.default_rng(seed)
    for _ in range(n_pairs):
        a = rng.random((size, size, 3))
        if rng.random() < 0.5:
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        else:
            b = rng.random((size, size, 3))
        yield a, b


def test_metrics_match_pinned_reference():
    expected = json.loads((FIXTURES / "metric_oracle.json").read_text())
    for (a, b), ref in zip(_oracle_pairs(), expected):
        ta = torch.from_numpy(np.moveaxis(a, -1, 0)).unsqueeze(0)
        tb = torch.from_numpy(np.moveaxis(b, -1, 0)).unsqueeze(0)
        assert ssim(ta, tb)[0].item() == pytest.approx(ref["ssim"], abs=1e-4)
        assert psnr(ta, tb)[0].item() == pytest.approx(ref["psnr"], abs=1e-3)


# ---------------------------------------------------------------------------
# report

def test_metric_report_aggregates():
    rep = MetricReport(method="x", ssim_values=[0.5, 0.7], psnr_values=[20, 22])
    assert rep.ssim_mean == pytest.approx(0.6)
    assert rep.psnr_mean == pytest.approx(21.0)
    assert rep.summary()["count"] == 2
    assert rep.summary()["color_space"] == "rgb-mean"


def test_metric_report_save(tmp_path):
    rep = MetricReport(method="x", ssim_values=[0.5], psnr_values=[20])
    rep.save(tmp_path / "rep.json")
    doc = json.loads((tmp_path / "rep.json").read_text())
    assert doc["method"] == "x" and doc["ssim_values"] == [0.5]


def test_metric_report_save_csv(tmp_path):
    rep = MetricReport(method="x", ssim_values=[0.5, 0.6], psnr_values=[20, 21])
    rep.save(tmp_path / "rep.csv")
    lines = (tmp_path / "rep.csv").read_text().splitlines()
    assert lines[0] == "index,method,ssim,psnr_db"
    assert len(lines) == 3 and lines[1].startswith("0,x,0.5,")


# ---------------------------------------------------------------------------
# heatmaps

def test_heatmap_counts_and_shape():
    w = normalize_weights(torch.rand(1, 3, 1, 16, 16) + 0.01)
    ex = rand_images(1, 3, 3, 128, 128, seed=8)
    overlays = render_weight_heatmap(w, ex)
    assert overlays.shape == (1, 3, 128, 128, 3)
    assert overlays.dtype == np.uint8


def test_heatmap_uniform_weights_uniform_color():
    w = torch.full((1, 2, 1, 4, 4), 0.5)
    ex = torch.zeros(1, 2, 3, 32, 32)
    overlays = render_weight_heatmap(w, ex)
    flat = overlays.reshape(2, -1, 3)
    # constant weight + constant exemplar -> constant overlay color
    assert (flat[0] == flat[0][0]).all() and (flat[1] == flat[1][0]).all()
    assert (flat[0] == flat[1]).all()


def test_heatmap_one_hot_marks_hot_exemplar():
    w = torch.zeros(1, 2, 1, 4, 4)
    w[:, 1] = 1.0
    ex = torch.zeros(1, 2, 3, 32, 32)
    overlays = render_weight_heatmap(w, ex).astype(np.int32)
    # jet: weight 1 -> red-dominant, weight 0 -> blue-dominant
    hot, cold = overlays[0, 1], overlays[0, 0]
    assert hot[..., 0].mean() > hot[..., 2].mean()
    assert cold[..., 2].mean() > cold[..., 0].mean()


def test_heatmap_count_mismatch():
    w = torch.rand(1, 3, 1, 4, 4)
    ex = torch.rand(1, 2, 3, 32, 32)
    with pytest.raises(ShapeError):
        render_weight_heatmap(w, ex)
