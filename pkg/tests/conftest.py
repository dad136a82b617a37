import pytest
import torch

from exsr.config import ModelConfig, TrainConfig
from exsr.data import index_directory
from exsr.synthetic import generate_corpus
from exsr.training import TrainState, save_checkpoint, train


def tiny_model_config(**overrides) -> ModelConfig:
    """4x model on 8px inputs; small enough for gradient checks and loops."""
    base = dict(
        scale_factor=4, num_upsample_blocks=2, num_res_blocks=1,
        num_exemplars=2, batch_size=2, lr_height=8, lr_width=8,
        feat_channels=8, width=8, critic_width=8,
        perceptual_extractor="randconv:11", identity_extractor="randconv:23",
    )
    base.update(overrides)
    return ModelConfig(**base).validate()


@pytest.fixture
def tiny_config() -> ModelConfig:
    return tiny_model_config()


@pytest.fixture(scope="session")
def corpus_128(tmp_path_factory):
    """Small 128px identity-grouped corpus for data-pipeline tests."""
    root = tmp_path_factory.mktemp("corpus128")
    generate_corpus(root, num_identities=10, images_per_identity=7,
                    size=128, seed=3)
    return root


@pytest.fixture(scope="session")
def corpus_32(tmp_path_factory):
    """32px toy corpus for fast end-to-end training and inference."""
    root = tmp_path_factory.mktemp("corpus32")
    generate_corpus(root, num_identities=8, images_per_identity=7,
                    size=32, seed=5)
    return root


@pytest.fixture(scope="session")
def toy_index(corpus_32):
    return index_directory(corpus_32, hr_size=32)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory, toy_index):
    """A briefly trained toy model plus its checkpoint on disk."""
    cfg = tiny_model_config(num_exemplars=3, batch_size=4, width=12)
    out_dir = tmp_path_factory.mktemp("toy_run")
    tcfg = TrainConfig(steps=60, use_critic=False, seed=0,
                       checkpoint_every=0, log_every=0, out_dir=str(out_dir))
    torch.manual_seed(0)
    state = TrainState.initialize(cfg, tcfg, seed=0)
    train(state, toy_index, tcfg)
    ckpt = out_dir / "toy.ckpt"
    save_checkpoint(state, ckpt)
    return {"state": state, "config": cfg, "checkpoint": ckpt,
            "index": toy_index}


def rand_images(*shape, seed=0, dtype=torch.float32) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return torch.rand(*shape, generator=g, dtype=dtype) * 2.0 - 1.0
