"""Optimization loop: alternating critic/generator updates with split
parameter groups, checkpointing, and deterministic resume.

One step runs ``n_critic`` critic updates on detached generator output,
then a single generator update. The main objective (content + perceptual
+ adversarial) backpropagates only into trunk, encoder and weight-net
parameters; the guide objective (guide content + guide perceptual)
only into the guide net. Weight nets get their own, much smaller
learning rate; Adam runs with beta1 = 0, beta2 = 0.99 throughout.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import random
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .adversarial import (Critic, FeatureExtractor, LossReport, build_critic,
                          content_loss, critic_loss, generator_adv_loss,
                          get_extractor, perceptual_loss, total_loss)
from .config import ModelConfig, TrainConfig
from .data import IdentityIndex, downsample, sample_batch
from .errors import ConfigurationError, TrainingDiverged
from .generator import SuperResolver, build_generator

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "exsr-ckpt"
CHECKPOINT_VERSION = 1


@dataclass
class TrainState:
    """Everything one training run mutates, plus what a resume needs."""

    config: ModelConfig
    generator: SuperResolver
    critic: Critic | None
    opt_gen: torch.optim.Adam
    opt_critic: torch.optim.Adam | None
    phi_p: FeatureExtractor
    phi_id: FeatureExtractor
    step: int = 0
    batch_rng: np.random.Generator = None

    @classmethod
    def initialize(cls, config: ModelConfig, train_cfg: TrainConfig,
                   seed: int = 0) -> "TrainState":
        config.validate()
        generator = build_generator(config, seed=seed)
        groups = generator.parameter_groups()
        opt_gen = torch.optim.Adam(
            [
                {"params": groups["weight_nets"], "lr": config.lr_weight_nets},
                {"params": groups["main"], "lr": config.lr_main},
                {"params": groups["guide"], "lr": config.lr_main},
            ],
            betas=(config.adam_beta1, config.adam_beta2),
        )
        critic = opt_critic = None
        if train_cfg.use_critic:
            critic = build_critic(config, seed=seed + 1)
            opt_critic = torch.optim.Adam(critic.parameters(), lr=config.lr_main,
                                          betas=(config.adam_beta1, config.adam_beta2))
        return cls(
            config=config,
            generator=generator,
            critic=critic,
            opt_gen=opt_gen,
            opt_critic=opt_critic,
            phi_p=get_extractor(config.perceptual_extractor),
            phi_id=get_extractor(config.identity_extractor),
            batch_rng=np.random.default_rng(seed),
        )

    def parameter_groups(self) -> dict[str, list[torch.nn.Parameter]]:
        return self.generator.parameter_groups()


def _losses(state: TrainState, lr, hr, ex,
            use_critic: bool) -> tuple[torch.Tensor, torch.Tensor, LossReport]:
    cfg = state.config
    out = state.generator(lr, ex if cfg.num_exemplars > 0 else None)
    l_c = content_loss(out.sr, hr)
    l_p = perceptual_loss(out.sr, hr, state.phi_p, state.phi_id)
    l_adv = generator_adv_loss(state.critic, out.sr) if use_critic else None
    hr_down = downsample(hr, cfg.scale_factor // 2)
    l_c_s = content_loss(out.guide_2x, hr_down)
    l_p_s = perceptual_loss(out.guide_2x, hr_down, state.phi_p, state.phi_id)
    tot_main, tot_gs = total_loss(l_c, l_p, l_adv, l_c_s, l_p_s, cfg)
    report = LossReport(
        l_c=l_c.item(), l_p=l_p.item(),
        l_adv=l_adv.item() if l_adv is not None else 0.0,
        l_c_s=l_c_s.item(), l_p_s=l_p_s.item(),
        total_main=tot_main.item(), total_gs=tot_gs.item(),
    )
    return tot_main, tot_gs, report


def _generator_update(state: TrainState, batch, use_critic: bool,
                      main_scale: float = 1.0, gs_scale: float = 1.0) -> LossReport:
    """Backprop each bracket into its own parameter group, then step.

    The scale arguments exist so tests can null one bracket without
    touching the loss coefficients.
    """
    lr, hr, ex = batch
    groups = state.generator.parameter_groups()
    tot_main, tot_gs, report = _losses(state, lr, hr, ex, use_critic)
    state.opt_gen.zero_grad(set_to_none=False)
    torch.autograd.backward(main_scale * tot_main,
                            inputs=groups["main"] + groups["weight_nets"],
                            retain_graph=True)
    torch.autograd.backward(gs_scale * tot_gs, inputs=groups["guide"])
    state.opt_gen.step()
    return report


def train_step(state: TrainState, batch, train_cfg: TrainConfig) -> LossReport:
    """One critic update (unless critic-free) followed by one generator update."""
    lr, hr, ex = batch
    use_critic = train_cfg.use_critic and state.critic is not None

    l_critic = l_gp = 0.0
    if use_critic:
        for _ in range(max(1, train_cfg.n_critic)):
            with torch.no_grad():
                fake = state.generator(lr, ex if state.config.num_exemplars > 0
                                       else None).sr
            loss_c, gp = critic_loss(state.critic, fake, hr,
                                     state.config.w_grad_penalty)
            state.opt_critic.zero_grad(set_to_none=False)
            loss_c.backward()
            state.opt_critic.step()
            l_critic, l_gp = loss_c.item(), gp.item()

    report = _generator_update(state, batch, use_critic)
    report.l_critic, report.l_gp = l_critic, l_gp

    values = [report.total_main, report.total_gs, report.l_critic]
    if not all(math.isfinite(v) for v in values):
        snap = _divergence_snapshot(state, report)
        raise TrainingDiverged(
            f"non-finite loss at step {state.step}: {report} "
            f"(snapshot: {snap})", snapshot_path=snap)

    state.step += 1
    return report


def _divergence_snapshot(state: TrainState, report: LossReport) -> str:
    path = Path(f"diverged_step{state.step}.ckpt")
    try:
        save_checkpoint(state, path)
    except Exception:  # the snapshot is best-effort diagnostics
        return "<unwritable>"
    return str(path)


def _decayed_lr(base: float, step: int, total: int) -> float:
    return base * max(0.0, 1.0 - step / max(1, total))


def train(state: TrainState, index: IdentityIndex, train_cfg: TrainConfig,
          callbacks=()) -> list[Path]:
    """Run the loop until the step budget; returns written checkpoint paths.

    Logs line-delimited JSON records to ``<out_dir>/train_log.jsonl`` and
    checkpoints atomically every ``checkpoint_every`` steps.
    """
    out_dir = Path(train_cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"
    written: list[Path] = []
    # group order fixed by TrainState.initialize: weight nets, main, guide
    base_lrs = [state.config.lr_weight_nets, state.config.lr_main,
                state.config.lr_main]

    with open(log_path, "a") as log_fh:
        while state.step < train_cfg.steps:
            if train_cfg.lr_decay:
                for group, base in zip(state.opt_gen.param_groups, base_lrs):
                    group["lr"] = _decayed_lr(base, state.step, train_cfg.steps)
            lr_img, hr, ex, _ = sample_batch(index, state.config, state.batch_rng)
            t0 = time.monotonic()
            report = train_step(state, (lr_img, hr, ex), train_cfg)
            for cb in callbacks:
                cb(state.step, report)
            if train_cfg.log_every and state.step % train_cfg.log_every == 0:
                rec = {"step": state.step, "wall_ms": (time.monotonic() - t0) * 1e3,
                       **dataclasses.asdict(report)}
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            if train_cfg.checkpoint_every and \
                    state.step % train_cfg.checkpoint_every == 0:
                ckpt = out_dir / f"step_{state.step:08d}.ckpt"
                save_checkpoint(state, ckpt)
                written.append(ckpt)

    final = out_dir / "final.ckpt"
    save_checkpoint(state, final)
    written.append(final)
    return written


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(state: TrainState, path: str | Path) -> None:
    """Atomic (write-temp-then-rename) checkpoint with RNG capture."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "model_config": dataclasses.asdict(state.config),
        "generator": state.generator.state_dict(),
        "critic": state.critic.state_dict() if state.critic else None,
        "opt_gen": state.opt_gen.state_dict(),
        "opt_critic": state.opt_critic.state_dict() if state.opt_critic else None,
        "rng": {
            "torch": torch.get_rng_state(),
            "numpy": state.batch_rng.bit_generator.state if state.batch_rng else None,
            "python": random.getstate(),
        },
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def read_checkpoint_header(path: str | Path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"{path} is not a checkpoint of this toolkit")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(
            f"checkpoint version {payload.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    return payload


def load_checkpoint(path: str | Path, train_cfg: TrainConfig | None = None,
                    expect_config: ModelConfig | None = None,
                    restore_rng: bool = True) -> TrainState:
    """Rebuild a TrainState; rejects architecture-incompatible configs."""
    payload = read_checkpoint_header(path)
    config = ModelConfig(**payload["model_config"]).validate()
    if expect_config is not None and \
            expect_config.arch_fields() != config.arch_fields():
        raise ConfigurationError(
            f"checkpoint architecture {config.arch_fields()} does not match "
            f"expected {expect_config.arch_fields()}")

    tc = train_cfg or TrainConfig(use_critic=payload["critic"] is not None)
    state = TrainState.initialize(config, tc, seed=0)
    state.generator.load_state_dict(payload["generator"])
    if payload["critic"] is not None and state.critic is not None:
        state.critic.load_state_dict(payload["critic"])
    state.opt_gen.load_state_dict(payload["opt_gen"])
    if payload["opt_critic"] is not None and state.opt_critic is not None:
        state.opt_critic.load_state_dict(payload["opt_critic"])
    state.step = payload["step"]
    if restore_rng:
        torch.set_rng_state(payload["rng"]["torch"])
        if payload["rng"]["numpy"] is not None:
            state.batch_rng = np.random.default_rng()
            state.batch_rng.bit_generator.state = payload["rng"]["numpy"]
        random.setstate(payload["rng"]["python"])
    return state
