"""Experiment orchestration: the two-stage training paradigm (denoiser
pre-training, then policy learning with the denoiser frozen), evaluation
on a held-out session-seed range, the diffusion-step sweep, and the
motivation analyses. The CLI is a thin wrapper over these functions."""

from __future__ import annotations

import sys
from itertools import product

import numpy as np

from .agent import Agent, ManagerAction, Trainer, evaluate, score_items, select_slate
from .config import EVAL_SEED_OFFSET, RunConfig, render_config
from .diffusion import Denoiser, collect_pairs, make_schedule, purify, train_dsrm
from .env import RecEnv
from .metrics import MetricsReport, session_stats
from .persistence import (checkpoint_param_hash, load_checkpoint,
                          save_checkpoint, write_csv, write_embedding_dump,
                          write_results)
from . import config as config_mod


def log(msg: str):
    print(msg, file=sys.stderr)


def experiment_plan(variants, seeds=(11, 15, 19), max_lens=(30, 50)):
    """Cartesian run plan in fixed order: variant-major, then seed, then
    max_len."""
    return [
        {"variant": v, "seed": s, "max_len": m}
        for v, s, m in product(variants, seeds, max_lens)
    ]


# -- stage I ----------------------------------------------------------------

def run_train_dsrm(cfg: RunConfig, seed: int, ckpt_path, loss_csv_path=None):
    """Collect paired data from uniform-random rollouts and fit the
    denoiser. Saves a checkpoint and optionally the loss curve."""
    env = RecEnv(cfg.env)
    pair_rng = np.random.default_rng([cfg.env.seed, seed, 10])
    clean, noisy, _ = collect_pairs(env, cfg.dsrm.n_pairs, pair_rng)
    denoiser, schedule, curve = train_dsrm(clean, noisy, cfg.dsrm, seed=seed)
    tensors = {f"denoiser.{k}": v for k, v in denoiser.net.parameters().items()}
    save_checkpoint(ckpt_path, tensors, render_config(cfg))
    if loss_csv_path is not None:
        write_csv(loss_csv_path, ["epoch", "loss"],
                  [[i + 1, l] for i, l in enumerate(curve)])
    if curve:
        log(f"stage I: {len(curve)} epochs, loss {curve[0]:.4f} -> {curve[-1]:.4f}")
    return denoiser, schedule, curve


def load_denoiser(ckpt_path):
    """Rebuild a denoiser (and its schedule) from a checkpoint."""
    tensors, cfg_text = load_checkpoint(ckpt_path)
    cfg = config_mod.parse_config(cfg_text)
    denoiser = Denoiser(cfg.env.d, hidden=tuple(cfg.dsrm.hidden),
                        time_dim=cfg.dsrm.time_dim, k_steps=cfg.dsrm.k_steps)
    params = {k.split(".", 1)[1]: v for k, v in tensors.items()
              if k.startswith("denoiser.")}
    denoiser.net.set_parameters(params)
    schedule = make_schedule(cfg.dsrm.k_steps, cfg.dsrm.beta_min, cfg.dsrm.beta_max) \
        if cfg.dsrm.k_steps > 0 else None
    return denoiser, schedule, cfg


def denoiser_hash(denoiser: Denoiser) -> str:
    return checkpoint_param_hash(
        {f"denoiser.{k}": v for k, v in denoiser.net.parameters().items()})


# -- stage II ---------------------------------------------------------------

def run_train_policy(cfg: RunConfig, seed: int, dsrm_ckpt, ckpt_path,
                     train_csv_path=None):
    """PPO training for the configured variant. The denoiser is loaded from
    its checkpoint and never updated; its parameter hash is checked before
    and after training."""
    variant = cfg.hrl.variant
    denoiser = schedule = None
    if variant in ("DSRM-HRL", "FLAT"):
        if dsrm_ckpt is None:
            raise ValueError(f"variant {variant} requires a denoiser checkpoint")
        denoiser, schedule, _ = load_denoiser(dsrm_ckpt)
        hash_before = denoiser_hash(denoiser)
    env_cfg = cfg.env
    env = RecEnv(env_cfg)
    agent = Agent(cfg.hrl, env_cfg.d, denoiser=denoiser, schedule=schedule, seed=seed)
    trainer = Trainer(env, agent, cfg.hrl, seed=seed)
    rows = []
    trainer.train(log_rows=rows)
    if denoiser is not None:
        hash_after = denoiser_hash(denoiser)
        if hash_before != hash_after:
            raise RuntimeError("denoiser parameters changed during stage II")
        log(f"denoiser frozen: hash {hash_before[:16]} unchanged")
    tensors = {f"policy.{k}": v for k, v in agent.policy.parameters().items()}
    tensors.update({f"value.{k}": v
                    for k, v in agent.value_net.net.parameters().items()})
    if denoiser is not None:
        tensors.update({f"denoiser.{k}": v
                        for k, v in denoiser.net.parameters().items()})
    save_checkpoint(ckpt_path, tensors, render_config(cfg))
    if train_csv_path is not None:
        write_csv(train_csv_path,
                  ["update", "surrogate", "value_loss", "entropy",
                   "mean_omega_acc", "mean_omega_fair"],
                  [[r["update"], r["surrogate"], r["value_loss"], r["entropy"],
                    r["mean_omega_acc"], r["mean_omega_fair"]] for r in rows])
    return agent


def load_agent(ckpt_path):
    """Rebuild an agent (policy, value net, optional denoiser) from a
    policy checkpoint."""
    tensors, cfg_text = load_checkpoint(ckpt_path)
    cfg = config_mod.parse_config(cfg_text)
    denoiser = schedule = None
    if any(k.startswith("denoiser.") for k in tensors):
        denoiser = Denoiser(cfg.env.d, hidden=tuple(cfg.dsrm.hidden),
                            time_dim=cfg.dsrm.time_dim, k_steps=cfg.dsrm.k_steps)
        denoiser.net.set_parameters(
            {k.split(".", 1)[1]: v for k, v in tensors.items()
             if k.startswith("denoiser.")})
        if cfg.dsrm.k_steps > 0:
            schedule = make_schedule(cfg.dsrm.k_steps, cfg.dsrm.beta_min,
                                     cfg.dsrm.beta_max)
    agent = Agent(cfg.hrl, cfg.env.d, denoiser=denoiser, schedule=schedule)
    agent.policy.net.set_parameters(
        {k.split(".", 2)[2]: v for k, v in tensors.items()
         if k.startswith("policy.net.")})
    agent.policy.log_std = tensors["policy.log_std"].copy()
    agent.value_net.net.set_parameters(
        {k.split(".", 1)[1]: v for k, v in tensors.items()
         if k.startswith("value.")})
    return agent, cfg


def run_eval(ckpt_path, episodes: int | None = None,
             results_path=None) -> MetricsReport:
    """Greedy evaluation of a policy checkpoint on held-out session seeds
    (train seed range shifted by a fixed offset)."""
    agent, cfg = load_agent(ckpt_path)
    episodes = cfg.eval.episodes if episodes is None else episodes
    env = RecEnv(cfg.env)
    outcomes = evaluate(env, agent, episodes, base_seed=cfg.env.seed,
                        seed_offset=EVAL_SEED_OFFSET)
    report = session_stats(outcomes, env.catalog, variant=cfg.hrl.variant,
                           seed=cfg.env.seed, max_len=cfg.env.max_len)
    if results_path is not None:
        write_results(results_path, [report])
    log(f"eval[{cfg.hrl.variant} seed={cfg.env.seed}]: "
        f"Len={report.len_mean:.3f} AD={report.ad_mean:.3f} "
        f"(eval seeds offset by {EVAL_SEED_OFFSET}, disjoint from training)")
    return report


# -- sweeps and analyses ------------------------------------------------------

def run_sweep_steps(cfg: RunConfig, seed: int, steps: list[int], out_dir):
    """Retrain the denoiser per diffusion-step count, run the full pipeline,
    and report one eval row per K plus a middle-vs-endpoints summary."""
    import copy
    import os
    reports = []
    for k in steps:
        kcfg = copy.deepcopy(cfg)
        kcfg.dsrm.k_steps = k
        kcfg.validate()
        dsrm_ckpt = os.path.join(out_dir, f"dsrm_k{k}.ckpt")
        pol_ckpt = os.path.join(out_dir, f"policy_k{k}.ckpt")
        run_train_dsrm(kcfg, seed, dsrm_ckpt)
        run_train_policy(kcfg, seed, dsrm_ckpt, pol_ckpt)
        report = run_eval(pol_ckpt)
        reports.append((k, report))
    rows = [[k, r.len_mean, r.r_each_mean, r.r_cum_mean, r.ad_mean]
            for k, r in reports]
    write_csv(f"{out_dir}/sweep_steps.csv",
              ["k_steps", "len_mean", "r_each_mean", "r_cum_mean", "ad_mean"], rows)
    summary = None
    if len(reports) >= 3:
        lens = [r.len_mean for _, r in reports]
        mid = len(reports) // 2
        summary = bool(lens[mid] >= lens[0] and lens[mid] >= lens[-1])
        log(f"sweep: middle K={reports[mid][0]} "
            f"{'wins' if summary else 'does not win'} on Len")
    return reports, summary


def popularity_reward_regression(cfg: RunConfig, n_steps: int = 10_000,
                                 seed: int = 0):
    """Random-policy rollouts; least-squares fit of per-item mean observed
    reward against log(1+exposure). Returns (r_squared, per-item rows)."""
    env = RecEnv(cfg.env)
    rng = np.random.default_rng([cfg.env.seed, seed, 20])
    reward_sum = np.zeros(cfg.env.n_items)
    logexp_sum = np.zeros(cfg.env.n_items)
    reward_cnt = np.zeros(cfg.env.n_items)
    steps = 0
    while steps < n_steps:
        env.reset(int(rng.integers(0, 2**31 - 1)))
        done = False
        while not done and steps < n_steps:
            slate = env.random_slate()
            # exposure at serve time: the bias an impression actually saw
            logexp_sum[slate] += np.log1p(
                env.catalog.exposure[slate].astype(np.float64))
            rewards, _, done = env.step(slate)
            reward_sum[slate] += rewards
            reward_cnt[slate] += 1
            steps += 1
    seen = reward_cnt > 0
    mean_r = reward_sum[seen] / reward_cnt[seen]
    log_exp = logexp_sum[seen] / reward_cnt[seen]
    a = np.vstack([log_exp, np.ones_like(log_exp)]).T
    coef, *_ = np.linalg.lstsq(a, mean_r, rcond=None)
    resid = mean_r - a @ coef
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((mean_r - mean_r.mean())**2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    ids = np.flatnonzero(seen)
    rows = [[int(i), float(le), float(mr)]
            for i, le, mr in zip(ids, log_exp, mean_r)]
    return r2, rows


def _fixed_policy_outcomes(cfg: RunConfig, denoiser, schedule, use_purified,
                           episodes: int, seed: int):
    """Evaluate one fixed scoring policy on raw vs purified states."""
    from .env import SessionOutcome
    env = RecEnv(cfg.env)
    action = ManagerAction(cfg.hrl.flat_omega_acc, cfg.hrl.flat_omega_fair)
    outcomes = []
    for i in range(episodes):
        obs = env.reset(EVAL_SEED_OFFSET + seed * 100_000 + i)
        rewards_log, slates_log = [], []
        done = False
        while not done:
            state = purify(obs.vec, denoiser, schedule) if use_purified else obs.vec
            slate = select_slate(score_items(state, action, env.catalog),
                                 cfg.env.slate_k)
            item_rewards, obs, done = env.step(slate)
            rewards_log.append(float(np.mean(item_rewards)))
            slates_log.append(slate.tolist())
        outcomes.append(SessionOutcome(length=len(rewards_log), rewards=rewards_log,
                                       exposure_log=slates_log,
                                       terminated_by_abandonment=env.abandoned))
    return outcomes, env.catalog


def purification_gain(cfg: RunConfig, dsrm_ckpt, episodes: int = 200,
                      seed: int = 0):
    """The state-purification comparison: identical FLAT scoring policy on
    raw vs purified states; returns the two metric reports."""
    denoiser, schedule, _ = load_denoiser(dsrm_ckpt)
    raw_out, catalog = _fixed_policy_outcomes(cfg, denoiser, schedule, False,
                                              episodes, seed)
    pur_out, _ = _fixed_policy_outcomes(cfg, denoiser, schedule, True,
                                        episodes, seed)
    raw = session_stats(raw_out, catalog, variant="RAW-STATE", seed=seed,
                        max_len=cfg.env.max_len)
    pur = session_stats(pur_out, catalog, variant="PURIFIED-STATE", seed=seed,
                        max_len=cfg.env.max_len)
    return raw, pur


def state_dumps(cfg: RunConfig, dsrm_ckpt, n_states: int = 500, seed: int = 0):
    """Raw and purified state embeddings with label columns (popularity
    decile and group of the nearest catalog item) for external plotting."""
    denoiser, schedule, _ = load_denoiser(dsrm_ckpt)
    env = RecEnv(cfg.env)
    rng = np.random.default_rng([cfg.env.seed, seed, 30])
    raw_states, pur_states = [], []
    while len(raw_states) < n_states:
        env.reset(int(rng.integers(0, 2**31 - 1)))
        done = False
        while not done and len(raw_states) < n_states:
            slate = env.random_slate()
            _, obs, done = env.step(slate)
            raw_states.append(obs.vec.copy())
            pur_states.append(purify(obs.vec, denoiser, schedule))
    raw_states = np.array(raw_states)
    pur_states = np.array(pur_states)
    # Label each state by its nearest catalog item.
    pop_rank = np.argsort(np.argsort(-env.catalog.initial_popularity))
    deciles = (10 * pop_rank / env.catalog.n_items).astype(int)

    def labels(states):
        nearest = np.argmax(states @ env.catalog.embeddings.T, axis=1)
        return deciles[nearest], [int(env.catalog.group[i]) for i in nearest]

    return (raw_states, *labels(raw_states)), (pur_states, *labels(pur_states))


def run_motivate(cfg: RunConfig, seed: int, out_dir, dsrm_ckpt=None,
                 n_steps: int = 10_000, episodes: int = 100):
    """The three motivation analyses: (a) popularity-vs-reward regression
    under a random policy; (b) fixed-policy comparison on raw vs purified
    states; (c) state embedding dumps. (b) and (c) need a denoiser and are
    skipped with a notice when none is given."""
    import os
    r2, rows = popularity_reward_regression(cfg, n_steps=n_steps, seed=seed)
    write_csv(os.path.join(out_dir, "popularity_reward.csv"),
              ["item_id", "log1p_exposure", "mean_reward"], rows)
    write_csv(os.path.join(out_dir, "popularity_reward_r2.csv"),
              ["r_squared"], [[r2]])
    log(f"motivate(a): popularity-reward R^2 = {r2:.4f}")
    if dsrm_ckpt is None:
        log("motivate(b,c): skipped (no denoiser checkpoint given)")
        return r2, None, None
    raw, pur = purification_gain(cfg, dsrm_ckpt, episodes=episodes, seed=seed)
    write_results(os.path.join(out_dir, "purification_gain.csv"), [raw, pur])
    log(f"motivate(b): raw Len={raw.len_mean:.3f} AD={raw.ad_mean:.3f} | "
        f"purified Len={pur.len_mean:.3f} AD={pur.ad_mean:.3f}")
    (rs, rd, rg), (ps, pd_, pg) = state_dumps(cfg, dsrm_ckpt, seed=seed)
    write_embedding_dump(os.path.join(out_dir, "states_raw.tsv"), rs, rd, rg)
    write_embedding_dump(os.path.join(out_dir, "states_purified.tsv"), ps, pd_, pg)
    log("motivate(c): embedding dumps written")
    return r2, (raw, pur), None
