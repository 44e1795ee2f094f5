"""MAPPO: shared recurrent actors on local observations, centralised recurrent critic.

Training sees the global state through the critic only. Execution goes
through :class:`DecentralizedController`, whose ``act`` receives nothing but
the agents' own observations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import neural as nn
from .environment import LoRaUavEnv, Observation
from .rng import stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    clip: float = 0.2
    epochs: int = 15
    minibatch: int = 16
    total_steps: int = 2_000_000
    rollout_length: int = 32
    hidden: int = 128
    architecture: str = "GRU"
    activation: str = "ReLU"
    optimizer: str = "Adam"
    # soft-update rate of value-decomposition baselines; MAPPO has no target network
    tau: float = 0.01
    seeds: tuple[int, ...] = (0, 42, 2021)
    gae_lambda: float = 0.95
    entropy_coeff: float = 0.01
    value_coeff: float = 0.5
    grad_clip_norm: float = 10.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    normalize_advantages: bool = True
    normalize_values: bool = True
    # the horizon is a time limit, not a terminal state: bootstrap V(s_T) at the cut
    bootstrap_timeouts: bool = True
    # entropy bonus as the mean over active (slot, head) categoricals rather than their sum
    entropy_per_head: bool = True
    share_actor: bool = True
    num_envs: int = 1
    checkpoint_every: int = 0  # updates between checkpoints; 0 keeps only the final one

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.clip <= 0.0:
            raise ValueError(f"clip must be > 0, got {self.clip}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.minibatch < 1 or self.rollout_length < 1 or self.num_envs < 1:
            raise ValueError("minibatch, rollout_length and num_envs must be >= 1")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be > 0, got {self.lr}")


METRICS_FIELDS = (
    "update_index",
    "env_steps",
    "mean_reward",
    "mean_step_ee",
    "success_rate",
    "entropy",
    "policy_loss",
    "value_loss",
)


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float, normalize: bool = False):
    """Generalised advantage estimation along axis 0.

    ``dones[t]`` marks that the episode ended after step ``t``; the value of the
    following state is then not bootstrapped. Returns (advantages, value targets);
    targets are computed before any normalisation.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    adv = np.zeros_like(rewards)
    gae = np.zeros_like(rewards[0])
    next_value = np.asarray(last_value, dtype=float)
    for t in range(len(rewards) - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        gae = delta + gamma * lam * live * gae
        adv[t] = gae
        next_value = values[t]
    targets = adv + values
    if normalize:
        adv = normalize_advantages(adv)
    return adv, targets


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


class RunningNorm:
    """Running mean/variance of value targets (parallel-moments update)."""

    def __init__(self):
        self.mean = 0.0
        self.var = 1.0
        self.count = 1e-4

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            return
        b_mean, b_var, n = float(x.mean()), float(x.var()), x.size
        delta = b_mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        m2 = self.var * self.count + b_var * n + delta * delta * self.count * n / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self) -> float:
        return float(np.sqrt(max(self.var, 1e-8)))

    def normalize(self, x):
        return (np.asarray(x) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x) * self.std + self.mean


@dataclass
class RolloutBuffer:
    """Time-ordered rollout; leading axes are (step, env) and, for agent data, agent."""

    obs: np.ndarray  # (L, E, U, D)
    actor_h: np.ndarray  # (L, E, U, H)
    actions: np.ndarray  # (L, E, U, slots, 3)
    slot_mask: np.ndarray  # (L, E, U, slots)
    log_probs: np.ndarray  # (L, E, U)
    states: np.ndarray  # (L, E, S)
    critic_h: np.ndarray  # (L, E, H)
    values: np.ndarray  # (L, E), de-normalised critic output
    rewards: np.ndarray  # (L, E)
    dones: np.ndarray  # (L, E)
    last_values: np.ndarray  # (E,)
    timeout_values: np.ndarray  # (L, E), V(s_T) where an episode was cut at the horizon, else 0
    step_ee: np.ndarray  # (L, E)
    success: np.ndarray  # (L, E)
    episode_returns: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_agents(self) -> int:
        return self.obs.shape[2]

    def __len__(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1] * self.obs.shape[2]


def head_sizes(env: LoRaUavEnv) -> tuple[int, int, int]:
    return env.radio_sets.sizes


def slot_mask(observations: Sequence[Observation], slots: int, per_ed: bool = True) -> np.ndarray:
    mask = np.zeros((len(observations), slots))
    for i, o in enumerate(observations):
        n = min(o.num_valid, slots) if per_ed else min(o.num_valid, 1)
        mask[i, :n] = 1.0
    return mask


def sample_heads(head_logps: list[np.ndarray], rng: np.random.Generator | None) -> np.ndarray:
    """Draw (B, slots, len(heads)) indices; argmax when ``rng`` is None."""
    out = []
    for lp in head_logps:
        if rng is None:
            out.append(np.argmax(lp, axis=-1))
            continue
        cdf = np.cumsum(np.exp(lp), axis=-1)
        u = rng.random(lp.shape[:-1])[..., None] * cdf[..., -1:]
        idx = np.sum(cdf < u, axis=-1)
        out.append(np.minimum(idx, lp.shape[-1] - 1))
    return np.stack(out, axis=-1).astype(np.int64)


def chosen_log_prob(head_logps: list[np.ndarray], actions: np.ndarray, mask: np.ndarray) -> np.ndarray:
    total = np.zeros(actions.shape[0])
    for k, lp in enumerate(head_logps):
        picked = np.take_along_axis(lp, actions[:, :, k : k + 1], axis=-1)[..., 0]
        total += np.sum(picked * mask, axis=1)
    return total


class DecentralizedController:
    """Per-agent recurrent policies acting on local observations only."""

    def __init__(self, policy: nn.PolicyNet, params: Sequence[nn.ParamVector], per_ed: bool = True,
                 greedy: bool = True, rng: np.random.Generator | None = None):
        self.policy = policy
        self.params = list(params)
        self.per_ed = per_ed
        self.greedy = greedy
        self.rng = rng
        self.hidden: np.ndarray | None = None

    def reset(self, num_agents: int) -> None:
        self.hidden = self.policy.initial_hidden(num_agents)

    def act(self, observations: Sequence[Observation]) -> list[np.ndarray]:
        n = len(observations)
        if self.hidden is None or self.hidden.shape[0] != n:
            self.reset(n)
        obs = np.stack([o.normalized.reshape(-1) for o in observations])
        if obs.shape[1] != self.policy.input_dim:
            raise ValueError(
                f"observation width {obs.shape[1]} does not match policy input {self.policy.input_dim}"
            )
        heads, h_new = _policy_forward(self.policy, self.params, obs, self.hidden)
        self.hidden = h_new
        acts = sample_heads(heads, None if self.greedy else self.rng)
        return [acts[i] for i in range(n)]


def _log_softmax_heads(logits: np.ndarray, head_sizes) -> list[np.ndarray]:
    heads, start = [], 0
    for size in head_sizes:
        seg = logits[..., start : start + size]
        shifted = seg - seg.max(axis=-1, keepdims=True)
        heads.append(shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True)))
        start += size
    return heads


def _policy_forward(policy: nn.PolicyNet, params: Sequence[nn.ParamVector], obs: np.ndarray, h: np.ndarray):
    """Numpy forward for a batch of agents; shared params if ``len(params) == 1``."""
    if len(params) == 1:
        logits, h_new = policy.logits(params[0], obs, h)
        return _log_softmax_heads(logits.data, policy.head_sizes), h_new.data
    outs = [policy.logits(params[i], obs[i : i + 1], h[i : i + 1]) for i in range(obs.shape[0])]
    logits = np.concatenate([o[0].data for o in outs])
    return _log_softmax_heads(logits, policy.head_sizes), np.concatenate([o[1].data for o in outs])


class MappoLearner:
    def __init__(self, cfg, seed: int):
        self.cfg = cfg
        self.tc: TrainConfig = cfg.train
        self.tc.validate()
        self.seed = seed
        self.envs = [LoRaUavEnv(cfg, instance=i) for i in range(self.tc.num_envs)]
        env = self.envs[0]
        self.num_agents = env.num_uavs
        self.per_ed = cfg.world.per_ed_actions
        self.policy = nn.PolicyNet(slots=env.num_slots, head_sizes=head_sizes(env), hidden=self.tc.hidden)
        if self.policy.input_dim != env.obs_dim:
            # single-triple mode still observes every served ED
            self.policy = nn.PolicyNet(slots=env.num_slots, head_sizes=head_sizes(env),
                                       features=env.obs_dim // env.num_slots, hidden=self.tc.hidden)
        self.critic = nn.CriticNet(state_dim=env.state_dim, hidden=self.tc.hidden)
        init_rng = stream(seed, "init")
        n_actor = 1 if self.tc.share_actor else self.num_agents
        self.actor_params = [self.policy.init_params(init_rng) for _ in range(n_actor)]
        self.critic_params = self.critic.init_params(init_rng)
        opt = dict(lr=self.tc.lr, beta1=self.tc.adam_beta1, beta2=self.tc.adam_beta2, eps=self.tc.adam_eps)
        self.actor_opts = [nn.Adam(p, **opt) for p in self.actor_params]
        self.critic_opt = nn.Adam(self.critic_params, **opt)
        self.action_rng = stream(seed, "actions")
        self.shuffle_rng = stream(seed, "shuffle")
        self.value_norm = RunningNorm() if self.tc.normalize_values else None
        self.env_steps = 0
        self._obs = None

    # -- rollout state
    def _start(self) -> None:
        E, U, H = len(self.envs), self.num_agents, self.tc.hidden
        self._obs = [env.reset(seed=self.seed)[1] for env in self.envs]
        self._actor_h = np.zeros((E, U, H))
        self._critic_h = np.zeros((E, H))
        self._ep_return = np.zeros(E)

    def _critic_values(self, states: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v, h_new = self.critic.forward(self.critic_params, states, h)
        out = v.data
        if self.value_norm is not None:
            out = self.value_norm.denormalize(out)
        return out, h_new.data

    def collect_rollout(self, length: int | None = None, greedy: bool = False) -> RolloutBuffer:
        if self._obs is None:
            self._start()
        L = length or self.tc.rollout_length
        E, U, H = len(self.envs), self.num_agents, self.tc.hidden
        D, slots = self.policy.input_dim, self.policy.slots
        S = self.envs[0].state_dim
        buf = RolloutBuffer(
            obs=np.zeros((L, E, U, D)),
            actor_h=np.zeros((L, E, U, H)),
            actions=np.zeros((L, E, U, slots, 3), dtype=np.int64),
            slot_mask=np.zeros((L, E, U, slots)),
            log_probs=np.zeros((L, E, U)),
            states=np.zeros((L, E, S)),
            critic_h=np.zeros((L, E, H)),
            values=np.zeros((L, E)),
            rewards=np.zeros((L, E)),
            dones=np.zeros((L, E)),
            last_values=np.zeros(E),
            timeout_values=np.zeros((L, E)),
            step_ee=np.zeros((L, E)),
            success=np.zeros((L, E)),
        )
        rng = None if greedy else self.action_rng
        for t in range(L):
            for e, env in enumerate(self.envs):
                obs_list = self._obs[e]
                obs = np.stack([o.normalized.reshape(-1) for o in obs_list])
                mask = slot_mask(obs_list, slots, self.per_ed)
                heads, h_new = _policy_forward(self.policy, self.actor_params, obs, self._actor_h[e])
                actions = sample_heads(heads, rng)
                state = env.global_state_vector()
                value, ch_new = self._critic_values(state[None, :], self._critic_h[e][None, :])

                buf.obs[t, e] = obs
                buf.actor_h[t, e] = self._actor_h[e]
                buf.actions[t, e] = actions
                buf.slot_mask[t, e] = mask
                buf.log_probs[t, e] = chosen_log_prob(heads, actions, mask)
                buf.states[t, e] = state
                buf.critic_h[t, e] = self._critic_h[e]
                buf.values[t, e] = value[0]

                _, next_obs, reward, done, info = env.step(list(actions))
                buf.rewards[t, e] = reward
                buf.dones[t, e] = float(done)
                buf.step_ee[t, e] = info.step_ee
                buf.success[t, e] = info.success_rate
                self._ep_return[e] += reward
                if done:
                    if self.tc.bootstrap_timeouts:
                        v_end, _ = self._critic_values(env.global_state_vector()[None, :], ch_new)
                        buf.timeout_values[t, e] = v_end[0]
                    buf.episode_returns.append(float(self._ep_return[e]))
                    self._ep_return[e] = 0.0
                    _, next_obs = env.reset()
                    self._actor_h[e] = 0.0
                    self._critic_h[e] = 0.0
                else:
                    self._actor_h[e] = h_new
                    self._critic_h[e] = ch_new[0]
                self._obs[e] = next_obs
        for e, env in enumerate(self.envs):
            state = env.global_state_vector()
            value, _ = self._critic_values(state[None, :], self._critic_h[e][None, :])
            buf.last_values[e] = value[0]
        self.env_steps += L * E
        return buf

    # -- update
    def _minibatch_loss(self, batch: dict, cfg: TrainConfig):
        B = batch["obs"].shape[0]
        policy_terms = []
        entropy_terms = []
        head_entropy = []
        groups = [np.arange(B)] if len(self.actor_params) == 1 else [
            np.flatnonzero(batch["agent"] == a) for a in range(len(self.actor_params))
        ]
        for gi, idx in enumerate(groups):
            if len(idx) == 0:
                continue
            logits, _ = self.policy.logits(self.actor_params[gi], batch["obs"][idx], batch["actor_h"][idx])
            mask = batch["slot_mask"][idx]
            stats = nn.categorical_stats(logits, batch["actions"][idx], mask, self.policy.head_sizes)
            logp, ent = stats[:, 0], stats[:, 1]
            ratio = nn.exp(logp - batch["log_probs"][idx])
            adv = batch["adv"][idx]
            surr = nn.minimum(ratio * adv, nn.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv)
            policy_terms.append(nn.tsum(surr))
            n_heads = np.maximum(mask.sum(axis=1) * len(self.policy.head_sizes), 1.0)
            entropy_terms.append(nn.tsum(ent * (1.0 / n_heads) if cfg.entropy_per_head else ent))
            head_entropy.append(ent.data / n_heads)
        policy_loss = -sum(policy_terms[1:], policy_terms[0]) / B
        entropy = sum(entropy_terms[1:], entropy_terms[0]) / B

        v, _ = self.critic.forward(self.critic_params, batch["states"], batch["critic_h"])
        value_loss = nn.mean(nn.square(v - batch["targets"]))
        total = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * entropy
        return total, policy_loss, value_loss, float(np.mean(np.concatenate(head_entropy)))

    def ppo_update(self, buf: RolloutBuffer) -> dict:
        cfg = self.tc
        rewards = buf.rewards + cfg.gamma * buf.timeout_values
        adv, targets = compute_gae(rewards, buf.values, buf.dones, buf.last_values, cfg.gamma, cfg.gae_lambda)
        if self.value_norm is not None:
            self.value_norm.update(targets)
            targets = self.value_norm.normalize(targets)
        L, E, U = buf.obs.shape[:3]
        flat = {
            "obs": buf.obs.reshape(L * E * U, -1),
            "actor_h": buf.actor_h.reshape(L * E * U, -1),
            "actions": buf.actions.reshape(L * E * U, buf.actions.shape[3], 3),
            "slot_mask": buf.slot_mask.reshape(L * E * U, -1),
            "log_probs": buf.log_probs.reshape(-1),
            "adv": np.repeat(adv.reshape(-1), U),
            "targets": np.repeat(targets.reshape(-1), U),
            "states": np.repeat(buf.states.reshape(L * E, -1), U, axis=0),
            "critic_h": np.repeat(buf.critic_h.reshape(L * E, -1), U, axis=0),
            "agent": np.tile(np.arange(U), L * E),
        }
        if cfg.normalize_advantages:
            flat["adv"] = normalize_advantages(flat["adv"])
        N = len(flat["log_probs"])
        stats = {"policy_loss": [], "value_loss": [], "entropy": [], "aborted": False}
        for _ in range(cfg.epochs):
            perm = self.shuffle_rng.permutation(N)
            for start in range(0, N, cfg.minibatch):
                idx = perm[start : start + cfg.minibatch]
                batch = {k: v[idx] for k, v in flat.items()}
                total, pl, vl, ent = self._minibatch_loss(batch, cfg)
                if not np.isfinite(total.data):
                    log.warning("non-finite loss at update; skipping remaining minibatches")
                    stats["aborted"] = True
                    break
                for p in self.actor_params:
                    p.zero_grad()
                self.critic_params.zero_grad()
                nn.backward(total)
                for p, opt in zip(self.actor_params, self.actor_opts):
                    nn.clip_grad_norm(p, cfg.grad_clip_norm)
                    opt.step()
                nn.clip_grad_norm(self.critic_params, cfg.grad_clip_norm)
                self.critic_opt.step()
                stats["policy_loss"].append(float(pl.data))
                stats["value_loss"].append(float(vl.data))
                stats["entropy"].append(ent)
            if stats["aborted"]:
                break
        return {
            "policy_loss": float(np.mean(stats["policy_loss"])) if stats["policy_loss"] else float("nan"),
            "value_loss": float(np.mean(stats["value_loss"])) if stats["value_loss"] else float("nan"),
            "entropy": float(np.mean(stats["entropy"])) if stats["entropy"] else float("nan"),
            "aborted": stats["aborted"],
        }

    def controller(self, greedy: bool = True) -> DecentralizedController:
        return DecentralizedController(self.policy, self.actor_params, per_ed=self.per_ed, greedy=greedy,
                                       rng=None if greedy else self.action_rng)

    def save(self, directory: str | Path, tag: str = "final") -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = self.policy.meta() | {"per_ed_actions": self.per_ed, "num_agents": self.num_agents,
                                     "shared": len(self.actor_params) == 1}
        for i, p in enumerate(self.actor_params):
            nn.save_params(directory / f"actor_{tag}_{i}.npz", p, meta | {"agent": i})
        nn.save_params(directory / f"critic_{tag}.npz", self.critic_params, self.critic.meta())
        return directory / f"actor_{tag}_0.npz"


def train(cfg, seed: int, out_dir: str | Path | None = None,
          on_update: Callable[[dict], None] | None = None) -> tuple[MappoLearner, list[dict]]:
    """Alternate rollouts and PPO updates until ``total_steps`` env steps.

    Returns the learner and one metrics row per update.
    """
    learner = MappoLearner(cfg, seed)
    tc = learner.tc
    per_update = tc.rollout_length * tc.num_envs
    n_updates = tc.total_steps // per_update
    rows: list[dict] = []
    for k in range(n_updates):
        buf = learner.collect_rollout()
        stats = learner.ppo_update(buf)
        row = {
            "update_index": k,
            "env_steps": learner.env_steps,
            "mean_reward": float(buf.rewards.mean()),
            "mean_step_ee": float(buf.step_ee.mean()),
            "success_rate": float(buf.success.mean()),
            "entropy": stats["entropy"],
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
        }
        rows.append(row)
        if on_update is not None:
            on_update(row)
        if out_dir is not None and tc.checkpoint_every and (k + 1) % tc.checkpoint_every == 0:
            learner.save(Path(out_dir) / "checkpoints", tag=f"u{k + 1:06d}")
    if out_dir is not None:
        learner.save(Path(out_dir) / "checkpoints", tag="final")
    return learner, rows


def load_controller(paths: Sequence[str | Path], env: LoRaUavEnv, greedy: bool = True) -> DecentralizedController:
    """Build a controller from actor checkpoints, checking they fit ``env``."""
    params, metas = zip(*(nn.load_params(p) for p in paths))
    meta = metas[0]
    if meta.get("kind") != "policy":
        raise ValueError(f"{paths[0]} is not a policy checkpoint")
    policy = nn.PolicyNet(slots=meta["slots"], head_sizes=tuple(meta["head_sizes"]),
                          features=meta["features"], hidden=meta["hidden"])
    check_compatible(meta, env)
    if len(params) not in (1, env.num_uavs):
        raise ValueError(f"{len(params)} actor checkpoints for {env.num_uavs} agents")
    expected = nn.ParamVector(policy.body.layout())
    for p in params:
        if p.shapes() != expected.shapes():
            raise ValueError("checkpoint layout does not match the policy architecture")
    return DecentralizedController(policy, params, per_ed=meta.get("per_ed_actions", True), greedy=greedy)


def check_compatible(meta: dict, env: LoRaUavEnv) -> None:
    if meta["slots"] != env.num_slots or meta["slots"] * meta["features"] != env.obs_dim:
        raise ValueError(
            f"checkpoint expects {meta['slots']} slots x {meta['features']} features, "
            f"scenario has {env.num_slots} slots and observation width {env.obs_dim}"
        )
    if tuple(meta["head_sizes"]) != env.radio_sets.sizes:
        raise ValueError(f"checkpoint heads {meta['head_sizes']} != radio set sizes {env.radio_sets.sizes}")
    if meta.get("per_ed_actions", True) != env.world.per_ed_actions:
        raise ValueError("checkpoint and scenario disagree on per-ED actions")


@dataclass
class EvalReport:
    episodes: int
    mean_step_ee: float
    mean_episode_ee: float
    success_rate: float
    mean_margin_db: float
    min_margin_db: float
    p5_margin_db: float
    mean_step_reward: float
    episode_rewards: list[float]
    cumulative_rewards: list[float]
    episode_ee: list[float]

    def summary(self) -> dict:
        return {
            "episodes": self.episodes,
            "mean_step_ee": self.mean_step_ee,
            "mean_episode_ee": self.mean_episode_ee,
            "success_rate": self.success_rate,
            "mean_margin_db": self.mean_margin_db,
            "min_margin_db": self.min_margin_db,
            "p5_margin_db": self.p5_margin_db,
            "mean_step_reward": self.mean_step_reward,
        }


def execute(controller, env: LoRaUavEnv, episodes: int, seed: int) -> EvalReport:
    """Roll out ``controller`` for whole episodes.

    The controller only ever receives the per-agent observation list; the
    global state vector is never computed on this path.
    """
    step_ee, success, rewards, margins = [], [], [], []
    ep_rewards, ep_ee = [], []
    for k in range(episodes):
        _, obs = env.reset(seed=seed if k == 0 else None)
        controller.reset(env.num_uavs)
        total, done = 0.0, False
        while not done:
            _, obs, reward, done, info = env.step(controller.act(obs))
            step_ee.append(info.step_ee)
            success.append(info.success_rate)
            rewards.append(reward)
            margins.extend(info.links.margin_db[info.links.associated].tolist())
            total += reward
        ep_rewards.append(total)
        ep_ee.append(env.episode_ee)
    margins_arr = np.asarray(margins) if margins else np.zeros(1)
    return EvalReport(
        episodes=episodes,
        mean_step_ee=float(np.mean(step_ee)),
        mean_episode_ee=float(np.mean(ep_ee)),
        success_rate=float(np.mean(success)),
        mean_margin_db=float(np.mean(margins_arr)),
        min_margin_db=float(np.min(margins_arr)),
        p5_margin_db=float(np.percentile(margins_arr, 5)),
        mean_step_reward=float(np.mean(rewards)),
        episode_rewards=ep_rewards,
        cumulative_rewards=np.cumsum(ep_rewards).tolist(),
        episode_ee=ep_ee,
    )
