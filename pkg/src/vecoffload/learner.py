"""Multi-agent DDPG with centralised critics, written directly on numpy.

Each network keeps all of its parameters in one flat float64 vector; layer
weights and biases are views into it. That keeps Adam, gradient clipping and
soft target tracking to a handful of vector operations per network.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)


class ShapeMismatch(ValueError):
    pass


class EmptyBuffer(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class MLP:
    """Fully connected network: ReLU hidden layers, logistic or identity head."""

    def __init__(self, sizes: Sequence[int], output: str = "identity", rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if output not in ("identity", "sigmoid"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.params = np.zeros(sum(i * o + o for i, o in self._shapes()))
        self.weights, self.biases = self._views(self.params)
        if rng is not None:
            # uniform fan-in scaling
            for w, b in zip(self.weights, self.biases):
                bound = 1.0 / math.sqrt(w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)

    def _shapes(self):
        return list(zip(self.sizes[:-1], self.sizes[1:]))

    def _views(self, flat: np.ndarray):
        ws, bs, off = [], [], 0
        for i, o in self._shapes():
            ws.append(flat[off : off + i * o].reshape(i, o))
            off += i * o
            bs.append(flat[off : off + o])
            off += o
        return ws, bs

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "MLP":
        twin = MLP(self.sizes, self.output)
        twin.params[:] = self.params
        return twin

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cache(x)[0]

    def forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[-1] != self.n_in:
            raise ShapeMismatch(f"input width {h.shape[-1]} != {self.n_in}")
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.output == "sigmoid":
                h = _sigmoid(z)
            else:
                h = z
            acts.append(h)
        return (h[0] if single else h), acts

    def backward(
        self,
        acts: list[np.ndarray],
        grad_out: np.ndarray,
        param_grad: bool = True,
        input_grad: bool = True,
        input_cols: slice | None = None,
    ) -> tuple[np.ndarray | None, np.ndarray | None]:
        """Backpropagate ``grad_out`` (dL/d output) through a cached pass.

        Returns the flat parameter gradient (None unless ``param_grad``) and
        dL/d input (None unless ``input_grad``), restricted to the input
        columns ``input_cols`` when given.
        """
        delta = np.asarray(grad_out, dtype=float).reshape(acts[-1].shape)
        if self.output == "sigmoid":
            y = acts[-1]
            delta = delta * y * (1.0 - y)
        grad = np.zeros_like(self.params) if param_grad else None
        gws, gbs = self._views(grad) if param_grad else (None, None)
        for i in range(len(self.weights) - 1, 0, -1):
            if param_grad:
                gws[i][...] = acts[i].T @ delta
                gbs[i][...] = delta.sum(axis=0)
            delta = (delta @ self.weights[i].T) * (acts[i] > 0.0)
        if param_grad:
            gws[0][...] = acts[0].T @ delta
            gbs[0][...] = delta.sum(axis=0)
        d_in = None
        if input_grad:
            w0 = self.weights[0] if input_cols is None else self.weights[0][input_cols]
            d_in = delta @ w0.T
        return grad, d_in


class Adam:
    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grad * grad)
        # bias corrections folded into the step size and epsilon
        c1 = 1.0 - self.beta1**self.t
        c2 = math.sqrt(1.0 - self.beta2**self.t)
        denom = np.sqrt(self.v)
        denom += self.eps * c2
        params -= (self.lr * c2 / c1) * (self.m / denom)


def clip_by_norm(grad: np.ndarray, max_norm: float | None) -> float:
    """Scale ``grad`` in place to at most ``max_norm``; return the original norm."""
    norm = float(np.sqrt(grad @ grad))
    if max_norm is not None and norm > max_norm:
        grad *= max_norm / norm
    return norm


def soft_update(target: MLP, online: MLP, delta: float) -> MLP:
    """target <- delta * online + (1 - delta) * target, in place."""
    if target.sizes != online.sizes:
        raise ShapeMismatch(f"target {target.sizes} vs online {online.sizes}")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    target.params *= 1.0 - delta
    target.params += delta * online.params
    return target


class Batch(NamedTuple):
    obs: np.ndarray  # (X, K, obs_dim)
    actions: np.ndarray  # (X, K, act_dim)
    rewards: np.ndarray  # (X, K)
    next_obs: np.ndarray  # (X, K, obs_dim)


class ReplayBuffer:
    """Ring buffer of joint transitions shared by all agents."""

    def __init__(self, capacity: int, n_agents: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, n_agents, obs_dim))
        self.actions = np.zeros((capacity, n_agents, act_dim))
        self.rewards = np.zeros((capacity, n_agents))
        self.next_obs = np.zeros((capacity, n_agents, obs_dim))
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, actions, rewards, next_obs) -> None:
        i = self._cursor
        self.obs[i] = obs
        self.actions[i] = actions
        self.rewards[i] = rewards
        self.next_obs[i] = next_obs
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size < batch_size:
            raise EmptyBuffer(f"buffer holds {self._size} < {batch_size} transitions")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx])


@dataclass(frozen=True)
class TrainerConfig:
    episodes: int = 2000
    # None defers to the environment config
    steps_per_episode: int | None = 25
    hidden_sizes: tuple[int, ...] = (64, 64)
    gamma: float = 0.95
    delta: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 128
    # environment steps between gradient updates
    update_every: int = 1
    buffer_size: int = 20000
    noise_start: float = 0.3
    noise_end: float = 0.02
    noise_decay_fraction: float = 0.5
    grad_clip: float | None = 1.0
    ma_window: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.episodes < 1 or self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("need episodes >= 1 and buffer_size >= batch_size >= 1")
        if self.update_every < 1:
            raise ValueError("update_every must be at least 1")

    @classmethod
    def desk(cls, **overrides) -> "TrainerConfig":
        """Laptop-scale preset: 2000 short episodes, small batches, update every other step.

        Rewards are paid per decision, so a short discount horizon is enough
        and trains markedly faster at this budget.
        """
        base = dict(batch_size=64, update_every=2, gamma=0.5)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def paper(cls, **overrides) -> "TrainerConfig":
        base = dict(episodes=140000, steps_per_episode=None, hidden_sizes=(512, 512, 512))
        base.update(overrides)
        return cls(**base)

    def noise_sigma(self, episode: int) -> float:
        horizon = max(1.0, self.noise_decay_fraction * self.episodes)
        frac = min(1.0, episode / horizon)
        return self.noise_start + frac * (self.noise_end - self.noise_start)

    def replace(self, **changes) -> "TrainerConfig":
        return dataclasses.replace(self, **changes)


class MADDPG:
    """Per-agent actors over local observations, critics over (S, A).

    When the first ``shared_dim`` observation features are common to all
    agents, the critics read them once (from agent 0) followed by every
    agent's private remainder, instead of K copies of the same block.
    """

    def __init__(
        self,
        n_agents: int,
        obs_dim: int,
        act_dim: int,
        config: TrainerConfig,
        rng: np.random.Generator,
        shared_dim: int = 0,
    ):
        if not 0 <= shared_dim <= obs_dim:
            raise ValueError("shared_dim must lie in [0, obs_dim]")
        self.n_agents, self.obs_dim, self.act_dim = n_agents, obs_dim, act_dim
        self.shared_dim = shared_dim
        self.config = config
        hidden = tuple(config.hidden_sizes)
        self.state_dim = shared_dim + n_agents * (obs_dim - shared_dim)
        critic_in = self.state_dim + n_agents * act_dim
        self.actors = [MLP((obs_dim, *hidden, act_dim), "sigmoid", rng) for _ in range(n_agents)]
        self.critics = [MLP((critic_in, *hidden, 1), "identity", rng) for _ in range(n_agents)]
        self.target_actors = [a.copy() for a in self.actors]
        self.target_critics = [c.copy() for c in self.critics]
        self.actor_opts = [Adam(a.params.size, config.actor_lr) for a in self.actors]
        self.critic_opts = [Adam(c.params.size, config.critic_lr) for c in self.critics]

    # -- evaluation ----------------------------------------------------------

    def actor_forward(self, k: int, obs: np.ndarray) -> np.ndarray:
        return self.actors[k].forward(obs)

    def act(self, obs: np.ndarray, sigma: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
        """Joint action for observations of shape (K, obs_dim), Gaussian noise optional."""
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.n_agents, self.obs_dim):
            raise ShapeMismatch(f"observation shape {obs.shape} != {(self.n_agents, self.obs_dim)}")
        out = np.stack([a.forward(obs[k]) for k, a in enumerate(self.actors)])
        if sigma > 0.0:
            out = np.clip(out + rng.normal(0.0, sigma, size=out.shape), 0.0, 1.0)
        return out

    def critic_input(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        actions = np.asarray(actions, dtype=float)
        n = obs.shape[0]
        if obs.shape[1:] != (self.n_agents, self.obs_dim) or actions.shape[1:] != (self.n_agents, self.act_dim):
            raise ShapeMismatch(f"joint state {obs.shape} / action {actions.shape} do not match the agents")
        shared = obs[:, 0, : self.shared_dim]
        private = obs[:, :, self.shared_dim :].reshape(n, -1)
        return np.concatenate([shared, private, actions.reshape(n, -1)], axis=1)

    def critic_forward(self, k: int, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Q_k for batched joint (S, A): obs (X, K, obs_dim), actions (X, K, act_dim) -> (X,)."""
        return self.critics[k].forward(self.critic_input(obs, actions))[:, 0]

    def _action_slice(self, k: int) -> slice:
        start = self.state_dim + k * self.act_dim
        return slice(start, start + self.act_dim)

    # -- updates ---------------------------------------------------------------

    def target_actions(self, next_obs: np.ndarray) -> np.ndarray:
        return np.stack([self.target_actors[j].forward(next_obs[:, j]) for j in range(self.n_agents)], axis=1)

    def target_values(self, k: int, batch: Batch, next_actions: np.ndarray | None = None) -> np.ndarray:
        """y = r_k + gamma * Q'_k(S', mu'_1(s'_1), ..., mu'_K(s'_K)); target networks only."""
        if next_actions is None:
            next_actions = self.target_actions(batch.next_obs)
        q_next = self.target_critics[k].forward(self.critic_input(batch.next_obs, next_actions))[:, 0]
        return batch.rewards[:, k] + self.config.gamma * q_next

    def critic_update(self, k: int, batch: Batch, next_actions: np.ndarray | None = None) -> float:
        """One Adam step on mean (Q - y)^2; returns the loss before the step."""
        y = self.target_values(k, batch, next_actions)
        q, acts = self.critics[k].forward_cache(self.critic_input(batch.obs, batch.actions))
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        grad, _ = self.critics[k].backward(acts, (2.0 / err.size) * err[:, None], input_grad=False)
        clip_by_norm(grad, self.config.grad_clip)
        self.critic_opts[k].step(self.critics[k].params, grad)
        return loss

    def actor_gradient(self, k: int, batch: Batch) -> np.ndarray:
        """Gradient of -(1/X) sum_j Q_k(S_j, ..., mu_k(s_k^j), ...) w.r.t. actor k's parameters."""
        a_k, actor_acts = self.actors[k].forward_cache(batch.obs[:, k])
        joint = np.array(batch.actions, dtype=float, copy=True)
        joint[:, k] = a_k
        x = self.critic_input(batch.obs, joint)
        n = x.shape[0]
        _, critic_acts = self.critics[k].forward_cache(x)
        _, da = self.critics[k].backward(
            critic_acts, np.full((n, 1), -1.0 / n), param_grad=False, input_cols=self._action_slice(k)
        )
        grad, _ = self.actors[k].backward(actor_acts, da, input_grad=False)
        return grad

    def actor_update(self, k: int, batch: Batch) -> float:
        """One ascent step along the sampled policy gradient; returns its norm."""
        grad = self.actor_gradient(k, batch)
        norm = clip_by_norm(grad, self.config.grad_clip)
        self.actor_opts[k].step(self.actors[k].params, grad)
        return norm

    def soft_update_targets(self) -> None:
        for tgt, net in zip(self.target_actors + self.target_critics, self.actors + self.critics):
            soft_update(tgt, net, self.config.delta)

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> tuple[float, float]:
        """One critic and actor step per agent on a minibatch shared by all agents."""
        batch = buffer.sample(self.config.batch_size, rng)
        next_actions = self.target_actions(batch.next_obs)
        losses, norms = [], []
        for k in range(self.n_agents):
            losses.append(self.critic_update(k, batch, next_actions))
            norms.append(self.actor_update(k, batch))
        self.soft_update_targets()
        return float(np.mean(losses)), float(np.mean(norms))

    # -- persistence -------------------------------------------------------------

    def save(self, path: str | Path, fingerprint: str = "", extra: dict | None = None) -> Path:
        path = Path(path)
        meta = {
            "format": "vecoffload-maddpg/1",
            "n_agents": self.n_agents,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "shared_dim": self.shared_dim,
            "actor_sizes": list(self.actors[0].sizes),
            "critic_sizes": list(self.critics[0].sizes),
            "trainer": dataclasses.asdict(self.config),
            "fingerprint": fingerprint,
            **(extra or {}),
        }
        arrays = {}
        for name, nets in (
            ("actor", self.actors),
            ("critic", self.critics),
            ("target_actor", self.target_actors),
            ("target_critic", self.target_critics),
        ):
            for k, net in enumerate(nets):
                arrays[f"{name}_{k}"] = net.params
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MADDPG":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            trainer = meta["trainer"]
            trainer["hidden_sizes"] = tuple(trainer["hidden_sizes"])
            agent = cls(
                meta["n_agents"],
                meta["obs_dim"],
                meta["act_dim"],
                TrainerConfig(**trainer),
                np.random.default_rng(0),
                shared_dim=meta.get("shared_dim", 0),
            )
            for name, nets in (
                ("actor", agent.actors),
                ("critic", agent.critics),
                ("target_actor", agent.target_actors),
                ("target_critic", agent.target_critics),
            ):
                for k, net in enumerate(nets):
                    saved = data[f"{name}_{k}"]
                    if saved.shape != net.params.shape:
                        raise ShapeMismatch(f"{name}_{k}: checkpoint {saved.shape} vs network {net.params.shape}")
                    net.params[:] = saved
        agent.meta = meta
        return agent


# --------------------------------------------------------------------------- training loop


def episode_seed(seed: int, stream: int, episode: int) -> int:
    """Independent, reproducible environment seed per (run seed, stream, episode)."""
    return int(np.random.SeedSequence([seed, stream, episode]).generate_state(1)[0])


TRAIN_STREAM = 0
EVAL_STREAM = 1


@dataclass
class TrainingLog:
    episode_rewards: list[float] = field(default_factory=list)
    critic_losses: list[float] = field(default_factory=list)
    actor_grad_norms: list[float] = field(default_factory=list)
    noise_sigmas: list[float] = field(default_factory=list)
    updates: int = 0
    ma_window: int = 50
    checkpoints: list[str] = field(default_factory=list)
    agent: MADDPG | None = field(default=None, repr=False, compare=False)

    @property
    def moving_average(self) -> list[float]:
        out, acc = [], 0.0
        r = self.episode_rewards
        for i, x in enumerate(r):
            acc += x
            if i >= self.ma_window:
                acc -= r[i - self.ma_window]
            out.append(acc / min(i + 1, self.ma_window))
        return out

    def rows(self) -> list[list[str]]:
        ma = self.moving_average
        return [
            [str(i), repr(r), repr(m), repr(l), repr(g), repr(s)]
            for i, (r, m, l, g, s) in enumerate(
                zip(self.episode_rewards, ma, self.critic_losses, self.actor_grad_norms, self.noise_sigmas)
            )
        ]

    ROW_HEADER = ("episode", "avg_reward", "reward_moving_avg", "critic_loss", "actor_grad_norm", "noise_sigma")


def train(
    env,
    config: TrainerConfig,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int = 0,
    progress: Callable[[int, TrainingLog], None] | None = None,
) -> TrainingLog:
    """Run the MADDPG loop on ``env`` and return the per-episode log.

    The returned log carries the trained agent in ``log.agent``.
    """
    root = np.random.SeedSequence(config.seed)
    init_ss, noise_ss, sample_ss = root.spawn(3)
    init_rng = np.random.default_rng(init_ss)
    noise_rng = np.random.default_rng(noise_ss)
    sample_rng = np.random.default_rng(sample_ss)

    shared = getattr(env, "shared_obs_dim", 0)
    agent = MADDPG(env.n_agents, env.obs_dim, env.act_dim, config, init_rng, shared_dim=shared)
    buffer = ReplayBuffer(config.buffer_size, env.n_agents, env.obs_dim, env.act_dim)
    steps = config.steps_per_episode or env.config.steps_per_episode
    out = TrainingLog(ma_window=config.ma_window, agent=agent)
    fingerprint = env.config.fingerprint()
    total_steps = 0

    for ep in range(config.episodes):
        env.reset(seed=episode_seed(config.seed, TRAIN_STREAM, ep), episode=ep)
        obs = env.observe()
        sigma = config.noise_sigma(ep)
        decision_rewards: list[float] = []
        losses, norms = [], []
        for _ in range(steps):
            actions = agent.act(obs, sigma, noise_rng)
            result = env.step(actions)
            next_obs = env.observe()
            buffer.add(obs, actions, result.rewards, next_obs)
            decision_rewards.extend(float(result.rewards[k]) for k in result.outcomes)
            total_steps += 1
            if len(buffer) >= config.batch_size and total_steps % config.update_every == 0:
                loss, norm = agent.update(buffer, sample_rng)
                if not (math.isfinite(loss) and math.isfinite(norm)):
                    raise TrainingDiverged(
                        f"non-finite update at episode {ep}: critic loss {loss}, actor grad norm {norm}"
                    )
                losses.append(loss)
                norms.append(norm)
                out.updates += 1
            obs = next_obs
        out.episode_rewards.append(float(np.mean(decision_rewards)) if decision_rewards else 0.0)
        out.critic_losses.append(float(np.mean(losses)) if losses else float("nan"))
        out.actor_grad_norms.append(float(np.mean(norms)) if norms else float("nan"))
        out.noise_sigmas.append(sigma)
        if checkpoint_dir is not None and checkpoint_every and (ep + 1) % checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"checkpoint_ep{ep + 1}.npz"
            agent.save(path, fingerprint, {"episode": ep + 1})
            out.checkpoints.append(str(path))
        if progress is not None:
            progress(ep, out)
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir) / "checkpoint_final.npz"
        agent.save(path, fingerprint, {"episode": config.episodes})
        out.checkpoints.append(str(path))
    log.info("trained %d episodes, %d updates", config.episodes, out.updates)
    return out
