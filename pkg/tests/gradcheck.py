"""Central finite-difference checks for the hand-written backpropagation."""

import numpy as np

from vecoffload.learner import MADDPG, MLP, Batch, TrainerConfig

EPS = 1e-6


def numeric_grad(f, x, eps=EPS):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + eps
        hi = f()
        x.flat[i] = old - eps
        lo = f()
        x.flat[i] = old
        g.flat[i] = (hi - lo) / (2 * eps)
    return g


def rel_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def random_batch(rng, n_agents, obs_dim, act_dim, size=6):
    return Batch(
        rng.normal(size=(size, n_agents, obs_dim)),
        rng.random((size, n_agents, act_dim)),
        rng.normal(size=(size, n_agents)),
        rng.normal(size=(size, n_agents, obs_dim)),
    )


def small_agent(seed):
    """A random small MADDPG instance and a matching batch."""
    rng = np.random.default_rng(seed)
    k, obs, act = int(rng.integers(1, 4)), int(rng.integers(2, 6)), int(rng.integers(1, 4))
    hidden = tuple(int(h) for h in rng.integers(3, 8, size=int(rng.integers(1, 3))))
    shared = int(rng.integers(0, obs + 1))
    cfg = TrainerConfig(hidden_sizes=hidden, grad_clip=None, batch_size=4, buffer_size=8)
    agent = MADDPG(k, obs, act, cfg, rng, shared_dim=shared)
    return agent, random_batch(rng, k, obs, act), rng


def critic_errors(agent: MADDPG, batch: Batch, k: int) -> tuple[float, float]:
    """(param, input) relative errors of the critic's squared TD loss and output gradients."""
    critic = agent.critics[k]
    x = agent.critic_input(batch.obs, batch.actions)
    y = agent.target_values(k, batch)

    def loss():
        err = critic.forward(x)[:, 0] - y
        return float(np.mean(err * err))

    q, acts = critic.forward_cache(x)
    err = q[:, 0] - y
    grad, _ = critic.backward(acts, (2.0 / err.size) * err[:, None])
    p_err = rel_error(grad, numeric_grad(loss, critic.params))

    w = np.random.default_rng(0).normal(size=(x.shape[0], 1))
    _, d_in = critic.backward(acts, w, param_grad=False)
    i_err = rel_error(d_in, numeric_grad(lambda: float(np.sum(critic.forward(x) * w)), x))
    return p_err, i_err


def actor_error(agent: MADDPG, batch: Batch, k: int) -> float:
    """Relative error of the deterministic policy gradient against finite differences."""

    def objective():
        joint = np.array(batch.actions, copy=True)
        joint[:, k] = agent.actors[k].forward(batch.obs[:, k])
        return -float(np.mean(agent.critic_forward(k, batch.obs, joint)))

    return rel_error(agent.actor_gradient(k, batch), numeric_grad(objective, agent.actors[k].params))


def mlp_input_error(seed: int) -> float:
    rng = np.random.default_rng(seed)
    net = MLP((4, 6, 3), "sigmoid", rng)
    x = rng.normal(size=(5, 4))
    w = rng.normal(size=(5, 3))
    _, acts = net.forward_cache(x)
    _, d_in = net.backward(acts, w, param_grad=False)
    return rel_error(d_in, numeric_grad(lambda: float(np.sum(net.forward(x) * w)), x))
