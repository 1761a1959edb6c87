"""Per-level learners and their gradient updates: TD(0) Q-learning and clipped PPO.

Networks are factored per furniture: the output holds ``n_heads`` blocks of
``n_actions`` values (Q-values or logits), one block per furniture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import MLP, NetworkSpec, SharedHeadMLP, make_optimizer

NEG_INF = -1e30


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class QBatch:
    obs: np.ndarray
    actions: np.ndarray  # (N, K) int
    rewards: np.ndarray  # (N, K)
    next_obs: np.ndarray
    dones: np.ndarray  # (N, K) bool
    next_mask: np.ndarray | None = None  # (N, K, A) bool, valid next actions


@dataclass
class PPOBatch:
    obs: np.ndarray
    actions: np.ndarray  # (N, K) int
    old_logp: np.ndarray  # (N, K)
    advantages: np.ndarray  # (N, K)
    returns: np.ndarray  # (N, K)
    mask: np.ndarray | None = None  # (N, K, A) bool
    policy_weight: np.ndarray | None = None  # (N,) 1 for on-policy rows, 0 for critic-only rows


def build_net(input_dim: int, n_heads: int, per_head: int, hidden, rng, head_layout=None, out_scale: float = 0.1):
    """Plain MLP over the whole input, or one weight-shared MLP per head when ``head_layout`` is given.

    ``head_layout`` is ``(head_cols, shared_cols)`` as taken by SharedHeadMLP.
    """
    if head_layout is None:
        return MLP(NetworkSpec(input_dim, n_heads * per_head, hidden), rng, out_scale)
    head_cols, shared_cols = head_layout
    if len(head_cols) != n_heads:
        raise ValueError(f"head layout lists {len(head_cols)} heads, expected {n_heads}")
    n_in = len(head_cols[0]) + len(shared_cols) + n_heads
    return SharedHeadMLP(NetworkSpec(n_in, per_head, hidden), head_cols, shared_cols, rng, out_scale)


def _heads(y: np.ndarray, n_heads: int) -> np.ndarray:
    return y.reshape(y.shape[0], n_heads, -1)


def _check_finite(name: str, value: float, **diag) -> None:
    if not np.isfinite(value):
        detail = ", ".join(f"{k}={v}" for k, v in diag.items())
        raise NonFiniteLossError(f"{name} is not finite ({value}); {detail}")


# ---------------------------------------------------------------------------
# Q-learning


def td_targets(target: MLP, batch: QBatch, gamma: float, n_heads: int, online: MLP | None = None) -> np.ndarray:
    """Bootstrapped targets; with ``online`` the next action is picked by it and scored by ``target``."""
    q_next = _heads(target(batch.next_obs), n_heads)
    pick = q_next if online is None else _heads(online(batch.next_obs), n_heads)
    if batch.next_mask is not None:
        pick = np.where(batch.next_mask, pick, NEG_INF)
    a = pick.argmax(axis=2)
    best = np.take_along_axis(q_next, a[:, :, None], axis=2)[:, :, 0]
    return batch.rewards + gamma * (1.0 - batch.dones) * best


def td_loss(net: MLP, obs: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Half mean squared TD error summed over heads; returns (loss, grads)."""
    n_heads = actions.shape[1]
    out, cache = net.forward(obs)
    q = _heads(out, n_heads)
    rows = np.arange(len(obs))[:, None]
    cols = np.arange(n_heads)[None, :]
    err = q[rows, cols, actions] - targets
    loss = 0.5 * float(np.mean(np.sum(err**2, axis=1)))
    dq = np.zeros_like(q)
    dq[rows, cols, actions] = err / len(obs)
    return loss, net.backward(cache, dq.reshape(out.shape))


class QLevel:
    """Q-network, target copy and optimizer for one hierarchy level."""

    def __init__(
        self, input_dim: int, n_heads: int, n_actions: int, config, rng: np.random.Generator, hidden=None, head_layout=None
    ):
        hidden = tuple(config.hidden if hidden is None else hidden)
        self.n_heads = n_heads
        self.n_actions = n_actions
        self.net = build_net(input_dim, n_heads, n_actions, hidden, rng, head_layout)
        self.target = self.net.copy()
        self.opt = make_optimizer(config.optimizer, config.learning_rate)
        self.n_updates = 0
        self.epsilon = 0.0

    def values(self, obs: np.ndarray) -> np.ndarray:
        return _heads(self.net(np.atleast_2d(obs)), self.n_heads)

    def select(self, obs: np.ndarray, mask: np.ndarray | None, explore: bool, rng: np.random.Generator) -> np.ndarray:
        q = self.values(obs)[0]
        if mask is not None:
            q = np.where(mask, q, NEG_INF)
        choice = q.argmax(axis=1)
        if explore and self.epsilon > 0:
            for i in range(self.n_heads):
                if rng.random() < self.epsilon:
                    valid = np.flatnonzero(mask[i]) if mask is not None else np.arange(self.n_actions)
                    choice[i] = valid[rng.integers(len(valid))]
        return choice


def update_q(batch: QBatch, level: QLevel, config) -> float:
    """One gradient step on the squared TD error; refreshes the target net periodically."""
    if len(batch.obs) == 0:
        raise ValueError("update_q needs a non-empty sample")
    online = level.net if getattr(config, "double_q", False) else None
    y = td_targets(level.target, batch, config.gamma, level.n_heads, online)
    loss, grads = td_loss(level.net, batch.obs, batch.actions, y)
    _check_finite("TD loss", loss, update=level.n_updates, max_target=float(np.max(np.abs(y))))
    level.opt.step(level.net.params, grads)
    level.n_updates += 1
    if level.n_updates % config.target_update_interval == 0:
        level.target.load_from(level.net)
    return loss


# ---------------------------------------------------------------------------
# PPO


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is not None:
        logits = np.where(mask, logits, NEG_INF)
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def ppo_policy_loss(policy: MLP, batch: PPOBatch, clip: float, ent_coef: float = 0.0):
    """Clipped surrogate (negated, to be minimized) minus an optional entropy bonus."""
    n_heads = batch.actions.shape[1]
    out, cache = policy.forward(batch.obs)
    logits = _heads(out, n_heads)
    logp_all = masked_log_softmax(logits, batch.mask)
    p = np.exp(logp_all)
    rows = np.arange(len(batch.obs))[:, None]
    cols = np.arange(n_heads)[None, :]
    logp = logp_all[rows, cols, batch.actions]
    w = np.ones(len(batch.obs)) if batch.policy_weight is None else batch.policy_weight.astype(float)
    norm = max(w.sum(), 1.0) * n_heads
    wk = w[:, None] / norm

    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    s1 = ratio * adv
    s2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    surrogate = np.minimum(s1, s2)
    # the clipped branch is flat in the parameters, so only the unclipped one carries gradient
    d_logp = np.where(s1 <= s2, -ratio * adv, 0.0) * wk
    plogp = np.where(p > 0, p * logp_all, 0.0)
    entropy = -plogp.sum(axis=2)
    loss = float(-(surrogate * wk).sum() - ent_coef * (entropy * wk).sum())

    onehot = np.zeros_like(logits)
    onehot[rows, cols, batch.actions] = 1.0
    d_logits = d_logp[:, :, None] * (onehot - p)
    if ent_coef:
        # dH/dz_j = -p_j (log p_j + H)
        d_ent = -(plogp + p * entropy[:, :, None])
        d_logits -= ent_coef * wk[:, :, None] * d_ent
    if batch.mask is not None:
        d_logits = np.where(batch.mask, d_logits, 0.0)
    return loss, policy.backward(cache, d_logits.reshape(out.shape))


def value_loss(value: MLP, obs: np.ndarray, returns: np.ndarray):
    out, cache = value.forward(obs)
    err = out - returns
    loss = 0.5 * float(np.mean(np.sum(err**2, axis=1)))
    return loss, value.backward(cache, err / len(obs))


class PPOLevel:
    """Stochastic policy network and per-furniture value network for one level."""

    def __init__(
        self, input_dim: int, n_heads: int, n_actions: int, config, rng: np.random.Generator, hidden=None, head_layout=None
    ):
        hidden = tuple(config.hidden if hidden is None else hidden)
        self.n_heads = n_heads
        self.n_actions = n_actions
        self.policy = build_net(input_dim, n_heads, n_actions, hidden, rng, head_layout, out_scale=0.01)
        self.value = build_net(input_dim, n_heads, 1, hidden, rng, head_layout)
        self.opt_pi = make_optimizer(config.optimizer, config.learning_rate)
        self.opt_v = make_optimizer(config.optimizer, config.learning_rate)

    def log_probs(self, obs: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        return masked_log_softmax(_heads(self.policy(np.atleast_2d(obs)), self.n_heads), mask)

    def select(self, obs: np.ndarray, mask: np.ndarray | None, explore: bool, rng: np.random.Generator) -> np.ndarray:
        logp = self.log_probs(obs, None if mask is None else mask[None])[0]
        if not explore:
            return logp.argmax(axis=1)
        p = np.exp(logp)
        return np.array([rng.choice(self.n_actions, p=p[i] / p[i].sum()) for i in range(self.n_heads)])


def update_ppo(batch: PPOBatch, level: PPOLevel, config) -> tuple[float, float]:
    """Clipped-surrogate policy step and value-regression step; returns both losses."""
    if len(batch.obs) == 0:
        raise ValueError("update_ppo needs a non-empty rollout")
    pi_loss, pi_grads = ppo_policy_loss(level.policy, batch, config.ppo_clip, config.ppo_entropy)
    v_loss, v_grads = value_loss(level.value, batch.obs, batch.returns)
    _check_finite("PPO policy loss", pi_loss, max_adv=float(np.max(np.abs(batch.advantages))))
    _check_finite("PPO value loss", v_loss, max_return=float(np.max(np.abs(batch.returns))))
    level.opt_pi.step(level.policy.params, pi_grads)
    level.opt_v.step(level.value.params, v_grads)
    return pi_loss, v_loss
