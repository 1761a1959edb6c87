"""Network-backed hierarchy: policies for both levels, replay storage, learning steps, checkpoints."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .. import hac
from ..env import AgentAction, EnvState, JointAction
from ..hac import Goal, ReplayBuffer, Subgoal, TransitionKind, TransitionRecord
from .config import TrainConfig
from .nn import network_from_dict
from .updates import PPOBatch, PPOLevel, QBatch, QLevel, update_ppo, update_q

CHECKPOINT_VERSION = 1
LOW_ACTIONS = 3  # negative, hold, positive


class CheckpointError(ValueError):
    pass


def offset_mask(scene, cells, H: int) -> np.ndarray:
    """Subgoal offsets (-H..H cells per furniture) that stay inside the room."""
    offs = np.arange(-H, H + 1)
    rows = []
    for i in range(2):
        kmin, kmax = scene.cell_ranges[i]
        k = cells[i] + offs
        rows.append((k >= kmin) & (k <= kmax))
    return np.array(rows)


def action_index(record: TransitionRecord, H: int) -> np.ndarray | None:
    """Per-head action index of a record, or None when a subgoal lies beyond +-H cells."""
    if record.level == 0:
        a = record.action
        return np.array([int(a.a1) + 1, int(a.a2) + 1])
    tc = hac.target_cells(record.scene, record.action.target_pos)
    off = np.array([tc[0] - record.cells[0], tc[1] - record.cells[1]])
    if np.any(np.abs(off) > H):
        return None
    return off + H


def learner_reward(record: TransitionRecord) -> tuple[np.ndarray, np.ndarray]:
    """Reward and per-head termination used for learning.

    IoU rewards are shifted to IoU - 1 so the exact goal is a zero-cost
    absorbing state, and a head still below the threshold pays one extra unit
    per step. A head terminates once its furniture clears the threshold.
    """
    r = np.asarray(record.reward, dtype=float)
    if record.kind is TransitionKind.SUBGOAL_TEST:
        return r, np.ones(2, dtype=bool)
    done = r > record.goal.threshold
    return np.where(done, r - 1.0, r - 2.0), done


class LowNetPolicy:
    def __init__(self, learner):
        self.learner = learner

    def act(self, state: EnvState, goal: Goal, explore: bool, rng: np.random.Generator) -> JointAction:
        obs = hac.encode_obs(state.scene, state.cells, goal)
        idx = self.learner.select(obs, None, explore, rng)
        return JointAction(AgentAction(int(idx[0]) - 1), AgentAction(int(idx[1]) - 1))


class HighNetPolicy:
    def __init__(self, learner, H: int):
        self.learner = learner
        self.H = H

    def act(self, state: EnvState, goal: Goal, explore: bool, rng: np.random.Generator) -> Subgoal:
        obs = hac.encode_obs(state.scene, state.cells, goal)
        mask = offset_mask(state.scene, state.cells, self.H)
        idx = self.learner.select(obs, mask, explore, rng)
        cells = [state.cells[i] + int(idx[i]) - self.H for i in range(2)]
        return Subgoal(hac.cells_to_pos(state.scene, cells))


class _Rows:
    """Fixed-capacity arrays mirroring a ReplayBuffer slot for slot."""

    def __init__(self, capacity: int, obs_dim: int, n_actions: int, masked: bool):
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, 2), dtype=int)
        self.rew = np.zeros((capacity, 2))
        self.done = np.zeros((capacity, 2), dtype=bool)
        self.mask = np.zeros((capacity, 2, n_actions), dtype=bool) if masked else None

    def batch(self, idx: np.ndarray) -> QBatch:
        return QBatch(
            self.obs[idx],
            self.act[idx],
            self.rew[idx],
            self.next_obs[idx],
            self.done[idx],
            None if self.mask is None else self.mask[idx],
        )


class HACAgent:
    """Both levels' learners, the hierarchy that runs them, and their replay buffers."""

    def __init__(self, config: TrainConfig, rng: np.random.Generator | None = None):
        self.config = config
        rng = np.random.default_rng(config.seed) if rng is None else rng
        H = config.H
        level_cls = QLevel if config.algorithm == "q_learning" else PPOLevel
        layout = (hac.OBS_HEAD_COLS, hac.OBS_SHARED_COLS) if config.shared_heads else None
        self.levels = [
            level_cls(hac.OBS_DIM, 2, LOW_ACTIONS, config, rng, head_layout=layout),
            level_cls(hac.OBS_DIM, 2, 2 * H + 1, config, rng, head_layout=layout),
        ]
        self.hierarchy = hac.HierarchyParams(
            LowNetPolicy(self.levels[0]),
            HighNetPolicy(self.levels[1], H),
            H=H,
            subgoal_test_rate=config.subgoal_test_rate,
            penalty=config.penalty,
            subgoal_threshold=config.subgoal_threshold,
        )
        self.buffers = [ReplayBuffer(config.buffer_capacity) for _ in range(2)]
        self._rows = [
            _Rows(config.buffer_capacity, hac.OBS_DIM, LOW_ACTIONS, masked=False),
            _Rows(config.buffer_capacity, hac.OBS_DIM, 2 * H + 1, masked=True),
        ]
        self.stage = None

    @property
    def H(self) -> int:
        return self.config.H

    def set_epsilon(self, eps: float) -> None:
        for lv in self.levels:
            lv.epsilon = eps

    # -- q-learning storage and updates

    def store(self, record: TransitionRecord) -> None:
        idx = action_index(record, self.H)
        if idx is None:
            return
        lv = record.level
        slot = self.buffers[lv].add(record)
        rows = self._rows[lv]
        rows.obs[slot] = record.state
        rows.next_obs[slot] = record.next_state
        rows.act[slot] = idx
        rows.rew[slot], rows.done[slot] = learner_reward(record)
        if rows.mask is not None:
            rows.mask[slot] = offset_mask(record.scene, record.next_cells, self.H)

    def learn_q(self, rng: np.random.Generator) -> list[float]:
        cfg = self.config
        losses = []
        for lv in range(2):
            if len(self.buffers[lv]) < cfg.batch_size:
                continue
            for _ in range(cfg.updates_per_episode):
                idx = self.buffers[lv].sample_indices(cfg.batch_size, rng)
                losses.append(update_q(self._rows[lv].batch(idx), self.levels[lv], cfg))
        return losses

    # -- ppo rollouts and updates

    def _ppo_batch(self, level: int, chains, on_policy: list[bool]) -> PPOBatch | None:
        lv: PPOLevel = self.levels[level]
        gamma = self.config.gamma
        obs, acts, rets, advs, masks, weights = [], [], [], [], [], []
        for chain, on in zip(chains, on_policy):
            o = np.array([t.state for t in chain])
            v = lv.value(o)
            last = chain[-1]
            _, last_done = learner_reward(last)
            g = np.where(last_done, 0.0, lv.value(last.next_state[None])[0])
            out = np.zeros((len(chain), 2))
            for j in reversed(range(len(chain))):
                r, d = learner_reward(chain[j])
                g = r + gamma * np.where(d, 0.0, g)
                out[j] = g
            obs.append(o)
            rets.append(out)
            advs.append(out - v)
            acts.append(np.array([action_index(t, self.H) for t in chain]))
            if level == 1:
                masks.append(np.array([offset_mask(t.scene, t.cells, self.H) for t in chain]))
            weights.append(np.full(len(chain), 1.0 if on else 0.0))
        if not obs:
            return None
        adv = np.concatenate(advs)
        w = np.concatenate(weights)
        if w.sum() > 1:
            sel = adv[w > 0]
            adv = (adv - sel.mean()) / (sel.std() + 1e-8)
        o = np.concatenate(obs)
        a = np.concatenate(acts)
        mask = np.concatenate(masks) if masks else None
        logp_all = lv.log_probs(o, mask)
        old = np.take_along_axis(logp_all, a[:, :, None], axis=2)[:, :, 0]
        return PPOBatch(o, a, old, adv, np.concatenate(rets), mask, w)

    def learn_ppo(self, result: hac.EpisodeResult) -> list[float]:
        chains: list[list[list[TransitionRecord]]] = [[], []]
        flags: list[list[bool]] = [[], []]

        def add(level, records, on):
            if records:
                chains[level].append(records)
                flags[level].append(on)

        by_goal: dict[tuple, list[TransitionRecord]] = {}
        current: list[TransitionRecord] = []
        high: list[TransitionRecord] = []
        subgoals = iter(result.trajectory.subgoals)
        for t in result.transitions:
            if t.level == 0 and t.kind is TransitionKind.REGULAR:
                if current and current[-1].goal != t.goal:
                    add(0, current, True)
                    current = []
                current.append(t)
            elif t.kind is TransitionKind.HINDSIGHT_GOAL:
                by_goal.setdefault((t.level, t.goal), []).append(t)
            elif t.kind is TransitionKind.SUBGOAL_TEST:
                add(1, [t], True)
            else:
                # restore the proposed subgoal so the sample stays on-policy
                high.append(hac.replace_action(t, next(subgoals)))
        add(0, current, True)
        add(1, high, True)
        for (level, _), recs in by_goal.items():
            add(level, [r for r in recs if action_index(r, self.H) is not None], False)

        losses = []
        for lv in range(2):
            if not chains[lv]:
                continue
            batch = self._ppo_batch(lv, chains[lv], flags[lv])
            for _ in range(self.config.ppo_epochs):
                losses.extend(update_ppo(batch, self.levels[lv], self.config))
        return losses

    # -- teachers and checkpoints

    def teacher(self) -> hac.HierarchyParams:
        """Frozen copy of the current hierarchy for choosing next-stage starts."""
        return copy.deepcopy(self.hierarchy)

    def to_dict(self) -> dict:
        levels = []
        for lv in self.levels:
            if isinstance(lv, QLevel):
                levels.append({"q": lv.net.to_dict()})
            else:
                levels.append({"policy": lv.policy.to_dict(), "value": lv.value.to_dict()})
        return {
            "version": CHECKPOINT_VERSION,
            "obs_dim": hac.OBS_DIM,
            "stage": self.stage,
            "config": self.config.to_dict(),
            "levels": levels,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def from_dict(cls, doc: dict) -> HACAgent:
        if doc.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
        if doc.get("obs_dim") != hac.OBS_DIM:
            raise CheckpointError(
                f"checkpoint expects {doc.get('obs_dim')}-dim observations, this build produces {hac.OBS_DIM}"
            )
        cfg = TrainConfig(**{**doc["config"], "hidden": tuple(doc["config"]["hidden"])})
        agent = cls(cfg)
        for lv, d in zip(agent.levels, doc["levels"]):
            try:
                if isinstance(lv, QLevel):
                    lv.net = network_from_dict(d["q"])
                    lv.target = lv.net.copy()
                else:
                    lv.policy = network_from_dict(d["policy"])
                    lv.value = network_from_dict(d["value"])
            except (KeyError, ValueError) as exc:
                raise CheckpointError(f"checkpoint network mismatch: {exc}") from None
        agent.stage = doc.get("stage")
        return agent

    @classmethod
    def load(cls, path: str | Path) -> HACAgent:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: malformed checkpoint at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)
