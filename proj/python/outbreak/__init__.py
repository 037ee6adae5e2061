"""Multi-cluster outbreak testing-allocation engine."""

import json

from . import _core
from ._core import (
    BudgetViolation,
    CapacityError,
    InputError,
    ParameterError,
    StateError,
    cluster_reward,
    policy_names,
    q_rank_allocate,
    quarantine_decision,
    quarantine_threshold,
)

__all__ = [
    "BudgetViolation",
    "CapacityError",
    "Engine",
    "InputError",
    "ParameterError",
    "Sessions",
    "StateError",
    "cluster_reward",
    "default_config",
    "policy_names",
    "q_rank_allocate",
    "quarantine_decision",
    "quarantine_threshold",
    "run_experiment",
]


def default_config():
    return json.loads(_core.default_config())


def run_experiment(config):
    """Runs an experiment described by a config document and returns its summary row."""
    return json.loads(_core.run_experiment(json.dumps(config)))


class Engine:
    """Day-by-day driver of one multi-cluster episode."""

    def __init__(self, config=None, seed=1, policy=""):
        self._engine = _core.Engine(json.dumps(config or {}), seed, policy)

    def step(self, multiplier=None, budget=None):
        return json.loads(self._engine.step(multiplier, budget))

    @property
    def done(self):
        return self._engine.done

    @property
    def day(self):
        return self._engine.day

    @property
    def policy(self):
        return self._engine.policy

    def run(self):
        days = []
        while not self.done:
            days.append(self.step())
        return days


class Sessions:
    """In-process access to the what-if session manager."""

    def __init__(self, max_sessions=16):
        self._m = _core.Sessions(max_sessions)

    def create(self, body=None):
        return self._m.create(json.dumps(body or {}))

    def step(self, session_id, m_t=None, budget=None):
        body = {}
        if m_t is not None:
            body["m_t"] = m_t
        if budget is not None:
            body["budget"] = budget
        return json.loads(self._m.step(session_id, json.dumps(body)))

    def fork(self, session_id):
        return self._m.fork(session_id)

    def reset(self, session_id):
        return json.loads(self._m.reset(session_id))

    def state(self, session_id):
        return json.loads(self._m.state(session_id))

    def metrics(self, session_id):
        return json.loads(self._m.metrics(session_id))

    def diff(self, a, b):
        return json.loads(self._m.diff(a, b))

    def verify_replay(self, session_id):
        return self._m.verify_replay(session_id)

    def remove(self, session_id):
        self._m.remove(session_id)

    def list(self):
        return self._m.list()

    def describe(self):
        return json.loads(self._m.describe())
