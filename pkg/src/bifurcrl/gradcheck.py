"""Finite-difference verification of every training loss on small networks."""
from __future__ import annotations

import numpy as np

from . import actor as actor_mod
from . import autodiff as ad
from . import critic as critic_mod
from .actor import PolicyNetwork
from .critic import CriticPair
from .distributions import ActionBounds


def run_gradcheck(seed: int = 0, h: float = 1e-4, n_states: int = 4,
                  hidden=(8, 8)) -> dict:
    """Max relative error of reverse-mode vs central differences for the
    critic loss, both policy-loss terms, and the temperature objective.

    Uses randomized small networks; sampling paths are frozen per probe so
    the losses are smooth functions of the parameters.
    """
    rng = np.random.default_rng(seed)
    obs_dim, act_dim = 3, 2
    bounds = ActionBounds(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    policy = PolicyNetwork(obs_dim, act_dim, hidden, 2, bounds, 1.0, rng)
    # the clip gradient treats the singular vectors as exact, so drive the
    # power iteration hard; a small spectral gap makes the default too loose
    policy.converge_spectral(2000)
    critics = CriticPair(obs_dim, act_dim, hidden, rng)
    states = rng.standard_normal((n_states, obs_dim))
    actions = rng.uniform(-0.9, 0.9, (n_states, act_dim))
    targets = rng.standard_normal(n_states)
    alpha = 0.7
    errors = {}

    def critic_loss_fn():
        return critic_mod.critic_loss(critics.online(0, states, actions), targets)

    errors["J_Z"] = ad.finite_diff_check(critic_loss_fn, critics.parameters(0), h=h)

    def rev_fn():
        r = np.random.default_rng(seed + 1)
        return actor_mod.reverse_kl_loss(policy, critics, states, alpha, r)

    errors["J_revKL"] = ad.finite_diff_check(rev_fn, policy.parameters(), h=h)

    fwd_actions = rng.uniform(-0.9, 0.9, (n_states, act_dim))

    def fwd_fn():
        return actor_mod.forward_kl_loss(policy, states, fwd_actions)

    errors["J_fwdKL"] = ad.finite_diff_check(fwd_fn, policy.parameters(), h=h)

    # temperature objective: alpha * E[-log pi - H] with the expectation frozen
    r = np.random.default_rng(seed + 2)
    logp = policy.sample(states, r).log_prob.data
    k = float(np.mean(-logp) + act_dim)
    log_alpha = ad.parameter(np.log(alpha), name="log_alpha")

    def temp_fn():
        return ad.mul(ad.exp(log_alpha), k)

    errors["temperature"] = ad.finite_diff_check(temp_fn, [log_alpha], h=h)
    return errors
