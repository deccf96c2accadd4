"""Gaussian action-value distribution critics (twin networks with targets)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nets import MlpNetwork, copy_network

SIGMA_Q_MIN = 1e-2
SIGMA_Q_MAX = 30.0
SIGMA_Q_INIT = 1.0

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class ValueDistribution:
    """Mean and standard deviation of the Gaussian return distribution."""
    q: Tensor
    sigma: Tensor


class CriticPair:
    """Two online critics and their soft-updated targets.

    Each network maps (state (+) action) to (Q, pre-std); the pre-std is
    squashed smoothly into [SIGMA_Q_MIN, SIGMA_Q_MAX].
    """

    def __init__(self, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator):
        sizes = [obs_dim + act_dim] + list(hidden) + [2]
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.nets = [MlpNetwork(sizes, rng, name=f"critic{i}") for i in (1, 2)]
        # bias the pre-std output so sigma starts near SIGMA_Q_INIT; a zero
        # bias lands at the middle of the clamp range (~15), and the 1/sigma^2
        # factor in the likelihood then freezes the mean head
        frac = (SIGMA_Q_INIT - SIGMA_Q_MIN) / (SIGMA_Q_MAX - SIGMA_Q_MIN)
        for net in self.nets:
            net.layers[-1][1].data[1] = float(np.log(frac / (1.0 - frac)))
        self.targets = [copy_network(n) for n in self.nets]

    def parameters(self, i: int):
        return self.nets[i].parameters()

    def all_parameters(self):
        return self.nets[0].parameters() + self.nets[1].parameters()

    def named_parameters(self) -> dict:
        out = {}
        for group in self.nets + self.targets:
            for p in group.parameters():
                out[p.name] = p
        return out

    def forward(self, net: MlpNetwork, states, actions) -> ValueDistribution:
        x = ad.concat([ad.as_tensor(states), ad.as_tensor(actions)], axis=1)
        raw = net(x)
        q = ad.reshape(ad.tsum(ad.mul(raw, _pick(raw, 0)), axis=1), (-1,))
        pre = ad.reshape(ad.tsum(ad.mul(raw, _pick(raw, 1)), axis=1), (-1,))
        sigma = ad.smooth_clamp(pre, SIGMA_Q_MIN, SIGMA_Q_MAX)
        return ValueDistribution(q=q, sigma=sigma)

    def online(self, i: int, states, actions) -> ValueDistribution:
        return self.forward(self.nets[i], states, actions)

    def target(self, i: int, states, actions) -> ValueDistribution:
        return self.forward(self.targets[i], states, actions)

    def q_min(self, states, actions) -> Tensor:
        """Conservative aggregate used by the actor: min of the two means."""
        q1 = self.online(0, states, actions).q
        q2 = self.online(1, states, actions).q
        return ad.minimum(q1, q2)


def _pick(raw: Tensor, col: int) -> np.ndarray:
    mask = np.zeros(raw.data.shape[1])
    mask[col] = 1.0
    return mask


def target_value(rewards: np.ndarray, gamma: float, z_samples: np.ndarray,
                 alpha: float, logp_next: np.ndarray,
                 terminals: np.ndarray) -> np.ndarray:
    """y_z = r + gamma * (Z(x', u') - alpha * log pi(u'|x')), zeroed at terminals."""
    assert 0.0 < gamma < 1.0 and alpha > 0.0
    boot = z_samples - alpha * logp_next
    return rewards + gamma * np.where(terminals, 0.0, boot)


def critic_loss(dist: ValueDistribution, targets: np.ndarray) -> Tensor:
    """Mean Gaussian negative log-likelihood of detached targets."""
    resid = ad.div(ad.sub(Tensor(targets), dist.q), dist.sigma)
    nll = ad.add(ad.add(ad.mul(ad.mul(resid, resid), 0.5),
                        ad.log(dist.sigma)), 0.5 * LOG_2PI)
    return ad.tmean(nll)
