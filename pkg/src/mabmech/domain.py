"""Sponsored-search problem instances with dot-product (value-per-click) valuations.

Ads are indexed globally ``0..m-1`` and each ad has exactly one owning agent.
An agent's value for a click vector ``C`` is ``sum_j b_j * C_j`` over the ads
it owns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class InstanceError(ValueError):
    """Base class for invalid problem instances."""


class ZeroCtr(InstanceError):
    pass


class ValueOutOfRange(InstanceError):
    pass


class OwnershipOverlap(InstanceError):
    pass


@dataclass(frozen=True)
class AdSpec:
    owner: int
    value_per_click: float
    ctr: float


@dataclass(frozen=True)
class AdInstance:
    num_agents: int
    ads: tuple[AdSpec, ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "ads", tuple(self.ads))

    @property
    def num_ads(self) -> int:
        return len(self.ads)

    @property
    def owners(self) -> np.ndarray:
        return np.array([ad.owner for ad in self.ads], dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.array([ad.value_per_click for ad in self.ads], dtype=float)

    @property
    def ctrs(self) -> np.ndarray:
        return np.array([ad.ctr for ad in self.ads], dtype=float)

    def ads_of(self, agent: int) -> np.ndarray:
        return np.flatnonzero(self.owners == agent)

    def with_values(self, values: Sequence[float]) -> "AdInstance":
        ads = tuple(
            AdSpec(ad.owner, float(v), ad.ctr) for ad, v in zip(self.ads, values)
        )
        return validate_instance(AdInstance(self.num_agents, ads, self.horizon))

    def with_ctrs(self, ctrs: Sequence[float]) -> "AdInstance":
        ads = tuple(
            AdSpec(ad.owner, ad.value_per_click, float(c)) for ad, c in zip(self.ads, ctrs)
        )
        return validate_instance(AdInstance(self.num_agents, ads, self.horizon))

    def with_horizon(self, horizon: int) -> "AdInstance":
        return validate_instance(AdInstance(self.num_agents, self.ads, int(horizon)))

    @classmethod
    def build(
        cls,
        owners: Sequence[int],
        values: Sequence[float],
        ctrs: Sequence[float],
        horizon: int,
        num_agents: int | None = None,
    ) -> "AdInstance":
        if not len(owners) == len(values) == len(ctrs):
            raise InstanceError("owners, values and ctrs must have equal length")
        if num_agents is None:
            num_agents = max(owners) + 1 if len(owners) else 0
        ads = tuple(
            AdSpec(int(o), float(v), float(c)) for o, v, c in zip(owners, values, ctrs)
        )
        return validate_instance(cls(int(num_agents), ads, int(horizon)))

    @classmethod
    def from_ownership(
        cls,
        ownership: Sequence[Iterable[int]],
        values: Sequence[float],
        ctrs: Sequence[float],
        horizon: int,
    ) -> "AdInstance":
        """Build from per-agent ad sets; overlapping or missing ads are rejected."""
        m = len(values)
        owner = [-1] * m
        for agent, ads in enumerate(ownership):
            for j in ads:
                if not 0 <= j < m:
                    raise InstanceError(f"agent {agent} owns unknown ad {j}")
                if owner[j] != -1:
                    raise OwnershipOverlap(
                        f"ad {j} is owned by both agent {owner[j]} and agent {agent}"
                    )
                owner[j] = agent
        missing = [j for j, o in enumerate(owner) if o == -1]
        if missing:
            raise InstanceError(f"ads {missing} have no owner")
        return cls.build(owner, values, ctrs, horizon, num_agents=len(ownership))


def validate_instance(instance: AdInstance) -> AdInstance:
    """Return ``instance`` unchanged if every invariant holds, else raise."""
    if instance.num_agents < 1:
        raise InstanceError(f"need at least one agent, got {instance.num_agents}")
    if instance.num_ads < 1:
        raise InstanceError("need at least one ad")
    if instance.horizon < 1:
        raise InstanceError(f"horizon must be >= 1, got {instance.horizon}")
    for j, ad in enumerate(instance.ads):
        if not 0 <= ad.owner < instance.num_agents:
            raise InstanceError(f"ad {j} has owner {ad.owner} outside 0..{instance.num_agents - 1}")
        if not 0.0 <= ad.value_per_click <= 1.0:
            raise ValueOutOfRange(f"ad {j}: value_per_click {ad.value_per_click} not in [0, 1]")
        if ad.ctr == 0.0:
            raise ZeroCtr(f"ad {j}: ctr must be strictly positive")
        if not 0.0 < ad.ctr <= 1.0:
            raise InstanceError(f"ad {j}: ctr {ad.ctr} not in (0, 1]")
    return instance


def check_bids(bids, instance: AdInstance) -> np.ndarray:
    """Coerce a bid vector to a float array and enforce ``[0, 1]^m``."""
    b = np.asarray(bids, dtype=float)
    if b.shape != (instance.num_ads,):
        raise ValueError(f"bid vector has shape {b.shape}, expected ({instance.num_ads},)")
    if np.any(b < 0.0) or np.any(b > 1.0):
        raise ValueOutOfRange(f"bids must lie in [0, 1], got {b.tolist()}")
    return b


def agent_value(instance: AdInstance, bids, agent: int, clicks) -> float:
    """Value of ``agent`` for click vector ``clicks`` under (reported) per-click values ``bids``."""
    b = np.asarray(bids, dtype=float)
    c = np.asarray(clicks, dtype=float)
    if c.shape != (instance.num_ads,):
        raise ValueError(f"click vector has shape {c.shape}, expected ({instance.num_ads},)")
    mask = instance.owners == agent
    return float(np.dot(b[mask], c[mask]))


def agent_values(owners: np.ndarray, num_agents: int, bids, clicks) -> np.ndarray:
    """Per-agent values; ``bids`` and ``clicks`` may carry leading batch axes."""
    prod = np.asarray(bids, dtype=float) * np.asarray(clicks, dtype=float)
    out = np.zeros(prod.shape[:-1] + (num_agents,))
    for i in range(num_agents):
        out[..., i] = prod[..., owners == i].sum(axis=-1)
    return out


def rescale_bids(bids, lam, instance: AdInstance) -> np.ndarray:
    """Scale each ad's bid by its owner's coefficient: ``out[j] = lam[owner(j)] * bids[j]``."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != instance.num_agents:
        raise ValueError(f"need {instance.num_agents} rescaling coefficients, got {lam.shape[-1]}")
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError("rescaling coefficients must lie in [0, 1]")
    return np.asarray(bids, dtype=float) * lam[..., instance.owners]


def load_instance(path) -> AdInstance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def instance_from_dict(payload: dict) -> AdInstance:
    try:
        n = int(payload["agents"])
        horizon = int(payload["horizon"])
        raw_ads = payload["ads"]
    except KeyError as exc:
        raise InstanceError(f"instance file is missing field {exc}") from None
    ads = []
    for j, ad in enumerate(raw_ads):
        owner = ad["owner"]
        if isinstance(owner, list):
            if len(owner) != 1:
                raise OwnershipOverlap(f"ad {j} lists owners {owner}; exactly one is allowed")
            owner = owner[0]
        ads.append(AdSpec(int(owner), float(ad["value"]), float(ad["ctr"])))
    return validate_instance(AdInstance(n, tuple(ads), horizon))


def instance_to_dict(instance: AdInstance) -> dict:
    return {
        "agents": instance.num_agents,
        "horizon": instance.horizon,
        "ads": [
            {"owner": ad.owner, "value": ad.value_per_click, "ctr": ad.ctr}
            for ad in instance.ads
        ],
    }


def save_instance(instance: AdInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=2) + "\n", encoding="utf-8")
