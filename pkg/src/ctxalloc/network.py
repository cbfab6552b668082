"""Two-tier small cell downlink: topology, channels, subcarrier maps and SINR/rate.

A scenario fixes everything except the power allocation. Each SCBS ``i`` owns a
list of *links* ``(subcarrier k, user j)`` given by its subcarrier map; its
strategy ``u_i`` has one nonnegative entry per link, in map order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


class ScenarioError(ValueError):
    """Raised when a scenario violates one of its structural invariants."""


class DegenerateGeometryError(ScenarioError):
    """An SCBS and a UE it serves are co-located (zero distance)."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Full problem instance.

    ``channel_gain`` holds real amplitudes ``h_ij[k]`` with shape ``(M, N, K)``;
    only ``|h|**2`` enters the model. ``noise_var`` has shape ``(N, K)``.
    ``subcarrier_map[i]`` is a sequence of ``(k, j)`` pairs. ``qos_target[i]``
    maps each *frequent* user of SCBS ``i`` to its demand; every other served
    user is occasional.
    """

    positions_scbs: np.ndarray
    positions_ues: np.ndarray
    path_loss_exponent: float
    channel_gain: np.ndarray
    noise_var: np.ndarray
    subcarrier_map: tuple
    qos_target: tuple
    p_max: float
    rng_seed: int = 0
    multi_subcarrier: bool = False

    def __post_init__(self):
        setattr_ = object.__setattr__
        setattr_(self, "positions_scbs", _frozen(self.positions_scbs).reshape(-1, 2))
        setattr_(self, "positions_ues", _frozen(self.positions_ues).reshape(-1, 2))
        setattr_(self, "channel_gain", _frozen(self.channel_gain))
        setattr_(self, "noise_var", _frozen(self.noise_var))
        setattr_(
            self,
            "subcarrier_map",
            tuple(tuple((int(k), int(j)) for k, j in links) for links in self.subcarrier_map),
        )
        setattr_(
            self,
            "qos_target",
            tuple({int(j): float(v) for j, v in dict(q).items()} for q in self.qos_target),
        )
        setattr_(self, "p_max", float(self.p_max))
        setattr_(self, "path_loss_exponent", float(self.path_loss_exponent))
        setattr_(self, "rng_seed", int(self.rng_seed))
        self._validate()

    # -- sizes -------------------------------------------------------------
    @property
    def num_scbs(self) -> int:
        return self.positions_scbs.shape[0]

    @property
    def num_ues(self) -> int:
        return self.positions_ues.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.channel_gain.shape[2]

    def _validate(self):
        M, N = self.num_scbs, self.num_ues
        if M < 1 or N < 1:
            raise ScenarioError("need at least one SCBS and one UE")
        if self.channel_gain.ndim != 3 or self.channel_gain.shape[:2] != (M, N):
            raise ScenarioError(f"channel_gain must have shape (M, N, K) = ({M}, {N}, K)")
        K = self.num_subcarriers
        if K < N:
            raise ScenarioError(f"need K >= N, got K={K}, N={N}")
        if self.noise_var.shape != (N, K):
            raise ScenarioError(f"noise_var must have shape (N, K) = ({N}, {K})")
        if not np.all(np.isfinite(self.channel_gain)):
            raise ScenarioError("channel gains must be finite")
        if not np.all(np.isfinite(self.noise_var)) or np.any(self.noise_var <= 0):
            raise ScenarioError("noise variances must be finite and strictly positive")
        if not (self.path_loss_exponent > 0):
            raise ScenarioError("path_loss_exponent must be positive")
        if not (np.isfinite(self.p_max) and self.p_max > 0):
            raise ScenarioError("p_max must be positive and finite")
        if len(self.subcarrier_map) != M or len(self.qos_target) != M:
            raise ScenarioError("subcarrier_map and qos_target need one entry per SCBS")
        for i, links in enumerate(self.subcarrier_map):
            if not links:
                raise ScenarioError(f"SCBS {i} has an empty subcarrier map")
            subs = [k for k, _ in links]
            users = [j for _, j in links]
            if len(set(subs)) != len(subs):
                raise ScenarioError(f"SCBS {i}: subcarrier assigned twice")
            if min(subs) < 0 or max(subs) >= K or min(users) < 0 or max(users) >= N:
                raise ScenarioError(f"SCBS {i}: subcarrier map index out of range")
            if not self.multi_subcarrier and len(set(users)) != len(users):
                raise ScenarioError(
                    f"SCBS {i}: subcarrier map is not one-to-one (enable multi_subcarrier)"
                )
            served = set(users)
            for j, ubar in self.qos_target[i].items():
                if j not in served:
                    raise ScenarioError(f"SCBS {i}: frequent user {j} is not served")
                if not (np.isfinite(ubar) and ubar >= 0):
                    raise ScenarioError(f"SCBS {i}: QoS target for user {j} must be >= 0")
            d = np.linalg.norm(self.positions_scbs[i] - self.positions_ues[users], axis=1)
            if np.any(d == 0):
                raise DegenerateGeometryError(f"SCBS {i} is co-located with a served UE")

    # -- derived sets ------------------------------------------------------
    def served_users(self, i: int) -> list[int]:
        """Ordered user set N_i (first appearance in the subcarrier map)."""
        return list(dict.fromkeys(j for _, j in self.subcarrier_map[i]))

    def frequent_users(self, i: int) -> list[int]:
        return [j for j in self.served_users(i) if j in self.qos_target[i]]

    def occasional_users(self, i: int) -> list[int]:
        return [j for j in self.served_users(i) if j not in self.qos_target[i]]

    def dims(self) -> list[int]:
        return [len(links) for links in self.subcarrier_map]

    @cached_property
    def distances(self) -> np.ndarray:
        """(M, N) SCBS-to-UE distances."""
        diff = self.positions_scbs[:, None, :] - self.positions_ues[None, :, :]
        return np.linalg.norm(diff, axis=2)

    @cached_property
    def links(self) -> "LinkTable":
        return LinkTable.build(self)

    def with_p_max(self, p_max: float) -> "Scenario":
        return self.replace(p_max=p_max)

    def replace(self, **changes) -> "Scenario":
        fields = dict(
            positions_scbs=self.positions_scbs,
            positions_ues=self.positions_ues,
            path_loss_exponent=self.path_loss_exponent,
            channel_gain=self.channel_gain,
            noise_var=self.noise_var,
            subcarrier_map=self.subcarrier_map,
            qos_target=self.qos_target,
            p_max=self.p_max,
            rng_seed=self.rng_seed,
            multi_subcarrier=self.multi_subcarrier,
        )
        fields.update(changes)
        return Scenario(**fields)

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "num_scbs": self.num_scbs,
            "num_ues": self.num_ues,
            "num_subcarriers": self.num_subcarriers,
            "positions_scbs": self.positions_scbs.tolist(),
            "positions_ues": self.positions_ues.tolist(),
            "path_loss_exponent": self.path_loss_exponent,
            "channel_gain": self.channel_gain.tolist(),
            "noise_var": self.noise_var.tolist(),
            "subcarrier_map": [[list(p) for p in links] for links in self.subcarrier_map],
            "qos_target": [{str(j): v for j, v in q.items()} for q in self.qos_target],
            "p_max": self.p_max,
            "rng_seed": self.rng_seed,
            "multi_subcarrier": self.multi_subcarrier,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        sc = cls(
            positions_scbs=d["positions_scbs"],
            positions_ues=d["positions_ues"],
            path_loss_exponent=d["path_loss_exponent"],
            channel_gain=d["channel_gain"],
            noise_var=d["noise_var"],
            subcarrier_map=d["subcarrier_map"],
            qos_target=[{int(j): v for j, v in q.items()} for q in d["qos_target"]],
            p_max=d["p_max"],
            rng_seed=d.get("rng_seed", 0),
            multi_subcarrier=d.get("multi_subcarrier", False),
        )
        for key, actual in (("num_scbs", sc.num_scbs), ("num_ues", sc.num_ues),
                            ("num_subcarriers", sc.num_subcarriers)):
            if key in d and int(d[key]) != actual:
                raise ScenarioError(f"{key}={d[key]} disagrees with array shapes ({actual})")
        return sc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class LinkTable:
    """Flattened view of all (SCBS, subcarrier, user) links, used by the hot loops.

    Links are numbered player by player; ``offsets[i]:offsets[i+1]`` are the
    links of SCBS ``i``. ``slot`` indexes the (user, subcarrier) resource, so
    links sharing a slot interfere with each other.
    """

    player: np.ndarray
    ue: np.ndarray
    sub: np.ndarray
    slot: np.ndarray
    beta: np.ndarray
    noise: np.ndarray  # per slot, length N*K
    frequent: np.ndarray
    ubar: np.ndarray  # per link (0 for occasional links)
    group: np.ndarray  # (player, user) pair id per link
    group_player: np.ndarray
    group_ue: np.ndarray
    group_frequent: np.ndarray
    group_ubar: np.ndarray
    offsets: np.ndarray
    num_slots: int
    singleton_groups: bool

    @classmethod
    def build(cls, sc: Scenario) -> "LinkTable":
        player, ue, sub = [], [], []
        for i, links in enumerate(sc.subcarrier_map):
            for k, j in links:
                player.append(i)
                ue.append(j)
                sub.append(k)
        player = np.array(player, dtype=np.intp)
        ue = np.array(ue, dtype=np.intp)
        sub = np.array(sub, dtype=np.intp)
        K = sc.num_subcarriers
        beta = np.abs(sc.channel_gain[player, ue, sub]) ** 2 * sc.distances[player, ue] ** (
            -sc.path_loss_exponent
        )
        pair = player * sc.num_ues + ue
        uniq, group = np.unique(pair, return_inverse=True)
        group_player = uniq // sc.num_ues
        group_ue = uniq % sc.num_ues
        group_frequent = np.array(
            [int(j) in sc.qos_target[int(i)] for i, j in zip(group_player, group_ue)], dtype=bool
        )
        group_ubar = np.array(
            [sc.qos_target[int(i)].get(int(j), 0.0) for i, j in zip(group_player, group_ue)]
        )
        offsets = np.concatenate([[0], np.cumsum(sc.dims())]).astype(np.intp)
        table = cls(
            player=player,
            ue=ue,
            sub=sub,
            slot=ue * K + sub,
            beta=beta,
            noise=np.asarray(sc.noise_var).reshape(-1),
            frequent=group_frequent[group],
            ubar=group_ubar[group],
            group=group,
            group_player=group_player,
            group_ue=group_ue,
            group_frequent=group_frequent,
            group_ubar=group_ubar,
            offsets=offsets,
            num_slots=sc.num_ues * K,
            singleton_groups=len(uniq) == len(player),
        )
        for a in (table.player, table.ue, table.sub, table.slot, table.beta, table.frequent,
                  table.ubar, table.group, table.offsets):
            a.setflags(write=False)
        return table

    @property
    def size(self) -> int:
        return self.player.shape[0]

    def denominators(self, x: np.ndarray) -> np.ndarray:
        """Total received power plus noise, per link: I + beta*u + sigma^2."""
        total = self.noise + np.bincount(self.slot, weights=self.beta * x, minlength=self.num_slots)
        return total[self.slot]

    def link_rates(self, x: np.ndarray) -> np.ndarray:
        own = self.beta * x
        den = self.denominators(x)
        return np.log1p(own / (den - own))

    def group_rates(self, x: np.ndarray) -> np.ndarray:
        return np.bincount(self.group, weights=self.link_rates(x), minlength=len(self.group_player))


@dataclass(frozen=True, eq=False)
class PowerProfile:
    """Joint strategy: one nonnegative power vector per SCBS, ordered like its map."""

    powers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(_frozen(p).reshape(-1) for p in self.powers))

    @classmethod
    def from_flat(cls, scenario: Scenario, x: np.ndarray) -> "PowerProfile":
        off = scenario.links.offsets
        return cls(tuple(x[off[i]:off[i + 1]] for i in range(scenario.num_scbs)))

    @classmethod
    def uniform(cls, scenario: Scenario, fraction: float = 0.5) -> "PowerProfile":
        """Every SCBS splits ``fraction * p_max`` evenly over its links."""
        return cls(tuple(np.full(d, fraction * scenario.p_max / d) for d in scenario.dims()))

    @classmethod
    def zeros(cls, scenario: Scenario) -> "PowerProfile":
        return cls(tuple(np.zeros(d) for d in scenario.dims()))

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.powers) if self.powers else np.zeros(0)

    def is_feasible(self, p_max: float, rtol: float = 0.0) -> bool:
        return all(np.all(p >= 0) and p.sum() <= p_max * (1 + rtol) for p in self.powers)

    def check_shape(self, scenario: Scenario):
        if [len(p) for p in self.powers] != scenario.dims():
            raise ScenarioError("power profile does not match the scenario's subcarrier maps")

    def to_list(self) -> list:
        return [p.tolist() for p in self.powers]


# -- operations -------------------------------------------------------------

def effective_gain(scenario: Scenario, i: int, j: int, k: int) -> float:
    """beta = |h_ij[k]|^2 * d_ij^(-alpha)."""
    d = scenario.distances[i, j]
    if d == 0:
        raise DegenerateGeometryError(f"SCBS {i} and UE {j} are co-located")
    return float(abs(scenario.channel_gain[i, j, k]) ** 2 * d ** (-scenario.path_loss_exponent))


def _link_index(scenario: Scenario, i: int, j: int, k: int) -> int:
    try:
        pos = scenario.subcarrier_map[i].index((k, j))
    except ValueError:
        raise ScenarioError(f"SCBS {i} does not serve UE {j} on subcarrier {k}") from None
    return int(scenario.links.offsets[i]) + pos


def sinr(scenario: Scenario, profile: PowerProfile, i: int, j: int, k: int) -> float:
    """SINR of UE ``j`` on subcarrier ``k`` due to SCBS ``i``.

    Interference comes only from other SCBSs serving the same user on the
    same subcarrier.
    """
    profile.check_shape(scenario)
    link = _link_index(scenario, i, j, k)
    x = profile.flat
    lt = scenario.links
    own = lt.beta[link] * x[link]
    den = lt.denominators(x)[link]
    return float(own / (den - own))


def rate(scenario: Scenario, profile: PowerProfile, i: int, j: int) -> float:
    """Rate (nats) SCBS ``i`` delivers to UE ``j``, summed over its subcarriers."""
    profile.check_shape(scenario)
    if j not in scenario.served_users(i):
        raise ScenarioError(f"UE {j} is not served by SCBS {i}")
    lt = scenario.links
    mask = (lt.player == i) & (lt.ue == j)
    return float(lt.link_rates(profile.flat)[mask].sum())


def build_scenario(
    beta: Sequence,
    noise_var,
    p_max: float,
    *,
    subcarrier_map=None,
    qos_target=None,
    num_subcarriers: int | None = None,
    rng_seed: int = 0,
) -> Scenario:
    """Scenario with prescribed effective gains, for tests and hand-built instances.

    ``beta`` has shape ``(M, N)`` (same gain on every subcarrier) or
    ``(M, N, K)``. Geometry is fixed at unit distance so that ``beta == |h|^2``.
    Defaults: every SCBS serves every user, user ``j`` on subcarrier ``j``,
    everyone occasional.
    """
    beta = np.asarray(beta, dtype=float)
    M, N = beta.shape[:2]
    K = num_subcarriers or (beta.shape[2] if beta.ndim == 3 else N)
    if beta.ndim == 2:
        beta = np.repeat(beta[:, :, None], K, axis=2)
    noise = np.asarray(noise_var, dtype=float)
    if noise.ndim == 1:
        noise = noise[:, None]  # one value per user
    noise = np.broadcast_to(noise, (N, K)).copy()
    if subcarrier_map is None:
        subcarrier_map = [[(j, j) for j in range(N)] for _ in range(M)]
    if qos_target is None:
        qos_target = [{} for _ in range(M)]
    multi = any(len({j for _, j in links}) != len(links) for links in subcarrier_map)
    return Scenario(
        positions_scbs=np.zeros((M, 2)),
        positions_ues=np.tile([[1.0, 0.0]], (N, 1)),
        path_loss_exponent=3.0,
        channel_gain=np.sqrt(beta),
        noise_var=noise,
        subcarrier_map=subcarrier_map,
        qos_target=qos_target,
        p_max=p_max,
        rng_seed=rng_seed,
        multi_subcarrier=multi,
    )
