"""State-dependent half-duplex relay channel without a source-destination link.

The channel factorizes per state pair into a source-relay DMC selected by
``s1`` and a relay-destination DMC selected by ``s2``. Matrices only cover the
active alphabets; half-duplex silence lives in the link-selection policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PMF_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateSpace:
    labels_s1: tuple[str, ...]
    labels_s2: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels_s1", tuple(str(s) for s in self.labels_s1))
        object.__setattr__(self, "labels_s2", tuple(str(s) for s in self.labels_s2))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.labels_s1), len(self.labels_s2)

    def index_s1(self, label: str) -> int:
        return self.labels_s1.index(label)

    def index_s2(self, label: str) -> int:
        return self.labels_s2.index(label)


@dataclass(frozen=True)
class JointStatePmf:
    """Joint PMF p(s1, s2) stored as an |S1| x |S2| matrix."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(np.atleast_2d(self.probs)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape


@dataclass(frozen=True)
class StateChannel:
    """Transition matrix p(y|x) of one hop in one state; rows indexed by x."""

    transition: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(np.atleast_2d(self.transition)))

    @property
    def input_size(self) -> int:
        return self.transition.shape[0]

    @property
    def output_size(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True)
class RelayChannelSpec:
    states: StateSpace
    joint_pmf: JointStatePmf
    sr_channels: tuple[StateChannel, ...]
    rd_channels: tuple[StateChannel, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sr_channels", tuple(self.sr_channels))
        object.__setattr__(self, "rd_channels", tuple(self.rd_channels))


def _check_pmf_matrix(mat: np.ndarray, where: str) -> list[str]:
    out = []
    if mat.size == 0:
        return [f"{where} is empty"]
    if not np.all(np.isfinite(mat)):
        out.append(f"{where} has non-finite entries")
        return out
    neg = np.argwhere(mat < 0)
    for idx in neg:
        out.append(f"{where} entry {tuple(int(i) for i in idx)} is negative ({mat[tuple(idx)]:g})")
    return out


def validate_spec(spec: RelayChannelSpec) -> list[str]:
    """Check every structural invariant of ``spec``.

    Returns a list of human-readable violations; an empty list means the spec
    is well formed. Nothing is raised for bad data.
    """
    problems: list[str] = []
    s1, s2 = spec.states.labels_s1, spec.states.labels_s2
    if not s1:
        problems.append("states.labels_s1 is empty")
    if not s2:
        problems.append("states.labels_s2 is empty")
    for name, labels in (("labels_s1", s1), ("labels_s2", s2)):
        seen = set()
        for lab in labels:
            if lab in seen:
                problems.append(f"states.{name} has duplicate label {lab!r}")
            seen.add(lab)

    joint = spec.joint_pmf.probs
    if joint.ndim != 2 or joint.shape != (len(s1), len(s2)):
        problems.append(f"joint_pmf has shape {joint.shape}, expected {(len(s1), len(s2))}")
    problems += _check_pmf_matrix(joint, "joint_pmf")
    if joint.size and np.all(np.isfinite(joint)):
        total = float(np.sum(joint))
        if abs(total - 1.0) > PMF_TOL:
            problems.append(f"joint_pmf sums to {total:.12g}")

    for hop, channels, n_states in (
        ("sr_channels", spec.sr_channels, len(s1)),
        ("rd_channels", spec.rd_channels, len(s2)),
    ):
        if len(channels) != n_states:
            problems.append(f"{hop} has {len(channels)} entries, expected {n_states}")
        for k, ch in enumerate(channels):
            w = ch.transition
            where = f"{hop}[{k}]"
            if w.ndim != 2 or w.size == 0:
                problems.append(f"{where} is not a non-empty matrix")
                continue
            bad = _check_pmf_matrix(w, where)
            problems += bad
            if bad:
                continue
            for r, total in enumerate(w.sum(axis=1)):
                if abs(total - 1.0) > PMF_TOL:
                    problems.append(f"row {r} of {where} sums to {total:.12g}")
    return problems


def marginal_state_pmfs(joint: JointStatePmf | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = joint.probs if isinstance(joint, JointStatePmf) else np.atleast_2d(joint)
    return probs.sum(axis=1), probs.sum(axis=0)


# -- channel constructors ---------------------------------------------------

def bsc(crossover: float) -> StateChannel:
    p = float(crossover)
    return StateChannel([[1 - p, p], [p, 1 - p]])


def erasure_channel(erasure: float, q: int = 2) -> StateChannel:
    """q-ary erasure channel; the last output is the erasure symbol.

    Capacity is ``(1 - erasure) * log2(q)``.
    """
    e = float(erasure)
    w = np.zeros((q, q + 1))
    w[np.arange(q), np.arange(q)] = 1 - e
    w[:, q] = e
    return StateChannel(w)


def bec(erasure: float) -> StateChannel:
    return erasure_channel(erasure, 2)


def noiseless_channel(q: int = 2) -> StateChannel:
    return StateChannel(np.eye(q))


def useless_channel(n_in: int = 2, n_out: int = 2) -> StateChannel:
    """Channel whose output ignores the input (capacity 0)."""
    return StateChannel(np.full((n_in, n_out), 1.0 / n_out))


def make_spec(
    joint: Sequence[Sequence[float]] | np.ndarray,
    sr_channels: Sequence[StateChannel],
    rd_channels: Sequence[StateChannel],
    labels_s1: Sequence[str] | None = None,
    labels_s2: Sequence[str] | None = None,
    name: str = "",
) -> RelayChannelSpec:
    joint = np.atleast_2d(np.asarray(joint, dtype=float))
    n1, n2 = joint.shape
    if labels_s1 is None:
        labels_s1 = [f"s1_{i + 1}" for i in range(n1)]
    if labels_s2 is None:
        labels_s2 = [f"s2_{j + 1}" for j in range(n2)]
    return RelayChannelSpec(
        states=StateSpace(tuple(labels_s1), tuple(labels_s2)),
        joint_pmf=JointStatePmf(joint),
        sr_channels=tuple(sr_channels),
        rd_channels=tuple(rd_channels),
        name=name,
    )


def random_channel(rng: np.random.Generator, n_in: int, n_out: int) -> StateChannel:
    w = rng.dirichlet(np.ones(n_out), size=n_in)
    # renormalize so rows sum to 1 within the PMF tolerance
    w = w / w.sum(axis=1, keepdims=True)
    return StateChannel(w)


def random_spec(
    rng: np.random.Generator,
    max_states: int = 2,
    max_alphabet: int = 3,
) -> RelayChannelSpec:
    """Random small spec: 1..max_states states per hop, Dirichlet rows and joint."""
    n1 = int(rng.integers(1, max_states + 1))
    n2 = int(rng.integers(1, max_states + 1))
    joint = rng.dirichlet(np.ones(n1 * n2)).reshape(n1, n2)
    joint = joint / joint.sum()

    def hop(n):
        chans = []
        for _ in range(n):
            x = int(rng.integers(2, max_alphabet + 1))
            y = int(rng.integers(2, max_alphabet + 1))
            chans.append(random_channel(rng, x, y))
        return chans

    return make_spec(joint, hop(n1), hop(n2), name="random")
