"""Capacity of the half-duplex relay channel by threshold link selection.

The relay picks, per state pair, whether the source-relay hop (Source, d=0)
or the relay-destination hop (Relay, d=1) is used. With per-state capacities
a(s1) and b(s2) the optimal rule is a threshold on b(s2) / a(s1): Relay when
b > rho*a, Source when b < rho*a, and a single shared coin with probability
P_C on the tie set. rho and P_C are pinned down by balancing the average rate
into the relay buffer (C1) against the average rate out of it (C2).

``solve_capacity`` finds the balancing point exactly: the candidate values of
rho are the finitely many ratios b/a plus 0 and infinity, and on the tie set
C1 and C2 are affine in P_C. ``brute_force_capacity`` is an independent
check that never looks at ratios or thresholds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

from .channel_model import JointStatePmf, RelayChannelSpec, validate_spec
from .mutual_information import DEFAULT_MAX_ITER, DEFAULT_TOL, blahut_arimoto

TIE_RTOL = 1e-7
BALANCE_TOL = 1e-9
CLAMP_TOL = 1e-9
ZERO_CAPACITY = 1e-12


class SolverError(RuntimeError):
    pass


class Decision(Enum):
    SOURCE = "source"
    RELAY = "relay"
    COIN = "coin"
    IRRELEVANT = "irrelevant"

    @property
    def d(self) -> int | None:
        """Numeric link choice; None for Coin. Irrelevant pairs report as Source."""
        if self is Decision.RELAY:
            return 1
        if self is Decision.COIN:
            return None
        return 0


@dataclass(frozen=True)
class PerStateCapacities:
    a: np.ndarray
    b: np.ndarray
    argmax_inputs_sr: tuple[np.ndarray, ...] = ()
    argmax_inputs_rd: tuple[np.ndarray, ...] = ()
    # Blahut-Arimoto bracket widths, one per state
    gaps_sr: tuple[float, ...] = ()
    gaps_rd: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("a", "b"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            if np.any(~np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"per-state capacities {name} must be finite and >= 0")
            # round-off from a zero-capacity DMC must compare equal to zero
            arr[arr < ZERO_CAPACITY] = 0.0
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.size, self.b.size

    def scaled(self, factor: float) -> "PerStateCapacities":
        return PerStateCapacities(self.a * factor, self.b * factor)


@dataclass(frozen=True)
class LinkSelectionPolicy:
    decision: tuple[tuple[Decision, ...], ...]
    coin_prob: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.decision), len(self.decision[0]) if self.decision else 0

    def with_coin(self, coin_prob: float) -> "LinkSelectionPolicy":
        return LinkSelectionPolicy(self.decision, float(coin_prob))

    def table(self) -> list[list[str]]:
        return [[dec.value for dec in row] for row in self.decision]

    def mask(self, kind: Decision) -> np.ndarray:
        return np.array([[dec is kind for dec in row] for row in self.decision], dtype=bool)

    def relay_probability(self) -> np.ndarray:
        """Pr{d = 1 | s1, s2} for every state pair."""
        pc = 0.0 if self.coin_prob is None else self.coin_prob
        out = self.mask(Decision.RELAY).astype(float)
        out[self.mask(Decision.COIN)] = pc
        return out


@dataclass(frozen=True)
class CapacityReport:
    rho_opt: float
    coin_prob_opt: float
    c1_bits: float
    c2_bits: float
    capacity_bits: float
    policy: LinkSelectionPolicy
    per_state: PerStateCapacities
    boundary: bool = False
    degenerate: bool = False
    notes: tuple[str, ...] = field(default=())

    def checks(self, joint: np.ndarray) -> dict[str, bool]:
        joint = np.asarray(joint, dtype=float)
        ub1 = float(np.sum(joint * self.per_state.a[:, None]))
        ub2 = float(np.sum(joint * self.per_state.b[None, :]))
        slack = 1e-12 * max(1.0, ub1, ub2)
        return {
            "balance": abs(self.c1_bits - self.c2_bits) <= BALANCE_TOL,
            "capacity_equals_c1": self.capacity_bits == self.c1_bits,
            "source_relay_bound": self.capacity_bits <= ub1 + slack,
            "relay_destination_bound": self.capacity_bits <= ub2 + slack,
            "coin_prob_in_unit_interval": 0.0 <= self.coin_prob_opt <= 1.0,
        }


def _joint_array(joint) -> np.ndarray:
    return joint.probs if isinstance(joint, JointStatePmf) else np.atleast_2d(np.asarray(joint, float))


def per_state_capacities(
    spec: RelayChannelSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    workers: int | None = None,
) -> PerStateCapacities:
    """Blahut-Arimoto capacity of every per-state channel of both hops."""
    channels = list(spec.sr_channels) + list(spec.rd_channels)
    run = lambda ch: blahut_arimoto(ch, tol=tol, max_iter=max_iter)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, channels))
    else:
        results = [run(ch) for ch in channels]
    n1 = len(spec.sr_channels)
    sr, rd = results[:n1], results[n1:]
    return PerStateCapacities(
        a=np.array([r.capacity_bits for r in sr]),
        b=np.array([r.capacity_bits for r in rd]),
        argmax_inputs_sr=tuple(r.argmax for r in sr),
        argmax_inputs_rd=tuple(r.argmax for r in rd),
        gaps_sr=tuple(r.gap for r in sr),
        gaps_rd=tuple(r.gap for r in rd),
    )


def _is_tie(a: float, b: float, rho: float) -> bool:
    if math.isinf(rho):
        return a == 0.0 and b > 0.0
    if a == 0.0:
        return False
    return abs(b - rho * a) <= TIE_RTOL * max(1.0, b)


def _classify(a: float, b: float, rho: float) -> Decision:
    if a == 0.0 and b == 0.0:
        return Decision.IRRELEVANT
    if _is_tie(a, b, rho):
        return Decision.COIN
    if math.isinf(rho):
        return Decision.SOURCE
    return Decision.RELAY if b > rho * a else Decision.SOURCE


def policy_from_rho(caps: PerStateCapacities, rho: float) -> LinkSelectionPolicy:
    """Threshold decision table for a given rho in [0, inf]; coin_prob left unset.

    At rho = inf the pairs with a = 0 < b sit exactly on the threshold
    (b = inf * 0) and are marked Coin; every pair with a > 0 is Source.
    """
    rho = float(rho)
    if rho < 0 or math.isnan(rho):
        raise ValueError("rho must lie in [0, inf]")
    table = tuple(
        tuple(_classify(float(a), float(b), rho) for b in caps.b)
        for a in caps.a
    )
    return LinkSelectionPolicy(table)


def evaluate_policy(caps: PerStateCapacities, joint, policy: LinkSelectionPolicy) -> tuple[float, float]:
    """Average rates (C1 into the relay buffer, C2 out of it) under ``policy``."""
    p = _joint_array(joint)
    pc = 0.0 if policy.coin_prob is None else float(policy.coin_prob)
    c1 = 0.0
    c2 = 0.0
    # row-major accumulation keeps results bit-reproducible
    for i, row in enumerate(policy.decision):
        a = float(caps.a[i])
        for j, dec in enumerate(row):
            w = float(p[i, j])
            b = float(caps.b[j])
            if dec is Decision.SOURCE:
                c1 += w * a
            elif dec is Decision.RELAY:
                c2 += w * b
            elif dec is Decision.COIN:
                c1 += w * (1.0 - pc) * a
                c2 += w * pc * b
    return c1, c2


def _ratio_key(a: float, b: float) -> float:
    if a == 0.0:
        return math.inf
    return b / a


def _group_pairs(a_flat, b_flat, active) -> tuple[list[float], np.ndarray]:
    """Assign every active pair to a threshold candidate.

    Returns the ascending candidate values (first is 0, last is inf) and the
    candidate index of each pair (-1 for inactive pairs). A pair joins the
    current candidate when it is a tie there, otherwise it opens a new one.
    """
    n = a_flat.size
    keys = np.array([_ratio_key(a_flat[k], b_flat[k]) if active[k] else np.nan for k in range(n)])
    order = [k for k in np.argsort(keys, kind="stable") if active[k]]
    group = np.full(n, -1, dtype=int)
    anchors = [0.0]
    for k in order:
        a, b = float(a_flat[k]), float(b_flat[k])
        if a == 0.0:
            continue
        if not _is_tie(a, b, anchors[-1]):
            anchors.append(b / a)
        group[k] = len(anchors) - 1
    anchors.append(math.inf)
    inf_idx = len(anchors) - 1
    for k in order:
        if a_flat[k] == 0.0:
            group[k] = inf_idx
    return anchors, group


def solve_from_capacities(
    caps: PerStateCapacities,
    joint,
) -> CapacityReport:
    """Balance C1 and C2 exactly for given per-state capacities and joint PMF."""
    p = _joint_array(joint)
    n1, n2 = caps.shape
    if p.shape != (n1, n2):
        raise ValueError(f"joint PMF shape {p.shape} does not match capacities {(n1, n2)}")

    a_grid = np.broadcast_to(caps.a[:, None], (n1, n2))
    b_grid = np.broadcast_to(caps.b[None, :], (n1, n2))
    a_flat, b_flat, p_flat = a_grid.ravel(), b_grid.ravel(), p.ravel()
    active = ~((a_flat == 0.0) & (b_flat == 0.0))

    if not np.any(active & (p_flat > 0)):
        # nothing can ever be sent
        table = tuple(
            tuple(_classify(float(a_grid[i, j]), float(b_grid[i, j]), 0.0) for j in range(n2))
            for i in range(n1)
        )
        policy = LinkSelectionPolicy(table, 0.0)
        c1, c2 = evaluate_policy(caps, p, policy)
        return CapacityReport(
            rho_opt=0.0, coin_prob_opt=0.0, c1_bits=c1, c2_bits=c1, capacity_bits=c1,
            policy=policy, per_state=caps, boundary=True, degenerate=True,
            notes=("all-zero channel: no state pair carries information",),
        )

    anchors, group = _group_pairs(a_flat, b_flat, active)
    n_groups = len(anchors)
    src_mass = np.zeros(n_groups)
    rel_mass = np.zeros(n_groups)
    for k in range(p_flat.size):
        g = group[k]
        if g >= 0:
            src_mass[g] += p_flat[k] * a_flat[k]
            rel_mass[g] += p_flat[k] * b_flat[k]

    # C1 - C2 with the candidate-g tie set all Source is
    # sum_{<=g} src - sum_{>g} rel; it only grows with g.
    src_cum = np.cumsum(src_mass)
    rel_tail = np.concatenate([np.cumsum(rel_mass[::-1])[::-1][1:], [0.0]])
    diff_ties_source = src_cum - rel_tail
    crossing = int(np.argmax(diff_ties_source >= 0.0))
    if diff_ties_source[crossing] < 0.0:
        crossing = n_groups - 1

    decision = []
    for i in range(n1):
        row = []
        for j in range(n2):
            k = i * n2 + j
            g = group[k]
            if g < 0:
                row.append(Decision.IRRELEVANT)
            elif g < crossing:
                row.append(Decision.SOURCE)
            elif g > crossing:
                row.append(Decision.RELAY)
            else:
                row.append(Decision.COIN)
        decision.append(tuple(row))
    policy = LinkSelectionPolicy(tuple(decision))

    s1, _ = evaluate_policy(caps, p, policy.with_coin(1.0))
    _, s2 = evaluate_policy(caps, p, policy.with_coin(0.0))
    tie = policy.mask(Decision.COIN)
    t1 = float(np.sum(p[tie] * a_grid[tie]))
    t2 = float(np.sum(p[tie] * b_grid[tie]))
    # C1(P) = s1 + (1 - P) t1,  C2(P) = s2 + P t2
    if t1 + t2 > 0.0:
        pc = (s1 + t1 - s2) / (t1 + t2)
    else:
        pc = 0.0
    if pc < -CLAMP_TOL or pc > 1.0 + CLAMP_TOL:
        raise SolverError(
            f"coin probability {pc!r} outside [0, 1] at rho={anchors[crossing]!r}; "
            f"s1={s1!r} s2={s2!r} t1={t1!r} t2={t2!r}"
        )
    pc = min(max(pc, 0.0), 1.0)
    policy = policy.with_coin(pc)
    c1, c2 = evaluate_policy(caps, p, policy)

    rho = anchors[crossing]
    notes = []
    boundary = rho == 0.0 or math.isinf(rho)
    if boundary:
        notes.append(f"optimum at boundary threshold rho={'inf' if math.isinf(rho) else '0'}")
    if abs(c1 - c2) > BALANCE_TOL:
        notes.append(f"rates not balanced: |C1 - C2| = {abs(c1 - c2):.3g}")
    return CapacityReport(
        rho_opt=rho, coin_prob_opt=pc, c1_bits=c1, c2_bits=c2, capacity_bits=c1,
        policy=policy, per_state=caps, boundary=boundary, degenerate=False,
        notes=tuple(notes),
    )


def solve_capacity(
    spec: RelayChannelSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CapacityReport:
    problems = validate_spec(spec)
    if problems:
        raise ValueError("invalid channel spec: " + "; ".join(problems))
    caps = per_state_capacities(spec, tol=tol, max_iter=max_iter)
    report = solve_from_capacities(caps, spec.joint_pmf)
    worst_gap = max(caps.gaps_sr + caps.gaps_rd, default=0.0)
    if worst_gap > tol:
        report = _with_note(report, f"Blahut-Arimoto did not converge: widest bracket {worst_gap:.3g} bits")
    return report


def _with_note(report: CapacityReport, note: str) -> CapacityReport:
    from dataclasses import replace
    return replace(report, notes=report.notes + (note,))


# -- independent oracle -----------------------------------------------------

def _primal_grid(a, b, p, steps, max_points=4_000_000):
    """Exhaustive grid over per-pair relay probabilities q in [0,1]^n."""
    n = a.size
    grid = np.linspace(0.0, 1.0, steps)
    wa, wb = p * a, p * b
    best = -np.inf
    best_q = None
    # enumerate the first n-1 coordinates in chunks; the last is vectorized
    chunk = max(1, max_points // steps)
    lead = np.array(np.meshgrid(*([grid] * (n - 1)), indexing="ij")).reshape(n - 1, -1).T if n > 1 else np.zeros((1, 0))
    for start in range(0, lead.shape[0], chunk):
        block = lead[start:start + chunk]
        c1_lead = block @ (-wa[:-1]) + wa[:-1].sum()
        c2_lead = block @ wb[:-1]
        c1 = c1_lead[:, None] + (1.0 - grid)[None, :] * wa[-1]
        c2 = c2_lead[:, None] + grid[None, :] * wb[-1]
        val = np.minimum(c1, c2)
        idx = np.unravel_index(np.argmax(val), val.shape)
        if val[idx] > best:
            best = float(val[idx])
            best_q = np.concatenate([block[idx[0]], [grid[idx[1]]]])
    return best, best_q


def _dual_value(lam, a, b, p):
    return float(np.sum(p * np.maximum(lam * a, (1.0 - lam) * b)))


def brute_force_capacity(
    caps: PerStateCapacities,
    joint,
    grid_steps: int = 2001,
    refine: bool = True,
    method: str = "auto",
) -> float:
    """max over q(s) in [0,1] of min{sum p(1-q)a, sum p q b}, by exhaustive search.

    ``method="primal"`` grids every per-pair coordinate (grid_steps**n points,
    only viable for one or two active pairs). ``method="dual"`` grids the
    weight lam in [0, 1] of the equivalent min-max problem
    min_lam sum p max(lam a, (1 - lam) b); every grid point is an upper bound.
    ``auto`` picks primal when grid_steps**n stays below 5e6 points.
    An optional local continuous pass polishes the best grid point.
    """
    p = _joint_array(joint)
    a = np.broadcast_to(caps.a[:, None], p.shape).ravel()
    b = np.broadcast_to(caps.b[None, :], p.shape).ravel()
    pf = p.ravel()
    keep = (pf > 0) & ((a > 0) | (b > 0))
    a, b, pf = a[keep], b[keep], pf[keep]
    if a.size == 0:
        return 0.0
    n = a.size
    if method == "auto":
        method = "primal" if float(grid_steps) ** n <= 5e6 else "dual"

    if method == "primal":
        best, q0 = _primal_grid(a, b, pf, grid_steps)
        if refine:
            def neg(q):
                q = np.clip(q, 0.0, 1.0)
                return -min(float(np.sum(pf * (1 - q) * a)), float(np.sum(pf * q * b)))
            res = optimize.minimize(neg, q0, method="Nelder-Mead",
                                    options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
            best = max(best, -float(res.fun))
        return best

    if method == "dual":
        lams = np.linspace(0.0, 1.0, grid_steps)
        vals = np.sum(pf[None, :] * np.maximum(lams[:, None] * a[None, :],
                                               (1.0 - lams)[:, None] * b[None, :]), axis=1)
        k = int(np.argmin(vals))
        best = float(vals[k])
        if refine:
            lo = lams[max(k - 1, 0)]
            hi = lams[min(k + 1, grid_steps - 1)]
            res = optimize.minimize_scalar(_dual_value, bounds=(lo, hi), args=(a, b, pf),
                                           method="bounded", options={"xatol": 1e-13})
            best = min(best, float(res.fun))
        return best

    raise ValueError(f"unknown method {method!r}")


def oracle_check(
    seed: int = 7,
    trials: int = 200,
    grid_steps: int = 2001,
    atol: float = 2e-3,
    max_states: int = 2,
) -> dict:
    """Compare solve_capacity with brute_force_capacity on random small specs."""
    from .channel_model import random_spec

    rng = np.random.default_rng(seed)
    worst = 0.0
    passed = 0
    rows = []
    for t in range(trials):
        spec = random_spec(rng, max_states=max_states)
        report = solve_capacity(spec)
        oracle = brute_force_capacity(report.per_state, spec.joint_pmf, grid_steps=grid_steps)
        err = abs(report.capacity_bits - oracle)
        worst = max(worst, err)
        ok = err <= atol
        passed += ok
        rows.append({"trial": t, "capacity_bits": report.capacity_bits, "oracle_bits": oracle,
                     "abs_error": err, "ok": bool(ok)})
    return {
        "trials": trials,
        "passed": passed,
        "atol": atol,
        "grid_steps": grid_steps,
        "seed": seed,
        "max_abs_error": worst,
        "summary": f"{passed}/{trials} within {atol:g}",
        "rows": rows,
    }
