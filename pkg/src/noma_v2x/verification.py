"""Self-checks behind the ``verify`` verb.

Every check is an oracle run against an independent computation: the
generic rotation engine against the compiled UTSA kernel, exhaustive
subgraph scans against the peeling bound, enumeration against the counting
formulas, the order-statistic closed form against bisection.
"""
from __future__ import annotations

import contextlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import matching as mt
from . import scheduler as sched
from .channel import RadioConfig
from .powerctrl import FeedbackRow, closed_form_power, satisfied_count, solve_power
from .scenario import Scenario, ScenarioConfig, generate_urban_grid

FAST, FULL = "fast", "full"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    failures: list[str] = field(default_factory=list)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class VerifyReport:
    level: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


@contextlib.contextmanager
def planted_validity_bug() -> Iterator[None]:
    """Negative control: make every rotation look valid while active."""
    original = mt.is_valid
    mt.is_valid = lambda matching, rotation, after=None: True
    try:
        yield
    finally:
        mt.is_valid = original


# -- instance generators ------------------------------------------------------------

def random_geometric(n: int, n_slots: int, rng: np.random.Generator, side: float = 400.0,
                     r: float = 150.0, max_speed: float = 20.0) -> Scenario:
    """Vehicles dropped uniformly in a square with random headings."""
    cfg = ScenarioConfig(n_users=n, n_slots=n_slots, comm_range=r, pedestrian_fraction=0.0)
    pos = rng.uniform(0.0, side, size=(n, 2))
    heading = rng.uniform(0.0, 2 * np.pi, size=n)
    speed = rng.uniform(0.0, max_speed, size=n)
    vel = np.column_stack([speed * np.cos(heading), speed * np.sin(heading)])
    return Scenario(cfg, pos, vel, np.zeros(n, dtype=bool))


def small_road(n: int, rng: np.random.Generator) -> Scenario:
    """A road-grid scenario of ``n`` vehicles whose slot count matches its bound."""
    scen = generate_urban_grid(ScenarioConfig(n_users=n, n_slots=n, pedestrian_fraction=0.0), rng)
    n_slots = sched.feasibility_bound(scen)[0] + int(rng.integers(0, 3))
    while True:
        out = Scenario(scen.config.replace(n_slots=n_slots), scen.positions, scen.velocities, scen.is_pedestrian)
        bound, fits = sched.feasibility_bound(out)
        if fits:
            return out
        n_slots = bound


def exhaustive_degeneracy(adj: np.ndarray) -> int:
    """Max over nonempty vertex subsets of the induced minimum degree."""
    n = len(adj)
    best = 0
    for mask in range(1, 1 << n):
        members = [v for v in range(n) if mask >> v & 1]
        sub = adj[np.ix_(members, members)]
        best = max(best, int(sub.sum(axis=1).min()))
    return best


# -- individual checks --------------------------------------------------------------

def check_is_valid() -> CheckResult:
    """A rotation that lands a forbidden pair on one slot must be rejected."""
    forb = lambda a, b, r: {a, b} == {0, 1}
    m = mt.Matching({0: frozenset({1}), 1: frozenset({2}), 2: frozenset({1})}, forbidden=forb)
    bad = mt.RotationSequence((1, 2), 1)     # user 1 takes slot 1, next to user 0
    good = mt.RotationSequence((0, 1), 1)    # swap keeps them apart
    fails = []
    if mt.is_valid(m, bad):
        fails.append("rotation putting the forbidden pair together accepted")
    if not mt.is_valid(m, good):
        fails.append("harmless swap rejected")
    wants_slot_1 = lambda x: -1.0 if 1 in x.holders(1) else 0.0
    if mt.optimal_shift(m, (1, 2), wants_slot_1) is not None:
        fails.append("engine executed an invalid rotation")
    return CheckResult("is_valid", not fails, "forbidden co-slot rotations rejected" if not fails else fails[0], fails)


def check_utsa_stability(n_instances: int, seed: int, n_max: int = 12, q_max: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    cfg = sched.SchedulerConfig(q_max=q_max)
    fails = []
    for t in range(n_instances):
        scen = small_road(int(rng.integers(4, n_max + 1)), rng)
        res = sched.utsa(scen, cfg, np.random.default_rng([seed, t]))
        m = sched.time_matching(res.slots, scen, cfg)
        obj = sched.time_objective(scen, cfg)
        rot = mt.find_improving_rotation(m, q_max, obj)
        if rot is not None:
            fails.append(f"instance {t}: improving rotation {rot}")
        if m.forbidden_pairs():
            fails.append(f"instance {t}: forbidden pair {m.forbidden_pairs()[0]}")
        if not math.isclose(obj(m), res.total, rel_tol=1e-9, abs_tol=1e-9):
            fails.append(f"instance {t}: kernel total {res.total} vs engine {obj(m)}")
    return CheckResult("utsa_stability", not fails,
                       f"{n_instances} instances certified {q_max}-exchange stable" if not fails else fails[0], fails)


def check_rmsa_stability(n_instances: int, seed: int, n_tx_max: int = 8, k_max_channels: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    radio = RadioConfig()
    fails, done, tries = [], 0, 0
    while done < n_instances and tries < 20 * n_instances:
        tries += 1
        scen = generate_urban_grid(ScenarioConfig(n_users=int(rng.integers(10, 30)), n_slots=1), rng)
        veh = scen.vehicles
        n_tx = int(rng.integers(2, min(n_tx_max, len(veh)) + 1))
        txs = sorted(int(j) for j in rng.choice(veh, size=n_tx, replace=False))
        K = int(rng.integers(2, k_max_channels + 1))
        cfg = sched.SchedulerConfig(n_channels=K, k_max=int(rng.integers(1, min(2, K) + 1)))
        util = sched.channel_utility(scen, radio, 1, txs)
        try:
            res = sched.rmsa(1, txs, scen, radio, cfg, np.random.default_rng([seed, tries]), utility=util)
        except sched.SchedulingError:
            continue  # no initial draw meets the overlap cap; not a stability question
        done += 1
        m, obj, validator = sched.channel_matching(res.channels, cfg, util)
        rot = mt.find_improving_rotation(m, cfg.q_max, obj, minimize=False, validator=validator)
        if rot is not None:
            fails.append(f"instance {done}: improving rotation {rot}")
    detail = f"{done} slots certified stable" if not fails else fails[0]
    return CheckResult("rmsa_stability", not fails and done == n_instances, detail, fails)


def check_convergence(results: list[sched.ScheduleResult]) -> CheckResult:
    fails = []
    for n, res in enumerate(results):
        if res.utsa is not None:
            for s in res.utsa.trace:
                if not s.after < s.before:
                    fails.append(f"run {n}: UTSA step {s} did not decrease")
        for i, rr in res.rmsa.items():
            for s in rr.trace:
                if not s.after > s.before:
                    fails.append(f"run {n} slot {i}: RMSA step {s} did not increase")
    return CheckResult("convergence", not fails, f"{len(results)} runs monotone" if not fails else fails[0], fails)


def check_feasibility(n_instances: int, seed: int, n_max: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    cfg = sched.SchedulerConfig()
    fails, phase1_runs = [], 0
    for t in range(n_instances):
        n = int(rng.integers(2, n_max + 1))
        scen = random_geometric(n, int(rng.integers(1, 6)), rng)
        bound, fits = sched.feasibility_bound(scen)
        brute = max(exhaustive_degeneracy(sched.conflict_graph(scen, i, range(n))) + 1
                    for i in range(1, scen.n_slots + 1))
        if bound != brute:
            fails.append(f"instance {t}: peeling {bound} vs exhaustive {brute}")
        if fits:
            phase1_runs += 1
            slots = sched.utsa_phase1(scen, cfg)
            m = sched.time_matching(slots, scen, cfg)
            if m.forbidden_pairs():
                fails.append(f"instance {t}: phase 1 left forbidden pair {m.forbidden_pairs()[0]}")
    detail = f"{n_instances} instances, {phase1_runs} phase-1 runs" if not fails else fails[0]
    return CheckResult("feasibility_bound", not fails, detail, fails)


def planted_pair_counts(n: int) -> tuple[int, int]:
    """Most and fewest invalid rotations over every feasible one-slot matching of ``n``
    users in which users 0 and 1 form the single forbidden pair (``q_max = n``)."""
    forb = lambda a, b, r: {a, b} == {0, 1}
    counts = []
    for assign in itertools.product(range(n), repeat=n):
        if assign[0] == assign[1]:
            continue
        m = mt.Matching({p: frozenset({assign[p]}) for p in range(n)}, forbidden=forb)
        counts.append(mt.count_invalid_rotations(m, n))
    return max(counts), min(counts)


def check_counting(n_max: int = 8, planted_max: int = 6, planted_min: int = 2) -> tuple[CheckResult, CheckResult]:
    fails = []
    for n in range(1, n_max + 1):
        enumerated = sum(1 for _ in mt.enumerate_rotations(range(n), n))
        if enumerated != n * 2 ** (n - 1) or mt.count_rotation_sequences(n, n) != enumerated:
            fails.append(f"N={n}: enumerated {enumerated} vs {n * 2 ** (n - 1)}")
        if n >= 2:
            for F in range(0, math.comb(n, 2) + 1):
                s = mt.invalid_rotation_lower_bound(n, F) + mt.valid_rotation_upper_bound(n, F)
                if s != n * 2 ** (n - 1):
                    fails.append(f"N={n} F={F}: bounds sum to {s}")
    total = CheckResult("rotation_counts", not fails, f"N<=8 totals and bound identity hold" if not fails else fails[0],
                        fails)
    short = []
    for n in range(planted_min, planted_max + 1):
        best, _ = planted_pair_counts(n)
        bound = mt.invalid_rotation_lower_bound(n, 1)
        if best < bound:
            short.append(f"N={n}: at most {best} invalid rotations < bound {float(bound):.3f}")
    planted = CheckResult("invalid_rotation_bound", not short,
                          f"bound met for N={planted_min}..{planted_max}" if not short else "; ".join(short), short)
    return total, planted


def random_feedback(rng: np.random.Generator, p_max: float) -> list[FeedbackRow]:
    n = int(rng.integers(1, 12))
    gains = 10.0 ** rng.uniform(-1, 4, size=n) / p_max
    interference = np.where(rng.random(n) < 0.3, 0.0, 10.0 ** rng.uniform(-2, 2, size=n))
    return [FeedbackRow(m, 0, 1, float(interference[m]), float(gains[m])) for m in range(n)]


def check_power(n_instances: int, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    P = RadioConfig().max_power
    tol = 1e-6
    fails = []
    for t in range(n_instances):
        rows = random_feedback(rng, P)
        w = float(rng.uniform(0.05, 1.0))
        R = float(rng.uniform(0.5, 3.0))
        need = max(1, math.ceil(w * len(rows) - 1e-9))
        p, ok = solve_power(rows, w, R, P, tol)
        pc, okc = closed_form_power(rows, w, R, P)
        if ok != okc or abs(p - pc) > tol * P:
            fails.append(f"instance {t}: bisection {p} ({ok}) vs closed form {pc} ({okc})")
            continue
        if not 0.0 <= p <= P:
            fails.append(f"instance {t}: power {p} outside [0, P]")
        if ok and satisfied_count(p, rows, R) < need:
            fails.append(f"instance {t}: p* misses the decode fraction")
        if ok and p > 0 and satisfied_count(p - 10 * tol * P, rows, R) >= need:
            fails.append(f"instance {t}: p* - 1e-5 P still meets the decode fraction")
    return CheckResult("solve_power", not fails, f"{n_instances} instances" if not fails else fails[0], fails)


def check_schedules(n_runs: int, seed: int, n_users: int = 30) -> tuple[CheckResult, list[sched.ScheduleResult]]:
    """Every scheme's schedule passes the constraint checker."""
    from .schedule import check_constraints

    radio = RadioConfig()
    base = sched.SchedulerConfig()
    fails, results = [], []
    for t in range(n_runs):
        scen = generate_urban_grid(ScenarioConfig(n_users=n_users), np.random.default_rng([seed, t]))
        for scheme, fn in ((sched.MCD, sched.noma_mcd), (sched.GGA, sched.noma_gga), (sched.OMA, sched.oma_baseline)):
            cfg = base.replace(n_channels=10, k_max=1) if scheme == sched.OMA else base
            res = fn(scen, radio, cfg, np.random.default_rng([seed, t, 1]))
            s = res.schedule
            if scheme != sched.OMA:
                s = s.with_powers({(i, j, k): radio.max_power for (i, j), ks in s.channels.items() for k in ks})
            rep = check_constraints(s, scen, cfg.k_max, cfg.t_max, cfg.k_u)
            if not rep.ok:
                fails.append(f"run {t} {scheme}: {[w for v in rep.violations.values() for w in v][:1]}")
            results.append(res)
    return CheckResult("constraints", not fails, f"{n_runs} runs x 3 schemes" if not fails else fails[0], fails), results


def check_latency_rates() -> CheckResult:
    from .config import preset
    from .scheduler import MCD, OMA

    cfg = preset("standard")
    got = {s: cfg.required_rate(s) for s in (MCD, OMA)}
    ok = f"{got[MCD]:.3g}" == "1.41" and f"{got[OMA]:.3g}" == "2.4"
    return CheckResult("latency_required_rate", ok, f"NOMA {got[MCD]:.4f}, OMA {got[OMA]:.4f}")


def check_determinism() -> CheckResult:
    from . import harness
    from .config import preset

    cfg = preset("standard").replace(seeds_per_point=1, scenario=preset("standard").scenario.replace(n_users=20))
    a = harness.rows_to_csv(harness.run(cfg))
    b = harness.rows_to_csv(harness.run(cfg))
    return CheckResult("determinism", a == b, "repeated run byte-identical" if a == b else "CSV differs between runs")


def verify(level: str = FAST, seed: int = 0, planted_bug: bool = False,
           progress: Callable[[CheckResult], None] | None = None) -> VerifyReport:
    """Run the invariant suite; ``full`` adds exhaustive certifications."""
    if level not in (FAST, FULL):
        raise ValueError(f"level must be {FAST!r} or {FULL!r}")
    full = level == FULL
    steps: list[Callable[[], CheckResult | tuple]] = [
        check_is_valid,
        lambda: check_utsa_stability(20 if full else 3, seed),
        lambda: check_rmsa_stability(20 if full else 3, seed),
        lambda: check_feasibility(100 if full else 20, seed, 10 if full else 8),
        # below N=4 no feasible matching reaches the closed-form bound at all
        lambda: check_counting(8 if full else 6, 6 if full else 5, planted_min=4),
        lambda: check_power(1000 if full else 100, seed),
        lambda: check_schedules(10 if full else 2, seed),
        check_latency_rates,
        check_determinism,
    ]
    report = VerifyReport(level)
    stack = planted_validity_bug() if planted_bug else contextlib.nullcontext()
    with stack:
        for step in steps:
            out = step()
            if isinstance(out, tuple) and isinstance(out[-1], list):
                conv = check_convergence(out[1])
                out = (out[0], conv)
            for check in (out if isinstance(out, tuple) else (out,)):
                report.checks.append(check)
                if progress:
                    progress(check)
    return report
