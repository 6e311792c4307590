"""Exact checks of the event-restricted chi-square change of measure.

Tiny deterministic policies are run on every reward table
``X in {0,1}^(K x T)`` (bit ``i*T + l-1`` is the reward of the l-th pull of
arm i). Table probabilities are products of Bernoulli masses, grouped by the
per-arm popcount so that exact rational arithmetic stays cheap.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import EnumerationTooLarge, InfiniteDivergence

MAX_TABLE_BITS = 24
EXACT_TABLE_BITS = 16


@dataclass(frozen=True, eq=False)
class TinyPolicy:
    """Deterministic decision table over partial transcripts.

    Entry ``table[offsets[t] + h]`` is the arm pulled at step ``t+1`` after
    history code ``h``, where ``h`` folds ``(A_s, R_s)`` pairs as base-2K
    digits ``2*A_s + R_s``. The table is total over all histories.
    """
    K: int
    T: int
    table: np.ndarray
    name: str = ""

    @property
    def offsets(self):
        base = 2 * self.K
        return np.cumsum([0] + [base ** t for t in range(self.T)]).astype(np.int64)

    @classmethod
    def random(cls, K, T, seed, name=None):
        size = sum((2 * K) ** t for t in range(T))
        table = np.random.default_rng(seed).integers(0, K, size=size, dtype=np.int64)
        return cls(K, T, table, name or f"random-{seed}")

    @classmethod
    def from_function(cls, K, T, fn, name=""):
        """Tabulate ``fn(history) -> arm`` over every history of length < T;
        ``history`` is a tuple of 0-based ``(arm, reward)`` pairs."""
        out = []
        for t in range(T):
            for h in range((2 * K) ** t):
                out.append(int(fn(decode_history(h, t, K))))
        return cls(K, T, np.asarray(out, dtype=np.int64), name)

    def action(self, history):
        h = 0
        for a, r in history:
            h = h * 2 * self.K + 2 * a + r
        return int(self.table[self.offsets[len(history)] + h])


def decode_history(code, length, K):
    pairs = []
    for _ in range(length):
        code, d = divmod(code, 2 * K)
        pairs.append((d // 2, d % 2))
    return tuple(reversed(pairs))


@dataclass(frozen=True, eq=False)
class MixturePolicy:
    """Randomized policy: deterministic tables drawn with the given weights
    (the seed U absorbed into a finite mixture)."""
    components: tuple
    weights: tuple
    name: str = ""

    @property
    def K(self):
        return self.components[0].K

    @property
    def T(self):
        return self.components[0].T


def components(policy):
    if isinstance(policy, MixturePolicy):
        return list(zip(policy.components, policy.weights))
    return [(policy, 1.0)]


def constant_policy(K, T, arm):
    return TinyPolicy(K, T, np.full(sum((2 * K) ** t for t in range(T)), arm, dtype=np.int64),
                      f"always-{arm + 1}")


def greedy_policy(K, T):
    """Pull each arm once, then the arm with the best empirical mean
    (lowest index on ties)."""
    def rule(history):
        sums = [0] * K
        cnts = [0] * K
        for a, r in history:
            sums[a] += r
            cnts[a] += 1
        # the table also covers unreachable histories; untried arms go first
        if 0 in cnts:
            return cnts.index(0)
        return max(range(K), key=lambda a: (sums[a] / cnts[a], -a))
    return TinyPolicy.from_function(K, T, rule, "greedy")


@dataclass(frozen=True)
class TinyTranscript:
    actions: tuple
    rewards: tuple

    def count(self, arm):
        return sum(1 for a in self.actions if a == arm)


@dataclass(frozen=True)
class Event:
    name: str
    predicate: object

    def __call__(self, tr):
        return bool(self.predicate(tr))


ALWAYS = Event("always", lambda tr: True)


def budget_event(arm, m):
    """``{N_arm(T) <= m}``."""
    return Event(f"N_{arm + 1}<={m}", lambda tr: tr.count(arm) <= m)


def under_sampling_event(arm, n):
    """``{N_arm(T) < n}``."""
    return Event(f"N_{arm + 1}<{n}", lambda tr: tr.count(arm) < n)


def first_action_event(arm):
    return Event(f"A_1={arm + 1}", lambda tr: tr.actions[0] == arm)


def default_events(K, T, j):
    return [budget_event(j, m) for m in range(T + 1)] + [first_action_event(a) for a in range(K)]


def _check_size(K, T):
    if K * T > MAX_TABLE_BITS:
        raise EnumerationTooLarge(f"K*T = {K * T} exceeds {MAX_TABLE_BITS} table bits")


def _as_fraction(x):
    return Fraction(repr(float(x)))


class Enumeration:
    """All reward tables for one deterministic policy, with their induced
    transcripts (as final history codes)."""

    def __init__(self, policy):
        _check_size(policy.K, policy.T)
        self.policy = policy
        K, T = policy.K, policy.T
        self.codes, _ = kernels.replay_tables(policy.table, policy.offsets, K, T, 0, -1, False)
        x = np.arange(1 << (K * T), dtype=np.uint64)
        mask = np.uint64((1 << T) - 1)
        cls = np.zeros(len(x), dtype=np.int64)
        for i in range(K):
            pc = np.bitwise_count((x >> np.uint64(i * T)) & mask).astype(np.int64)
            cls += pc * (T + 1) ** i
        self.classes = cls
        self.n_classes = (T + 1) ** K
        self.unique, self.inverse = np.unique(self.codes, return_inverse=True)
        self._transcripts = None

    @property
    def transcripts(self):
        if self._transcripts is None:
            K, T = self.policy.K, self.policy.T
            out = []
            for code in self.unique:
                h = decode_history(int(code), T, K)
                out.append(TinyTranscript(tuple(a for a, _ in h), tuple(r for _, r in h)))
            self._transcripts = out
        return self._transcripts

    def arm_counts(self, arm):
        """``N_arm(T)`` for every table."""
        per = np.array([tr.count(arm) for tr in self.transcripts], dtype=np.int64)
        return per[self.inverse]

    def event_mask(self, event):
        per = np.array([event(tr) for tr in self.transcripts], dtype=bool)
        return per[self.inverse]

    def class_masses(self, instance, exact=False):
        K, T = self.policy.K, self.policy.T
        mus = instance.means
        out = []
        for c in range(self.n_classes):
            ks = [(c // (T + 1) ** i) % (T + 1) for i in range(K)]
            if exact:
                m = Fraction(1)
                for mu, k in zip(mus, ks):
                    f = _as_fraction(mu)
                    m *= f ** k * (1 - f) ** (T - k)
            else:
                m = math.prod(mu ** k * (1.0 - mu) ** (T - k) for mu, k in zip(mus, ks))
            out.append(m)
        return out

    def prob(self, mask, masses):
        counts = np.bincount(self.classes[mask], minlength=self.n_classes)
        if isinstance(masses[0], Fraction):
            return sum((int(c) * m for c, m in zip(counts, masses) if c), Fraction(0))
        return math.fsum(int(c) * m for c, m in zip(counts, masses) if c)

    def expectation(self, values, masses):
        """``E[values]`` for an integer per-table quantity."""
        sums = np.bincount(self.classes, weights=values.astype(np.float64), minlength=self.n_classes)
        if isinstance(masses[0], Fraction):
            return sum((Fraction(int(s)) * m for s, m in zip(sums, masses) if s), Fraction(0))
        return math.fsum(s * m for s, m in zip(sums, masses) if s)


class ExactLaw:
    """Exact law of the transcript under one instance (mixtures supported)."""

    def __init__(self, policy, instance, exact=False, cache=None):
        if instance.arm_count != policy.K:
            raise ValueError("policy and instance disagree on K")
        self.exact = exact
        self.parts = []
        cache = {} if cache is None else cache
        for comp, w in components(policy):
            enum = cache.get(id(comp))
            if enum is None:
                enum = cache[id(comp)] = Enumeration(comp)
            w = _as_fraction(w) if exact else float(w)
            self.parts.append((enum, w, enum.class_masses(instance, exact)))

    def prob(self, event):
        total = Fraction(0) if self.exact else 0.0
        for enum, w, masses in self.parts:
            mask = enum.event_mask(event) if isinstance(event, Event) else event(enum)
            total += w * enum.prob(mask, masses)
        return total

    def total_mass(self):
        return self.prob(ALWAYS)

    def expected_count(self, arm):
        total = Fraction(0) if self.exact else 0.0
        for enum, w, masses in self.parts:
            total += w * enum.expectation(enum.arm_counts(arm), masses)
        return total


def exact_event_prob(policy, instance, event, exact=False):
    """``P(event)`` summed over every reward table."""
    _check_size(policy.K, policy.T)
    return ExactLaw(policy, instance, exact).prob(event)


def transcript_prob(history, instance):
    """Probability of a transcript computed along the path: the product of
    the Bernoulli masses of the observed rewards (independent of the table
    enumeration)."""
    p = 1.0
    for a, r in history:
        mu = instance.means[a]
        p *= mu if r else 1.0 - mu
    return p


def chi_square_bernoulli(p, q):
    """``chi^2(Ber(p) || Ber(q)) = (p - q)^2 / (q (1 - q))``."""
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError("Bernoulli parameters must lie in [0, 1]")
    if p == q:
        return 0.0
    if q in (0.0, 1.0):
        raise InfiniteDivergence(f"Ber({p}) is not absolutely continuous w.r.t. Ber({q})")
    return (p - q) ** 2 / (q * (1.0 - q))


def chi_square_two_point(p, q):
    """Same divergence by summing ``(P(x) - Q(x))^2 / Q(x)`` over ``{0, 1}``."""
    P = {0: 1.0 - p, 1: p}
    Q = {0: 1.0 - q, 1: q}
    total = 0.0
    for x in (0, 1):
        if Q[x] == 0.0:
            if P[x] != 0.0:
                raise InfiniteDivergence("support mismatch")
            continue
        total += (P[x] - Q[x]) ** 2 / Q[x]
    return total


def kl_bernoulli(p, q):
    """``KL(Ber(p) || Ber(q))`` in nats with ``0 log 0 = 0``."""
    total = 0.0
    for a, b in ((p, q), (1.0 - p, 1.0 - q)):
        if a == 0.0:
            continue
        if b == 0.0:
            raise InfiniteDivergence("support mismatch")
        total += a * math.log(a / b)
    return total


def _differing_arm(base, perturbed):
    diff = [i for i, (a, b) in enumerate(zip(base.means, perturbed.means)) if a != b]
    if len(base.means) != len(perturbed.means) or len(diff) > 1:
        raise ValueError("instances must differ on at most one arm")
    return diff[0] if diff else None


@dataclass
class ComRow:
    event: str
    n: int
    p0_restricted: float
    p1_restricted: float
    p1_event: float
    bound_chi: float
    bound_exp: float
    slack: float
    inside_budget: bool
    ok: bool


@dataclass
class ComReport:
    policy: str
    K: int
    T: int
    j: int
    p: float
    q: float
    chi2: float
    rows: list = field(default_factory=list)
    kl_rows: list = field(default_factory=list)

    @property
    def violations(self):
        return [r for r in self.rows if not r.ok]

    @property
    def max_slack(self):
        return max((r.slack for r in self.rows), default=0.0)

    def to_record(self):
        return {
            "policy": self.policy, "K": self.K, "T": self.T, "j": self.j + 1, "p": self.p,
            "q": self.q, "chi2": self.chi2, "max_slack": self.max_slack,
            "violations": [asdict(r) for r in self.violations],
            "rows": [asdict(r) for r in self.rows], "kl_comparison": self.kl_rows,
        }


def _num(x):
    return float(x)


def verify_localized_com(policy, base, perturbed, j=None, n=None, events=None, tol=1e-12,
                         exact=False, cache=None):
    """Check both forms of the event-restricted change of measure exactly.

    For every event E and budget n:
    ``P0(E, N_j<=n) <= sqrt(P1(E, N_j<=n)) (1+chi2)^(n/2)`` and
    ``P0(E, N_j<=n) <= sqrt(P1(E)) exp(n chi2 / 2)``; when E already lies
    inside ``{N_j <= n}`` also ``P1(E) >= P0(E)^2 (1+chi2)^-n``.
    """
    K, T = policy.K, policy.T
    jj = _differing_arm(base, perturbed)
    if j is None:
        j = 0 if jj is None else jj
    elif jj is not None and jj != j:
        raise ValueError(f"instances differ on arm {jj + 1}, not {j + 1}")
    p, q = base.means[j], perturbed.means[j]
    chi2 = chi_square_bernoulli(p, q)
    ns = range(T + 1) if n is None else ([n] if isinstance(n, int) else list(n))
    events = default_events(K, T, j) if events is None else list(events)
    cache = {} if cache is None else cache
    law0 = ExactLaw(policy, base, exact, cache)
    law1 = ExactLaw(policy, perturbed, exact, cache)
    report = ComReport(getattr(policy, "name", ""), K, T, j, p, q, chi2)
    for e in events:
        p1e = law1.prob(e)
        for nb in ns:
            budget = budget_event(j, nb)

            def both(enum, e=e, budget=budget):
                return enum.event_mask(e) & enum.event_mask(budget)

            def outside(enum, e=e, budget=budget):
                return enum.event_mask(e) & ~enum.event_mask(budget)

            p0r = law0.prob(both)
            p1r = law1.prob(both)
            inside = all(not np.any(outside(enum)) for enum, _, _ in law0.parts)
            growth = (1.0 + chi2) ** (nb / 2.0)
            bound_chi = math.sqrt(_num(p1r)) * growth
            bound_exp = math.sqrt(_num(p1e)) * math.exp(nb * chi2 / 2.0)
            ok = _num(p0r) <= bound_chi + tol and _num(p0r) <= bound_exp + tol
            if exact and p1r == 0:
                ok = ok and p0r == 0
            if inside:
                ok = ok and _num(p1e) + tol >= _num(p0r) ** 2 * (1.0 + chi2) ** (-nb)
            slack = _num(p0r) / bound_chi if bound_chi > 0 else (0.0 if p0r == 0 else math.inf)
            report.rows.append(ComRow(e.name, nb, _num(p0r), _num(p1r), _num(p1e), bound_chi,
                                      bound_exp, slack, inside, bool(ok)))
    en0 = _num(law0.expected_count(j))
    kl = kl_bernoulli(p, q) if q not in (0.0, 1.0) or p == q else math.inf
    for nb in ns:
        report.kl_rows.append({"n": nb, "transcript_kl": en0 * kl, "budget_chi2": nb * chi2})
    return report


@dataclass
class TruncationReport:
    policy: str
    j: int
    n: int
    tables: int
    budget_mass: float
    tau_mismatch: int | None = None
    transcript_mismatch: int | None = None

    @property
    def passed(self):
        return self.tau_mismatch is None and self.transcript_mismatch is None


def verify_prefix_truncation(policy, instance, j, n):
    """Replace arm j's rewards beyond its n-th pull by 0 and rerun.

    Checks on every table that the (n+1)-st pull time of arm j is unchanged
    and that, whenever ``N_j(T) <= n``, the full transcripts coincide.
    Reports the first violating table (by integer code), if any.
    """
    budget_mass = 0.0
    tau_bad = tr_bad = None
    tables = 0
    for comp, w in components(policy):
        K, T = comp.K, comp.T
        _check_size(K, T)
        codes, tau = kernels.replay_tables(comp.table, comp.offsets, K, T, j, n, False)
        codes_t, tau_t = kernels.replay_tables(comp.table, comp.offsets, K, T, j, n, True)
        tables += len(codes)
        bad = np.nonzero(tau != tau_t)[0]
        if len(bad) and tau_bad is None:
            tau_bad = int(bad[0])
        within = tau == T + 1  # arm j pulled at most n times
        bad = np.nonzero(within & (codes != codes_t))[0]
        if len(bad) and tr_bad is None:
            tr_bad = int(bad[0])
        if instance is not None:
            law = ExactLaw(comp, instance)
            budget_mass += w * law.prob(budget_event(j, n))
    return TruncationReport(getattr(policy, "name", ""), j, n, tables, budget_mass, tau_bad, tr_bad)


@dataclass
class TemplateReport:
    p0: float
    p1: float
    chi2: float
    bound: float
    regret_witness: float
    regret_budget: float
    premise_quarter: bool
    transfer_bound: float
    ok: bool


def verify_per_good_arm_template(policy, good_set, j, C, T, K, delta0, n, tol=1e-12, exact=False):
    """Exact instance of the per-good-arm exploration argument.

    With ``E_j = {N_j(T) < n}``, computes ``P1(E_j)`` under the one-arm
    perturbation and ``P0(E_j)`` under the hard instance, and checks
    ``P0 <= sqrt(P1) (1 + chi2)^(n/2)``. Also reports the regret witness
    ``delta0 (T - n) P1(E_j)`` and, when ``P1(E_j) <= 1/4``, the cruder
    ``P0 <= exp(8 n delta0^2) / 2``.
    """
    from .instances import PerturbationSpec, make_hard_instance, perturb

    if policy.K != K or policy.T != T:
        raise ValueError("policy shape does not match (K, T)")
    base = make_hard_instance(good_set)
    pert = perturb(base, PerturbationSpec(j, delta0))
    event = under_sampling_event(j, n)
    cache = {}
    p0 = _num(ExactLaw(policy, base, exact, cache).prob(event))
    p1 = _num(ExactLaw(policy, pert, exact, cache).prob(event))
    chi2 = chi_square_bernoulli(0.5, 0.5 + delta0)
    bound = math.sqrt(p1) * (1.0 + chi2) ** (n / 2.0)
    premise = p1 <= 0.25
    transfer = 0.5 * math.exp(8 * n * delta0 ** 2)
    ok = p0 <= bound + tol and (not premise or p0 <= transfer + tol)
    budget = C * math.log(T) * math.log(K) * math.sqrt(K * T)
    return TemplateReport(p0, p1, chi2, bound, delta0 * (T - n) * p1, budget, premise, transfer, ok)


def generate_corpus(count=100, K=2, T_values=(2, 3, 4, 5, 6, 7, 8), seed=0, mixture_every=10):
    """Seeded random decision tables; every ``mixture_every``-th entry is a
    two- or three-component mixture."""
    rng = np.random.default_rng(seed)
    out = []
    for idx in range(count):
        T = T_values[idx % len(T_values)]
        s = int(rng.integers(0, 2 ** 63))
        if mixture_every and idx % mixture_every == mixture_every - 1:
            m = 2 + idx % 2
            comps = tuple(TinyPolicy.random(K, T, s + c) for c in range(m))
            w = rng.dirichlet(np.ones(m))
            out.append(MixturePolicy(comps, tuple(float(x) for x in w), f"mixture-{s}"))
        else:
            out.append(TinyPolicy.random(K, T, s, f"random-{s}"))
    return out


def corpus_record(count=100, K=2, T_values=(2, 3, 4, 5, 6, 7, 8), seed=0, mixture_every=10):
    """JSON-able description from which :func:`generate_corpus` rebuilds the corpus."""
    return {"count": count, "K": K, "T_values": list(T_values), "seed": seed,
            "mixture_every": mixture_every}


def corpus_from_record(rec):
    return generate_corpus(rec["count"], rec["K"], tuple(rec["T_values"]), rec["seed"],
                           rec.get("mixture_every", 10))


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
