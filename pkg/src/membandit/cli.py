"""Command-line experiment runner.

Subcommands: ``run``, ``sweep``, ``lab``, ``oracle-verify`` and ``plot``.
Every subcommand accepts a YAML config (``--config``) whose keys mirror
:class:`ExperimentConfig`; command-line flags override it. Errors are
written to stderr as one JSON record; exit status 2 means a usage or
config problem, 3 a runtime violation.
"""
import argparse
import csv
import io
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from . import analysis, oracle
from .errors import InvalidConfig, MembanditError
from .instances import (BanditInstance, GoodArmSet, make_hard_instance, random_instance,
                        sample_good_set)
from .randomness import derive, replication_seed
from .runtime import boundary_replay, run
from .scheduler import (BatchedEliminationPolicy, ConstantPolicy, UCBPolicy, algorithm1_policy,
                        build_schedule)

MODES = ("run", "sweep", "lab", "oracle-verify", "plot")
POLICIES = ("algorithm1", "ucb", "elimination", "constant")
INSTANCES = ("random", "hard", "explicit")
TAG_INSTANCE = 0x1A57
TAG_GOOD_SET = 0x600D

SWEEP_FIELDS = ["T", "K", "S", "W", "policy", "replication", "seed", "regret", "B",
                "peak_bits", "budget_bits", "status", "error"]


@dataclass
class ExperimentConfig:
    mode: str = "run"
    policy: str = "algorithm1"
    T: int = 100000
    K: int = 10
    S: int = 3
    delta: float | None = None
    arm: int = 1  # constant policy arm, 1-based
    instance: str = "random"
    means: list | None = None
    good_set: list | None = None  # 1-based
    M: int = 1
    seed: int = 0
    W: int | None = None
    grid: dict = field(default_factory=dict)  # sweep axes: T, K, S, W
    n: int | str | None = None  # lab threshold: int, "t1", or None for lb_config
    C: float = 1.0
    oracle: dict = field(default_factory=dict)  # count, deltas, T_values, seed
    inputs: list = field(default_factory=list)
    out: str = "out"
    workers: int = 1
    timing: bool = False

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_yaml(cls, text):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise InvalidConfig(f"unreadable config: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidConfig("config must be a mapping")
        return cls.from_dict(data)

    def validate(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if self.policy not in POLICIES:
            raise InvalidConfig(f"policy must be one of {POLICIES}")
        if self.instance not in INSTANCES:
            raise InvalidConfig(f"instance must be one of {INSTANCES}")
        if self.M < 1 or self.workers < 1:
            raise InvalidConfig("M and workers must be positive")
        if self.T < 1 or self.K < 1:
            raise InvalidConfig("T and K must be positive")
        bad = set(self.grid) - {"T", "K", "S", "W"}
        if bad:
            raise InvalidConfig(f"unknown sweep axes: {sorted(bad)}")
        return self


def load_config(path):
    try:
        with open(path) as fh:
            return ExperimentConfig.from_yaml(fh.read())
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc


def build_policy(name, K, S, T, delta=None, arm=1):
    if name == "algorithm1":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return algorithm1_policy(K, S, T, delta, fallback=True)
    if name == "ucb":
        return UCBPolicy(K, T)
    if name == "elimination":
        return BatchedEliminationPolicy(K, T, delta)
    if name == "constant":
        if not 1 <= arm <= K:
            raise InvalidConfig(f"constant arm must lie in 1..{K}")
        return ConstantPolicy(K, T, arm - 1)
    raise InvalidConfig(f"unknown policy {name!r}")


def build_instance(cfg, K, seed):
    if cfg.instance == "explicit":
        if cfg.means is None or len(cfg.means) != K:
            raise InvalidConfig(f"explicit instance needs {K} means")
        return BanditInstance(tuple(float(m) for m in cfg.means))
    if cfg.instance == "hard":
        if cfg.good_set is not None:
            gs = GoodArmSet.from_external(cfg.good_set, K)
        else:
            gs = sample_good_set(K, derive(seed, TAG_GOOD_SET))
        return make_hard_instance(gs)
    return random_instance(K, derive(seed, TAG_INSTANCE))


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if hasattr(x, "to_record"):
        return x.to_record()
    raise TypeError(f"not serializable: {type(x)}")


def cmd_run(cfg):
    inst = build_instance(cfg, cfg.K, cfg.seed)
    policy = build_policy(cfg.policy, cfg.K, cfg.S, cfg.T, cfg.delta, cfg.arm)
    start = time.perf_counter()
    tr = run(policy, inst, cfg.T, cfg.seed, budget_bits=cfg.W)
    elapsed = time.perf_counter() - start
    summary = {
        "policy": cfg.policy, "T": cfg.T, "K": cfg.K, "S": cfg.S, "seed": cfg.seed,
        "instance": inst.to_record(), "regret": analysis.regret(tr, inst),
        "B": tr.n_batches, "peak_bits": tr.peak_state_bits,
        "budget_bits": cfg.W if cfg.W is not None else policy.budget_bits,
        "pull_counts": tr.pull_counts.tolist(),
    }
    if cfg.timing:
        summary["runtime_s"] = elapsed
    _write(os.path.join(cfg.out, "transcript.csv"), tr.to_csv())
    _write(os.path.join(cfg.out, "summary.json"), _json(summary))
    return summary


def _sweep_job(job):
    cfg, T, K, S, W, m = job
    seed = replication_seed(cfg.seed, m)
    row = {"T": T, "K": K, "S": S, "W": "" if W is None else W, "policy": cfg.policy,
           "replication": m, "seed": seed, "regret": "", "B": "", "peak_bits": "",
           "budget_bits": "", "status": "ok", "error": ""}
    try:
        inst = build_instance(cfg, K, seed)
        policy = build_policy(cfg.policy, K, S, T, cfg.delta, cfg.arm)
        tr = run(policy, inst, T, seed, budget_bits=W)
        row.update(regret=repr(analysis.regret(tr, inst)), B=tr.n_batches,
                   peak_bits=tr.peak_state_bits,
                   budget_bits="" if policy.budget_bits is None else policy.budget_bits)
    except MembanditError as exc:
        row.update(status="error", error=exc.code)
    return row


def sweep_rows(cfg):
    axes = {"T": [cfg.T], "K": [cfg.K], "S": [cfg.S], "W": [cfg.W]}
    axes.update({k: list(v) if isinstance(v, (list, tuple)) else [v] for k, v in cfg.grid.items()})
    jobs = [(cfg, T, K, S, W, m) for T in axes["T"] for K in axes["K"] for S in axes["S"]
            for W in axes["W"] for m in range(cfg.M)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_sweep_job, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    return [_sweep_job(j) for j in jobs]


def sweep_summary(rows):
    cells = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        cells.setdefault((r["K"], r["S"], r["W"]), {}).setdefault(r["T"], []).append(float(r["regret"]))
    groups = []
    for (K, S, W), by_T in sorted(cells.items(), key=lambda kv: str(kv[0])):
        Ts = sorted(by_T)
        means = [float(np.mean(by_T[T])) for T in Ts]
        slope = None
        if len(Ts) >= 2 and all(m > 0 for m in means):
            slope = float(np.polyfit(np.log(Ts), np.log(means), 1)[0])
        groups.append({"K": K, "S": S, "W": W, "T": Ts, "mean_regret": means, "slope": slope})
    failed = sum(1 for r in rows if r["status"] != "ok")
    return {"rows": len(rows), "failed": failed, "groups": groups}


def cmd_sweep(cfg):
    rows = sweep_rows(cfg)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(os.path.join(cfg.out, "sweep.csv"), buf.getvalue())
    summary = sweep_summary(rows)
    _write(os.path.join(cfg.out, "sweep_summary.json"), _json(summary))
    return summary


def lab_threshold(cfg):
    if cfg.n is None:
        return analysis.lb_config(cfg.T, cfg.K, cfg.C).n
    if cfg.n == "t1":
        return build_schedule(cfg.T, cfg.K).lengths[1]
    n = int(cfg.n)
    if n < 1:
        raise InvalidConfig("lab threshold must be at least 1")
    return n


def _lab_job(job):
    cfg, n, m = job
    seed = replication_seed(cfg.seed, m)
    gs = sample_good_set(cfg.K, derive(seed, TAG_GOOD_SET))
    inst = make_hard_instance(gs)
    policy = build_policy(cfg.policy, cfg.K, cfg.S, cfg.T, cfg.delta, cfg.arm)
    tr = run(policy, inst, cfg.T, seed, budget_bits=cfg.W)
    replay = boundary_replay(tr, policy)
    prof = analysis.profile(tr, n)
    replayed = replay.profile(n)
    return tr, gs, prof, replayed, policy.budget_bits


def cmd_lab(cfg):
    if cfg.K % 2:
        raise InvalidConfig("the lab needs an even number of arms")
    n = lab_threshold(cfg)
    jobs = [(cfg, n, m) for m in range(cfg.M)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_lab_job, jobs))
    else:
        results = [_lab_job(j) for j in jobs]
    runs = [r[0] for r in results]
    errs = [analysis.error_counts(prof, gs) for _, gs, prof, _, _ in results]
    replay_ok = sum(1 for _, _, prof, rep, _ in results if prof.bits == tuple(int(v) for v in rep))
    p_e = float(np.mean([e.p_e for e in errs]))
    W = cfg.W if cfg.W is not None else results[0][4]
    B = max(tr.n_batches for tr in runs)
    info = analysis.info_lower_bound(cfg.K, p_e)
    capacity = analysis.capacity_bound(B, W) if W is not None else None
    rates = []
    for j in range(cfg.K):
        on = [tr for tr, gs, *_ in results if j in gs.members]
        if on:
            est = analysis.exploration_rate(on, j, n)
            rates.append({"arm": j + 1, **asdict(est)})
    regime = analysis.lb_config(cfg.T, cfg.K, cfg.C, strict=False).to_record()
    report = {
        "policy": cfg.policy, "T": cfg.T, "K": cfg.K, "S": cfg.S, "M": cfg.M, "seed": cfg.seed,
        "n": n, "B": B, "W": W,
        "fp_mean": float(np.mean([e.fp for e in errs])),
        "fn_mean": float(np.mean([e.fn for e in errs])),
        "p_e": p_e,
        "info_lower_bound": info,
        "capacity_bound": capacity,
        "prior_entropy": analysis.prior_entropy(cfg.K),
        "boundary_entropy_estimate": analysis.boundary_entropy_estimate(runs),
        "replay_matches": replay_ok,
        "replay_runs": len(results),
        "exploration_rates": rates,
        "regime": regime,
    }
    _write(os.path.join(cfg.out, "lab.json"), _json(report))
    return report


SLACK_FIELDS = ["policy", "T", "delta", "event", "n", "p0", "bound", "slack"]


def cmd_oracle(cfg):
    o = {"count": 100, "deltas": [0.05, 0.1, 0.25], "T_values": [2, 3, 4, 5, 6, 7, 8], "seed": cfg.seed}
    o.update(cfg.oracle)
    corpus = oracle.generate_corpus(o["count"], 2, tuple(o["T_values"]), o["seed"])
    base = BanditInstance((0.0, 0.5))
    violations = []
    trunc_fail = []
    slack_rows = []
    checked = 0
    max_slack = 0.0
    for pol in corpus:
        cache = {}
        for d in o["deltas"]:
            rep = oracle.verify_localized_com(pol, base, BanditInstance((0.0, 0.5 + d)), j=1, cache=cache)
            checked += len(rep.rows)
            max_slack = max(max_slack, rep.max_slack)
            violations += [{"policy": pol.name, "delta": d, **asdict(r)} for r in rep.violations]
            for r in rep.rows:
                slack_rows.append({"policy": pol.name, "T": pol.T, "delta": d, "event": r.event,
                                   "n": r.n, "p0": repr(r.p0_restricted),
                                   "bound": repr(r.bound_chi), "slack": repr(r.slack)})
        for nb in range(pol.T + 1):
            t = oracle.verify_prefix_truncation(pol, None, 1, nb)
            if not t.passed:
                trunc_fail.append(asdict(t))
    worked = worked_case()
    report = {"corpus": oracle.corpus_record(o["count"], 2, o["T_values"], o["seed"]),
              "deltas": o["deltas"], "rows_checked": checked, "max_slack": max_slack,
              "violations": violations, "truncation_failures": trunc_fail, "worked_case": worked}
    _write(os.path.join(cfg.out, "oracle_report.json"), _json(report))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SLACK_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(slack_rows)
    _write(os.path.join(cfg.out, "slack.csv"), buf.getvalue())
    return report


def worked_policy():
    """K=2, T=2: pull arm 2, then arm 2 again if it paid 1, else arm 1."""
    return oracle.TinyPolicy.from_function(2, 2, lambda h: 1 if not h or h[0][1] == 1 else 0, "worked")


def worked_case():
    rep = oracle.verify_localized_com(worked_policy(), BanditInstance((0.0, 0.5)),
                                      BanditInstance((0.0, 0.75)), j=1, n=1,
                                      events=[oracle.ALWAYS], exact=True)
    row = rep.rows[0]
    return {"p0": row.p0_restricted, "p1": row.p1_restricted, "chi2": rep.chi2,
            "bound": row.bound_chi, "ok": row.ok}


def cmd_plot(cfg):
    from . import plotting

    if not cfg.inputs:
        raise InvalidConfig("plot needs at least one CSV input")
    written = []
    for path in cfg.inputs:
        written += plotting.plot_csv(path, cfg.out)
    return {"figures": written}


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "lab": cmd_lab, "oracle-verify": cmd_oracle,
            "plot": cmd_plot}


def _int_list(text):
    return [int(float(x)) for x in text.split(",") if x]


def build_parser():
    parser = argparse.ArgumentParser(prog="membandit", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int)
    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--policy", choices=POLICIES)
    sim.add_argument("-T", "--horizon", dest="T", type=lambda s: int(float(s)))
    sim.add_argument("-K", "--arms", dest="K", type=int)
    sim.add_argument("-S", "--block", dest="S", type=int)
    sim.add_argument("--delta", type=float)
    sim.add_argument("--arm", type=int, help="arm for the constant policy (1-based)")
    sim.add_argument("--instance", choices=INSTANCES)
    sim.add_argument("--means", type=lambda s: [float(x) for x in s.split(",")])
    sim.add_argument("--good-set", dest="good_set", type=_int_list)
    sim.add_argument("-M", "--replications", dest="M", type=int)
    sim.add_argument("-W", "--budget", dest="W", type=int, help="persistent-memory budget in bits")
    sub = parser.add_subparsers(dest="mode", required=True)
    p = sub.add_parser("run", parents=[common, sim], help="one run: batch CSV and summary JSON")
    p.add_argument("--timing", action="store_true", default=None, help="record wall-clock runtime")
    p = sub.add_parser("sweep", parents=[common, sim], help="grid of runs, long-form CSV")
    for axis in ("T", "K", "S", "W"):
        p.add_argument(f"--grid-{axis}", type=_int_list, help=f"comma-separated values of {axis}")
    p = sub.add_parser("lab", parents=[common, sim], help="lower-bound information pipeline")
    p.add_argument("-n", "--threshold", dest="n", help="profile threshold (int or 't1')")
    p.add_argument("-C", dest="C", type=float)
    p = sub.add_parser("oracle-verify", parents=[common], help="exact change-of-measure checks")
    p.add_argument("--count", type=int)
    p.add_argument("--deltas", type=lambda s: [float(x) for x in s.split(",")])
    p.add_argument("--max-T", dest="max_T", type=int)
    p = sub.add_parser("plot", parents=[common], help="SVG figures from CSV outputs")
    p.add_argument("inputs", nargs="*")
    return parser


def config_from_args(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    data = cfg.to_dict()
    data["mode"] = args.mode
    for key in ("seed", "out", "workers", "policy", "T", "K", "S", "delta", "arm", "instance",
                "means", "good_set", "M", "W", "C", "timing"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "n", None) is not None:
        data["n"] = args.n if args.n == "t1" else int(args.n)
    if args.mode == "sweep":
        for axis in ("T", "K", "S", "W"):
            val = getattr(args, f"grid_{axis}")
            if val is not None:
                data["grid"][axis] = val
    if args.mode == "oracle-verify":
        if args.count is not None:
            data["oracle"]["count"] = args.count
        if args.deltas is not None:
            data["oracle"]["deltas"] = args.deltas
        if args.max_T is not None:
            data["oracle"]["T_values"] = list(range(2, args.max_T + 1))
    if args.mode == "plot" and args.inputs:
        data["inputs"] = args.inputs
    return ExperimentConfig.from_dict(data)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        result = COMMANDS[cfg.mode](cfg)
    except MembanditError as exc:
        sys.stderr.write(json.dumps(exc.record(), sort_keys=True, default=_jsonable) + "\n")
        return exc.exit_status
    if cfg.mode == "oracle-verify":
        bad = len(result["violations"]) + len(result["truncation_failures"])
        print(json.dumps({"rows_checked": result["rows_checked"], "violations": bad,
                          "max_slack": result["max_slack"], "worked_case": result["worked_case"]},
                         sort_keys=True))
        return 3 if bad or not result["worked_case"]["ok"] else 0
    if cfg.mode == "sweep":
        print(json.dumps({k: result[k] for k in ("rows", "failed")} |
                         {"slopes": [g["slope"] for g in result["groups"]]}, sort_keys=True))
    else:
        print(json.dumps(result, sort_keys=True, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
