"""Experiment configurations, presets and the runner producing report rows.

A config is a flat ``key = value`` text file (``#`` starts a comment). Lists are
comma separated. Keys:

    kind      exact-l1 | entropy-ns | u-scale | avg-distance | tv-event |
              lamplighter | grigorchuk | homogeneity | speed
    group     Z, Z^2, Z/5, D_inf, F2, lamplighter, S3, D4, table:PATH, A x B
    measure   simple | lazy | sws | atoms:PATH
    rho       list of noise parameters in [0, 1]
    n         strictly increasing list of walk lengths
    reps      replicates for Monte Carlo kinds
    seed      master seed
    budget    atom budget for exact kinds
    target    exact-l1 only: product (pi_n vs mu_n x mu_n) or uniform
    scales    u-scale only: list of scales s
    eps       homogeneity only: list of masses
    event     tv-event only: first-letter | equal | same-sheet | always
    d0        grigorchuk only: tree degree for the refresh recursion
    label     free text carried into the group column
    out       report path (the command line ``--out`` wins)
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import groups as G
from . import measures as M
from . import sampler as S
from . import transport as T
from . import wreath as W
from .report import ReportRow

KINDS = ("exact-l1", "entropy-ns", "u-scale", "avg-distance", "tv-event", "lamplighter",
         "grigorchuk", "homogeneity", "speed")
MC_KINDS = ("avg-distance", "tv-event", "lamplighter", "grigorchuk", "speed")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    group: str = "Z"
    measure: str = "simple"
    rho: list = field(default_factory=lambda: [0.3])
    n: list = field(default_factory=lambda: [16])
    reps: int = 1000
    seed: int = 0
    budget: int = M.DEFAULT_BUDGET
    target: str = "product"
    scales: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    eps: list = field(default_factory=lambda: [0.1])
    event: str = "first-letter"
    d0: int = 2
    label: str = ""
    out: str = ""

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.n:
            raise ConfigError("empty n schedule")
        if any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise ConfigError("n schedule must be strictly increasing")
        if any(x < 0 for x in self.n):
            raise ConfigError("n must be >= 0")
        if self.kind != "speed" and not self.rho:
            raise ConfigError("empty rho list")
        if any(not 0.0 <= r <= 1.0 for r in self.rho):
            raise ConfigError("rho values must lie in [0, 1]")
        if self.kind in MC_KINDS and self.reps < 2:
            raise ConfigError("reps must be >= 2 for Monte Carlo kinds")
        if self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.target not in ("product", "uniform"):
            raise ConfigError("target must be 'product' or 'uniform'")
        if any(not 0.0 <= e <= 1.0 for e in self.eps):
            raise ConfigError("eps values must lie in [0, 1]")
        if self.d0 < 2:
            raise ConfigError("d0 must be >= 2")
        return self


_INT = {"reps", "seed", "budget", "d0"}
_FLOATS = {"rho", "scales", "eps"}
_STR = {"kind", "group", "measure", "target", "event", "label", "out"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT:
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if key == "n":
            return [int(float(x)) for x in raw.split(",") if x.strip()]
        if key in _FLOATS:
            return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    if key in _STR:
        return raw
    raise ConfigError(f"unknown config key {key!r}")


def parse_config(text: str, overrides: list[str] = ()) -> ExperimentConfig:
    values: dict = {}
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), 1)]
    lines += [(f"--set {j + 1}", ov) for j, ov in enumerate(overrides)]
    for where, line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {where}: expected key = value")
        key, raw = line.split("=", 1)
        key = key.strip().lower()
        values[key] = _parse_value(key, raw)
    if "kind" not in values:
        raise ConfigError("config has no kind")
    return ExperimentConfig(**values).validate()


def load_config(path, overrides: list[str] = ()) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    out = []
    for key in ("kind", "group", "measure", "rho", "n", "reps", "seed", "budget", "target",
                "scales", "eps", "event", "d0", "label", "out"):
        v = getattr(cfg, key)
        out.append(f"{key} = {','.join(repr(x) for x in v) if isinstance(v, list) else v}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
def build_measure(cfg: ExperimentConfig):
    try:
        group = G.parse_group(cfg.group)
    except (G.GroupError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    name = cfg.measure
    if name == "simple":
        return M.simple_measure(group)
    if name == "lazy":
        return M.lazy_measure(group)
    if name == "sws":
        if not isinstance(group, G.Lamplighter):
            raise ConfigError("measure sws needs group lamplighter")
        return W.sws_measure()
    if name.startswith("atoms:"):
        try:
            return M.read_atoms(group, name[6:])
        except (OSError, M.MeasureError) as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown measure {name!r}")


def group_label(cfg: ExperimentConfig) -> str:
    base = f"{cfg.group}[{cfg.measure}]"
    return f"{base} {cfg.label}" if cfg.label else base


class _Rows:
    def __init__(self, cfg, timing):
        self.cfg = cfg
        self.timing = timing
        self.rows: list[ReportRow] = []
        self.label = group_label(cfg)
        self.t0 = time.perf_counter()

    def add(self, metric, value, rho=None, n=None, stderr=None, reps=None):
        wall = round((time.perf_counter() - self.t0) * 1000) if self.timing else None
        self.rows.append(ReportRow(self.cfg.kind, self.label, rho, n, metric, float(value),
                                   None if stderr is None else float(stderr), reps,
                                   self.cfg.seed, wall))

    def add_estimate(self, metric, est, rho=None, n=None):
        self.add(metric, est.mean, rho, n, est.stderr, est.reps)


def run_experiment(cfg: ExperimentConfig, timing: bool = False) -> list[ReportRow]:
    """Rows for one config. Exact kinds are bit-stable, Monte Carlo kinds seed-stable."""
    cfg.validate()
    out = _Rows(cfg, timing)
    runner = _RUNNERS[cfg.kind]
    runner(cfg, out)
    return out.rows


def _exact_pairs(cfg, mu, rho):
    """Yield ``(n, pi_n, mu_n)`` for the schedule."""
    step = M.noise_step_measure(mu, rho)
    pis = M.convolution_powers(step, cfg.n, cfg.budget)
    mus = dict(M.convolution_powers(mu, cfg.n, cfg.budget))
    for n, pi in pis:
        yield n, pi, mus[n]


def _run_exact_l1(cfg, out):
    mu = build_measure(cfg)
    if cfg.target == "uniform":
        if mu.group.order is None:
            raise ConfigError("target uniform needs a finite group")
        unif = M.uniform(G.pair_group(mu.group))
    for rho in cfg.rho:
        for n, pi, mu_n in _exact_pairs(cfg, mu, rho):
            if cfg.target == "uniform":
                out.add("l1_uniform", M.l1_distance(pi, unif), rho, n)
            else:
                out.add("l1_product", M.l1_distance(pi, M.product_measure(mu_n, mu_n)), rho, n)


def _run_entropy_ns(cfg, out):
    mu = build_measure(cfg)
    for rho in cfg.rho:
        for n, pi, mu_n in _exact_pairs(cfg, mu, rho):
            hx = M.entropy(mu_n)
            hyx = M.entropy(pi) - hx
            out.add("H_X", hx, rho, n)
            out.add("H_Y_given_X", hyx, rho, n)
            if hx > 0:
                out.add("entropy_ratio", hyx / hx, rho, n)


def _run_u_scale(cfg, out):
    mu = build_measure(cfg)
    for rho in cfg.rho:
        for n, pi, mu_n in _exact_pairs(cfg, mu, rho):
            prod = M.product_measure(mu_n, mu_n)
            a, b = pi.to_sparse(), prod.to_sparse()
            try:
                for s in cfg.scales:
                    out.add(f"U_s={s:g}", T.u_s_exact(T.TransportInstance(a, b, s)), rho, n)
                out.add("W1", T.w1_exact(T.TransportInstance(a, b)), rho, n)
            except T.TransportError as exc:
                raise M.BudgetExceeded(str(exc), step=n) from None
            out.add("tv", T.coupling_tv(a, b), rho, n)


def _run_avg_distance(cfg, out):
    mu = build_measure(cfg)
    pair = lambda f, x, y, x2: np.stack([f.dist(x, y), f.dist(x, x2)])
    for rho in cfg.rho:
        for n in cfg.n:
            vals = S.pair_statistics(mu, rho, n, cfg.reps, cfg.seed, pair)
            out.add_estimate("mean_dist_noised", S.estimate(vals[0], cfg.seed), rho, n)
            out.add_estimate("mean_dist_indep", S.estimate(vals[1], cfg.seed), rho, n)
            out.add_estimate("distance_ratio", S.ratio_estimate(vals[0], vals[1], cfg.seed), rho, n)


def _run_tv_event(cfg, out):
    mu = build_measure(cfg)
    for rho in cfg.rho:
        for n in cfg.n:
            b = S.tv_event_lower_bound(mu, rho, n, cfg.event, cfg.reps, cfg.seed)
            out.add("event_difference", b.extra["difference"], rho, n,
                    b.extra["difference_se"], b.reps)
            out.add(f"tv_lower_bound[{cfg.event}]", b.mean, rho, n, None, b.reps)


def _run_lamplighter(cfg, out):
    if cfg.group.strip().lower() != "lamplighter" or cfg.measure != "sws":
        raise ConfigError("lamplighter experiments need group lamplighter and measure sws")
    for n in cfg.n:
        stats = W.lamplighter_range_stats(cfg.rho, n, cfg.reps, cfg.seed)
        for rho, (rng_est, ref_est) in zip(cfg.rho, stats):
            ratio = W.entropy_ns_ratio_lamplighter(rho, n, cfg.reps, cfg.seed)
            out.add_estimate("E_range", rng_est, rho, n)
            out.add_estimate("E_range_ref", ref_est, rho, n)
            out.add_estimate("range_ratio", ratio, rho, n)
            out.add("log_correction", ratio.extra["correction"], rho, n)


def _run_grigorchuk(cfg, out):
    for n in cfg.n:
        for st in W.grigorchuk_orbit_stats(cfg.rho, n, cfg.reps, cfg.seed):
            out.add("E_orbit", st.mean_orbit, st.rho, n, st.se_orbit, st.reps)
            out.add("E_orbit_ref", st.mean_ref, st.rho, n, st.se_ref, st.reps)
            if n:
                out.add("E_orbit_per_n", st.mean_orbit / n, st.rho, n, st.se_orbit / n, st.reps)
            out.add("lemma_bound_bits", st.bound, st.rho, n, st.rho * st.se_orbit, st.reps)
    for rho in cfg.rho:
        if 0.0 < rho < 1.0:
            rec = W.refresh_recursion(rho, cfg.d0)
            out.add(f"rho1[d0={cfg.d0}]", rec.rho1, rho)
            out.add(f"levels_to_half[d0={cfg.d0}]", rec.steps, rho)


def _run_homogeneity(cfg, out):
    mu = build_measure(cfg)
    for rho in cfg.rho:
        for n, pi, mu_n in _exact_pairs(cfg, mu, rho):
            for eps in cfg.eps:
                if M.entropy(mu_n) > 0:
                    h = M.entropy_homogeneity(mu_n, eps)
                    out.add(f"h_eps={eps:g}", h.value, rho, n)
                    out.add(f"h_gap_eps={eps:g}", h.gap, rho, n)
                if n > 0 and rho > 0:
                    f = M.spread_homogeneity(pi.to_sparse(), eps)
                    out.add(f"f_eps={eps:g}", f.value, rho, n)
                    out.add(f"f_gap_eps={eps:g}", f.gap, rho, n)


def _run_speed(cfg, out):
    mu = build_measure(cfg)
    for n in cfg.n:
        if n < 1:
            raise ConfigError("speed needs n >= 1")
        out.add_estimate("speed", S.speed_estimate(mu, n, cfg.reps, cfg.seed), None, n)


_RUNNERS = {
    "exact-l1": _run_exact_l1,
    "entropy-ns": _run_entropy_ns,
    "u-scale": _run_u_scale,
    "avg-distance": _run_avg_distance,
    "tv-event": _run_tv_event,
    "lamplighter": _run_lamplighter,
    "grigorchuk": _run_grigorchuk,
    "homogeneity": _run_homogeneity,
    "speed": _run_speed,
}


# ---------------------------------------------------------------------------
def _cfg(**kw) -> ExperimentConfig:
    return ExperimentConfig(**kw).validate()


PRESETS: dict[str, tuple[str, list[ExperimentConfig]]] = {
    "dihedral-dichotomy": (
        "exact l1 on D_inf x D_inf, rho=0.3: simple walk stays away from 0, lazy walk decays "
        "(about 7 min)",
        [_cfg(kind="exact-l1", group="D_inf", measure=m, rho=[0.3], n=[256, 1024, 4096])
         for m in ("simple", "lazy")]),
    "abelian-entropy": (
        "exact H(Y|X)/H(X) for the simple walk on Z, rho=0.3 (about 10 s)",
        [_cfg(kind="entropy-ns", group="Z", measure="simple", rho=[0.3], n=[64, 256, 1024])]),
    "abelian-l1": (
        "exact l1 distance to independence on Z, rho=0.3 (about 10 s)",
        [_cfg(kind="exact-l1", group="Z", measure="simple", rho=[0.3], n=[64, 256, 1024])]),
    "abelian-distance": (
        "Monte Carlo distance ratio on Z, rho=0.25, n=1e4, 1e5 replicates (seconds)",
        [_cfg(kind="avg-distance", group="Z", measure="simple", rho=[0.25], n=[10_000],
              reps=100_000, seed=1)]),
    "abelian-scales": (
        "exact U^s, W1 and TV between pi_n and mu_n x mu_n on Z (seconds)",
        [_cfg(kind="u-scale", group="Z", measure="simple", rho=[0.3], n=[8, 16],
              scales=[1, 2, 4, 8])]),
    "lamplighter-ens": (
        "refreshed range over range for the switch-walk-switch lamplighter (seconds)",
        [_cfg(kind="lamplighter", group="lamplighter", measure="sws", rho=[0.1],
              n=[2500, 10_000], reps=10_000, seed=1)]),
    "grigorchuk-partial-ens": (
        "inverted orbits in Z/2 wr_S G for the first Grigorchuk group (about 30 s)",
        [_cfg(kind="grigorchuk", group="grigorchuk", measure="switch-walk", rho=[0.05, 0.2],
              n=[256, 512, 1024, 2048, 4096], reps=500, seed=1)]),
    "finite-mixing": (
        "exact l1 distance of pi_n to uniform on Z/5 x Z/5, rho=0.2 (under a second)",
        [_cfg(kind="exact-l1", group="Z/5", measure="lazy", rho=[0.2], target="uniform",
              n=[25, 50, 100, 150, 200])]),
    "free-group-witness": (
        "free group F2: distance ratio, first-letter TV bound and speed (seconds)",
        [_cfg(kind="avg-distance", group="F2", measure="simple", rho=[0.2], n=[2000],
              reps=2000, seed=1),
         _cfg(kind="tv-event", group="F2", measure="simple", rho=[0.2], n=[2000], reps=2000,
              seed=1, event="first-letter"),
         _cfg(kind="speed", group="F2", measure="simple", rho=[0.2], n=[4000], reps=1000,
              seed=1)]),
    "homogeneity": (
        "greedy homogeneous entropy and spread on Z, rho=0.3 (seconds)",
        [_cfg(kind="homogeneity", group="Z", measure="simple", rho=[0.3], n=[16, 64],
              eps=[0.05, 0.1, 0.25])]),
}


def preset(name: str) -> list[ExperimentConfig]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return [replace(c) for c in PRESETS[name][1]]
