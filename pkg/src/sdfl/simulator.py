"""Round-based orchestration over a simulated network.

One tick of the global clock advances every node once: nodes whose
communication interval divides the tick pull messages from a fresh
neighbour selection and run a communication step; everyone else runs a
cheap local step. Message exchange happens against the tick-start models
(a barrier), so execution order inside a tick cannot change results.

All randomness flows through named substreams spawned from the master seed
(graph, data, intervals, selection, latencies, per-node noise, matrix
seeds); reruns with the same config are bit-identical, and noise draws per
node cannot be perturbed by scheduling.

Termination: the consensus residual is checked every tick once every node
has communicated at least once (the all-zero start trivially satisfies any
tolerance, so earlier checks would be vacuous). A run that exhausts
max_ticks, or whose objective blows past 1e12 or goes non-finite, is
flagged diverged rather than raising.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import ExperimentConfig
from .engine import (average_point, build_outgoing, communication_step,
                     consensus_residual, init_node, local_step)
from .objectives import (NodeObjective, compute_sigma_i,
                         generate_linreg_problem, load_libsvm, partition)
from .onebit import (DecodeFailure, DecoderOptions, EncodingMatrix, decode,
                     dense_size_bits, message_size_bits)
from .privacy import PrivacyParams, compose_privacy, gaussian_variance, sample_noise
from .topology import (TopologyGraph, complete_graph, generate_random_graph,
                       participation_sizes, select_neighbors, select_responders,
                       theory_constants, window_connectivity_probability)

TRACE_COLUMNS = [
    "tick", "comm_round", "rounds_a", "objective", "consensus_residual",
    "dtv_bits_ideal", "dtv_bits_framed", "eps_total", "delta_total_raw",
    "delta_total_capped", "decode_failures", "clip_count", "e_inf_proxy",
]

DIVERGENCE_OBJECTIVE = 1e12


@dataclass
class MetricsTrace:
    """Per-tick records plus the gradient-norm series at communication ticks.

    Wall-clock timing deliberately lives outside the trace (see RunResult)
    so that trace files are byte-identical across reruns.
    """

    algo: str
    rows: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)  # (tick, ||grad f(avg)||^2)

    def append(self, **kw):
        self.rows.append([kw[c] for c in TRACE_COLUMNS])

    def column(self, name: str) -> np.ndarray:
        j = TRACE_COLUMNS.index(name)
        return np.array([row[j] for row in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class RunResult:
    algo: str
    trace: MetricsTrace
    converged: bool
    diverged: bool
    ticks: int
    comm_ticks: int
    rounds_a: int
    final_objective: float
    final_residual: float
    dtv_bits_ideal: int
    dtv_bits_framed: int
    decode_failures: int
    clip_count: int
    wall_seconds: float
    tol: float
    diagnostics: dict
    final_w: np.ndarray = None  # n x m stacked models

    def summary(self) -> dict:
        """Deterministic summary, suitable for byte-compared JSON output."""
        return {
            "algo": self.algo,
            "converged": self.converged,
            "diverged": self.diverged,
            "ticks": self.ticks,
            "comm_ticks": self.comm_ticks,
            "rounds_a": self.rounds_a,
            "final_objective": self.final_objective,
            "final_residual": self.final_residual,
            "dtv_bits_ideal": self.dtv_bits_ideal,
            "dtv_bits_framed": self.dtv_bits_framed,
            "decode_failures": self.decode_failures,
            "clip_count": self.clip_count,
            "tol": self.tol,
            "kernel_backend": kernels.backend(),
            "diagnostics": self.diagnostics,
        }


def seed_streams(cfg: ExperimentConfig):
    """Named child seeds of the master seed; one noise stream per node."""
    root = np.random.SeedSequence(cfg.seed)
    graph_ss, data_ss, kappa_ss, select_ss, latency_ss, phi_ss, noise_ss = \
        root.spawn(7)
    m = cfg.problem.m
    return {
        "graph": np.random.default_rng(graph_ss),
        "data": np.random.default_rng(data_ss),
        "kappa": np.random.default_rng(kappa_ss),
        "select": np.random.default_rng(select_ss),
        "latency": np.random.default_rng(latency_ss),
        "phi_seeds": np.random.default_rng(phi_ss).integers(
            0, 2 ** 63, size=m, dtype=np.int64),
        "noise": [np.random.default_rng(ss) for ss in noise_ss.spawn(m)],
    }


def build_problem(cfg: ExperimentConfig, rng: np.random.Generator):
    """Returns (datasets, objectives, w_star_or_None, n)."""
    p = cfg.problem
    if p.kind == "linreg":
        datasets, w_star = generate_linreg_problem(
            p.n, p.s, p.m, (p.mi_min, p.mi_max), p.noise_scale, rng)
        objectives = [NodeObjective("linreg", d) for d in datasets]
        return datasets, objectives, w_star, p.n
    features, labels = load_libsvm(p.data)
    datasets = partition(features, labels, p.m, rng)
    objectives = [NodeObjective("logreg", d, p.lam) for d in datasets]
    return datasets, objectives, None, features.shape[1]


def build_graph(cfg: ExperimentConfig, rng: np.random.Generator) -> TopologyGraph:
    if cfg.problem.m == 1:
        return complete_graph(1)
    return generate_random_graph(cfg.problem.m, cfg.topology.edge_prob, rng)


def global_objective(objectives, varpi: np.ndarray) -> float:
    """Mean of the node losses at the average point."""
    return float(np.mean([obj.value(varpi) for obj in objectives]))


def global_grad_norm_sq(objectives, varpi: np.ndarray) -> float:
    """||sum_i grad f_i(avg)||^2."""
    g = objectives[0].grad(varpi).copy()
    for obj in objectives[1:]:
        g += obj.grad(varpi)
    return float(g @ g)


def gradient_dispersion(objectives, x: np.ndarray) -> float:
    """Empirical squared dispersion of node gradients around their mean."""
    grads = [obj.grad(x) for obj in objectives]
    mean = np.mean(grads, axis=0)
    return float(np.mean([np.sum((g - mean) ** 2) for g in grads]))


def run_ceps(cfg: ExperimentConfig) -> RunResult:
    """Execute the sparse decentralized training loop under `cfg`."""
    t_start = time.perf_counter()
    streams = seed_streams(cfg)
    datasets, objectives, _, n = build_problem(cfg, streams["data"])
    graph = build_graph(cfg, streams["graph"])
    m, s = cfg.problem.m, cfg.problem.s
    r = cfg.topology.r
    d = cfg.d_effective(n)
    kappas = streams["kappa"].integers(cfg.ceps.kappa_min,
                                       cfg.ceps.kappa_max + 1, size=m)
    lam_caps = []  # per-node lambda_max, reused for the Lipschitz diagnostic
    sigmas = []
    for data in datasets:
        sigma = compute_sigma_i(data, m, r, d, cfg.ceps.sigma_knob)
        sigmas.append(sigma)
        lam_caps.append(sigma * (m * (2.0 * r + cfg.ceps.sigma_knob) * d))

    states = [
        init_node(i, objectives[i], graph, sigmas[i], kappas[i], cfg.ceps.gamma,
                  EncodingMatrix(d=d, n=n, seed=int(streams["phi_seeds"][i]),
                                 density=cfg.codec.density))
        for i in range(m)
    ]
    opts = DecoderOptions(max_iters=cfg.codec.decoder_max_iters,
                          stall_iters=cfg.codec.decoder_stall_iters,
                          step_scale=cfg.codec.decoder_step_scale)

    dp = cfg.privacy
    variance = gaussian_variance(dp) if dp.enabled else 0.0
    clip_u = dp.u if (dp.enabled and dp.u > 0) else None
    clip_enforce = dp.clip_mode == "enforce"
    dp_active = dp.enabled and variance > 0.0
    tol = cfg.tol_effective()
    mu = cfg.ceps.mu
    onebit = cfg.codec.onebit
    tsizes = participation_sizes(graph, r)

    trace = MetricsTrace(algo="ceps-1bcs" if onebit else "ceps-perf")
    comm_counts = np.zeros(m, dtype=np.int64)
    dtv_ideal = dtv_framed = 0
    decode_failures = 0
    comm_ticks = 0
    e_inf = 0.0
    converged = diverged = False
    ticks_run = 0

    for k in range(cfg.termination.max_ticks):
        ticks_run = k + 1
        comm_set = [i for i in range(m) if k > 0 and k % int(kappas[i]) == 0]
        e_tick = 0.0
        if comm_set:
            comm_ticks += 1
            if cfg.topology.selection == "responders":
                latencies = streams["latency"].exponential(
                    1.0 / cfg.topology.straggler_rate, size=(m, m))
                sel = select_responders(graph, latencies, tsizes)
            else:
                sel = select_neighbors(graph, r, streams["select"])
            senders = sorted({int(j) for i in comm_set
                              for j in sel.selected[i] if j != i})
            # snapshot of tick-start models; messages/decodes are shared by
            # every receiver of the same sender
            zmap, sizes = {}, {}
            for j in senders:
                if onebit:
                    msg = build_outgoing(states[j])
                    sizes[j] = (message_size_bits(msg), msg.framed_size_bits)
                    try:
                        zmap[j] = decode(msg, states[j].phi, states[j].gamma,
                                         s, opts)
                    except DecodeFailure:
                        decode_failures += 1
                else:
                    zmap[j] = states[j].w.copy()
                    sizes[j] = (dense_size_bits(n), dense_size_bits(n))
            for i in comm_set:
                used = {}
                for j in sel.selected[i]:
                    j = int(j)
                    if j == i:
                        used[i] = states[i].w
                    elif j in zmap:
                        used[j] = zmap[j]
                    elif j in states[i].cache:
                        used[j] = states[i].cache[j]
                    # else: never decoded -> drop j from this average
                    if j != i:
                        ideal, framed = sizes[j]
                        dtv_ideal += ideal
                        dtv_framed += framed
                noise = sample_noise(variance if dp.enabled else 0.0, n,
                                     streams["noise"][i])
                e_tick += communication_step(states[i], used, noise, s,
                                             clip_u, clip_enforce)
                comm_counts[i] += 1
        for i in range(m):
            if i not in comm_set:
                e_tick += local_step(states[i], mu, s)

        e_inf = max(e_inf, e_tick)
        W = np.column_stack([st.w for st in states])
        varpi = average_point(W)
        objective = global_objective(objectives, varpi)
        residual = consensus_residual(W, s)
        rounds_a = int(comm_counts.max())
        if comm_set:
            trace.grad_norm_sq.append((k, global_grad_norm_sq(objectives, varpi)))
        spend = compose_privacy(rounds_a, dp) if dp_active else None
        trace.append(
            tick=k, comm_round=comm_ticks, rounds_a=rounds_a,
            objective=objective, consensus_residual=residual,
            dtv_bits_ideal=dtv_ideal, dtv_bits_framed=dtv_framed,
            eps_total=spend.epsilon_total if spend else 0.0,
            delta_total_raw=spend.delta_total_raw if spend else 0.0,
            delta_total_capped=spend.delta_total_capped if spend else 0.0,
            decode_failures=decode_failures,
            clip_count=sum(st.clip_count for st in states),
            e_inf_proxy=e_inf,
        )
        if not math.isfinite(objective) or objective > DIVERGENCE_OBJECTIVE:
            diverged = True
            break
        if (comm_counts.min() >= 1 and ticks_run >= cfg.termination.min_ticks
                and residual <= tol):
            converged = True
            break
    if not converged and not diverged:
        diverged = True  # out of budget counts as non-convergence, not an error

    W = np.column_stack([st.w for st in states])
    varpi = average_point(W)
    diag = _diagnostics(cfg, trace, objectives, varpi, lam_caps, datasets,
                        tsizes, e_inf)
    return RunResult(
        algo=trace.algo, trace=trace, converged=converged, diverged=diverged,
        ticks=ticks_run, comm_ticks=comm_ticks,
        rounds_a=int(comm_counts.max()),
        final_objective=float(trace.rows[-1][TRACE_COLUMNS.index("objective")]),
        final_residual=float(trace.rows[-1][
            TRACE_COLUMNS.index("consensus_residual")]),
        dtv_bits_ideal=dtv_ideal, dtv_bits_framed=dtv_framed,
        decode_failures=decode_failures,
        clip_count=sum(st.clip_count for st in states),
        wall_seconds=time.perf_counter() - t_start, tol=tol,
        diagnostics=diag, final_w=W,
    )


def _diagnostics(cfg, trace, objectives, varpi, lam_caps, datasets, tsizes,
                 e_inf, window_B: int = 20) -> dict:
    """Post-run report: gradient-norm window averages, dispersion, constants."""
    m = cfg.problem.m
    series = [v for _, v in trace.grad_norm_sq]
    quarter = max(1, len(series) // 4)
    first_q = float(np.mean(series[:quarter])) if series else math.nan
    last_q = float(np.mean(series[-quarter:])) if series else math.nan
    if cfg.problem.kind == "linreg":
        ell = max(cap / data.m_i for cap, data in zip(lam_caps, datasets))
    else:
        ell = max(cap / (4.0 * data.m_i) + cfg.problem.lam
                  for cap, data in zip(lam_caps, datasets))
    diag = {
        "e_inf_proxy": e_inf,
        "zeta_sq_at_final": gradient_dispersion(objectives, varpi),
        "grad_norm_sq_first_quarter": first_q,
        "grad_norm_sq_last_quarter": last_q,
        "lipschitz": ell,
    }
    if m >= 2:
        tc = theory_constants(m, window_B, ell)
        diag.update({
            "tau": tc.tau, "c0": tc.c0,
            "log10_one_minus_tau": tc.log10_one_minus_tau,
            "log10_c0": tc.log10_c0,
            "window_connectivity_prob": window_connectivity_probability(
                m, window_B, tsizes),
        })
    return diag
