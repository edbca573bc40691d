"""Decentralized SGD baselines run under the same harness and metrics.

All variants take plain (optionally noised) gradient steps every tick and
mix every `local_steps` ticks, matching the comparison protocol:

  dpsgd     static Metropolis weights on the base graph, full neighbours
  dpsgd_dn  Metropolis weights rebuilt each round on a resampled edge subset
  dpsgd_pc  mixing restricted to a fresh partial selection, rows renormalized
  dfedavgm  momentum-SGD local steps, then the partial-selection mixing step

Baselines ship dense vectors, so every transfer costs 64 n bits. With
privacy enabled the gradient is clipped and perturbed at every evaluation
(that is where the data is touched), so the accountant's round counter
advances once per gradient step rather than once per sweep.
"""

import dataclasses
import math
import time

import numpy as np

from .config import ExperimentConfig
from .engine import average_point, consensus_residual
from .objectives import estimate_lipschitz
from .privacy import clip_gradient, compose_privacy, gaussian_variance, sample_noise
from .simulator import (DIVERGENCE_OBJECTIVE, MetricsTrace, RunResult,
                        TRACE_COLUMNS, build_graph, build_problem,
                        global_grad_norm_sq, global_objective, seed_streams)
from .topology import TopologyGraph, select_neighbors

_TAGS = {"dpsgd": "dpsgd", "dpsgd_dn": "dpsgd-dn", "dpsgd_pc": "dpsgd-pc",
         "dfedavgm": "dfedavgm"}


def metropolis_mixing(graph: TopologyGraph) -> np.ndarray:
    """Symmetric doubly stochastic weights: M_ij = 1/(1 + max(deg_i, deg_j))
    on edges, diagonal absorbs the remainder."""
    deg = graph.degrees()
    M = np.zeros((graph.m, graph.m))
    for i, j in graph.edges():
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        M[i, j] = M[j, i] = w
    np.fill_diagonal(M, 1.0 - M.sum(axis=1))
    return M


def _restricted_row_mixing(M: np.ndarray, selection) -> np.ndarray:
    """Zero out unselected columns per row and renormalize each row."""
    out = np.zeros_like(M)
    for i, chosen in enumerate(selection.selected):
        out[i, chosen] = M[i, chosen]
        total = out[i].sum()
        if total > 0:
            out[i] /= total
        else:
            out[i, i] = 1.0
    return out


def _dn_graph(base: TopologyGraph, keep: float, rng) -> TopologyGraph:
    """Random sub-topology for the dynamic-network variant."""
    edges = base.edges()
    adj = np.zeros_like(base.adj)
    for i, j in edges:
        if rng.random() < keep:
            adj[i, j] = adj[j, i] = True
    return TopologyGraph(m=base.m, adj=adj)


def run_dpsgd(cfg: ExperimentConfig, variant: str = "static") -> RunResult:
    """Decentralized parallel SGD; variant in {static, dynamic, partial}."""
    algo = {"static": "dpsgd", "dynamic": "dpsgd_dn",
            "partial": "dpsgd_pc"}[variant]
    return run_baseline(dataclasses.replace(cfg, algo=algo))


def run_dfedavgm(cfg: ExperimentConfig) -> RunResult:
    return run_baseline(dataclasses.replace(cfg, algo="dfedavgm"))


def run_baseline(cfg: ExperimentConfig) -> RunResult:
    """Run the configured baseline (cfg.algo one of dpsgd/dpsgd_dn/dpsgd_pc/
    dfedavgm) and return the same result shape as the main algorithm."""
    if cfg.algo not in _TAGS:
        raise ValueError(f"not a baseline algorithm: {cfg.algo}")
    t_start = time.perf_counter()
    streams = seed_streams(cfg)
    datasets, objectives, _, n = build_problem(cfg, streams["data"])
    graph = build_graph(cfg, streams["graph"])
    m, s = cfg.problem.m, cfg.problem.s
    momentum = cfg.baseline.momentum
    local_steps = cfg.baseline.local_steps
    eta = cfg.baseline.eta
    if eta == 0.0:
        eta = 0.5 / estimate_lipschitz(cfg.problem.kind, datasets,
                                       cfg.problem.lam)

    dp = cfg.privacy
    variance = gaussian_variance(dp) if dp.enabled else 0.0
    clip_u = dp.u if (dp.enabled and dp.u > 0) else None
    clip_enforce = dp.clip_mode == "enforce"
    dp_active = dp.enabled and variance > 0.0
    tol = cfg.tol_effective()

    W = np.zeros((n, m))
    V = np.zeros((n, m))  # momentum buffers (dfedavgm)
    M_static = metropolis_mixing(graph)
    use_momentum = cfg.algo == "dfedavgm"
    partial = cfg.algo in ("dpsgd_pc", "dfedavgm")

    trace = MetricsTrace(algo=_TAGS[cfg.algo])
    dtv_ideal = dtv_framed = 0
    clip_count = 0
    noised_steps = 0  # per-node noise events (equal across nodes here)
    comm_ticks = 0
    converged = diverged = False
    ticks_run = 0

    for k in range(cfg.termination.max_ticks):
        ticks_run = k + 1
        mixing_tick = k > 0 and k % local_steps == 0
        if mixing_tick:
            comm_ticks += 1
            if cfg.algo == "dpsgd_dn":
                sub = _dn_graph(graph, cfg.baseline.dn_edge_keep,
                                streams["select"])
                M = metropolis_mixing(sub)
                transfers = int(sub.degrees().sum())
            elif partial:
                sel = select_neighbors(graph, cfg.topology.r, streams["select"])
                M = _restricted_row_mixing(M_static, sel)
                transfers = int(sel.t().sum() - m)
            else:
                M = M_static
                transfers = int(graph.degrees().sum())
            W = W @ M.T
            dtv_ideal += transfers * 64 * n
            dtv_framed += transfers * 64 * n
        else:
            for i in range(m):
                g = objectives[i].grad(W[:, i])
                if clip_u is not None:
                    clipped_g, violated = clip_gradient(g, clip_u)
                    if violated:
                        clip_count += 1
                    if clip_enforce:
                        g = clipped_g
                g = g + sample_noise(variance if dp.enabled else 0.0, n,
                                     streams["noise"][i])
                if use_momentum:
                    V[:, i] = momentum * V[:, i] + g
                    W[:, i] -= eta * V[:, i]
                else:
                    W[:, i] -= eta * g
            if dp_active:
                noised_steps += 1

        varpi = average_point(W)
        objective = global_objective(objectives, varpi)
        residual = consensus_residual(W, s)
        if mixing_tick:
            trace.grad_norm_sq.append((k, global_grad_norm_sq(objectives, varpi)))
        spend = compose_privacy(noised_steps, dp) if dp_active else None
        trace.append(
            tick=k, comm_round=comm_ticks, rounds_a=noised_steps,
            objective=objective, consensus_residual=residual,
            dtv_bits_ideal=dtv_ideal, dtv_bits_framed=dtv_framed,
            eps_total=spend.epsilon_total if spend else 0.0,
            delta_total_raw=spend.delta_total_raw if spend else 0.0,
            delta_total_capped=spend.delta_total_capped if spend else 0.0,
            decode_failures=0, clip_count=clip_count, e_inf_proxy=0.0,
        )
        if not math.isfinite(objective) or objective > DIVERGENCE_OBJECTIVE:
            diverged = True
            break
        if (comm_ticks >= 1 and ticks_run >= cfg.termination.min_ticks
                and residual <= tol):
            converged = True
            break
    if not converged and not diverged:
        diverged = True

    varpi = average_point(W)
    series = [v for _, v in trace.grad_norm_sq]
    quarter = max(1, len(series) // 4)
    diag = {
        "eta": eta,
        "grad_norm_sq_first_quarter": float(np.mean(series[:quarter]))
        if series else math.nan,
        "grad_norm_sq_last_quarter": float(np.mean(series[-quarter:]))
        if series else math.nan,
    }
    return RunResult(
        algo=trace.algo, trace=trace, converged=converged, diverged=diverged,
        ticks=ticks_run, comm_ticks=comm_ticks, rounds_a=noised_steps,
        final_objective=float(trace.rows[-1][TRACE_COLUMNS.index("objective")]),
        final_residual=float(trace.rows[-1][
            TRACE_COLUMNS.index("consensus_residual")]),
        dtv_bits_ideal=dtv_ideal, dtv_bits_framed=dtv_framed,
        decode_failures=0, clip_count=clip_count,
        wall_seconds=time.perf_counter() - t_start, tol=tol,
        diagnostics=diag, final_w=W.copy(),
    )
