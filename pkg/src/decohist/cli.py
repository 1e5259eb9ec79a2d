"""Command-line entry point: configuration, orchestration, data emission.

Subcommands compute one artifact each (level statistics, chain
coefficients, light-cone schedule, reduced dynamics, history ensembles,
oracle checks) and a `figures` driver that emits per-figure CSV data.
All output is plain CSV/JSON; plotting is left to external tools.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .chain import auto_chain_length, uniform_chain
from .config import RunConfig, echo_config, parse_config
from .engine import EngineConfig
from .errors import ConfigError, DecohistError
from .histories import ensemble_stats, mean_p_max, run_ensemble
from .lightcone import (accumulate_windows, build_schedule,
                        default_checkpoints, propagate_one_particle)
from .spin import (KickedTopParams, build_spin_sector, floquet_operator,
                   quasienergy_spacings)

_FMT = ".17g"


def _fnum(x) -> str:
    return format(float(x), _FMT)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fnum(v) if isinstance(v, (float, np.floating))
                        else v for v in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _outdir(cfg: RunConfig, args) -> Path:
    out = args.outdir or os.environ.get("DECOHIST_OUTDIR") or cfg.output["outdir"]
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _workers(args) -> int:
    if args.workers:
        return args.workers
    env = os.environ.get("DECOHIST_WORKERS")
    return max(1, int(env)) if env else 1


def _provenance(out: Path, cfg: RunConfig, command: str) -> None:
    (out / "effective-config.ini").write_text(echo_config(cfg), encoding="utf-8")
    _write_json(out / "provenance.json",
                {"version": __version__, "command": command})


def _load_config(args) -> RunConfig:
    text = ""
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key_path, value = item.split("=", 1)
        section, key = key_path.strip().split(".", 1)
        text += f"\n[{section}]\n{key} = {value.strip()}\n"
    return parse_config(text)


def _instance(cfg: RunConfig):
    """Shared setup: sector, params, chain, light cone, schedule."""
    top, bath, run = cfg.top, cfg.bath, cfg.run
    sector = build_spin_sector(top["j"])
    params = KickedTopParams(K=top["K"], p=top["p"], tau=top["tau"],
                             beta=top["beta"])
    M = bath["M"] or auto_chain_length(bath["hop"], run["T"])
    spec = uniform_chain(eps=bath["eps"], hop=bath["hop"],
                         h_sys=bath["h_sys"], M=M)
    traj = propagate_one_particle(spec, run["T"], run["grid_dt"])
    wd = accumulate_windows(traj, default_checkpoints(traj))
    sched = build_schedule(wd, run["a_cut"])
    return sector, params, spec, traj, wd, sched


def _engine_config(cfg: RunConfig) -> EngineConfig:
    run = cfg.run
    return EngineConfig(dt=run["dt"], n_max=run["n_max"], a_cut=run["a_cut"],
                        seed=run["seed"])


def _sample_times(cfg: RunConfig) -> np.ndarray:
    run = cfg.run
    n = int(round(run["T"] / run["sample_dt"]))
    return np.arange(n + 1) * run["sample_dt"]


def cmd_spectrum(cfg: RunConfig, out: Path, args) -> None:
    sector = build_spin_sector(cfg.top["j"])
    params = KickedTopParams(K=cfg.top["K"], p=cfg.top["p"],
                             tau=cfg.top["tau"], beta=cfg.top["beta"])
    stats = quasienergy_spacings(floquet_operator(sector, params))
    _write_csv(out / "spacings.csv", ["spacing"],
               [(s,) for s in stats.spacings])
    _write_json(out / "spectrum-stats.json", {
        "j": cfg.top["j"], "K": cfg.top["K"],
        "ks_poisson": stats.ks_poisson, "ks_wigner": stats.ks_wigner,
        "mean_r": stats.mean_r, "has_degeneracies": stats.has_degeneracies,
    })


def cmd_chain(cfg: RunConfig, out: Path, args) -> None:
    bath, run = cfg.bath, cfg.run
    M = bath["M"] or auto_chain_length(bath["hop"], run["T"])
    spec = uniform_chain(eps=bath["eps"], hop=bath["hop"],
                         h_sys=bath["h_sys"], M=M)
    rows = [(n, spec.eps[n], spec.hop[n] if n < M - 1 else 0.0)
            for n in range(M)]
    _write_csv(out / "chain.csv", ["site", "eps", "hop"], rows)
    _write_json(out / "chain-meta.json", {"M": M, "h_sys": spec.h_sys})


def cmd_lightcone(cfg: RunConfig, out: Path, args) -> None:
    _, _, _, traj, wd, sched = _instance(cfg)
    rows = [(t, "in" if kind == "in" else "out", i)
            for i, (t, kind, ev) in enumerate(sched.merged_events())]
    _write_csv(out / "events.csv", ["t", "kind", "index"], rows)
    counts = [(t, sched.m_in(t), sched.m_out(t), sched.r(t))
              for t in wd.checkpoints]
    _write_csv(out / "modecount.csv", ["t", "m_in", "m_out", "r"], counts)


def cmd_evolve(cfg: RunConfig, out: Path, args) -> None:
    sector, params, spec, traj, wd, sched = _instance(cfg)
    times = _sample_times(cfg)
    h = run_ensemble(_engine_config(cfg), sector, params, spec, sched, traj,
                     n_traj=1, sample_times=times, collapse_enabled=False)[0]
    _write_csv(out / "jy.csv", ["t", "jy"], zip(h.jy_times, h.jy_values))


def _run_chunk_job(payload):
    cfg_text, first, size, sample = payload
    cfg = parse_config(cfg_text)
    sector, params, spec, traj, wd, sched = _instance(cfg)
    times = _sample_times(cfg) if sample else None
    base = run_ensemble(_engine_config(cfg), sector, params, spec, sched,
                        traj, n_traj=first + size, sample_times=times,
                        wd=wd, chunk_size=size)
    return base[first:]


def _sample_histories(cfg: RunConfig, workers: int, sample: bool = True):
    """n_traj histories, optionally fanned out over a process pool."""
    n_traj = cfg.run["n_traj"]
    if workers <= 1:
        sector, params, spec, traj, wd, sched = _instance(cfg)
        times = _sample_times(cfg) if sample else None
        return run_ensemble(_engine_config(cfg), sector, params, spec, sched,
                            traj, n_traj=n_traj, sample_times=times, wd=wd)
    # per-trajectory RNG streams are keyed by the global index, so chunks
    # computed in different processes reproduce the sequential run exactly
    chunk = max(1, (n_traj + workers - 1) // workers)
    jobs = [(echo_config(cfg), first, min(chunk, n_traj - first), sample)
            for first in range(0, n_traj, chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk_job, jobs))
    return [h for part in parts for h in part]


def _emit_histories(histories, out: Path, prefix: str = "") -> dict:
    rows = []
    for h in histories:
        for rec in h.records:
            rows.append((h.seed, rec.k, rec.t_out, rec.outcome,
                         float(rec.probs[0]), rec.delta_S, rec.schmidt_rank))
    _write_csv(out / f"{prefix}jumps.csv",
               ["trajectory", "event", "t_out", "outcome", "p_max",
                "delta_S", "schmidt_rank"], rows)
    st = ensemble_stats(histories)
    summary = {
        "n_trajectories": len(histories),
        "n_jumps": st.n_jumps,
        "mean_delta_S": st.mean_delta_S,
        "total_entropy": st.total_entropy,
        "mean_p_max": mean_p_max(histories) if st.n_jumps else None,
    }
    _write_json(out / f"{prefix}summary.json", summary)
    return summary


def cmd_histories(cfg: RunConfig, out: Path, args) -> None:
    histories = _sample_histories(cfg, _workers(args))
    _emit_histories(histories, out)
    mean_jy = np.mean([h.jy_values for h in histories], axis=0)
    se_jy = (np.std([h.jy_values for h in histories], axis=0, ddof=1) /
             np.sqrt(len(histories))) if len(histories) > 1 else 0 * mean_jy
    _write_csv(out / "jy-mean.csv", ["t", "jy_mean", "jy_se"],
               zip(histories[0].jy_times, mean_jy, se_jy))


def cmd_oracle_check(cfg: RunConfig, out: Path, args) -> None:
    from .oracle import bundled_checks
    results = bundled_checks()
    print(json.dumps(results, indent=2, sort_keys=True))
    _write_json(out / "oracle-check.json", results)
    if not all(r["passed"] for r in results["checks"]):
        raise DecohistError("oracle check failed")


def _with(cfg: RunConfig, **section_updates) -> RunConfig:
    text = echo_config(cfg)
    for sec, kv in section_updates.items():
        for k, v in kv.items():
            if isinstance(v, list):
                v = " ".join(repr(float(x)) for x in v)
            text += f"\n[{sec}]\n{k} = {v}\n"
    return parse_config(text)


def _fig2(cfg, out):
    for K in (2.0, 3.0):
        sector = build_spin_sector(40.0)
        params = KickedTopParams(K=K, p=cfg.top["p"], tau=cfg.top["tau"],
                                 beta=cfg.top["beta"])
        stats = quasienergy_spacings(floquet_operator(sector, params))
        _write_csv(out / f"fig2-spacings-K{K:g}.csv", ["spacing"],
                   [(s,) for s in stats.spacings])


def _fig3(cfg, out):
    for K in (1.0, -10.0):
        sub = _with(cfg, top={"K": K})
        sector, params, spec, traj, wd, sched = _instance(sub)
        times = _sample_times(sub)
        h = run_ensemble(_engine_config(sub), sector, params, spec, sched,
                         traj, n_traj=1, sample_times=times,
                         collapse_enabled=False)[0]
        _write_csv(out / f"fig3-jy-K{K:g}.csv", ["t", "jy"],
                   zip(h.jy_times, h.jy_values))


def _fig4(cfg, out):
    _, _, _, traj, _, _ = _instance(cfg)
    stride = max(1, traj.times.size // 200)
    rows = []
    for i in range(0, traj.times.size, stride):
        rows.append((traj.times[i],) + tuple(np.abs(traj.phi[i])))
    header = ["t"] + [f"site{k}" for k in range(traj.M)]
    _write_csv(out / "fig4-phi-abs.csv", header, rows)


def _fig5(cfg, out):
    _, _, _, traj, wd, sched = _instance(cfg)
    counts = [(t, sched.m_in(t), sched.m_out(t), sched.r(t))
              for t in wd.checkpoints]
    _write_csv(out / "fig5-modecount.csv", ["t", "m_in", "m_out", "r"], counts)


def _fig6(cfg, out, workers):
    for K in (0.0, -10.0):
        sub = _with(cfg, top={"K": K})
        histories = _sample_histories(sub, workers, sample=False)
        st = ensemble_stats(histories)
        _write_csv(out / f"fig6-jump-probs-K{K:g}.csv", ["p"],
                   [(p,) for p in st.jump_probs])


def _fig7(cfg, out, workers):
    rows = []
    for j in (20.0, 40.0):
        for K in cfg.run["k_sweep"]:
            sub = _with(cfg, top={"j": j, "K": K})
            histories = _sample_histories(sub, workers, sample=False)
            st = ensemble_stats(histories)
            rows.append((j, K, st.mean_delta_S, st.n_jumps))
    _write_csv(out / "fig7-entropy.csv", ["j", "K", "mean_delta_S", "n_jumps"],
               rows)


def cmd_figures(cfg: RunConfig, out: Path, args) -> None:
    workers = _workers(args)
    drivers = {
        "fig2": lambda: _fig2(cfg, out),
        "fig3": lambda: _fig3(cfg, out),
        "fig4": lambda: _fig4(cfg, out),
        "fig5": lambda: _fig5(cfg, out),
        "fig6": lambda: _fig6(cfg, out, workers),
        "fig7": lambda: _fig7(cfg, out, workers),
    }
    wanted = args.only.split(",") if args.only else list(drivers)
    status = {}
    for name in wanted:
        if name not in drivers:
            raise ConfigError(f"unknown figure {name!r}")
        try:
            drivers[name]()
            status[name] = "ok"
        except Exception as exc:  # isolate per-figure failures
            status[name] = f"failed: {exc}"
            traceback.print_exc()
    _write_json(out / "figures-status.json", status)
    if any(v != "ok" for v in status.values()):
        raise DecohistError("some figures failed; partial output kept")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decohist",
        description="Decoherent-history entropy diagnostics for an open "
                    "quantum kicked top")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "spectrum": "quasi-energy spacing statistics of the kicked top",
        "chain": "bath chain coefficients",
        "lightcone": "coupled/decoupled mode schedule",
        "evolve": "reduced <Jy>(t) without collapses",
        "histories": "sample quantum-jump histories",
        "oracle-check": "run the bundled small-instance reference suite",
        "figures": "emit per-figure CSV data",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a single config value")
        p.add_argument("--outdir", help="output directory")
        p.add_argument("--workers", type=int,
                       help="process pool size for independent trajectories")
        if name == "figures":
            p.add_argument("--only", help="comma-separated figure subset")
    return parser


_DISPATCH = {
    "spectrum": cmd_spectrum,
    "chain": cmd_chain,
    "lightcone": cmd_lightcone,
    "evolve": cmd_evolve,
    "histories": cmd_histories,
    "oracle-check": cmd_oracle_check,
    "figures": cmd_figures,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        out = _outdir(cfg, args)
        _provenance(out, cfg, args.command)
        _DISPATCH[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DecohistError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
