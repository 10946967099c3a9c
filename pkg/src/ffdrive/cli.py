"""Command-line pipelines: eigen | wkb | fastforward | evolve-quantum |
evolve-classical | predict-sidebands | reproduce.

Every stage writes plain CSV/JSON into the configured output directory and
is inventoried in a manifest with content checksums.  Exit codes: 0 on
success, 1 when a reproduction threshold fails, 2 on usage/config errors,
3 on numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cdyn import (
    AngleDistribution,
    TrajectoryEnsemble,
    ensemble_actions,
    ensemble_angles,
    extract_final_angles,
    integrate_ensemble,
    sample_shell_uniform_angle,
)
from .errors import ConfigError, NumericalError
from .fastforward import FlowFields, build_flow_fields
from .grids import Field
from .model import RunConfig, evaluate_potential, load_config
from .qdyn import PopulationHistory, propagate
from .sidebands import SidebandComparison, SidebandPrediction, compare, predict_sidebands
from .spectral import EigenSolution, solve_eigenproblem
from .wkb import period_and_angle, shell_for_level, shell_from_energy, wkb_state

# reproduction thresholds (fixed; see the verification suite)
TARGET_P_LO, TARGET_P_HI = 0.88, 0.94
TOP3_LO, TOP3_HI = 0.97, 0.99
BARE_P_MAX = 0.5
ACTION_DEV_MAX = 0.02
SIDEBAND_SUP_MAX = 0.05


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12g}"


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class OutputTree:
    """Collects emitted files and their checksums for the manifest."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, dict] = {}

    def write_csv(self, name: str, header: list[str], columns: list) -> Path:
        cols = [np.asarray(c) for c in columns]
        n_rows = len(cols[0])
        lines = [",".join(header)]
        for i in range(n_rows):
            lines.append(",".join(_fmt(col[i]) for col in cols))
        return self._write_text(name, "\n".join(lines) + "\n")

    def write_json(self, name: str, obj: dict, volatile: tuple[str, ...] = ()) -> Path:
        text = json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"
        path = self._write_text(name, text)
        if volatile:
            stable = {k: v for k, v in obj.items() if k not in volatile}
            stable_text = json.dumps(stable, indent=2, sort_keys=True, default=float)
            self.files[name]["sha256"] = hashlib.sha256(stable_text.encode()).hexdigest()
            self.files[name]["volatile_keys_excluded"] = sorted(volatile)
        return path

    def _write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.files[name] = {
            "sha256": hashlib.sha256(data).hexdigest(),
            "bytes": len(data),
        }
        return path

    def write_manifest(self, config: RunConfig, started: str) -> Path:
        manifest = {
            "version": __version__,
            "config": config.as_dict(),
            "started_utc": started,
            "finished_utc": _utcnow(),
            "files": {name: self.files[name] for name in sorted(self.files)},
        }
        text = json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n"
        path = self.root / "manifest.json"
        path.write_bytes(text.encode("utf-8"))
        return path


def _t_tag(t: float) -> str:
    return f"{t:g}"


# --- stage helpers -----------------------------------------------------------


def dump_eigen(
    config: RunConfig, out: OutputTree, t: float, k_count: int, vector_ks: list[int]
) -> EigenSolution:
    spec, params, grid = config.spec(), config.params(), config.grid()
    pot = evaluate_potential(spec, params, grid, t)
    sol = solve_eigenproblem(pot, params, k_count)
    out.write_csv(
        f"eigenvalues_t{_t_tag(t)}.csv",
        ["k", "E"],
        [np.arange(sol.k_count), sol.energies],
    )
    for k in vector_ks:
        out.write_csv(
            f"eigvec_t{_t_tag(t)}_k{k}.csv",
            ["q", "phi"],
            [grid.points, sol.states[k]],
        )
    return sol


def dump_shell(config: RunConfig, out: OutputTree, t: float, e_hint=None):
    spec, params, grid = config.spec(), config.params(), config.grid()
    state = wkb_state(spec, params, grid, t, params.n, e_hint=e_hint)
    shell = state.shell
    period, theta = period_and_angle(shell, grid)
    out.write_csv(
        f"shell_t{_t_tag(t)}.csv",
        ["q", "pbar", "Sigma", "theta"],
        [grid.points, shell.momentum(grid.points), state.sigma, theta],
    )
    out.write_json(
        f"shell_meta_t{_t_tag(t)}.json",
        {
            "E": shell.energy,
            "I": shell.action,
            "T": shell.period,
            "qL": shell.q_left,
            "qR": shell.q_right,
        },
    )
    return shell


def dump_flow_rows(config: RunConfig, out: OutputTree, flow: FlowFields, times) -> None:
    grid = config.grid()
    for t in times:
        out.write_csv(
            f"ff_t{_t_tag(t)}.csv",
            ["q", "v", "a", "UFF"],
            [grid.points, flow.velocity_at(t), flow.acceleration_at(t), flow.potential_at(t)],
        )
    out.write_json(
        "ff_meta.json",
        {
            "extension": flow.extension,
            "eps_cells": flow.eps_cells,
            "eps": flow.eps_cells * grid.dq,
            "gauge": flow.gauge,
            "mesh_times": len(flow.t_mesh),
        },
    )


def solve_snapshots(
    config: RunConfig, snapshot_times: np.ndarray, k_track: int, threads: int = 1
) -> list[EigenSolution]:
    spec, params, grid = config.spec(), config.params(), config.grid()

    def solve_at(t: float) -> EigenSolution:
        pot = evaluate_potential(spec, params, grid, t)
        return solve_eigenproblem(pot, params, k_track)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(solve_at, snapshot_times))
    return [solve_at(t) for t in snapshot_times]


def dump_populations(out: OutputTree, name: str, hist: PopulationHistory) -> None:
    times = np.repeat(hist.times, hist.k_count)
    ks = np.tile(np.arange(hist.k_count), len(hist.times))
    out.write_csv(name, ["t", "k", "p"], [times, ks, hist.values.ravel()])


def dump_frames(out: OutputTree, hist: PopulationHistory) -> None:
    for j, t in enumerate(hist.times):
        out.write_csv(
            f"frame_{j}.csv",
            ["t", "k", "p"],
            [np.full(hist.k_count, t), np.arange(hist.k_count), hist.values[j]],
        )


def dump_psi(out: OutputTree, name: str, psi: Field) -> None:
    out.write_csv(
        name,
        ["q", "re", "im", "abs2"],
        [psi.grid.points, psi.values.real, psi.values.imag, np.abs(psi.values) ** 2],
    )


def dump_trajectories(
    config: RunConfig, out: OutputTree, ens: TrajectoryEnsemble, e_hint=None
) -> None:
    spec, params, grid = config.spec(), config.params(), config.grid()
    energies = ens.energies(spec, params)
    try:
        actions = ensemble_actions(ens, spec, params, grid)
    except NumericalError:
        actions = np.full(ens.size, np.nan)
    try:
        shell = shell_for_level(spec, params, grid, ens.t, params.n, e_hint=e_hint)
        theta = ensemble_angles(ens, shell)
    except NumericalError:
        theta = np.full(ens.size, np.nan)
    out.write_csv(
        f"trajectories_t{_t_tag(ens.t)}.csv",
        ["i", "q", "p", "E", "I", "theta"],
        [np.arange(ens.size), ens.q, ens.p, energies, actions, theta],
    )


def dump_eta(out: OutputTree, eta: AngleDistribution) -> None:
    out.write_csv("eta.csv", ["theta_bin_center", "eta"], [eta.centers, eta.density])


def dump_sidebands(
    out: OutputTree, prediction: SidebandPrediction, comparison: SidebandComparison, n: int
) -> None:
    out.write_csv(
        "sidebands.csv",
        ["k", "l", "w_semiclassical", "p_quantum", "abs_diff"],
        [
            comparison.k,
            comparison.k - n,
            comparison.semiclassical,
            comparison.quantum,
            comparison.abs_diff,
        ],
    )


# --- full pipeline -----------------------------------------------------------


def evaluate_thresholds(summary: dict) -> dict:
    """Pass/fail of each reproduction threshold on a summary dict."""
    return {
        "p17_in_band": TARGET_P_LO <= summary["p17"] <= TARGET_P_HI,
        "top3_in_band": TOP3_LO <= summary["top3"] <= TOP3_HI,
        "bare_below_half": summary["p17_bare"] < BARE_P_MAX,
        "action_dev_small": summary["max_action_dev"] < ACTION_DEV_MAX,
        "sidebands_match": summary["sideband_sup_diff"] < SIDEBAND_SUP_MAX,
    }


class _Stage:
    """Context manager tagging numerical failures with the pipeline stage."""

    def __init__(self, name: str, config: RunConfig):
        self.name = name
        self.config = config

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and issubclass(exc_type, NumericalError):
            raise NumericalError(
                f"[{self.name}] {exc} "
                f"(potential={self.config.potential}, n={self.config.n}, "
                f"grid_points={self.config.grid_points})"
            ) from exc
        return False


@dataclass
class ReproduceResult:
    config: RunConfig
    out_dir: Path
    summary: dict
    thresholds_ok: bool
    flow: FlowFields
    eigensolutions: list[EigenSolution]
    populations_ff: PopulationHistory
    populations_bare: PopulationHistory
    psi_final: Field
    psi_final_bare: Field
    ensemble_history: list[TrajectoryEnsemble]
    eta: AngleDistribution
    prediction: SidebandPrediction
    comparison: SidebandComparison


def reproduce(
    config: RunConfig,
    *,
    out_dir: str | None = None,
    mesh_times: int = 2001,
    snapshots: int = 101,
    k_track: int = 41,
    threads: int = 1,
    n_trajectories: int | None = None,
) -> ReproduceResult:
    """Run the whole pipeline on one configuration and write every output."""
    started = _utcnow()
    t_start = time.perf_counter()
    spec, params, grid = config.spec(), config.params(), config.grid()
    n = params.n
    tau = params.tau
    out = OutputTree(Path(out_dir if out_dir is not None else config.output_dir))
    marker_times = [0.0, tau / 2.0, tau]

    # instantaneous spectra and semiclassical shells at the marker times
    with _Stage("spectral/wkb", config):
        hint = None
        for t in marker_times:
            vecs = [n] if t in (0.0, tau) else []
            dump_eigen(config, out, t, k_track, vecs)
            shell = dump_shell(config, out, t, e_hint=hint)
            hint = shell.energy

    # driving fields
    with _Stage("fastforward", config):
        flow = build_flow_fields(spec, params, grid, n, mesh_times=mesh_times)
        dump_flow_rows(config, out, flow, marker_times)

    # quantum evolution, bare and driven, against a shared eigenbasis table
    with _Stage("evolve-quantum", config):
        snapshot_times = np.linspace(0.0, tau, snapshots)
        eigensolutions = solve_snapshots(config, snapshot_times, k_track, threads=threads)
        psi0 = Field(grid, eigensolutions[0].states[n].astype(complex), 0.0)
        psi_bare, hist_bare = propagate(
            psi0, spec, params, dt=config.dt_quantum,
            snapshot_times=snapshot_times, k_track=k_track, eigensolutions=eigensolutions,
        )
        psi_ff, hist_ff = propagate(
            psi0, spec, params, flow=flow, dt=config.dt_quantum,
            snapshot_times=snapshot_times, k_track=k_track, eigensolutions=eigensolutions,
        )
        dump_populations(out, "populations_bare.csv", hist_bare)
        dump_populations(out, "populations_ff.csv", hist_ff)
        dump_psi(out, "psi_final_bare.csv", psi_bare)
        dump_psi(out, "psi_final.csv", psi_ff)
        dump_frames(out, hist_ff)

    # classical ensemble under the same driving
    with _Stage("evolve-classical", config):
        n_traj = config.n_trajectories if n_trajectories is None else n_trajectories
        shell0 = shell_from_energy(spec, params, grid, 0.0, flow.energies[0])
        ens0 = sample_shell_uniform_angle(shell0, n_traj)
        history = integrate_ensemble(
            ens0, spec, params, grid, flow=flow, dt=config.dt_classical,
            snapshot_times=np.array(marker_times),
        )
        e_hint = None
        for ens in history:
            dump_trajectories(config, out, ens, e_hint=e_hint)
        shell_tau = shell_from_energy(spec, params, grid, tau, flow.energies[-1])
        eta, _offshell = extract_final_angles(
            history[-1], shell_tau, n_bins=config.theta_bins
        )
        dump_eta(out, eta)

    actions = ensemble_actions(history[-1], spec, params, grid)
    target_action = params.hbar * (n + 0.5)
    if np.any(~np.isfinite(actions)):
        max_action_dev = float("inf")
    else:
        max_action_dev = float(np.abs(actions - target_action).max() / target_action)

    # sideband prediction against the driven quantum populations
    prediction = predict_sidebands(eta, n=n)
    comparison = compare(prediction, hist_ff.at_final(), n)
    dump_sidebands(out, prediction, comparison, n)
    window = (comparison.k >= n - 3) & (comparison.k <= n + 3)
    sideband_sup = float(np.abs(comparison.semiclassical - comparison.quantum)[window].max())

    p_final = hist_ff.at_final()
    p_target = float(p_final[n])
    top3 = float(p_final[max(0, n - 1) : n + 2].sum())
    p_target_bare = float(hist_bare.at_final()[n])

    summary = {
        "p17": p_target,
        "top3": top3,
        "p17_bare": p_target_bare,
        "max_action_dev": max_action_dev,
        "sideband_sup_diff": sideband_sup,
        "uff_max": flow.max_drive(),
        "runtime_seconds": time.perf_counter() - t_start,
    }
    checks = evaluate_thresholds(summary)
    summary["checks"] = checks
    thresholds_ok = all(checks.values())
    out.write_json("summary.json", summary, volatile=("runtime_seconds",))
    out.write_manifest(config, started)

    return ReproduceResult(
        config=config, out_dir=out.root, summary=summary, thresholds_ok=thresholds_ok,
        flow=flow, eigensolutions=eigensolutions,
        populations_ff=hist_ff, populations_bare=hist_bare,
        psi_final=psi_ff, psi_final_bare=psi_bare,
        ensemble_history=history, eta=eta,
        prediction=prediction, comparison=comparison,
    )


# --- subcommands -------------------------------------------------------------


def _parse_times(raw: str, tau: float) -> list[float]:
    out = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(float(part))
        except ValueError as exc:
            raise ConfigError(f"bad time value {part!r}") from exc
    return out or [0.0, tau / 2.0, tau]


def cmd_eigen(config: RunConfig, args) -> int:
    out = OutputTree(Path(args.out_dir or config.output_dir))
    vecs = [int(v) for v in args.vectors.split(",") if v.strip()] if args.vectors else []
    sol = dump_eigen(config, out, args.t, args.k, vecs)
    out.write_manifest(config, _utcnow())
    print(f"eigenvalues at t={args.t}: E_0={sol.energies[0]:.6f} ... "
          f"E_{sol.k_count - 1}={sol.energies[-1]:.6f}")
    return 0


def cmd_wkb(config: RunConfig, args) -> int:
    out = OutputTree(Path(args.out_dir or config.output_dir))
    shell = dump_shell(config, out, args.t)
    out.write_manifest(config, _utcnow())
    print(
        f"shell at t={args.t}: E={shell.energy:.6f} I={shell.action:.6f} "
        f"T={shell.period:.6f} q=[{shell.q_left:.4f}, {shell.q_right:.4f}]"
    )
    return 0


def cmd_fastforward(config: RunConfig, args) -> int:
    spec, params, grid = config.spec(), config.params(), config.grid()
    out = OutputTree(Path(args.out_dir or config.output_dir))
    flow = build_flow_fields(spec, params, grid, params.n, mesh_times=args.mesh_times)
    times = _parse_times(args.times, params.tau)
    dump_flow_rows(config, out, flow, times)
    out.write_manifest(config, _utcnow())
    print(f"driving fields built on {args.mesh_times} mesh times; "
          f"max|U_FF| = {flow.max_drive():.4f}")
    return 0


def cmd_evolve_quantum(config: RunConfig, args) -> int:
    spec, params, grid = config.spec(), config.params(), config.grid()
    out = OutputTree(Path(args.out_dir or config.output_dir))
    snapshot_times = np.linspace(0.0, params.tau, args.snapshots)
    eigensolutions = solve_snapshots(config, snapshot_times, args.k, threads=args.threads)
    psi0 = Field(grid, eigensolutions[0].states[params.n].astype(complex), 0.0)
    flow = None
    if args.hamiltonian == "ff":
        flow = build_flow_fields(spec, params, grid, params.n, mesh_times=args.mesh_times)
    psi, hist = propagate(
        psi0, spec, params, flow=flow, dt=config.dt_quantum,
        snapshot_times=snapshot_times, k_track=args.k, eigensolutions=eigensolutions,
    )
    dump_populations(out, f"populations_{args.hamiltonian}.csv", hist)
    dump_psi(out, "psi_final.csv", psi)
    dump_frames(out, hist)
    out.write_manifest(config, _utcnow())
    print(f"{args.hamiltonian} evolution: p_n(tau) = {hist.at_final()[params.n]:.4f}")
    return 0


def cmd_evolve_classical(config: RunConfig, args) -> int:
    spec, params, grid = config.spec(), config.params(), config.grid()
    out = OutputTree(Path(args.out_dir or config.output_dir))
    flow = build_flow_fields(spec, params, grid, params.n, mesh_times=args.mesh_times)
    shell0 = shell_from_energy(spec, params, grid, 0.0, flow.energies[0])
    ens0 = sample_shell_uniform_angle(shell0, config.n_trajectories)
    marker_times = np.array([0.0, params.tau / 2.0, params.tau])
    history = integrate_ensemble(
        ens0, spec, params, grid, flow=flow, dt=config.dt_classical,
        snapshot_times=marker_times,
    )
    for ens in history:
        dump_trajectories(config, out, ens)
    shell_tau = shell_from_energy(spec, params, grid, params.tau, flow.energies[-1])
    eta, diag = extract_final_angles(history[-1], shell_tau, n_bins=config.theta_bins)
    dump_eta(out, eta)
    out.write_manifest(config, _utcnow())
    print(f"classical ensemble: max off-shell residual {diag['max_offshell_residual']:.2%}")
    return 0


def cmd_predict_sidebands(config: RunConfig, args) -> int:
    out_root = Path(args.out_dir or config.output_dir)
    eta_path = out_root / "eta.csv"
    pop_path = out_root / "populations_ff.csv"
    if not eta_path.exists() or not pop_path.exists():
        raise ConfigError(
            f"predict-sidebands needs eta.csv and populations_ff.csv in {out_root}; "
            "run evolve-classical and evolve-quantum first"
        )
    centers, density = np.loadtxt(eta_path, delimiter=",", skiprows=1, unpack=True)
    # bins are uniform on [0, 2 pi) by contract; rebuild exact edges and
    # undo the 12-digit CSV rounding of the densities
    edges = np.linspace(0.0, 2.0 * np.pi, len(centers) + 1)
    density = density / np.sum(density * np.diff(edges))
    eta = AngleDistribution(edges=edges, density=density, n_samples=0)
    rows = np.loadtxt(pop_path, delimiter=",", skiprows=1)
    t_final = rows[:, 0].max()
    final = rows[np.abs(rows[:, 0] - t_final) < 1e-12]
    populations = final[np.argsort(final[:, 1])][:, 2]
    n = config.n
    prediction = predict_sidebands(eta, l_max=args.l_max, n=n)
    comparison = compare(prediction, populations, n)
    out = OutputTree(out_root)
    dump_sidebands(out, prediction, comparison, n)
    print(f"sideband sup discrepancy: {comparison.sup_diff:.4f}")
    return 0


def cmd_reproduce(config: RunConfig, args) -> int:
    result = reproduce(
        config,
        out_dir=args.out_dir,
        mesh_times=args.mesh_times,
        snapshots=args.snapshots,
        threads=args.threads,
    )
    s = result.summary
    print(
        f"p_n(tau) = {s['p17']:.4f}  top3 = {s['top3']:.4f}  "
        f"bare p_n = {s['p17_bare']:.4f}"
    )
    print(
        f"max action deviation = {s['max_action_dev']:.2e}  "
        f"sideband sup diff = {s['sideband_sup_diff']:.4f}  "
        f"max|U_FF| = {s['uff_max']:.2f}"
    )
    if not result.thresholds_ok:
        failing = [k for k, ok in s["checks"].items() if not ok]
        print(f"reproduction thresholds FAILED: {', '.join(failing)}", file=sys.stderr)
        return 1
    print("all reproduction thresholds passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ffdrive",
        description="Fast-forward driving of excited bound states: construction and verification",
    )
    parser.add_argument("--config", help="path to a key = value configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    common_out = dict(help="output directory (default: config output_dir)")

    p = sub.add_parser("eigen", help="instantaneous spectrum of the bare Hamiltonian")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--k", type=int, default=41)
    p.add_argument("--vectors", default="", help="comma-separated k values to dump")
    p.add_argument("--out-dir", **common_out)

    p = sub.add_parser("wkb", help="semiclassical shell data at one time")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--out-dir", **common_out)

    p = sub.add_parser("fastforward", help="build and dump the driving fields")
    p.add_argument("--times", default="", help="comma-separated dump times")
    p.add_argument("--mesh-times", type=int, default=2001)
    p.add_argument("--out-dir", **common_out)

    p = sub.add_parser("evolve-quantum", help="propagate the wavefunction")
    p.add_argument("--hamiltonian", choices=["bare", "ff"], default="ff")
    p.add_argument("--snapshots", type=int, default=101)
    p.add_argument("--k", type=int, default=41)
    p.add_argument("--mesh-times", type=int, default=2001)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", **common_out)

    p = sub.add_parser("evolve-classical", help="integrate the trajectory ensemble")
    p.add_argument("--mesh-times", type=int, default=2001)
    p.add_argument("--out-dir", **common_out)

    p = sub.add_parser("predict-sidebands", help="evaluate the sideband weights")
    p.add_argument("--l-max", type=int, default=6)
    p.add_argument("--out-dir", **common_out)

    p = sub.add_parser("reproduce", help="full pipeline with threshold checks")
    p.add_argument("--mesh-times", type=int, default=2001)
    p.add_argument("--snapshots", type=int, default=101)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", **common_out)

    return parser


_DISPATCH = {
    "eigen": cmd_eigen,
    "wkb": cmd_wkb,
    "fastforward": cmd_fastforward,
    "evolve-quantum": cmd_evolve_quantum,
    "evolve-classical": cmd_evolve_classical,
    "predict-sidebands": cmd_predict_sidebands,
    "reproduce": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        return _DISPATCH[args.command](config, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
