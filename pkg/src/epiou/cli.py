"""Command-line front end: simulate models, fit estimators, scan posterior
grids, run SMC-ABC, and emit plot-ready CSV files.

All randomness flows from a single root seed; subcommands derive child seeds
deterministically, so a config plus seed reproduces every output byte for
byte.  Exit codes: 0 success, 1 I/O error, 2 config/validation error,
3 degraded result (e.g. ABC stopped early).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .censored import pseudo_loglik, singular_curve_in_sis_plane, threshold_series
from .epi import (
    SiseParams,
    SisParams,
    ou_to_sis,
    simulate_ctmc_sis,
    simulate_ctmc_sise,
    sis_to_canonical,
    var_r0_asymptotic,
)
from .estimators import PosteriorGrid, bvm_covariance, lsq_fit
from .filters import kalman_loglik, particle_kalman_binary_loglik
from .network import synthetic_network, simulate_network
from .ou import CanonicalParams, OuParams, sample_exact
from .seeds import derived_seed
from .smcabc import (
    AbcPopulation,
    network_simulator,
    qcd_concentration,
    smc_abc,
    summary_of,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DEGRADED = 3


class ConfigError(Exception):
    pass


def _check_keys(config: dict, allowed: set[str], where: str):
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        payload = io.read_json(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    return payload


def _require(config: dict, key: str):
    if config.get(key) is None:
        raise ConfigError(f"missing required setting '{key}'")
    return config[key]


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, seed, config: dict, outputs: list[str]):
    io.write_json(
        out / "manifest.json",
        {"command": command, "seed": seed, "config": config, "outputs": sorted(outputs)},
    )


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file; flags override its entries")
    sub.add_argument("--seed", type=int, help="root seed (all child streams derive from it)")
    sub.add_argument("--out", help="output directory (default: current)")
    sub.add_argument("--threads", type=int, default=1, help="reserved; library code is deterministic")


# -- simulate ---------------------------------------------------------------

_SIMULATE_KEYS = {
    "model", "seed", "k", "mu", "sigma", "x0", "h", "n",
    "r0", "gamma", "rho", "i0", "phi0", "tend", "events",
}


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, _SIMULATE_KEYS, "simulate config")
    for key in _SIMULATE_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and not (key == "events" and flag is False):
            config[key] = flag
    model = _require(config, "model")
    seed = int(config.get("seed", 0))
    out = _out_dir(args)
    outputs = []
    h = float(config.get("h", 1.0))
    if model == "ou":
        p = OuParams(k=float(_require(config, "k")), mu=float(_require(config, "mu")),
                     sigma=float(_require(config, "sigma")))
        traj = sample_exact(p, x0=float(config.get("x0", p.stationary_mean)), h=h,
                            n=int(_require(config, "n")), seed=derived_seed(seed, 0))
        io.write_trajectory(out / "trajectory.csv", traj,
                            metadata={"model": "ou", "k": p.k, "mu": p.mu, "sigma": p.sigma})
        outputs += ["trajectory.csv", "trajectory.json"]
    elif model in ("sis", "sise"):
        tend = float(_require(config, "tend"))
        gamma = float(_require(config, "gamma"))
        r0 = float(_require(config, "r0"))
        sigma_pop = float(_require(config, "sigma"))
        if model == "sis":
            p = SisParams(beta_tx=r0 * gamma, gamma_rec=gamma, sigma_pop=sigma_pop)
            i0 = int(config.get("i0", max(1, round(0.01 * sigma_pop))))
            path = simulate_ctmc_sis(p, i0=i0, t_end=tend, seed=derived_seed(seed, 0))
            meta = {"model": "sis", "r0": r0, "gamma_rec": gamma, "sigma_pop": sigma_pop, "i0": i0}
        else:
            rho = float(_require(config, "rho"))
            beta = r0 * r0 * gamma * rho  # R0 = sqrt(beta/(gamma*rho))
            p = SiseParams(beta_tx=beta, gamma_rec=gamma, rho=rho, sigma_pop=sigma_pop)
            i0 = int(config.get("i0", max(1, round(0.01 * sigma_pop))))
            phi0 = float(config.get("phi0", 0.0))
            path = simulate_ctmc_sise(p, i0=i0, phi0=phi0, t_end=tend, seed=derived_seed(seed, 0))
            meta = {"model": "sise", "r0": r0, "gamma_rec": gamma, "rho": rho,
                    "sigma_pop": sigma_pop, "i0": i0, "phi0": phi0}
        traj = path.sample(h)
        io.write_trajectory(out / "trajectory.csv", traj, metadata=meta)
        outputs += ["trajectory.csv", "trajectory.json"]
        if config.get("events"):
            io.write_event_path(out / "events.csv", path, metadata=meta)
            outputs += ["events.csv", "events.json"]
    else:
        raise ConfigError(f"unknown model '{model}'")
    _write_manifest(out, "simulate", seed, config, outputs + ["manifest.json"])
    return EXIT_OK


# -- fit --------------------------------------------------------------------

_FIT_KEYS = {"input", "map", "h", "seed"}


def _cmd_fit(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, _FIT_KEYS, "fit config")
    if args.input is not None:
        config["input"] = args.input
    if args.map is not None:
        config["map"] = args.map
    path = Path(_require(config, "input"))
    if not path.exists():
        print(f"error: cannot read input file {path}", file=sys.stderr)
        return EXIT_IO
    traj, _meta = io.read_trajectory(path)
    est = lsq_fit(traj)
    report = {
        "n": est.n,
        "alpha_hat": est.alpha_hat,
        "beta_hat": est.beta_hat,
        "gamma_hat": est.gamma_hat,
        "residual_ss": est.residual_ss,
    }
    if 0.0 < est.beta_hat < 1.0 and math.isfinite(est.gamma_hat) and est.gamma_hat > 0:
        u_hat = CanonicalParams(est.alpha_hat, est.beta_hat, est.gamma_hat, traj.h)
        va, vb, vg = bvm_covariance(u_hat, est.n)
        report["sd_alpha"] = math.sqrt(va)
        report["sd_beta"] = math.sqrt(vb)
        report["sd_gamma"] = math.sqrt(vg)
        if config.get("map") == "sis":
            sis = ou_to_sis(u_hat)
            report["sis"] = {
                "r0": sis.r0,
                "gamma_rec": sis.gamma_rec,
                "sigma_pop": sis.sigma_pop,
                "sd_r0": math.sqrt(var_r0_asymptotic(sis, traj.h, est.n)),
            }
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    print()
    if args.out:
        out = _out_dir(args)
        io.write_json(out / "fit_report.json", report)
        _write_manifest(out, "fit", config.get("seed"), config, ["fit_report.json", "manifest.json"])
    return EXIT_OK


# -- grid -------------------------------------------------------------------

_GRID_KEYS = {
    "kind", "data", "axis1", "axis2", "sigma_pop", "gamma_rec", "beta",
    "threshold", "dt", "particles", "p", "singular_overlay", "truth", "seed",
}
_AXIS_KEYS = {"name", "min", "max", "num"}


def _axis(config: dict, key: str) -> tuple[str, np.ndarray]:
    spec = _require(config, key)
    _check_keys(spec, _AXIS_KEYS, key)
    num = int(_require(spec, "num"))
    if num < 1 or float(spec["max"]) < float(spec["min"]):
        raise ConfigError(f"{key}: empty grid")
    return str(_require(spec, "name")), np.linspace(float(spec["min"]), float(spec["max"]), num)


def _grid_fullstate(config, traj):
    name1, ax1 = _axis(config, "axis1")
    name2, ax2 = _axis(config, "axis2")
    sigma_pop = float(_require(config, "sigma_pop"))
    dt = config.get("dt")
    logd = np.empty((ax1.size, ax2.size))
    for i, r0 in enumerate(ax1):
        for j, g in enumerate(ax2):
            try:
                p = SisParams(beta_tx=r0 * g, gamma_rec=g, sigma_pop=sigma_pop)
                logd[i, j] = kalman_loglik(p, traj, dt=float(dt) if dt else None)
            except ValueError:
                logd[i, j] = -math.inf
    return PosteriorGrid(name1, ax1, name2, ax2, logd)


def _grid_binary(config, series):
    name1, ax1 = _axis(config, "axis1")  # r0
    name2, ax2 = _axis(config, "axis2")  # sigma_pop
    gamma_rec = float(_require(config, "gamma_rec"))
    c = float(_require(config, "threshold"))
    m = int(config.get("particles", 100))
    dt = config.get("dt")
    logd = np.empty((ax1.size, ax2.size))
    for i, r0 in enumerate(ax1):
        for j, sig in enumerate(ax2):
            try:
                p = SisParams(beta_tx=r0 * gamma_rec, gamma_rec=gamma_rec, sigma_pop=sig)
                logd[i, j] = particle_kalman_binary_loglik(
                    p, series, c=c, m=m, dt=float(dt) if dt else None
                )
            except ValueError:
                logd[i, j] = -math.inf
    return PosteriorGrid(name1, ax1, name2, ax2, logd)


def _grid_pseudo(config, series):
    name1, ax1 = _axis(config, "axis1")  # alpha
    name2, ax2 = _axis(config, "axis2")  # gamma
    beta = float(_require(config, "beta"))
    p_order = int(config.get("p", 1))
    logd = np.empty((ax1.size, ax2.size))
    for i, a in enumerate(ax1):
        for j, g in enumerate(ax2):
            try:
                u = CanonicalParams(alpha=a, beta=beta, gamma=g, h=series.h)
                logd[i, j] = pseudo_loglik(u, series, p_order)
            except ValueError:
                logd[i, j] = -math.inf
    return PosteriorGrid(name1, ax1, name2, ax2, logd)


def _cmd_grid(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, _GRID_KEYS, "grid config")
    kind = _require(config, "kind")
    data_path = Path(_require(config, "data"))
    if not data_path.exists():
        print(f"error: cannot read data file {data_path}", file=sys.stderr)
        return EXIT_IO
    out = _out_dir(args)
    outputs = []
    series = None
    if kind == "fullstate":
        traj, _ = io.read_trajectory(data_path)
        grid = _grid_fullstate(config, traj)
    elif kind == "binary":
        series, _ = io.read_binary_series(data_path)
        grid = _grid_binary(config, series)
    elif kind == "pseudo":
        series, _ = io.read_binary_series(data_path)
        grid = _grid_pseudo(config, series)
    else:
        raise ConfigError(f"unknown grid kind '{kind}'")
    io.write_grid(out / "grid.csv", grid, metadata={"kind": kind})
    outputs += ["grid.csv", "grid.json"]
    for axis in (1, 2):
        vals, masses = grid.marginal(axis)
        name = grid.axis1_name if axis == 1 else grid.axis2_name
        io.write_marginal(out / f"marginal_{name}.csv", vals, masses, name)
        outputs.append(f"marginal_{name}.csv")
    if config.get("singular_overlay"):
        if kind != "binary":
            raise ConfigError("singular_overlay requires the binary grid kind")
        truth = _require(config, "truth")
        _check_keys(truth, {"r0", "sigma_pop", "gamma_rec"}, "truth")
        p_true = SisParams(
            beta_tx=float(truth["r0"]) * float(truth["gamma_rec"]),
            gamma_rec=float(truth["gamma_rec"]),
            sigma_pop=float(truth["sigma_pop"]),
        )
        u0 = sis_to_canonical(p_true, h=series.h)
        curve = singular_curve_in_sis_plane(
            u0, float(_require(config, "threshold")), float(_require(config, "gamma_rec")),
            series.h, grid.axis1,
        )
        with (out / "singular_curve.csv").open("w") as fh:
            fh.write("r0,sigma_pop\n")
            for r0, sig in curve:
                fh.write(f"{r0!r},{sig!r}\n")
        outputs.append("singular_curve.csv")
    _write_manifest(out, "grid", config.get("seed"), config, outputs + ["manifest.json"])
    return EXIT_OK


# -- abc --------------------------------------------------------------------

_ABC_KEYS = {
    "kind", "network", "truth", "priors", "n_particles", "n_generations",
    "eps0", "rate", "acceptance_floor", "t_end", "observed", "seed",
}
_NETWORK_KEYS = {
    "n_nodes", "median_population", "population_sigma", "movement_rate",
    "movement_size_mean", "n_sentinels", "sample_period", "threshold_c",
    "init_prevalence",
}


def _cmd_abc(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, _ABC_KEYS, "abc config")
    kind = config.get("kind", "sis")
    if kind not in ("sis", "sise"):
        raise ConfigError(f"unknown abc kind '{kind}'")
    seed = int(config.get("seed", args.seed if args.seed is not None else 0))
    if args.seed is not None:
        seed = args.seed
    t_end = float(_require(config, "t_end"))
    net_cfg = dict(_require(config, "network"))
    _check_keys(net_cfg, _NETWORK_KEYS, "network config")
    truth_cfg = dict(_require(config, "truth"))
    allowed_truth = {"beta_tx", "gamma_rec"} | ({"rho"} if kind == "sise" else set())
    _check_keys(truth_cfg, allowed_truth, "truth config")
    total_pop_guess = net_cfg.get("n_nodes", 50) * net_cfg.get("median_population", 120.0)
    if kind == "sis":
        dynamics = SisParams(truth_cfg["beta_tx"], truth_cfg["gamma_rec"], total_pop_guess)
        param_names = ["beta_tx", "gamma_rec"]
    else:
        dynamics = SiseParams(
            truth_cfg["beta_tx"], truth_cfg["gamma_rec"], truth_cfg["rho"], total_pop_guess
        )
        param_names = ["beta_tx", "gamma_rec", "rho"]
    model = synthetic_network(
        n_nodes=int(net_cfg.get("n_nodes", 50)),
        t_end=t_end,
        seed=derived_seed(seed, 1),
        dynamics=dynamics,
        **{k: v for k, v in net_cfg.items() if k != "n_nodes"},
    )
    simulator = network_simulator(model, t_end, kind=kind)
    if args.self_data:
        truth_theta = np.array([truth_cfg[k] for k in param_names])
        observed = simulator(truth_theta, derived_seed(seed, 2))
        if observed is None:
            print("error: the self-data simulation is degenerate", file=sys.stderr)
            return EXIT_CONFIG
    elif config.get("observed") is not None:
        observed = np.asarray(config["observed"], dtype=float)
    else:
        raise ConfigError("provide 'observed' stats or pass --self-data")
    priors = _require(config, "priors")
    resume = None
    if args.resume:
        particles, weights, distances, meta = io.read_abc_generation(args.resume)
        resume = AbcPopulation(
            generation=int(meta.get("generation", 1)),
            epsilon=float(meta.get("epsilon", math.inf)),
            particles=particles,
            weights=weights,
            distances=distances,
            n_attempts=0,
        )
    result = smc_abc(
        simulator,
        prior_bounds=priors,
        observed=observed,
        n_particles=int(config.get("n_particles", 200)),
        n_generations=int(config.get("n_generations", 8)),
        seed=derived_seed(seed, 3),
        eps0=float(config.get("eps0", 100.0)),
        rate=float(config.get("rate", 0.25)),
        acceptance_floor=float(config.get("acceptance_floor", 1e-4)),
        resume_from=resume,
    )
    out = _out_dir(args)
    outputs = []
    log_lines = []
    for pop in result.populations:
        name = f"generation_{pop.generation:02d}.csv"
        io.write_abc_generation(out / name, pop, param_names)
        outputs += [name, name.replace(".csv", ".json")]
        log_lines.append(
            f"generation {pop.generation}: eps={pop.epsilon:.4f} "
            f"accepted={pop.particles.shape[0]} attempts={pop.n_attempts} "
            f"rate={pop.acceptance_rate:.4f}"
        )
    (out / "acceptance.log").write_text("\n".join(log_lines) + ("\n" if log_lines else ""))
    outputs.append("acceptance.log")
    if result.populations and result.populations[-1].particles.shape[0] >= 20:
        final = result.populations[-1]
        rng = np.random.default_rng(derived_seed(seed, 4))
        bounds = np.asarray(priors, dtype=float)
        prior_draws = bounds[:, 0] + (bounds[:, 1] - bounds[:, 0]) * rng.random((20_000, bounds.shape[0]))
        report = {}
        for j, name in enumerate(param_names):
            report[name] = qcd_concentration(
                prior_draws[:, j], final.particles[:, j], posterior_weights=final.weights
            )
        if kind == "sis":
            prior_r0 = prior_draws[:, 0] / prior_draws[:, 1]
            post_r0 = final.particles[:, 0] / final.particles[:, 1]
        else:
            prior_r0 = np.sqrt(prior_draws[:, 0] / (prior_draws[:, 1] * prior_draws[:, 2]))
            post_r0 = np.sqrt(
                final.particles[:, 0] / (final.particles[:, 1] * final.particles[:, 2])
            )
        report["r0"] = qcd_concentration(prior_r0, post_r0, posterior_weights=final.weights)
        io.write_json(out / "qcd_report.json", report)
        outputs.append("qcd_report.json")
    _write_manifest(out, "abc", seed, config, outputs + ["manifest.json"])
    if not result.completed:
        print(f"warning: {result.message}; partial results written", file=sys.stderr)
        return EXIT_DEGRADED
    return EXIT_OK


# -- selftest ----------------------------------------------------------------

def _cmd_selftest(_args) -> int:
    from .selftest import run_all

    return EXIT_OK if run_all() else EXIT_IO


# -- parser -----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epiou", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate OU or epidemic models")
    _add_common(sim)
    sim.add_argument("--model", choices=["ou", "sis", "sise"])
    sim.add_argument("--k", type=float)
    sim.add_argument("--mu", type=float)
    sim.add_argument("--sigma", type=float, help="OU diffusion amplitude or epidemic population")
    sim.add_argument("--x0", type=float)
    sim.add_argument("--h", type=float, help="sampling step")
    sim.add_argument("--n", type=int, help="number of steps (OU)")
    sim.add_argument("--r0", type=float)
    sim.add_argument("--gamma", type=float, help="recovery rate")
    sim.add_argument("--rho", type=float, help="pressure decay rate (SIS_E)")
    sim.add_argument("--i0", type=int)
    sim.add_argument("--phi0", type=float)
    sim.add_argument("--tend", type=float)
    sim.add_argument("--events", action="store_true", help="also write the raw event path")
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="least-squares fit of a trajectory")
    _add_common(fit)
    fit.add_argument("--input", help="trajectory CSV")
    fit.add_argument("--map", choices=["sis"], help="also report mapped SIS parameters")
    fit.set_defaults(func=_cmd_fit)

    grid = sub.add_parser("grid", help="posterior grid scans")
    _add_common(grid)
    grid.set_defaults(func=_cmd_grid)

    abc = sub.add_parser("abc", help="SMC-ABC on a synthetic network")
    _add_common(abc)
    abc.add_argument("--self-data", action="store_true", help="generate observed stats from the truth")
    abc.add_argument("--resume", help="generation CSV to resume from")
    abc.set_defaults(func=_cmd_abc)

    self_p = sub.add_parser("selftest", help="deterministic property suite")
    _add_common(self_p)
    self_p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
