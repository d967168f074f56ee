"""Command-line interface: ``optobae <subcommand> [--config PATH] [--out DIR] ...``.

Configuration files are YAML or JSON (JSON is valid YAML).  Schema, version 1::

    schema_version: 1
    params:                   # SystemParams; rates in one angular-frequency unit
      gamma: 1.0
      gamma_m: 1.0e-3
      omega_m: 100.0
      K0: 1.0                 # pump parameter at Ω = 0 (or give eta_c0)
      delta_plus: 0.0         # or capital_delta / small_delta
      delta_minus: 0.0
      n_T: 0.0
      hierarchy_factor: 10
    pulse: {f_s0: 0.0, tau: 200.0, psi_f: 0.0}
    grid: {min: 1.0e-4, max: 10.0, points: 50, spacing: log}
    pump: {K: [0.1, 1.0, 10.0]}          # spectrum: K values (or "sql" for the AM-GM point)
    sweep: {K: {min: 1.0e-8, max: 1.0e2, points: 41},
            capital_delta: [1.0e-3], small_delta: [1.0e-4], omega: [0.0]}
    montecarlo: {dt: 0.05, segment_length: 32768, segments: 400,
                 trials: 200, bands: [[0.01, 0.03], [0.1, 0.3]]}
    thermal: "2n+1"           # detuned-spectrum thermal prefactor
    plot: false               # write SVG overlays (needs matplotlib)

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed ``--check``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analytics, estimator, structure, timedomain
from .freq_solver import SolverError, output_psd
from .model import ParameterError, SignalPulse, SystemParams, pump_parameter

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "params": {"gamma": 1.0, "gamma_m": 1e-3, "omega_m": 100.0, "K0": 1.0,
               "delta_plus": 0.0, "delta_minus": 0.0, "n_T": 0.0, "hierarchy_factor": 10.0},
    "pulse": None,
    "grid": {"min": 1e-4, "max": 10.0, "points": 50, "spacing": "log"},
    "pump": {"K": ["sql", 0.1, 1.0, 10.0]},
    "sweep": {"K": {"min": 1e-8, "max": 1e2, "points": 41},
              "capital_delta": [1e-4, 1e-3], "small_delta": [1e-5], "omega": [0.0]},
    "montecarlo": {"dt": 0.05, "segment_length": 32768, "segments": 400, "trials": 200,
                   "bands": [[0.01, 0.03], [0.03, 0.1], [0.1, 0.3], [0.3, 1.0]]},
    "thermal": "2n+1",
    "plot": False,
}

_TOP_KEYS = set(DEFAULT_CONFIG) | {"seed"}
_PARAM_KEYS = {"gamma", "gamma_m", "omega_m", "eta_c0", "K0", "delta_plus", "delta_minus",
               "capital_delta", "small_delta", "n_T", "hierarchy_factor"}


class ConfigError(ValueError):
    pass


class CheckFailure(RuntimeError):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version {version!r} not supported (expected {SCHEMA_VERSION})")
    unknown = set(raw.get("params") or {}) - _PARAM_KEYS
    if unknown:
        raise ConfigError(f"unknown keys under params: {sorted(unknown)}")
    cfg = _merge(DEFAULT_CONFIG, raw)
    if "eta_c0" in (raw.get("params") or {}):
        cfg["params"].pop("K0", None)
    return cfg


def build_params(cfg: dict) -> SystemParams:
    p = dict(cfg["params"])
    K0 = p.pop("K0", None)
    big, small = p.pop("capital_delta", None), p.pop("small_delta", None)
    try:
        params = SystemParams(**{k: float(v) for k, v in p.items()})
        if big is not None or small is not None:
            params = params.with_detunings(float(big or 0.0), float(small or 0.0))
        if K0 is not None:
            params = params.with_pump(float(K0), 0.0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params: {exc}") from exc
    return params


def build_pulse(cfg: dict) -> SignalPulse | None:
    if not cfg.get("pulse"):
        return None
    try:
        return SignalPulse(**{k: float(v) for k, v in cfg["pulse"].items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"pulse: {exc}") from exc


def build_grid(cfg: dict) -> np.ndarray:
    g = cfg["grid"]
    try:
        lo, hi, n = float(g["min"]), float(g["max"]), int(g["points"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    if n < 2:
        raise ConfigError("grid: need at least 2 points")
    spacing = g.get("spacing", "log")
    if spacing == "log":
        if lo <= 0:
            raise ConfigError("grid: log spacing needs min > 0")
        return np.logspace(math.log10(lo), math.log10(hi), n)
    if spacing == "linear":
        return np.linspace(lo, hi, n)
    raise ConfigError(f"grid: unknown spacing {spacing!r}")


# ------------------------------------------------------------------- outputs

def _write_csv(path: Path, header: list[str], rows, comment: str) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _provenance(cfg, seed=None):
    return {"config": cfg, "version": __version__, "seed": seed,
            "conventions": {"psd": "single-sided", "frame": "rotating",
                            "fourier": "x(t) = int x(Omega) exp(-i Omega t) dOmega/2pi",
                            "thermal": cfg.get("thermal", "2n+1")}}


# ------------------------------------------------------------------- commands

def _resolve_K(value, params, omega):
    if value == "sql":
        return math.sqrt(params.gamma_m**2 + omega**2)
    return float(value)


def cmd_spectrum(cfg, out: Path, seed=None, check=False) -> list[Path]:
    params = build_params(cfg)
    grid = build_grid(cfg)
    thermal = cfg.get("thermal", "2n+1")
    rows, failures = [], []
    for Kspec in cfg["pump"]["K"]:
        for w in grid:
            K = _resolve_K(Kspec, params, w)
            q = params.with_pump(K, w)
            s_raw = float(analytics.sql_spectrum_raw(q, w, K))
            s_sql = float(analytics.thermal_term(q) + analytics.sql_bound(q, w))
            s_bae = float(analytics.bae_spectrum(q, w, K))
            s_det = float(analytics.detuned_spectrum(q, w, K, thermal))
            solver_raw = float(estimator.force_referred_psd(q, w, estimator.raw_weights(w)))
            solver_bae = float(estimator.detuned_combination_psd(q, w))
            rows.append([str(Kspec), w, K, s_raw, s_sql, s_bae, s_det, solver_raw, solver_bae])
            if check and not s_bae < s_raw:
                failures.append(f"S_BAE >= S_raw at Omega={w}, K={K}")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "spectrum.csv"
    _write_csv(csv_path, ["K_spec", "Omega", "K", "S_raw", "S_SQL", "S_BAE", "S_detuned",
                          "solver_raw", "solver_bae"], rows,
               "force-referred single-sided PSDs, rotating frame")
    meta = out / "spectrum.json"
    _write_json(meta, _provenance(cfg, seed))
    paths = [csv_path, meta]
    if cfg.get("plot"):
        paths.append(_plot_spectrum(rows, out / "spectrum.svg"))
    if failures:
        raise CheckFailure("; ".join(failures[:5]))
    return paths


def _plot_spectrum(rows, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for kspec in dict.fromkeys(r[0] for r in rows):
        sel = [r for r in rows if r[0] == kspec]
        w = [r[1] for r in sel]
        ax.loglog(w, [r[3] for r in sel], label=f"raw K={kspec}")
        ax.loglog(w, [r[5] for r in sel], "--", label=f"BAE K={kspec}")
    ax.set_xlabel("Omega")
    ax.set_ylabel("S_f")
    ax.legend(fontsize=6)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def cmd_sweep(cfg, out: Path, seed=None, check=False) -> list[Path]:
    params = build_params(cfg)
    sw = cfg["sweep"]
    thermal = cfg.get("thermal", "2n+1")
    kspec = sw["K"]
    Ks = np.logspace(math.log10(kspec["min"]), math.log10(kspec["max"]), int(kspec["points"]))
    curve, optima = [], []
    for big in sw["capital_delta"]:
        for small in sw["small_delta"]:
            try:
                q = params.with_detunings(float(big), float(small))
            except ParameterError as exc:
                raise ConfigError(f"sweep: {exc}") from exc
            for w in sw.get("omega", [0.0]):
                w = float(w)
                S = analytics.detuned_spectrum(q, w, Ks, thermal)
                for K, s in zip(Ks, S):
                    reg = analytics.regime_classify(q, w, K)
                    curve.append([big, small, w, K, float(s), reg.regime.value, reg.k_crit1, reg.k_crit2])
                opt = analytics.optimal_pump(q, w, thermal)
                optima.append([big, small, w, opt.K_opt if opt.bounded else "unbounded", opt.S_min,
                               opt.regime.value if opt.regime else "monotone"])
    out.mkdir(parents=True, exist_ok=True)
    p1, p2 = out / "sweep.csv", out / "sweep_optima.csv"
    _write_csv(p1, ["capital_delta", "small_delta", "Omega", "K", "S", "regime", "K_crit1", "K_crit2"],
               curve, "detuned force-referred PSD over pump power")
    _write_csv(p2, ["capital_delta", "small_delta", "Omega", "K_opt", "S_min", "regime"], optima,
               "numerically optimal pump per detuning pair")
    meta = out / "sweep.json"
    _write_json(meta, _provenance(cfg, seed))
    return [p1, p2, meta]


def cmd_regimes(cfg, out: Path, seed=None, check=False) -> list[Path]:
    params = build_params(cfg)
    thermal = cfg.get("thermal", "2n+1")
    report = []
    for big in cfg["sweep"]["capital_delta"]:
        for small in cfg["sweep"]["small_delta"]:
            q = params.with_detunings(float(big), float(small))
            for w in cfg["sweep"].get("omega", [0.0]):
                k1, k2 = analytics.critical_pumps(q, float(w))
                opt = analytics.optimal_pump(q, float(w), thermal)
                report.append({
                    "capital_delta": big, "small_delta": small, "Omega": w,
                    "K_crit1": k1, "K_crit2": k2,
                    "K_opt": opt.K_opt if opt.bounded else None, "S_min": opt.S_min,
                    "regime": opt.regime.value if opt.regime else "monotone",
                    "closed_forms": {k: {"K": v[0], "S": v[1]} for k, v in opt.closed_forms.items()},
                })
    out.mkdir(parents=True, exist_ok=True)
    path = out / "regimes.json"
    _write_json(path, {**_provenance(cfg, seed), "regimes": report})
    return [path]


def cmd_montecarlo(cfg, out: Path, seed=None, check=False) -> list[Path]:
    if seed is None:
        raise ConfigError("montecarlo needs a seed (--seed N or 'seed' in the config)")
    params = build_params(cfg)
    mc = cfg["montecarlo"]
    dt, L, nseg = float(mc["dt"]), int(mc["segment_length"]), int(mc["segments"])

    def bae(om):
        return estimator.bae_weights(params, om).output_vector()

    channels = {"beta_a_plus": 0, "beta_a_minus": 1, "bae": bae}
    refs = {
        "beta_a_plus": lambda om: output_psd(params, om, which=0),
        "beta_a_minus": lambda om: output_psd(params, om, which=1),
        "bae": lambda om: output_psd(params, om, combination=bae(om)),
    }
    est = timedomain.simulate_psd(params, channels, L, nseg, dt, seed)
    out.mkdir(parents=True, exist_ok=True)
    rows, zs = [], []
    for name, e in est.items():
        for lo, hi in mc["bands"]:
            m, sem = e.band_average(lo, hi, reference=refs[name])
            z = (m - 1.0) / sem
            zs.append(abs(z))
            rows.append([name, lo, hi, m, sem, z])
    table = out / "montecarlo_bands.csv"
    _write_csv(table, ["channel", "band_lo", "band_hi", "ratio_to_analytic", "sem", "z"], rows,
               f"band-averaged simulated/analytic PSD ratio, {nseg} segments")
    psd_path = out / "montecarlo_psd.csv"
    freqs = est["bae"].frequencies
    keep = (freqs > 0) & (freqs <= 10.0)
    _write_csv(psd_path, ["Omega"] + list(est), (
        [freqs[i]] + [est[n].values[i] for n in est] for i in np.flatnonzero(keep)),
        "single-sided PSD estimates, rotating frame")
    summary = {**_provenance(cfg, seed), "max_abs_z": max(zs)}
    pulse = build_pulse(cfg)
    if pulse is not None:
        res = timedomain.run_detection_experiment(
            params, pulse, bae, int(mc["trials"]), seed, dt=dt)
        summary["detection"] = {"snr": res.snr, "detection_rate": res.detection_rate,
                                "threshold": res.threshold, "mean_estimate": float(res.estimates.mean())}
    meta = out / "montecarlo.json"
    _write_json(meta, summary)
    if check and max(zs) >= 3.0:
        raise CheckFailure(f"band z-score {max(zs):.2f} >= 3")
    return [table, psd_path, meta]


def cmd_stability(cfg, out: Path, seed=None, check=False) -> list[Path]:
    params = build_params(cfg)
    rep = structure.stability_eigenvalues(params)
    sym = structure.symplectic_check(params)
    expected = np.array([-params.gamma, -params.gamma, -params.gamma_m])
    deviation = float(np.max(np.abs(np.sort(rep.eigenvalues.real) - np.sort(expected))))
    payload = {**_provenance(cfg, seed),
               "eigenvalues": [{"re": z.real, "im": z.imag} for z in rep.eigenvalues],
               "stable": rep.stable, "real_part_deviation": deviation,
               "symplectic_defect": sym.defect}
    out.mkdir(parents=True, exist_ok=True)
    path = out / "stability.json"
    _write_json(path, payload)
    if check and (deviation > 1e-12 * params.gamma or not rep.stable):
        raise CheckFailure(f"eigenvalue real parts deviate by {deviation:g}")
    return [path]


def cmd_qmfs(cfg, out: Path, seed=None, check=False) -> list[Path]:
    params = build_params(cfg)
    g = math.sqrt(2.0) * params.eta_c0
    if g <= 0:
        raise ConfigError("qmfs-check needs a nonzero pump")
    rng = np.random.default_rng(0 if seed is None else seed)
    init = rng.standard_normal(6)
    cmp = structure.qmfs_evolve(g, init, np.linspace(0.0, 10.0 / g, 201))
    sym = structure.symplectic_check(params)
    payload = {**_provenance(cfg, seed), "g": g, "initial": init,
               "max_relative_error": cmp.max_relative_error, "constant_drift": cmp.constant_drift,
               "symplectic_defect": sym.defect,
               "hamiltonian_mismatch": sym.hamiltonian_mismatch,
               "hamiltonian_mismatch_after_quarter_turn": sym.hamiltonian_mismatch_rotated}
    out.mkdir(parents=True, exist_ok=True)
    path = out / "qmfs.json"
    _write_json(path, payload)
    if check and (cmp.constant_drift > 1e-10 or sym.defect > 1e-10 or cmp.max_relative_error > 1e-9):
        raise CheckFailure("QMFS check failed")
    return [path]


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "montecarlo": cmd_montecarlo,
    "stability": cmd_stability,
    "qmfs-check": cmd_qmfs,
    "regimes": cmd_regimes,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optobae", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="YAML/JSON configuration file")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, help="RNG seed (required for montecarlo)")
    ap.add_argument("--check", action="store_true", help="exit 4 if built-in checks fail")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed")
        cfg["seed"] = seed
        paths = COMMANDS[args.command](cfg, args.out, seed=seed, check=args.check)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 4
    except (SolverError, analytics.OptimizationError, timedomain.InstabilityError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
