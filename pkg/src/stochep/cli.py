"""``ep-sim``: configuration-driven experiments.

Exit status 0 when the experiment's built-in checks pass, 1 when a check
fails, 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

try:
    import tomllib
except ModuleNotFoundError:   # Python < 3.11
    import tomli as tomllib

from . import __version__, flow, mhd, systems
from . import spectral as sp
from .group_sde import EnsembleSpec, advected_mean, criticality_check, drift_estimate, simulate_group_sde
from .lie import ContractError
from .reduced import EPVariant, integrate_advection

EXPERIMENTS = ("reduced", "ensemble", "criticality", "mhd", "incompressible", "flow-oracle")


class _Base(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0, lt=2 ** 64)


class VariantConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    chirality: Literal["left", "right"] = "left"
    connection_correction: bool = True

    def build(self):
        return EPVariant(self.chirality, self.connection_correction)


class ReducedConfig(_Base):
    experiment: Literal["reduced"]
    preset: Literal["rigid-body", "heavy-top"] = "heavy-top"
    variant: VariantConfig = VariantConfig()
    sigma1: float = Field(0.2, ge=0)
    sigma2: float = Field(0.2, ge=0)
    tilted_noise: bool = False
    t_final: float = Field(2.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    n_directions: int = Field(20, ge=1)
    residual_tol: float = Field(1e-4, gt=0)


class EnsembleConfig(_Base):
    experiment: Literal["ensemble"]
    preset: Literal["so3-advected"] = "so3-advected"
    chirality: Literal["left", "right"] = "left"
    sigma2: float = Field(0.3, ge=0)
    alpha0: list[float] = [1.0, 0.5, -0.3]
    n_traj: int = Field(10000, ge=2)
    dt: float = Field(1e-3, gt=0)
    t_final: float = Field(1.0, gt=0)
    record_every: int = Field(50, ge=1)
    drift_paths: int = Field(1000, ge=2)
    c_dt: float = Field(0.5, ge=0)


class CriticalityConfig(_Base):
    experiment: Literal["criticality"]
    preset: Literal["rigid-body", "heavy-top"] = "heavy-top"
    variant: VariantConfig = VariantConfig()
    sigma1: float = Field(0.2, ge=0)
    sigma2: float = Field(0.2, ge=0)
    tilted_noise: bool = False
    t_final: float = Field(2.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    n_directions: int = Field(20, ge=1)
    epsilon: float = Field(1e-4, gt=0)
    threshold: float = Field(1e-3, gt=0)
    contrast_amplitude: float = Field(0.1, ge=0)
    contrast_ratio: float = Field(10.0, ge=0)


class MHDConfig(_Base):
    experiment: Literal["mhd"]
    preset: Literal["orszag-tang-like", "taylor-green", "density-shear"] = "orszag-tang-like"
    dims: Literal[2, 3] = 2
    n: int = 64
    gamma: float = Field(1.4, gt=1)
    kappa: float = Field(1.0, gt=0)
    entropy_eos: bool = False
    mu1: float = Field(0.05, ge=0)
    mu2: float = Field(0.02, ge=0)
    mu3: float = Field(0.03, ge=0)
    mu4: float = Field(0.05, ge=0)
    log_d_term: bool = True
    dt: float = Field(2e-3, gt=0)
    t_final: float = Field(0.5, gt=0)
    every: int = Field(1, ge=1)
    dump_fields: bool = False
    mass_tol: float = 1e-10
    div_b_tol: float = 1e-12
    energy_tol: float = 1e-10


class IncompressibleConfig(_Base):
    experiment: Literal["incompressible"]
    preset: Literal["taylor-green"] = "taylor-green"
    n: int = 32
    nu: float = Field(0.05, ge=0)
    mu3: float = Field(0.05, ge=0)
    b_amp: float = 0.0
    dt: float = Field(1e-3, gt=0)
    t_final: float = Field(0.5, gt=0)
    decay_tol: float = 1e-6
    mach: Optional[float] = Field(None, gt=0, le=0.1)
    gamma: float = Field(1.4, gt=1)
    low_mach_tol: float = 0.02


class FlowOracleConfig(_Base):
    experiment: Literal["flow-oracle"]
    preset: Literal["taylor-green"] = "taylor-green"
    n: int = 32
    nu: float = Field(0.05, ge=0)
    n_particles: int = Field(5000, ge=16)
    dt: float = Field(1e-3, gt=0)
    t_final: float = Field(0.1, gt=0)
    rel_tol: float = 0.05


MODELS = {"reduced": ReducedConfig, "ensemble": EnsembleConfig, "criticality": CriticalityConfig,
          "mhd": MHDConfig, "incompressible": IncompressibleConfig, "flow-oracle": FlowOracleConfig}


class ConfigError(Exception):
    pass


# -- plumbing ---------------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else repr(float(x)) for x in r])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()


def load_config(experiment, path=None, overrides=None):
    """Read TOML (or a manifest's JSON), apply overrides and validate."""
    doc = {}
    if path is not None:
        p = Path(path)
        try:
            if p.suffix == ".json":
                doc = json.loads(p.read_text())
                doc = doc.get("config", doc)
            else:
                doc = tomllib.loads(p.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {p}") from exc
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{p}: cannot parse: {exc}") from exc
        if doc.get("experiment", experiment) != experiment:
            raise ConfigError(f"{p}: experiment = {doc['experiment']!r} but subcommand is {experiment!r}")
    else:
        doc = {"experiment": experiment}
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return MODELS[experiment].model_validate(doc)
    except ValidationError as exc:
        where = "; ".join(f"{'.'.join(map(str, e['loc'])) or '<root>'}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid {experiment} config: {where}") from exc


# -- experiments -----------------------------------------------------------------------

def _finite_system(cfg):
    variant = cfg.variant.build()
    frame = systems.tilted_frame() if cfg.tilted_noise else None
    if cfg.preset == "rigid-body":
        return systems.rigid_body(cfg.sigma1, variant, noise_frame=frame)
    return systems.heavy_top(cfg.sigma1, cfg.sigma2, variant, noise_frame=frame)


def run_reduced(cfg: ReducedConfig, out: Path, threads=1):
    from .reduced import sine_variation
    preset = _finite_system(cfg)
    s = preset.system
    traj = s.integrate(preset.u0, preset.alpha0, cfg.t_final, cfg.dt)
    traj.to_csv(out / "trajectory.csv", s.lag)
    gen = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(cfg.n_directions):
        v, vdot = sine_variation(traj.t, gen.standard_normal((3, s.conn.dim)))
        worst = max(worst, abs(s.variation_residual(traj, v, vdot)))
    checks = {"variation_residual_max": worst, "variation_residual_tol": cfg.residual_tol}
    return worst <= cfg.residual_tol, checks, ["trajectory.csv"]


def run_ensemble(cfg: EnsembleConfig, out: Path, threads=1):
    alg, conn, rep, noise = systems.so3_advected(cfg.sigma2, cfg.chirality)
    alpha0 = np.asarray(cfg.alpha0, dtype=float)
    if alpha0.shape != (3,):
        raise ConfigError("alpha0 must have 3 entries")
    spec = EnsembleSpec(cfg.n_traj, cfg.dt, cfg.t_final, cfg.seed)
    drift = systems.acceptance_drift
    paths = simulate_group_sde(alg, drift, noise.h2, spec, cfg.chirality, conn,
                               record_every=cfg.record_every, threads=threads)
    ens = advected_mean(paths, alpha0, rep)
    t_ode, a_ode = integrate_advection(rep, noise.h2, drift, alpha0, cfg.t_final, cfg.dt)
    ode = a_ode[np.rint(ens.t / cfg.dt).astype(int)]
    small = EnsembleSpec(cfg.drift_paths, cfg.dt, cfg.t_final, cfg.seed, stream="drift")
    dpaths = simulate_group_sde(alg, drift, noise.h2, small, cfg.chirality, conn, threads=threads)
    dest = drift_estimate(dpaths, alg, conn, noise.h2)
    idx = np.minimum(np.rint(ens.t / cfg.dt).astype(int), len(dest.t) - 1)
    rows = [[ens.t[k], *ens.mean[k], *ens.stderr[k], *ode[k], *dest.mean[idx[k]], *dest.stderr[idx[k]]]
            for k in range(len(ens.t))]
    header = (["t"] + [f"alpha_mean_{i}" for i in (1, 2, 3)] + [f"alpha_stderr_{i}" for i in (1, 2, 3)]
              + [f"alpha_ode_{i}" for i in (1, 2, 3)] + [f"drift_{i}" for i in (1, 2, 3)]
              + [f"drift_stderr_{i}" for i in (1, 2, 3)])
    _write_rows(out / "ensemble.csv", header, rows)
    gap = np.abs(ens.mean - ode)
    tol = 3 * ens.stderr + cfg.c_dt * cfg.dt
    ok = bool(np.all(gap <= tol))
    checks = {"max_gap": float(gap.max()), "max_gap_over_tol": float((gap / tol).max())}
    return ok, checks, ["ensemble.csv"]


def run_criticality(cfg: CriticalityConfig, out: Path, threads=1):
    preset = _finite_system(cfg)
    s = preset.system
    traj = s.integrate(preset.u0, preset.alpha0, cfg.t_final, cfg.dt)
    rep = criticality_check(traj, s, cfg.n_directions, cfg.seed, cfg.epsilon, cfg.threshold)
    rows = [[i, d] for i, d in enumerate(rep.derivatives)]
    checks = {"max_abs_dJ": rep.max_abs, "threshold": cfg.threshold}
    ok = rep.passed
    if cfg.contrast_amplitude:
        from .reduced import Trajectory
        bumped = traj.u + cfg.contrast_amplitude * np.outer(np.sin(traj.t), np.eye(s.conn.dim)[0])
        other = Trajectory(traj.t, bumped, s.lag.dl_du(bumped, traj.alpha), traj.alpha)
        crep = criticality_check(other, s, cfg.n_directions, cfg.seed, cfg.epsilon, cfg.threshold)
        rows = [[i, d, c] for i, (d, c) in enumerate(zip(rep.derivatives, crep.derivatives))]
        checks["contrast_max_abs_dJ"] = crep.max_abs
        ok = ok and crep.max_abs >= cfg.contrast_ratio * rep.max_abs
    header = ["direction", "dJ_deps"] + (["dJ_deps_perturbed"] if cfg.contrast_amplitude else [])
    _write_rows(out / "criticality.csv", header, [[str(r[0])] + list(r[1:]) for r in rows])
    return ok, checks, ["criticality.csv"]


def _mhd_initial(cfg: MHDConfig):
    g = sp.Grid(cfg.dims, cfg.n)
    return {"orszag-tang-like": mhd.orszag_tang_like, "taylor-green": mhd.taylor_green,
            "density-shear": mhd.density_shear}[cfg.preset](g)


def run_mhd(cfg: MHDConfig, out: Path, threads=1):
    eos = mhd.EOS(cfg.gamma, cfg.kappa, cfg.entropy_eos)
    visc = mhd.Viscosities(cfg.mu1, cfg.mu2, cfg.mu3, cfg.mu4)
    state = _mhd_initial(cfg)
    # every step is monitored for energy; rows are thinned afterwards
    res = mhd.run(state, cfg.dt, cfg.t_final, eos, visc, 1, cfg.log_d_term)
    E, M, divb = res.column("E"), res.column("M"), res.column("div_b")
    mass_drift = float(np.abs(M - M[0]).max() / M[0])
    rise = float(np.diff(E).max(initial=-np.inf))
    keep = [r for k, r in enumerate(res.rows) if k % cfg.every == 0 or k == len(res.rows) - 1]
    _write_rows(out / "diagnostics.csv", mhd.DIAG_COLUMNS, keep)
    files = ["diagnostics.csv"]
    if cfg.dump_fields:
        s = res.state
        for name, f in (("u", s.u), ("b", s.b), ("a_pot", s.a_pot), ("d", s.d)):
            sp.dump_field(out / f"{name}.f64", f, s.grid, s.t)
            files += [f"{name}.f64", f"{name}.f64.json"]
    checks = {"mass_drift_rel": mass_drift, "max_div_b": float(divb.max()), "max_energy_increase": rise}
    ok = mass_drift <= cfg.mass_tol and divb.max() <= cfg.div_b_tol and rise <= cfg.energy_tol
    return ok, checks, files


def run_incompressible(cfg: IncompressibleConfig, out: Path, threads=1):
    g = sp.Grid(2, cfg.n)
    visc = mhd.Viscosities(cfg.nu, 0.0, cfg.mu3, cfg.nu)
    s0 = mhd.taylor_green(g, b_amp=cfg.b_amp)
    n = int(round(cfg.t_final / cfg.dt))
    s = s0
    comp = s0
    eos = None
    if cfg.mach:
        eos = mhd.EOS(cfg.gamma, 1.0 / (cfg.mach ** 2 * cfg.gamma))
    rows = []
    worst_lm = 0.0
    worst_div = 0.0
    for k in range(n + 1):
        exact = s0.u * np.exp(-2 * cfg.nu * s.t)
        row = [s.t, g.l2_norm(s.u), g.l2_norm(s.u - exact), float(np.abs(sp.div(g, s.u)).max())]
        worst_div = max(worst_div, row[-1])
        if eos is not None:
            rel = g.l2_norm(comp.u - s.u) / g.l2_norm(s.u)
            worst_lm = max(worst_lm, rel)
            row.append(rel)
        rows.append(row)
        if k < n:
            s = mhd.incompressible_step(s, cfg.dt, visc, check=(k == 0))
            if eos is not None:
                comp = mhd.step(comp, cfg.dt, eos, visc, warn_cfl=(k == 0))
    header = ["t", "u_l2", "tg_error_l2", "max_div_u"] + (["low_mach_rel_l2"] if eos else [])
    _write_rows(out / "incompressible.csv", header, rows)
    checks = {"max_div_u": worst_div}
    ok = worst_div <= 1e-12
    if cfg.b_amp == 0:
        err = max(r[2] for r in rows) / g.l2_norm(s0.u)
        checks["tg_rel_error"] = err
        ok = ok and err <= cfg.decay_tol
    if eos is not None:
        checks["low_mach_rel_l2"] = worst_lm
        ok = ok and worst_lm <= cfg.low_mach_tol
    return ok, checks, ["incompressible.csv"]


def _tg_forms():
    a0 = lambda p: np.stack([np.sin(p[:, 1]) + 0.5 * np.cos(p[:, 0]),   # noqa: E731
                             np.cos(p[:, 0]) + 0.3 * np.sin(p[:, 1])], axis=1)
    forms = [lambda p: np.stack([np.sin(p[:, 1]), np.zeros(len(p))], axis=1),
             lambda p: np.stack([np.zeros(len(p)), np.cos(p[:, 0])], axis=1),
             lambda p: np.stack([np.cos(p[:, 0]), np.sin(p[:, 1])], axis=1)]
    return a0, forms


def run_flow_oracle(cfg: FlowOracleConfig, out: Path, threads=1):
    g = sp.Grid(2, cfg.n)
    tg = flow.TaylorGreen()
    a0, forms = _tg_forms()
    ps = flow.ParticleSet.lattice(cfg.n_particles, 2, cfg.seed)
    rep = flow.weak_form_compare(ps, a0, tg, cfg.nu, forms, cfg.t_final, cfg.dt, g, seed=cfg.seed,
                                 form_ids=["f1", "f2", "f3"])
    rep.to_csv(out / "weak_form.csv")
    checks = {"max_relative_defect": float(rep.relative_defect.max()), "n_particles": len(ps.ids),
              "excluded": rep.excluded}
    ok = rep.passed and rep.relative_defect.max() <= cfg.rel_tol
    return ok, checks, ["weak_form.csv"]


RUNNERS = {"reduced": run_reduced, "ensemble": run_ensemble, "criticality": run_criticality,
           "mhd": run_mhd, "incompressible": run_incompressible, "flow-oracle": run_flow_oracle}


def run(cfg, out, threads=1):
    """Run one validated experiment; returns ``(passed, manifest)``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.model_dump(mode="json")
    ok, checks, files = RUNNERS[cfg.experiment](cfg, out, threads)
    manifest = {
        "experiment": cfg.experiment,
        "config": resolved,
        "config_sha256": config_hash(resolved),
        "version": __version__,
        "status": "PASS" if ok else "FAIL",
        "checks": checks,
        "outputs": {f: _sha256(out / f) for f in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ok, manifest


def build_parser():
    p = argparse.ArgumentParser(prog="ep-sim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="TOML config, or a manifest.json to replay")
        s.add_argument("--preset", help="system preset")
        s.add_argument("--seed", type=int)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--out", type=Path, default=Path("ep-sim-out"))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.experiment, args.config, {"preset": args.preset, "seed": args.seed})
        ok, manifest = run(cfg, args.out, args.threads)
    except (ConfigError, ContractError) as exc:
        print(f"ep-sim: {exc}", file=sys.stderr)
        return 2
    print(f"{manifest['status']} {args.experiment} {json.dumps(manifest['checks'], sort_keys=True)}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
