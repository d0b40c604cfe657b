"""Command-line interface: config parsing, dispatch, deterministic outputs.

Config files are plain text with dotted keys, one assignment per line:

    # lines starting with '#' are comments
    grid.N = 256
    eos.kind = boltzmann
    solver.Lambda = 1.0

Unknown and duplicate keys are rejected.  Every key can also be set by an
environment variable (prefix SPSTAB_, dots become underscores, upper case:
``SPSTAB_GRID_N=128``) or a ``--set key=value`` flag; precedence is
defaults < file < environment < --set < --seed.

Outputs are CSV with 17-significant-digit scientific notation plus JSON
certificates, all stamped with the hash of the resolved configuration and
the seed, never with timestamps: identical config and seed give
byte-identical CSV/JSON.  Figures are rendered next to the delimited
outputs unless output.figures is false.

Exit codes: 0 success, 1 configuration or domain error, 2 numerical
failure (non-convergence, quadrature, truncation), 3 audit or selfcheck
violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .eos import (EquationOfState, F_many, boltzmann, f_eval, f_many,
                  fermi_dirac, fstar_many, power_cutoff, reference_f_quad,
                  shifted, validate_casimir_class)
from .errors import AuditError, ConfigError, NumericalError
from .evolution import (EnsembleState, EvolutionTrace, density,
                        ensemble_from_steady, evolve, perturb)
from .grid import GridSpec, grad_norm_sq, laplacian_apply, poisson_solve
from .spectral import Hamiltonian, eigensolve
from .stability import (jensen_check, random_ensemble, stability_audit,
                        trace_inequality_check)
from .steady import SolverOptions, SteadyState, solve_steady

__all__ = ["RunConfig", "load_config", "save_steady", "load_steady",
           "write_csv", "read_csv", "main"]

_ENV_PREFIX = "SPSTAB_"
_VERSION = "0.1.0"


# --------------------------------------------------------------------------
# configuration schema
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Field:
    typ: str                      # float | int | str | bool | optint
    default: object
    choices: tuple = ()
    low: float | None = None      # inclusive lower bound (numeric types)
    low_strict: float | None = None  # exclusive lower bound
    high: float | None = None     # inclusive upper bound


_SCHEMA: dict[str, _Field] = {
    "grid.L": _Field("float", 8.0, low_strict=0.0),
    "grid.N": _Field("int", 256, low=3),
    "eos.kind": _Field("str", "boltzmann",
                       choices=("boltzmann", "fermi_dirac", "power_cutoff")),
    "eos.beta": _Field("float", 1.0, low_strict=0.0),
    "eos.C": _Field("float", 1.0, low_strict=0.0),
    "eos.eps": _Field("float", 1.0, low_strict=0.0),
    "eos.s0": _Field("float", 5.0),
    "eos.q": _Field("float", 1.0, low=1.0),
    "eos.quad_tol": _Field("float", 1e-10, low_strict=0.0),
    "solver.Lambda": _Field("float", 1.0, low_strict=0.0),
    "solver.K": _Field("optint", None, low=1),
    "solver.tol_V": _Field("float", 1e-8, low_strict=0.0),
    "solver.tol_lambda": _Field("float", 1e-10, low_strict=0.0),
    "solver.method": _Field("str", "scf", choices=("scf", "ascent")),
    "solver.max_iter": _Field("int", 500, low=1),
    "solver.damping": _Field("float", 0.5, low_strict=0.0, high=1.0),
    "evolution.dt": _Field("float", 1e-3, low_strict=0.0),
    "evolution.T": _Field("float", 10.0, low_strict=0.0),
    "evolution.sample_every": _Field("int", 10, low=1),
    "evolution.midpoint_sweeps": _Field("int", 2, low=1),
    "evolution.snapshots": _Field("bool", False),
    "perturb.kind": _Field("str", "phase",
                           choices=("phase", "occupation", "mix")),
    "perturb.eps": _Field("float", 0.0, low=0.0),
    "perturb.seed": _Field("int", 1234),
    "output.dir": _Field("str", "out"),
    "output.figures": _Field("bool", True),
}


def _parse_value(key: str, raw: str):
    fld = _SCHEMA[key]
    raw = raw.strip()
    try:
        if fld.typ == "float":
            val = float(raw)
            if not np.isfinite(val):
                raise ValueError("not finite")
        elif fld.typ == "int":
            val = int(raw)
        elif fld.typ == "optint":
            if raw.lower() == "none":
                return None
            val = int(raw)
        elif fld.typ == "bool":
            if raw.lower() not in ("true", "false"):
                raise ValueError("expected true or false")
            return raw.lower() == "true"
        else:
            val = raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {fld.typ} ({exc})")
    if fld.choices and val not in fld.choices:
        raise ConfigError(f"{key}: {val!r} not one of {fld.choices}")
    if fld.typ in ("float", "int", "optint"):
        if fld.low is not None and val < fld.low:
            raise ConfigError(f"{key}: {val} below minimum {fld.low}")
        if fld.low_strict is not None and val <= fld.low_strict:
            raise ConfigError(f"{key}: {val} must exceed {fld.low_strict}")
        if fld.high is not None and val > fld.high:
            raise ConfigError(f"{key}: {val} above maximum {fld.high}")
    return val


def _canon_value(val) -> str:
    if val is None:
        return "none"
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return "%.17g" % val
    return str(val)


@dataclass(frozen=True)
class RunConfig:
    """Resolved, validated run configuration (dotted key -> value)."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def canonical(self) -> str:
        """Canonical text of the computation-relevant keys.

        output.* keys steer only where results are written, not what is
        computed, so they are excluded: the config hash identifies the run.
        """
        keys = [k for k in sorted(self.values) if not k.startswith("output.")]
        return "\n".join(f"{k} = {_canon_value(self.values[k])}"
                         for k in keys) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def grid(self) -> GridSpec:
        return GridSpec(L=self["grid.L"], N=self["grid.N"])

    def eos(self) -> EquationOfState:
        kind = self["eos.kind"]
        tol = self["eos.quad_tol"]
        if kind == "boltzmann":
            return boltzmann(self["eos.beta"], quad_tol=tol)
        if kind == "fermi_dirac":
            return fermi_dirac(self["eos.C"], self["eos.eps"], quad_tol=tol)
        return power_cutoff(self["eos.s0"], self["eos.q"], quad_tol=tol)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(K=self["solver.K"], tol_V=self["solver.tol_V"],
                             tol_lambda=self["solver.tol_lambda"],
                             max_iter=self["solver.max_iter"],
                             damping=self["solver.damping"],
                             method=self["solver.method"])


def load_config(path: str | None = None, sets: list[str] | None = None,
                seed: int | None = None, outdir: str | None = None,
                use_env: bool = True) -> RunConfig:
    """Resolve the configuration from defaults, file, environment, flags."""
    values = {k: f.default for k, f in _SCHEMA.items()}
    if path is not None:
        seen = set()
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        for ln, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in _SCHEMA:
                raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
            if key in seen:
                raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
            seen.add(key)
            values[key] = _parse_value(key, raw)
    if use_env:
        known = {_ENV_PREFIX + k.upper().replace(".", "_"): k for k in _SCHEMA}
        for name, raw in sorted(os.environ.items()):
            if not name.startswith(_ENV_PREFIX):
                continue
            if name not in known:
                raise ConfigError(f"unknown environment override {name}")
            values[known[name]] = _parse_value(known[name], raw)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"--set: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    if seed is not None:
        values["perturb.seed"] = int(seed)
    if outdir is not None:
        values["output.dir"] = outdir
    return RunConfig(values=values)


# --------------------------------------------------------------------------
# deterministic emission
# --------------------------------------------------------------------------

def _meta_lines(cfg_hash: str, seed: int, extra: dict | None = None) -> list[str]:
    meta = {"format": "spstab-csv v1", "config_hash": cfg_hash,
            "seed": str(seed)}
    meta.update({k: str(v) for k, v in (extra or {}).items()})
    return [f"# {k}: {meta[k]}" for k in meta]


def write_csv(path, columns: list[tuple[str, np.ndarray]],
              cfg_hash: str, seed: int, extra: dict | None = None) -> Path:
    """CSV with '#'-prefixed metadata header and %.17e float cells."""
    path = Path(path)
    names = [name for name, _ in columns]
    arrays = [np.asarray(col) for _, col in columns]
    n = arrays[0].shape[0]
    if any(a.shape != (n,) for a in arrays):
        raise ValueError("columns must share one length")
    lines = _meta_lines(cfg_hash, seed, extra)
    lines.append(",".join(names))
    for i in range(n):
        cells = []
        for a in arrays:
            cells.append("%d" % a[i] if np.issubdtype(a.dtype, np.integer)
                         else "%.17e" % a[i])
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[dict, dict]:
    """Read back a CSV written by write_csv: (metadata, column arrays)."""
    meta, names, rows = {}, None, []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif names is None:
            names = line.split(",")
        elif line:
            rows.append([float(c) for c in line.split(",")])
    if names is None:
        raise ConfigError(f"{path}: no column header found")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return meta, {name: data[:, j] for j, name in enumerate(names)}


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _dump_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True,
                               default=_json_default) + "\n")
    return path


def save_steady(path, steady: SteadyState, cfg_hash: str, seed: int) -> Path:
    payload = {
        "format": "spstab-steady v1",
        "config_hash": cfg_hash,
        "seed": seed,
        "grid": {"L": steady.grid.L, "N": steady.grid.N},
        "eos": steady.eos.params(),
        "Lambda": steady.Lambda,
        "sigma0": steady.sigma0,
        "K": steady.spectral.K,
        "V0": steady.V0,
        "lambda0": steady.lambda0,
        "mu": steady.spectral.mu,
        "certificates": steady.certificates,
    }
    return _dump_json(path, payload)


def load_steady(path) -> SteadyState:
    """Rebuild a steady state from its JSON record.

    The potential and scalars are stored; the spectral data is recomputed
    deterministically and cross-checked against the stored eigenvalues,
    occupations, and the Poisson residual certificate.
    """
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read steady state file {path}: {exc}")
    if payload.get("format") != "spstab-steady v1":
        raise ConfigError(f"{path}: not a steady-state record")
    grid = GridSpec(L=payload["grid"]["L"], N=payload["grid"]["N"])
    eos = EquationOfState(**payload["eos"])
    V0 = np.asarray(payload["V0"], dtype=float)
    sigma0 = float(payload["sigma0"])
    spectral = eigensolve(Hamiltonian(grid, V0), int(payload["K"]))
    lam = f_many(eos, spectral.mu + sigma0)
    mu_err = np.max(np.abs(spectral.mu - np.asarray(payload["mu"])))
    lam_err = np.max(np.abs(lam - np.asarray(payload["lambda0"])))
    certs = payload["certificates"]
    n = (lam[:, None] * spectral.psi ** 2).sum(axis=0)
    resid = float(np.max(np.abs(laplacian_apply(grid, V0) - n)))
    if mu_err > 1e-8 or lam_err > 1e-8:
        raise ConfigError(f"{path}: stored spectrum inconsistent with its "
                          f"potential (mu err {mu_err:.2e}, lam err {lam_err:.2e})")
    if resid > 10.0 * (certs["poisson_residual_inf"] + 1e-12):
        raise ConfigError(f"{path}: Poisson residual {resid:.2e} inconsistent "
                          "with stored certificate")
    return SteadyState(grid=grid, eos=eos, Lambda=float(payload["Lambda"]),
                       sigma0=sigma0, V0=V0, lambda0=lam, spectral=spectral,
                       certificates=certs)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_steady(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    grid, eos = cfg.grid(), cfg.eos()
    st = solve_steady(eos, cfg["solver.Lambda"], grid, cfg.solver_options())
    h, seed = cfg.config_hash(), cfg["perturb.seed"]
    n0 = (st.lambda0[:, None] * st.spectral.psi ** 2).sum(axis=0)
    write_csv(out / "V0.csv", [("x", grid.x), ("V0", st.V0)], h, seed)
    write_csv(out / "density.csv", [("x", grid.x), ("n0", n0)], h, seed)
    write_csv(out / "spectrum.csv",
              [("k", np.arange(1, st.spectral.K + 1)),
               ("mu", st.spectral.mu), ("lambda", st.lambda0)], h, seed)
    save_steady(out / "steady_state.json", st, h, seed)
    if cfg["output.figures"]:
        from .plots import steady_figure
        steady_figure(out, grid, st.V0, n0, st.spectral.mu, st.lambda0)
    c = st.certificates
    print(f"steady: converged in {c['iterations']} iterations")
    print(f"steady: poisson residual {c['poisson_residual_inf']:.3e}, "
          f"charge residual {c['charge_residual']:.3e}")
    print(f"steady: sigma0 {st.sigma0:.12g}, dual value {c['phi_value']:.12g}, "
          f"duality gap {abs(c['phi_value'] - c['hc_value']):.3e}")
    print(f"steady: outputs in {out}")
    return 0


def cmd_evolve(cfg: RunConfig, steady_path: str | None) -> int:
    out = _outdir(cfg)
    sp = Path(steady_path) if steady_path else out / "steady_state.json"
    st = load_steady(sp)
    kind, eps, seed = cfg["perturb.kind"], cfg["perturb.eps"], cfg["perturb.seed"]
    state = perturb(st, kind, eps, seed=seed)
    eos_sh = shifted(st.eos, st.sigma0)
    trace = evolve(state, st.grid, eos_sh, dt=cfg["evolution.dt"],
                   T=cfg["evolution.T"],
                   sample_every=cfg["evolution.sample_every"],
                   midpoint_sweeps=cfg["evolution.midpoint_sweeps"],
                   reference_V=st.V0, snapshots=cfg["evolution.snapshots"])
    h = cfg.config_hash()
    extra = {"eos": json.dumps(eos_sh.params(), sort_keys=True),
             "grid_L": "%.17g" % st.grid.L, "grid_N": st.grid.N,
             "perturb_kind": kind, "perturb_eps": "%.17g" % eps,
             "steady_sigma0": "%.17g" % st.sigma0}
    write_csv(out / "trace.csv",
              [("t", trace.t), ("mass_dev", trace.mass_dev),
               ("H", trace.H), ("H_C", trace.H_C), ("dist", trace.dist)],
              h, seed, extra=extra)
    if trace.V_snapshots is not None:
        cols = [("x", st.grid.x)]
        cols += [(f"V_sample{i}", trace.V_snapshots[i])
                 for i in range(trace.V_snapshots.shape[0])]
        write_csv(out / "snapshots.csv", cols, h, seed,
                  extra={"sample_times": json.dumps([float(t) for t in trace.t])})
    if cfg["output.figures"]:
        from .plots import trace_figure
        trace_figure(out, trace.t, trace.mass_dev, trace.H, trace.H_C, trace.dist)
    print(f"evolve: {kind} eps={eps:g} seed={seed}, T={cfg['evolution.T']:g} "
          f"dt={cfg['evolution.dt']:g}, {trace.t.size} samples")
    print(f"evolve: max mass deviation {trace.mass_dev.max():.3e}, "
          f"H_C drift {np.max(np.abs(trace.H_C - trace.H_C[0])):.3e}")
    if trace.orth_flagged:
        print("evolve: WARNING orthonormality drift exceeded 1e-8")
    print(f"evolve: outputs in {out}")
    return 0


def cmd_stability(cfg: RunConfig, steady_path: str | None,
                  trace_path: str | None) -> int:
    out = _outdir(cfg)
    sp = Path(steady_path) if steady_path else out / "steady_state.json"
    tp = Path(trace_path) if trace_path else out / "trace.csv"
    st = load_steady(sp)
    meta, cols = read_csv(tp)
    required = ("t", "mass_dev", "H", "H_C", "dist")
    missing = [c for c in required if c not in cols]
    if missing:
        raise ConfigError(f"{tp}: missing columns {missing}")
    if "eos" not in meta:
        raise ConfigError(f"{tp}: missing eos metadata")
    trace_eos = EquationOfState(**json.loads(meta["eos"]))
    tgrid = GridSpec(L=float(meta["grid_L"]), N=int(meta["grid_N"]))
    trace = EvolutionTrace(grid=tgrid, eos=trace_eos, t=cols["t"],
                           mass_dev=cols["mass_dev"],
                           orth_dev=np.zeros_like(cols["t"]),
                           H=cols["H"], H_C=cols["H_C"], dist=cols["dist"])
    rep = stability_audit(trace, st,
                          perturb_kind=meta.get("perturb_kind"),
                          perturb_eps=float(meta["perturb_eps"])
                          if "perturb_eps" in meta else None,
                          seed=int(meta["seed"]) if "seed" in meta else None)
    h, seed = cfg.config_hash(), cfg["perturb.seed"]
    _dump_json(out / "stability_report.json",
               {"format": "spstab-stability v1", "config_hash": h,
                **rep.to_dict()})
    write_csv(out / "margins.csv",
              [("t", rep.t), ("dist", rep.dist),
               ("margin", rep.bound - rep.dist)], h, seed,
              extra={"bound": "%.17g" % rep.bound})
    if cfg["output.figures"]:
        from .plots import stability_figure
        stability_figure(out, rep.t, rep.dist, rep.bound, rep.tol_audit)
    print(f"stability: bound B = {rep.bound:.6e}, max distance "
          f"{np.max(rep.dist):.6e}, margin {rep.margin:.6e}")
    print(f"stability: H_C drift {rep.hc_drift:.3e} within audit tolerance "
          f"{rep.tol_audit:.1e}")
    if rep.passed:
        print("stability: PASS (no violations)")
        print(f"stability: outputs in {out}")
        return 0
    print(f"stability: FAIL ({len(rep.violations)} violations, first at "
          f"t={rep.violations[0][0]:g} excess {rep.violations[0][1]:.3e})")
    print(f"stability: outputs in {out}")
    return 3


def cmd_eos_table(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    eos = cfg.eos()
    if np.isfinite(eos.cutoff):
        s = np.linspace(eos.cutoff - 10.0, eos.cutoff + 2.0, 481)
    else:
        s = np.linspace(-8.0, 10.0, 481)
    f = f_many(eos, s)
    F = F_many(eos, s)
    fstar = fstar_many(eos, f)
    h, seed = cfg.config_hash(), cfg["perturb.seed"]
    write_csv(out / "eos.csv",
              [("s", s), ("f", f), ("F", F), ("Fstar_at_minus_f", fstar)],
              h, seed, extra={"eos": json.dumps(eos.params(), sort_keys=True)})
    report = validate_casimir_class(eos)
    for name, ok in (("support", report.ok_support),
                     ("monotone", report.ok_monotone),
                     ("decay", report.ok_decay)):
        print(f"eos-table: {name} {'ok' if ok else 'FAIL'}")
    if cfg["output.figures"]:
        from .plots import eos_figure
        eos_figure(out, s, f, F, fstar)
    print(f"eos-table: outputs in {out}")
    return 0 if report.passed else 3


# --------------------------------------------------------------------------
# selfcheck battery
# --------------------------------------------------------------------------

def _selfcheck_suite():
    """Yield (name, callable) pairs; each callable raises on failure."""

    def grid_free_spectrum():
        g = GridSpec(L=8.0, N=63)
        sd = eigensolve(Hamiltonian(g, np.zeros(g.N)), K=16)
        exact = np.array([g.free_eigenvalue(k) for k in range(1, 17)])
        rel = np.max(np.abs(sd.mu - exact) / exact)
        assert rel < 1e-10, f"free spectrum rel err {rel:.2e}"

    def grid_summation_by_parts():
        g = GridSpec(L=5.0, N=40)
        rng = np.random.default_rng(0)
        u = rng.standard_normal(g.N)
        lhs = grad_norm_sq(g, u)
        rhs = g.h * float(u @ laplacian_apply(g, u))
        assert abs(lhs - rhs) < 1e-12 * (1 + abs(lhs)), f"{lhs} vs {rhs}"

    def grid_max_principle():
        g = GridSpec(L=5.0, N=40)
        rng = np.random.default_rng(1)
        n = rng.random(g.N)
        V = poisson_solve(g, n)
        assert V.min() >= 0.0, f"min V = {V.min():.2e}"
        r = np.max(np.abs(laplacian_apply(g, V) - n))
        assert r < 1e-10, f"poisson residual {r:.2e}"

    def eos_families_in_class():
        for eos in (boltzmann(1.0), fermi_dirac(1.0, 1.0),
                    power_cutoff(5.0, 1.0)):
            rep = validate_casimir_class(eos)
            assert rep.passed, f"{eos.kind}: {rep.notes}"

    def eos_conjugacy():
        rng = np.random.default_rng(2)
        for eos in (boltzmann(1.0), fermi_dirac(1.0, 1.0),
                    power_cutoff(5.0, 1.0)):
            mu = rng.uniform(-3.0, 6.0, size=400)
            lam = f_many(eos, rng.uniform(-3.0, 6.0, size=400))
            vals = fstar_many(eos, lam) + lam * mu + F_many(eos, mu)
            assert vals.min() > -1e-10, f"{eos.kind} margin {vals.min():.2e}"
            eq = fstar_many(eos, f_many(eos, mu)) + f_many(eos, mu) * mu + F_many(eos, mu)
            assert np.max(np.abs(eq)) < 1e-8, f"{eos.kind} equality {np.max(np.abs(eq)):.2e}"

    def eos_quadrature_reference():
        eos = fermi_dirac(1.0, 1.0)
        for s in (-2.0, 0.0, 1.5):
            a, b = f_eval(eos, s), reference_f_quad(eos, s)
            assert abs(a - b) <= 1e-8 * max(1.0, abs(b)), f"s={s}: {a} vs {b}"

    def steady_small_solve():
        g = GridSpec(L=8.0, N=64)
        st = solve_steady(boltzmann(1.0), 1.0, g, SolverOptions(K=24))
        c = st.certificates
        assert c["poisson_residual_inf"] < 1e-8
        assert c["charge_residual"] < 1e-10
        assert abs(c["phi_value"] - c["hc_value"]) < 1e-8

    def evolution_conservation():
        g = GridSpec(L=8.0, N=64)
        st = solve_steady(boltzmann(1.0), 1.0, g, SolverOptions(K=16))
        ens = ensemble_from_steady(st, buffer=2)
        n0 = density(ens, g)
        tr = evolve(ens, g, shifted(st.eos, st.sigma0), dt=1e-3, T=0.2,
                    sample_every=50, reference_V=st.V0)
        assert tr.mass_dev.max() < 1e-12, f"mass {tr.mass_dev.max():.2e}"
        assert not tr.orth_flagged
        nf = density(tr.final_state, g)
        assert np.max(np.abs(nf - n0)) < 1e-8

    def stability_equalities():
        g = GridSpec(L=8.0, N=48)
        V = 0.3 * np.sin(np.pi * g.x / g.L) ** 2
        eos = boltzmann(1.0)
        sd = eigensolve(Hamiltonian(g, V), K=12)
        ens = EnsembleState(psi=sd.psi.astype(complex),
                            lam=f_many(eos, sd.mu))
        _, _, m = trace_inequality_check(ens, V, eos, g, K=12)
        assert abs(m) < 1e-8, f"equality margin {m:.2e}"
        rng = np.random.default_rng(3)
        for _ in range(20):
            st = random_ensemble(g, V, eos, 12, rng)
            _, _, m = trace_inequality_check(st, V, eos, g, K=12)
            assert m > -1e-10, f"random margin {m:.2e}"
        l, r = jensen_check(sd.psi[2].astype(complex), V, eos, g, K=g.N)
        assert abs(l - r) < 1e-8, f"jensen eigenstate gap {l - r:.2e}"

    yield "grid free spectrum closed form", grid_free_spectrum
    yield "grid summation by parts", grid_summation_by_parts
    yield "grid discrete maximum principle", grid_max_principle
    yield "eos admissibility of built-in families", eos_families_in_class
    yield "eos conjugate inequality and equality", eos_conjugacy
    yield "eos quadrature against library reference", eos_quadrature_reference
    yield "steady solve certificates and duality", steady_small_solve
    yield "evolution conservation and stationarity", evolution_conservation
    yield "stability equality and random sweeps", stability_equalities


def cmd_selfcheck(cfg: RunConfig) -> int:
    failures = 0
    for name, check in _selfcheck_suite():
        try:
            check()
        except Exception as exc:
            failures += 1
            print(f"FAIL - {name}: {exc}")
        else:
            print(f"ok - {name}")
    if failures:
        print(f"selfcheck: {failures} failure(s)")
        return 3
    print("selfcheck: all checks passed")
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spstab",
        description="Steady states and nonlinear stability diagnostics for "
                    "the 1-D Schrodinger-Poisson system")
    p.add_argument("--version", action="version", version=f"spstab {_VERSION}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", default=None,
                        help="config file (dotted key = value lines)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override perturb.seed")
        sp.add_argument("-o", "--output", default=None,
                        help="override output.dir")

    ps = sub.add_parser("steady", help="solve the steady state and emit "
                                       "certificates, fields, spectrum")
    common(ps)
    pe = sub.add_parser("evolve", help="propagate a (perturbed) steady "
                                       "ensemble and emit the trace")
    common(pe)
    pe.add_argument("--steady", default=None,
                    help="steady_state.json (default <output.dir>/steady_state.json)")
    pt = sub.add_parser("stability", help="audit a trace against its steady state")
    common(pt)
    pt.add_argument("--steady", default=None)
    pt.add_argument("--trace", default=None,
                    help="trace.csv (default <output.dir>/trace.csv)")
    pq = sub.add_parser("eos-table", help="tabulate the occupation profile, "
                                          "its tail integral, and conjugate")
    common(pq)
    pk = sub.add_parser("selfcheck", help="run the built-in invariant suites")
    common(pk)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, sets=args.set, seed=args.seed,
                          outdir=args.output)
        if args.command == "steady":
            return cmd_steady(cfg)
        if args.command == "evolve":
            return cmd_evolve(cfg, args.steady)
        if args.command == "stability":
            return cmd_stability(cfg, args.steady, args.trace)
        if args.command == "eos-table":
            return cmd_eos_table(cfg)
        return cmd_selfcheck(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except AuditError as exc:
        print(f"audit error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
