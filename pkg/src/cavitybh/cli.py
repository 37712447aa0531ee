"""Declarative experiment runner.

A run is described by a sectioned key=value config with explicit unit
suffixes (_wr for omega_R, _er for E_R, _erd for E_R*d, _wrt for omega_R*t).
Parsing is strict: unknown sections or keys, missing suffixes and duplicate
keys are rejected with the offending line.

Subcommands:
    run <config>            single experiment -> CSV time series / rows
    sweep <config>          one CSV row per swept parameter value
    presets list            names of shipped figure-reproduction configs
    presets emit <name>     print a preset config to stdout

Exit codes: 0 ok, 2 config error, 3 physics-validity error, 4 numerical
failure.  Given a seed, outputs are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from importlib import resources

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, PhysicsError
from .fockspace import photon_coherent_state
from .lattice import matrix_elements_at
from .models import (
    ModelParams,
    build_adiabatic_atom_pump,
    build_adiabatic_cavity_pump,
    build_atom_pump_full,
    build_cavity_pump_full,
    build_classical_bh,
    build_field_eliminated_master,
    build_general_full,
)
from .observables import (
    build_mi_state,
    build_sf_state,
    overlap_probability,
    standard_observable_set,
)
from .selfconsistent import (
    classical_crossing,
    enumerate_like,
    iterate,
    quantum_crossing,
)
from .solvers import evolve_master, evolve_mcwf, ground_state, steady_state

THREADS_ENV = "CAVITYBH_THREADS"

SETUPS = {
    "cavity_pump_full": build_cavity_pump_full,
    "atom_pump_full": build_atom_pump_full,
    "general_full": build_general_full,
    "adiabatic_cavity_symmetrized": lambda p, m: build_adiabatic_cavity_pump(p, m, "symmetrized"),
    "adiabatic_cavity_substitution": lambda p, m: build_adiabatic_cavity_pump(p, m, "substitution"),
    "field_eliminated": build_field_eliminated_master,
    "adiabatic_atom_pump": build_adiabatic_atom_pump,
    "classical_bh": build_classical_bh,
}

# schema: section -> key -> (parser, default); REQUIRED means no default
REQUIRED = object()


def _boolean(text):
    if text.lower() in ("true", "yes", "1", "on"):
        return True
    if text.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "model": {
        "setup": (str, REQUIRED),
        "atoms": (int, REQUIRED),
        "sites": (int, REQUIRED),
        "u0_wr": (float, 0.0),
        "kappa_wr": (float, REQUIRED),
        "eta_wr": (float, 0.0),
        "eta_eff_wr": (float, 0.0),
        "delta_c_wr": (float, None),
        "delta_c_shifted_wr": (float, None),
        "v_cl_er": (float, 0.0),
        "g1d_erd": (float, 0.0),
        "photon_cutoff": (int, 0),
        "boundary": (str, "open"),
        "dispersive_hop": (_boolean, False),
        "elements_depth_er": (float, None),
        "band_n_q": (int, 64),
        "band_n_pw": (int, 16),
        "wannier_periods": (int, 10),
        "wannier_points_per_period": (int, 512),
    },
    "solver": {
        "kind": (str, REQUIRED),
        "t_final_wrt": (float, None),
        "n_steps": (int, 200),
        "n_traj": (int, 100),
        "seed": (int, 0),
        "rtol": (float, 1e-8),
        "atol": (float, 1e-9),
        "tol": (float, 1e-8),
        "max_iter": (int, 200),
        "relaxation": (float, None),
        "g1d_lo_erd": (float, 1e-4),
        "g1d_hi_erd": (float, 3.0),
        "pump_depth_er": (float, None),
        "xtol": (float, 1e-6),
    },
    "initial_state": {
        "atoms": (str, "ground"),
        "perturbation": (float, 0.05),
        "photon": (str, "vacuum"),
    },
    "output": {
        "csv": (str, REQUIRED),
        "stride": (int, 1),
    },
    "sweep": {
        "parameter": (str, None),
        "start": (float, None),
        "stop": (float, None),
        "count": (int, None),
        "values": (str, None),
        "kappas_wr": (str, None),
    },
}

_UNIT_SUFFIXES = ("_wr", "_er", "_erd", "_wrt")


def _suffix_hint(section, key):
    """If `key` is a known key minus/plus a unit suffix, name the right one."""
    known = SCHEMA.get(section, {})
    stems = {}
    for k in known:
        stem = k
        for suf in _UNIT_SUFFIXES:
            if k.endswith(suf):
                stem = k[: -len(suf)]
                break
        stems.setdefault(stem, k)
    stem = key
    for suf in _UNIT_SUFFIXES:
        if key.endswith(suf):
            stem = key[: -len(suf)]
            break
    if stem in stems and stems[stem] != key:
        return f"; expected {stems[stem]!r} (explicit unit suffix required)"
    return ""


def parse_config(text, name="<config>"):
    """Strict sectioned key=value parser with line/column diagnostics."""
    data = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{name}: unterminated section header", line=lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{name}: unknown section [{section}]", line=lineno)
            if section in data:
                raise ConfigError(f"{name}: duplicate section [{section}]", line=lineno)
            data[section] = {}
            continue
        if "=" not in line:
            raise ConfigError(
                f"{name}: expected 'key = value'", line=lineno, column=len(raw) - len(raw.lstrip()) + 1
            )
        if section is None:
            raise ConfigError(f"{name}: key outside any [section]", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if key not in SCHEMA[section]:
            raise ConfigError(
                f"{name}: unknown key {key!r} in [{section}]" + _suffix_hint(section, key),
                line=lineno,
                column=raw.index(key) + 1,
            )
        if key in data[section]:
            raise ConfigError(f"{name}: duplicate key {key!r}", line=lineno)
        parser_fn, _ = SCHEMA[section][key]
        try:
            data[section][key] = parser_fn(value)
        except ValueError as exc:
            raise ConfigError(
                f"{name}: bad value for {key!r}: {exc}", line=lineno, column=raw.index("=") + 2
            ) from None

    for sec, keys in SCHEMA.items():
        data.setdefault(sec, {})
        for key, (_, default) in keys.items():
            if key not in data[sec]:
                if default is REQUIRED:
                    raise ConfigError(f"{name}: missing required key {key!r} in [{sec}]")
                data[sec][key] = default
    return data


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read(), name=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


# ---------------------------------------------------------------------------
# assembling a run from a parsed config


def build_params(cfg):
    mc = cfg["model"]
    if mc["setup"] not in SETUPS:
        raise ConfigError(f"unknown setup {mc['setup']!r}; choose from {sorted(SETUPS)}")
    try:
        return ModelParams(
            num_atoms=mc["atoms"],
            num_sites=mc["sites"],
            u0=mc["u0_wr"],
            kappa=mc["kappa_wr"],
            eta=mc["eta_wr"],
            eta_eff=mc["eta_eff_wr"],
            delta_c=mc["delta_c_wr"],
            delta_c_shifted=mc["delta_c_shifted_wr"],
            v_cl=mc["v_cl_er"],
            g1d=mc["g1d_erd"],
            photon_cutoff=mc["photon_cutoff"],
            boundary=mc["boundary"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def quality_kwargs(cfg):
    mc = cfg["model"]
    return dict(
        n_q=mc["band_n_q"],
        n_pw=mc["band_n_pw"],
        periods=mc["wannier_periods"],
        points_per_period=mc["wannier_points_per_period"],
    )


def resolve_elements(cfg, p):
    """Matrix elements at the configured depth, a self-consistent depth when
    the cavity is pumped, or the classical depth otherwise."""
    q = quality_kwargs(cfg)
    depth = cfg["model"]["elements_depth_er"]
    if depth is None:
        if p.eta != 0.0:
            depth = iterate(p, tol=cfg["solver"]["tol"], **q).depth
        else:
            depth = p.v_cl
    return matrix_elements_at(depth, g1d=p.g1d, **q)


def build_model(cfg, p, m):
    setup = cfg["model"]["setup"]
    if setup == "atom_pump_full":
        return build_atom_pump_full(p, m, keep_dispersive_hop=cfg["model"]["dispersive_hop"])
    return SETUPS[setup](p, m)


def _atomic_ground(setup, p, m):
    if setup.startswith("adiabatic_cavity") or setup in (
        "cavity_pump_full",
        "general_full",
        "field_eliminated",
    ):
        ref = build_adiabatic_cavity_pump(p, m, "symmetrized")
    elif setup in ("atom_pump_full", "adiabatic_atom_pump"):
        ref = build_adiabatic_atom_pump(p, m)
    else:
        ref = build_classical_bh(p, m)
    basis = ref.basis
    reference = build_mi_state(basis) if p.num_atoms % p.num_sites == 0 else None
    h = ref.hamiltonian
    return h, ground_state(h, reference=reference)


def initial_state(cfg, model, p, m):
    """Initial ket from the [initial_state] section (atoms x photon)."""
    ic = cfg["initial_state"]
    spec_atoms = ic["atoms"]
    basis = model.basis.atomic if model.is_joint else model.basis

    if spec_atoms == "mi":
        psi_at = build_mi_state(basis)
    elif spec_atoms == "sf":
        psi_at = build_sf_state(basis)
    elif spec_atoms in ("ground", "perturbed_ground"):
        h, gs = _atomic_ground(cfg["model"]["setup"], p, m)
        psi_at = gs.state
        if spec_atoms == "perturbed_ground":
            vals, vecs = np.linalg.eigh(h.to_dense())
            psi_at = psi_at + ic["perturbation"] * vecs[:, 1]
            psi_at = psi_at / np.linalg.norm(psi_at)
    elif spec_atoms.startswith("fock:"):
        occ = tuple(int(tok) for tok in spec_atoms[5:].split(","))
        psi_at = basis.state_vector(occ)
    else:
        raise ConfigError(f"unknown initial atomic state {spec_atoms!r}")

    if not model.is_joint:
        return psi_at

    n_max = model.basis.photon_cutoff
    spec_ph = ic["photon"]
    if spec_ph == "vacuum":
        psi_ph = np.zeros(n_max + 1, dtype=complex)
        psi_ph[0] = 1.0
    elif spec_ph.startswith("fock:"):
        n = int(spec_ph[5:])
        if n > n_max:
            raise ConfigError(f"photon Fock state {n} above cutoff {n_max}")
        psi_ph = np.zeros(n_max + 1, dtype=complex)
        psi_ph[n] = 1.0
    elif spec_ph.startswith("coherent:"):
        re, im = (float(tok) for tok in spec_ph[9:].split(","))
        psi_ph = photon_coherent_state(n_max, complex(re, im))
    else:
        raise ConfigError(f"unknown initial photon state {spec_ph!r}")
    return np.kron(psi_at, psi_ph)


# ---------------------------------------------------------------------------
# output helpers


def _format(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _header_lines(cfg, model, command, seed):
    lines = [f"cavitybh {__version__} :: {command}"]
    for section in ("model", "solver", "initial_state", "output", "sweep"):
        if not cfg.get(section):
            continue
        body = " ".join(f"{k}={v}" for k, v in sorted(cfg[section].items()) if v is not None)
        if body:
            lines.append(f"[{section}] {body}")
    if model is not None:
        if model.is_joint:
            at = model.basis.atomic
            lines.append(
                f"basis: joint dim={model.dim} (atomic {at.dim} x photon {model.basis.photon_cutoff + 1})"
            )
        else:
            lines.append(f"basis: atomic dim={model.dim}")
    lines.append(f"rng: philox seed={seed}")
    return lines


def write_table(path, header_lines, columns, rows):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format(v) for v in row) + "\n")


def _out_path(cfg, out_dir):
    path = cfg["output"]["csv"]
    if out_dir:
        path = os.path.join(out_dir, path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# run and sweep drivers


def _time_grid(cfg):
    sc = cfg["solver"]
    if sc["t_final_wrt"] is None:
        raise ConfigError("solver kind needs t_final_wrt")
    return np.linspace(0.0, sc["t_final_wrt"], sc["n_steps"] + 1)


def _observable_columns(ops):
    order = [
        "p_mi",
        "p_sf",
        "photon_number",
        "photon_number_adiabatic",
        "mean_kx",
        "imbalance_sq",
        "hop",
    ]
    return [name for name in order if name in ops]


def run_experiment(cfg, out_dir=None, threads=None, seed_override=None):
    p = build_params(cfg)
    m = resolve_elements(cfg, p)
    model = build_model(cfg, p, m)
    sc = cfg["solver"]
    seed = sc["seed"] if seed_override is None else seed_override
    kind = sc["kind"]
    path = _out_path(cfg, out_dir)
    header = _header_lines(cfg, model, f"run kind={kind}", seed)
    header.append(f"elements: depth={m.depth:.17g} E_R")
    stride = max(1, cfg["output"]["stride"])

    if kind == "ground":
        gs = ground_state(model.hamiltonian)
        basis = model.basis.atomic if model.is_joint else model.basis
        cols = ["energy", "gap", "p_mi", "p_sf"]
        p_mi = (
            overlap_probability(gs.state, build_mi_state(basis), model.basis)
            if p.num_atoms % p.num_sites == 0
            else float("nan")
        )
        p_sf = overlap_probability(gs.state, build_sf_state(basis), model.basis)
        write_table(path, header, cols, [[gs.energy, gs.gap, p_mi, p_sf]])
        return path

    if kind == "steady":
        rho0 = None
        if "initial_state" in cfg and cfg["initial_state"]:
            psi0 = initial_state(cfg, model, p, m)
            rho0 = np.outer(psi0, psi0.conj())
        rho = steady_state(model, rho0=rho0)
        ops = standard_observable_set(model)
        cols = _observable_columns(ops)
        row = [float(np.real((ops[c].matrix @ rho).trace())) for c in cols]
        write_table(path, header, cols, [row])
        return path

    if kind in ("master", "mcwf"):
        t_grid = _time_grid(cfg)
        psi0 = initial_state(cfg, model, p, m)
        ops = standard_observable_set(model)
        cols = _observable_columns(ops)
        if kind == "master":
            res = evolve_master(
                model,
                psi0,
                t_grid,
                rtol=sc["rtol"],
                atol=sc["atol"],
                observables=ops,
                store_states=False,
            )
            rows = [
                [t_grid[i]]
                + [res.expectations[c][i] for c in cols]
                + [res.trace_drift[i]]
                for i in range(0, len(t_grid), stride)
            ]
            write_table(path, header, ["time"] + cols + ["trace_drift"], rows)
        else:
            n_jobs = threads or 1
            ens = evolve_mcwf(
                model,
                psi0,
                t_grid,
                n_traj=sc["n_traj"],
                seed=seed,
                observables=ops,
                n_jobs=n_jobs,
            )
            out_cols = ["time"]
            for c in cols:
                out_cols += [c, f"{c}_stderr"]
            rows = []
            for i in range(0, len(t_grid), stride):
                row = [t_grid[i]]
                for c in cols:
                    row += [ens.mean(c)[i], ens.stderr(c)[i]]
                rows.append(row)
            write_table(path, header, out_cols, rows)
        return path

    if kind == "selfconsistent":
        res = iterate(
            p,
            relaxation=sc["relaxation"],
            tol=sc["tol"],
            max_iter=sc["max_iter"],
            **quality_kwargs(cfg),
        )
        basis = enumerate_like(p)
        row = [
            res.depth,
            res.photon_number,
            overlap_probability(res.ground_state, build_mi_state(basis), basis)
            if p.num_atoms % p.num_sites == 0
            else float("nan"),
            overlap_probability(res.ground_state, build_sf_state(basis), basis),
            len(res.trace),
            int(res.converged),
        ]
        write_table(
            path,
            header,
            ["depth", "photon_number", "p_mi", "p_sf", "iterations", "converged"],
            [row],
        )
        return path

    if kind == "crossing":
        if sc["pump_depth_er"] is None:
            raise ConfigError("crossing solver needs pump_depth_er")
        kappas = _parse_values(cfg["sweep"].get("kappas_wr") or "")
        if not kappas:
            raise ConfigError("crossing solver needs [sweep] kappas_wr = k1,k2,...")
        rows = []
        for kappa in kappas:
            eta = kappa * math.sqrt(sc["pump_depth_er"] / p.u0)
            pk = replace(p, kappa=kappa, eta=eta, v_cl=0.0)
            err = ""
            gq = gc = float("nan")
            try:
                gq = quantum_crossing(
                    pk, sc["g1d_lo_erd"], sc["g1d_hi_erd"], xtol=sc["xtol"], **quality_kwargs(cfg)
                )
                gc = classical_crossing(
                    pk,
                    sc["pump_depth_er"],
                    sc["g1d_lo_erd"],
                    sc["g1d_hi_erd"],
                    xtol=sc["xtol"],
                    **quality_kwargs(cfg),
                )
            except Exception as exc:  # recorded per point, sweep continues
                err = f"{type(exc).__name__}: {exc}"
            rows.append([kappa, eta, gq, gc, err])
        write_table(
            path, header, ["kappa", "eta", "g1d_quantum", "g1d_classical", "error"], rows
        )
        return path

    raise ConfigError(f"unknown solver kind {kind!r}")


def _parse_values(text):
    return [float(tok) for tok in text.split(",") if tok.strip()] if text else []


def _sweep_axis(cfg):
    sw = cfg["sweep"]
    if not sw or "parameter" not in sw or sw["parameter"] is None:
        raise ConfigError("sweep needs a [sweep] section with 'parameter'")
    if sw.get("values"):
        values = _parse_values(sw["values"])
    else:
        if sw.get("start") is None or sw.get("stop") is None or sw.get("count") is None:
            raise ConfigError("sweep needs either values=... or start/stop/count")
        values = list(np.linspace(sw["start"], sw["stop"], sw["count"]))
    return sw["parameter"], values


def _apply_axis(cfg, dotted, value):
    section, _, key = dotted.partition(".")
    if section not in SCHEMA or key not in SCHEMA.get(section, {}):
        raise ConfigError(f"swept parameter {dotted!r} is not a known config key")
    out = {sec: dict(body) for sec, body in cfg.items()}
    out[section][key] = value
    return out


def run_sweep(cfg, out_dir=None, threads=None, seed_override=None):
    """One row per swept value; the inner computation is the self-consistent
    ground state of the configured model family."""
    axis, values = _sweep_axis(cfg)
    path = _out_path(cfg, out_dir)
    header = _header_lines(cfg, None, f"sweep axis={axis}", cfg["solver"]["seed"])
    columns = [axis, "depth", "photon_number", "p_mi", "p_sf", "iterations", "error"]
    if not values:
        write_table(path, header, columns, [])
        return path

    def one_point(value):
        local = _apply_axis(cfg, axis, value)
        try:
            p = build_params(local)
            res = iterate(
                p,
                relaxation=local["solver"]["relaxation"],
                tol=local["solver"]["tol"],
                max_iter=local["solver"]["max_iter"],
                **quality_kwargs(local),
            )
            basis = enumerate_like(p)
            p_mi = (
                overlap_probability(res.ground_state, build_mi_state(basis), basis)
                if p.num_atoms % p.num_sites == 0
                else float("nan")
            )
            p_sf = overlap_probability(res.ground_state, build_sf_state(basis), basis)
            return [value, res.depth, res.photon_number, p_mi, p_sf, len(res.trace), ""]
        except Exception as exc:
            return [value, float("nan"), float("nan"), float("nan"), float("nan"), 0,
                    f"{type(exc).__name__}: {exc}"]

    if threads and threads > 1:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=threads)(delayed(one_point)(v) for v in values)
    else:
        rows = [one_point(v) for v in values]
    write_table(path, header, columns, rows)
    return path


# ---------------------------------------------------------------------------
# presets


def preset_names():
    pkg = resources.files("cavitybh") / "presets"
    return sorted(f.name[: -len(".cfg")] for f in pkg.iterdir() if f.name.endswith(".cfg"))


def preset_text(name):
    pkg = resources.files("cavitybh") / "presets" / f"{name}.cfg"
    if not pkg.is_file():
        raise ConfigError(f"no preset named {name!r}; see 'presets list'")
    return pkg.read_text()


# ---------------------------------------------------------------------------
# entry point


def _build_argparser():
    ap = argparse.ArgumentParser(prog="cavitybh", description=__doc__.split("\n\n")[0])
    ap.add_argument("--out-dir", default=None, help="directory prefix for output CSV paths")
    ap.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get(THREADS_ENV, "1")),
        help=f"worker count for trajectories and sweep points (env {THREADS_ENV})",
    )
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = ap.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a single experiment config")
    run_p.add_argument("config")
    sweep_p = sub.add_parser("sweep", help="run a parameter sweep config")
    sweep_p.add_argument("config")
    pre = sub.add_parser("presets", help="figure-reproduction presets")
    pre_sub = pre.add_subparsers(dest="presets_command", required=True)
    pre_sub.add_parser("list", help="list preset names")
    emit = pre_sub.add_parser("emit", help="print a preset config")
    emit.add_argument("name")
    return ap


def main(argv=None):
    args = _build_argparser().parse_args(argv)
    try:
        if args.command == "presets":
            if args.presets_command == "list":
                for name in preset_names():
                    print(name)
            else:
                sys.stdout.write(preset_text(args.name))
            return 0
        cfg = load_config(args.config)
        if args.command == "run":
            path = run_experiment(
                cfg, out_dir=args.out_dir, threads=args.threads, seed_override=args.seed
            )
        else:
            if cfg["solver"]["kind"] != "selfconsistent":
                raise ConfigError("the sweep subcommand expects solver kind = selfconsistent")
            path = run_sweep(cfg, out_dir=args.out_dir, threads=args.threads)
        print(path)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PhysicsError as exc:
        print(f"physics validity error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
