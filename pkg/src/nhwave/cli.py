"""Config-driven experiment runner.

    nhwave spectrum --config cfg.toml --out out/
    nhwave verify --case 2 --config builtin:case2 --out out/
    nhwave veryweak uniqueness --config builtin:uniqueness_control --out out/

Each run writes one or more CSV files (fixed header, 17 significant digits)
and ``report.json``.  Exit status: 0 when every verdict passes, 2 for config
errors, 3 for numerical blow-up, 4 for a failed verdict, 1 for any other
module error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from . import coeffs as cf
from . import estimates as est
from . import evolution as ev
from . import nhfourier as nf
from . import operator as op
from . import veryweak as vw
from .expr import Expression, ExpressionError

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_BLOWUP, EXIT_VERDICT = 0, 1, 2, 3, 4

CASES = ("case1", "case2", "case3", "case4")
EXPERIMENTS = ("existence", "uniqueness", "consistency")
COMMANDS = ("spectrum", "transform-check", "solve", "verify", "veryweak")
DATA_PRESETS = ("zero", "gevrey", "random")
PERTURBATIONS = ("none", "exp", "linear")

# command line for each built-in reference config
REFERENCE = {
    "spectrum_harmonic": ["spectrum"],
    "spectrum_complex": ["spectrum"],
    "transform": ["transform-check"],
    "solve": ["solve"],
    "case1": ["verify", "--case", "1"],
    "case2": ["verify", "--case", "2"],
    "case3": ["verify", "--case", "3"],
    "case4": ["verify", "--case", "4"],
    "case4_t2": ["verify", "--case", "4"],
    "existence": ["veryweak", "existence"],
    "uniqueness": ["veryweak", "uniqueness"],
    "uniqueness_control": ["veryweak", "uniqueness"],
    "consistency": ["veryweak", "consistency"],
}

# allowed keys per section with defaults (None = optional, no default)
SCHEMA = {
    "": {"seed": 0, "m_modes": 20, "s": 0.0, "case": None, "cfl": ev.DEFAULT_CFL, "out": None,
         "grid": {}, "potential": {}, "profile": {}, "data": {}, "spectrum": {},
         "transform": {}, "veryweak": {}},
    "grid": {"radius": 12.0, "n_points": 481, "order": 8},
    "potential": {"preset": "harmonic", "re": None, "im": None, "core_radius": 0.0},
    "profile": {"a": "1", "q": "0", "tag": "Linf1", "T": 1.0, "a0": 1.0, "alpha": None, "l": None,
                "a_atoms": [], "q_atoms": []},
    "data": {"v0": "zero", "v1": "zero", "f": "zero", "A": 1.0, "gevrey_s": None},
    "spectrum": {"refinements": []},
    "transform": {"n_trials": 100, "sobolev_s": [0.0, 1.0], "tol": 1e-10},
    "veryweak": {"atoms": [], "rule": "identity", "eps": None, "eps_exponents": [3, 12],
                 "q_max": vw.Q_MAX, "C": None, "perturbation": "none", "alt_beta": None,
                 "tol": 1e-4, "slope_tol": 0.05},
}
ATOM_KEYS = {"kind", "location", "amplitude"}
FORCING_KEYS = {"g", "mode"}


class ConfigError(ValueError):
    """Field-level config errors, one message per offending key."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    seed: int
    m_modes: int
    s: float
    case: int | None
    cfl: float
    out: str | None
    grid: dict
    potential: dict
    profile: dict
    data: dict
    spectrum: dict
    transform: dict
    veryweak: dict
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return copy.deepcopy(self.raw)

    # builders --------------------------------------------------------------

    def build_grid(self, n_points: int | None = None) -> op.Grid1D:
        return op.build_grid(self.grid["radius"], n_points or self.grid["n_points"])

    def build_potential(self) -> op.ComplexPotential:
        p = self.potential
        preset = p["preset"] if p["re"] is None else "custom"
        return op.potential_from_spec(preset, p["re"], p["im"], p["core_radius"])

    def build_operator(self, n_points: int | None = None) -> op.OperatorMatrix:
        return op.assemble_operator(self.build_grid(n_points), self.build_potential(), self.grid["order"])

    def build_profile(self, with_atoms: bool = False) -> cf.CoefficientProfile:
        p = self.profile
        a = [cf.regular(p["a"])] + [_atom(d) for d in p["a_atoms"]]
        if with_atoms:
            a += [_atom(d) for d in self.veryweak["atoms"]]
        q = [cf.regular(p["q"])] + [_atom(d) for d in p["q_atoms"]]
        return cf.profile(a, q, p["tag"], p["T"], p["a0"], p["alpha"], p["l"])

    def eps_grid(self) -> np.ndarray:
        v = self.veryweak
        if v["eps"] is not None:
            return np.asarray(v["eps"], dtype=float)
        lo, hi = v["eps_exponents"]
        return 2.0 ** -np.arange(int(lo), int(hi) + 1, dtype=float)


def _atom(d: dict) -> cf.DistributionalAtom:
    return cf.DistributionalAtom(d["kind"], float(d.get("location", 0.0)), float(d.get("amplitude", 1.0)))


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _finite(x) -> bool:
    return _is_num(x) and math.isfinite(x)


def _check_atoms(name: str, atoms, errors: list) -> None:
    if not isinstance(atoms, list):
        errors.append(f"{name}: expected a list of atom tables")
        return
    for i, d in enumerate(atoms):
        key = f"{name}[{i}]"
        if not isinstance(d, dict):
            errors.append(f"{key}: expected a table with kind, location, amplitude")
            continue
        for k in sorted(set(d) - ATOM_KEYS):
            errors.append(f"{key}.{k}: unknown key; valid: {sorted(ATOM_KEYS)}")
        if d.get("kind") not in cf.ATOM_KINDS[1:]:
            errors.append(f"{key}.kind: {d.get('kind')!r} is not one of {list(cf.ATOM_KINDS[1:])}")
        for k in ("location", "amplitude"):
            if k in d and not _finite(d[k]):
                errors.append(f"{key}.{k}: must be a finite number")


def _check_coeff_list(key: str, v, errors: list) -> None:
    if isinstance(v, str):
        if v in DATA_PRESETS or (v.startswith("u") and v[1:].isdigit()):
            return
        errors.append(f"{key}: unknown data preset {v!r}; valid: {list(DATA_PRESETS)} or u<k>")
    elif isinstance(v, list):
        if not all(_finite(x) for x in v):
            errors.append(f"{key}: coefficient list must hold finite numbers")
    elif isinstance(v, dict):
        for k in sorted(set(v) - {"re", "im"}):
            errors.append(f"{key}.{k}: unknown key; valid: ['im', 're']")
        for k in ("re", "im"):
            if k in v and not (isinstance(v[k], list) and all(_finite(x) for x in v[k])):
                errors.append(f"{key}.{k}: must be a list of finite numbers")
    else:
        errors.append(f"{key}: expected a preset name, a coefficient list or {{re, im}}")


def _case_index(v):
    if isinstance(v, bool):
        return None
    if isinstance(v, int) and 1 <= v <= 4:
        return v
    if isinstance(v, str):
        s = v.strip().lower()
        if s in CASES:
            return int(s[-1])
        if s in ("1", "2", "3", "4"):
            return int(s)
    return None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate TOML text; raises ConfigError listing every bad field."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    errors: list[str] = []
    merged: dict = {}
    for k in sorted(set(raw) - set(SCHEMA[""])):
        errors.append(f"{k}: unknown key; valid: {sorted(SCHEMA[''])}")
    for key, default in SCHEMA[""].items():
        if isinstance(default, dict):
            sec = raw.get(key, {})
            if not isinstance(sec, dict):
                errors.append(f"{key}: expected a table")
                sec = {}
            for k in sorted(set(sec) - set(SCHEMA[key])):
                errors.append(f"{key}.{k}: unknown key; valid: {sorted(SCHEMA[key])}")
            merged[key] = {k: copy.deepcopy(sec.get(k, d)) for k, d in SCHEMA[key].items()}
        else:
            merged[key] = raw.get(key, default)
    if errors:
        raise ConfigError(errors)

    g, pot, pr, da, vwb = (merged[k] for k in ("grid", "potential", "profile", "data", "veryweak"))
    if not _finite(g["radius"]) or g["radius"] <= 0:
        errors.append(f"grid.radius: must be finite and positive, got {g['radius']!r}")
    if not isinstance(g["n_points"], int) or g["n_points"] < op.MIN_POINTS:
        errors.append(f"grid.n_points: must be an integer >= {op.MIN_POINTS}, got {g['n_points']!r}")
    if not isinstance(g["order"], int) or g["order"] < 2 or g["order"] % 2:
        errors.append(f"grid.order: must be an even integer >= 2, got {g['order']!r}")
    if not isinstance(merged["m_modes"], int) or merged["m_modes"] < 1:
        errors.append(f"m_modes: must be a positive integer, got {merged['m_modes']!r}")
    elif isinstance(g["n_points"], int) and merged["m_modes"] > g["n_points"] - 2:
        errors.append(f"m_modes: {merged['m_modes']} exceeds the {g['n_points'] - 2} interior nodes")
    if not isinstance(merged["seed"], int) or isinstance(merged["seed"], bool) or merged["seed"] < 0:
        errors.append(f"seed: must be a non-negative integer, got {merged['seed']!r}")
    if not _finite(merged["s"]) or merged["s"] < 0:
        errors.append(f"s: must be finite and >= 0, got {merged['s']!r}")
    if not _finite(merged["cfl"]) or merged["cfl"] <= 0:
        errors.append(f"cfl: must be finite and positive, got {merged['cfl']!r}")
    if merged["case"] is not None:
        c = _case_index(merged["case"])
        if c is None:
            errors.append(f"case: unknown case selector {merged['case']!r}; valid: {list(CASES)}")
        merged["case"] = c
    if merged["out"] is not None and not isinstance(merged["out"], str):
        errors.append("out: must be a path string")

    if pot["re"] is None and pot["preset"] not in op.PRESETS:
        errors.append(f"potential.preset: unknown preset {pot['preset']!r}; valid: {sorted(op.PRESETS)}")
    for k in ("re", "im"):
        if pot[k] is not None:
            try:
                Expression(pot[k], "x")
            except (ExpressionError, TypeError) as exc:
                errors.append(f"potential.{k}: {exc}")
    if not _finite(pot["core_radius"]) or pot["core_radius"] < 0:
        errors.append("potential.core_radius: must be finite and >= 0")

    for k in ("a", "q"):
        v = pr[k]
        if _is_num(v):
            if not _finite(v):
                errors.append(f"profile.{k}: must be finite")
            pr[k] = repr(float(v))
        elif isinstance(v, str):
            try:
                Expression(v, "t")
            except ExpressionError as exc:
                errors.append(f"profile.{k}: {exc}")
        else:
            errors.append(f"profile.{k}: expected an expression string or a number")
    if pr["tag"] not in cf.TAGS:
        errors.append(f"profile.tag: unknown tag {pr['tag']!r}; valid: {list(cf.TAGS)}")
    for k in ("T", "a0"):
        if not _finite(pr[k]):
            errors.append(f"profile.{k}: must be a finite number")
    if _finite(pr["T"]) and pr["T"] <= 0:
        errors.append(f"profile.T: must be positive, got {pr['T']}")
    if pr["alpha"] is not None and not _finite(pr["alpha"]):
        errors.append("profile.alpha: must be a finite number")
    if pr["l"] is not None and (not isinstance(pr["l"], int) or isinstance(pr["l"], bool)):
        errors.append("profile.l: must be an integer")
    _check_atoms("profile.a_atoms", pr["a_atoms"], errors)
    _check_atoms("profile.q_atoms", pr["q_atoms"], errors)

    for k in ("v0", "v1"):
        _check_coeff_list(f"data.{k}", da[k], errors)
    f = da["f"]
    if isinstance(f, dict):
        for k in sorted(set(f) - FORCING_KEYS):
            errors.append(f"data.f.{k}: unknown key; valid: {sorted(FORCING_KEYS)}")
        try:
            Expression(f.get("g", "0"), "t")
        except (ExpressionError, TypeError) as exc:
            errors.append(f"data.f.g: {exc}")
        if not isinstance(f.get("mode", 0), int) or f.get("mode", 0) < 0:
            errors.append("data.f.mode: must be a non-negative integer")
    elif f != "zero":
        errors.append(f"data.f: expected 'zero' or a table {{g, mode}}, got {f!r}")
    if not _finite(da["A"]) or da["A"] <= 0:
        errors.append("data.A: must be finite and positive")
    if da["gevrey_s"] is not None and (not _finite(da["gevrey_s"]) or da["gevrey_s"] < 1):
        errors.append("data.gevrey_s: must be finite and >= 1")

    refs = merged["spectrum"]["refinements"]
    if not isinstance(refs, list) or not all(isinstance(n, int) and n >= op.MIN_POINTS for n in refs):
        errors.append(f"spectrum.refinements: must be a list of integers >= {op.MIN_POINTS}")
    tb = merged["transform"]
    if not isinstance(tb["n_trials"], int) or tb["n_trials"] < 1:
        errors.append("transform.n_trials: must be a positive integer")
    if not isinstance(tb["sobolev_s"], list) or not all(_finite(x) for x in tb["sobolev_s"]):
        errors.append("transform.sobolev_s: must be a list of finite numbers")
    if not _finite(tb["tol"]) or tb["tol"] <= 0:
        errors.append("transform.tol: must be finite and positive")

    _check_atoms("veryweak.atoms", vwb["atoms"], errors)
    if vwb["rule"] not in ("identity", "log"):
        errors.append(f"veryweak.rule: unknown rule {vwb['rule']!r}; valid: ['identity', 'log']")
    if vwb["perturbation"] not in PERTURBATIONS:
        errors.append(f"veryweak.perturbation: {vwb['perturbation']!r} is not one of {list(PERTURBATIONS)}")
    for k in ("q_max", "tol", "slope_tol"):
        if not _finite(vwb[k]) or vwb[k] <= 0:
            errors.append(f"veryweak.{k}: must be finite and positive")
    for k in ("C", "alt_beta"):
        if vwb[k] is not None and (not _finite(vwb[k]) or vwb[k] <= 0):
            errors.append(f"veryweak.{k}: must be finite and positive")
    if vwb["eps"] is not None:
        e = vwb["eps"]
        if not isinstance(e, list) or len(e) < 2 or not all(_finite(x) and 0 < x <= 1 for x in e):
            errors.append("veryweak.eps: must be a list of at least two values in (0, 1]")
        else:
            r = np.asarray(e[1:], float) / np.asarray(e[:-1], float)
            if not np.allclose(r, r[0], rtol=1e-9, atol=0) or r[0] == 1:
                errors.append("veryweak.eps: ε grid must be geometric")
    else:
        ex = vwb["eps_exponents"]
        if not (isinstance(ex, list) and len(ex) == 2 and all(isinstance(x, int) for x in ex)
                and 0 <= ex[0] < ex[1]):
            errors.append("veryweak.eps_exponents: must be [lo, hi] integers with 0 <= lo < hi")

    if errors:
        raise ConfigError(errors)

    cfg = ExperimentConfig(raw=merged, **{k: merged[k] for k in SCHEMA[""]})
    # invariant checks that need the constructed objects
    try:
        pot_obj = cfg.build_potential()
        problems = pot_obj.check(cfg.build_grid())
        errors += [f"potential: {p}" for p in problems]
    except (ValueError, ExpressionError) as exc:
        errors.append(f"potential: {exc}")
    try:
        prof = cfg.build_profile(with_atoms=True)
        prof.check()
    except (cf.ProfileError, ExpressionError, ValueError) as exc:
        errors.append(f"profile: {exc}")
    if errors:
        raise ConfigError(errors)
    return cfg


def reference_config(name: str) -> str:
    """TOML text of a built-in reference config."""
    if name not in REFERENCE:
        raise ConfigError([f"config: unknown built-in {name!r}; valid: {sorted(REFERENCE)}"])
    return resources.files("nhwave").joinpath("configs", f"{name}.toml").read_text(encoding="utf-8")


def load_config(source: str) -> ExperimentConfig:
    if source.startswith("builtin:"):
        return parse_config(reference_config(source.split(":", 1)[1]))
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"config: cannot read {source}: {exc.strerror}"]) from None
    return parse_config(text)


# output helpers ------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [_jsonable(x.real), _jsonable(x.imag)]
    if x is None or isinstance(x, str):
        return x
    return str(x)


@dataclass
class RunResult:
    command: str
    verdicts: dict
    details: dict
    files: list
    eigensystem: dict | None = None
    blowup: bool = False

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values()) and not self.blowup

    @property
    def exit_code(self) -> int:
        if self.blowup:
            return EXIT_BLOWUP
        return EXIT_OK if self.passed else EXIT_VERDICT


def _eig_summary(E: op.EigenSystem) -> dict:
    return {"M": E.n_modes, "weight_min": float(E.weights.min()), "weight_max": float(E.weights.max()),
            "biorth_residual": E.biorth_residual, "max_eigen_residual": float(np.max(E.eigen_residuals)),
            "shift": E.shift}


def _eigensystem(cfg: ExperimentConfig) -> op.EigenSystem:
    return op.compute_eigensystem(cfg.build_operator(), cfg.m_modes)


def _coeff_vector(source, E: op.EigenSystem, cfg: ExperimentConfig, rng, c: float) -> np.ndarray:
    m = E.n_modes
    out = np.zeros(m, dtype=complex)
    if isinstance(source, str):
        if source == "zero":
            return out
        gs = cfg.data["gevrey_s"] or max(cfg.s, 1.0)
        decay = np.exp(-cfg.data["A"] * E.weights ** (1.0 / gs))
        if source == "gevrey":
            return c * decay.astype(complex)
        if source == "random":
            return decay * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
        k = int(source[1:])
        if k >= m:
            raise ConfigError([f"data: mode u{k} is beyond m_modes = {m}"])
        out[k] = 1.0
        return out
    if isinstance(source, dict):
        re, im = source.get("re", []), source.get("im", [])
    else:
        re, im = source, []
    if len(re) > m or len(im) > m:
        raise ConfigError([f"data: coefficient list longer than m_modes = {m}"])
    out[:len(re)] += np.asarray(re, float)
    out[:len(im)] += 1j * np.asarray(im, float)
    return out


def _mode_data(cfg: ExperimentConfig, E: op.EigenSystem) -> est.ModeData:
    rng = np.random.default_rng(cfg.seed)
    v0 = _coeff_vector(cfg.data["v0"], E, cfg, rng, 1.0)
    v1 = _coeff_vector(cfg.data["v1"], E, cfg, rng, 1.0)
    f = cfg.data["f"]
    fh = None
    if isinstance(f, dict):
        k = int(f.get("mode", 0))
        if k >= E.n_modes:
            raise ConfigError([f"data.f.mode: {k} is beyond m_modes = {E.n_modes}"])
        g = Expression(f.get("g", "0"), "t")
        unit = np.zeros(E.n_modes, dtype=complex)
        unit[k] = 1.0

        def fh(t, _g=g, _u=unit):
            return _u[:, None] * np.asarray(_g(np.asarray(t, float)), dtype=complex)[None, :]
    return est.ModeData(v0, v1, fh)


# pipelines -----------------------------------------------------------------

def run_spectrum(cfg: ExperimentConfig, out: Path, threads: int = 1) -> RunResult:
    E = _eigensystem(cfg)
    rows = [(lam.real, lam.imag, k, w, r) for k, (lam, w, r)
            in enumerate(zip(E.eigenvalues, E.weights, E.eigen_residuals))]
    write_csv(out / "spectrum.csv", ["lambda_re", "lambda_im", "mode", "weight", "residual"], rows)
    files = ["spectrum.csv"]
    verdicts = {"biorthogonality": E.biorth_residual <= E.tol_biorth,
                "eigen_residuals": bool(np.max(E.eigen_residuals) <= E.tol_resid)}
    details = {}
    if cfg.potential["re"] is None and cfg.potential["preset"] == "harmonic":
        details["oracle_max_error"] = float(np.max(np.abs(E.eigenvalues - (2 * np.arange(E.n_modes) + 1))))
    refs = cfg.spectrum["refinements"]
    if refs:
        ops = vw._map(cfg.build_operator, sorted(set(refs)), threads)
        rep = op.verify_discreteness(ops, cfg.m_modes)
        drows = []
        for n, lam in zip(rep.n_points, rep.eigenvalues):
            for k, z in enumerate(lam):
                drows.append((n, k, z.real, z.imag))
        write_csv(out / "discreteness.csv", ["n_points", "mode", "lambda_re", "lambda_im"], drows)
        write_csv(out / "discreteness_drift.csv", ["mode", "drift", "gap", "flagged"],
                  [(k, d, g, bool(fl)) for k, (d, g, fl) in enumerate(zip(rep.drift, rep.gaps, rep.flagged))])
        files += ["discreteness.csv", "discreteness_drift.csv"]
        verdicts["discreteness_stable"] = bool(rep.stable)
        details["flagged_modes"] = np.flatnonzero(rep.flagged).tolist()
    return RunResult("spectrum", verdicts, details, files, _eig_summary(E))


def run_transform(cfg: ExperimentConfig, out: Path, threads: int = 1) -> RunResult:
    E = _eigensystem(cfg)
    rng = np.random.default_rng(cfg.seed)
    tb = cfg.transform
    rows, nrows = [], []
    for trial in range(tb["n_trials"]):
        c = rng.standard_normal(E.n_modes) + 1j * rng.standard_normal(E.n_modes)
        f = E.right @ c
        ff = E.grid.norm(f) ** 2
        co = nf.forward(f, E)
        pair = nf.parseval_pairing(co, co)
        back = nf.inverse(co).values
        rows.append((trial, abs(pair - ff) / ff, E.grid.norm(back - f) / math.sqrt(ff)))
        for s in tb["sobolev_s"]:
            r = nf.sobolev_norm(co, s, imag_tol=None).record()
            nrows.append((trial, r["kind"], r["s"], r["A"], r["value"], r["tail"], r["imag_residue"]))
    write_csv(out / "transform.csv", ["trial", "pairing_rel_error", "roundtrip_rel_error"], rows)
    write_csv(out / "norms.csv", ["trial", "kind", "s", "A", "value", "tail", "imag_residue"], nrows)
    pe = max(r[1] for r in rows)
    re_ = max(r[2] for r in rows)
    verdicts = {"plancherel": pe <= tb["tol"], "roundtrip": re_ <= tb["tol"]}
    return RunResult("transform-check", verdicts, {"max_pairing_error": pe, "max_roundtrip_error": re_},
                     ["transform.csv", "norms.csv"], _eig_summary(E))


def run_solve(cfg: ExperimentConfig, out: Path, threads: int = 1) -> RunResult:
    p = cfg.build_profile()
    if not p.is_regular:
        raise ConfigError(["profile: solve needs a regular profile; use veryweak for atoms"])
    E = _eigensystem(cfg)
    data = _mode_data(cfg, E)
    idx = np.arange(E.n_modes)
    sys_ = ev.assemble_mode_system(E, idx, p, data.f, cfl=cfg.cfl)
    V0 = ev.initial_state(E.weights, data.v0hat, data.v1hat)
    tr = ev.integrate_mode(sys_, V0)
    rows = []
    for k in idx:
        V = tr.V[k]
        for j, t in enumerate(tr.t):
            rows.append((k, t, V[j, 0].real, V[j, 0].imag, V[j, 1].real, V[j, 1].imag, tr.energy[k, j]))
    write_csv(out / "traces.csv", ["mode", "t", "V1_re", "V1_im", "V2_re", "V2_im", "E"], rows)
    norms = ev.sweep_norms(tr.V, E.weights, cfg.s)
    write_csv(out / "sweep.csv", ["t", "norm"], list(zip(tr.t, norms)))
    details = {"n_steps": sys_.n_steps, "norm_initial": float(norms[0]), "norm_final": float(norms[-1]),
               "blowup_modes": [int(k) for k in idx if np.asarray(tr.blowup_step)[k] >= 0]}
    return RunResult("solve", {"finite": not tr.blown_up}, details, ["traces.csv", "sweep.csv"],
                     _eig_summary(E), blowup=tr.blown_up)


def _scalars(d: dict) -> dict:
    return {k: v for k, v in d.items() if np.isscalar(v) or isinstance(v, (bool, np.bool_))}


def run_verify(cfg: ExperimentConfig, out: Path, case: int, threads: int = 1) -> RunResult:
    p = cfg.build_profile()
    E = _eigensystem(cfg)
    data = _mode_data(cfg, E)
    fn = {1: est.verify_case1, 2: est.verify_case2, 3: est.verify_case3, 4: est.verify_case4}[case]
    r = fn(E, p, data, cfg.s, cfg.cfl)
    verdicts = {"bound": r.passed}
    details = {"report": r.summary(), "details": _scalars(r.details)}
    files = ["margins.csv"]
    if case == 1:
        d = r.details
        write_csv(out / "margins.csv", ["t", "lhs", "rhs", "margin"], zip(d["t"], d["lhs"], [d["rhs"]] * len(d["t"]), r.margins))
        verdicts["sandwich"] = bool(d["sandwich"])
    else:
        idx = np.arange(E.n_modes)
        g = r.details["growth"]
        write_csv(out / "margins.csv", ["mode", "weight", "margin", "growth"],
                  zip(idx, E.weights, r.margins, g))
    if case == 2:
        rs = cf.root_estimate_slopes(p, 2.0 ** -np.arange(3, 11))
        write_csv(out / "root_slopes.csv", ["eps", "error", "derivative"],
                  zip(rs["eps"], rs["error"], rs["derivative"]))
        files.append("root_slopes.csv")
        a = p.alpha
        details["root_error_slope"] = rs["error_slope"]
        details["root_derivative_slope"] = rs["derivative_slope"]
        verdicts["root_slopes"] = bool(abs(rs["error_slope"] - a) <= 0.15
                                       and abs(rs["derivative_slope"] - (a - 1)) <= 0.15)
    if case == 3:
        verdicts["commutator"] = bool(r.details["commutator"])
        verdicts["sandwich"] = bool(r.details["sandwich"])
    return RunResult("verify", verdicts, details, files, _eig_summary(E))


def _perturbation(kind: str):
    if kind == "exp":
        return lambda e: math.exp(-1.0 / e)
    if kind == "linear":
        return lambda e: e
    return None


def run_veryweak(cfg: ExperimentConfig, out: Path, experiment: str, threads: int = 1) -> RunResult:
    E = _eigensystem(cfg)
    data = _mode_data(cfg, E)
    eps = cfg.eps_grid()
    vb = cfg.veryweak
    if experiment == "existence":
        p = cfg.build_profile(with_atoms=True)
        r = vw.existence_experiment(E, p, data, cfg.s, eps, vb["rule"], cfg.cfl, vb["slope_tol"], vb["C"],
                                    threads=threads)
        n = r.net
        write_csv(out / "solution_net.csv", ["eps", "omega", "norm_v", "norm_vt", "n_steps", "blown_up"],
                  zip(n.eps, n.omega, n.norm_v, n.norm_vt, n.n_steps, n.blowup))
        write_csv(out / "coefficient_slopes.csv", ["order", "slope", "expected"],
                  [(k, r.coefficient_slopes[k], r.expected_slopes[k]) for k in sorted(r.coefficient_slopes)])
        verdicts = {"coefficient_slopes": r.slope_ok, "lower_bound": r.lower_bound_ok,
                    "moderate": r.classification.kind == "moderate"}
        details = {"classification": r.classification.verdict, "slope": r.classification.slope,
                   "lower_bound": r.lower_bound, "scale": {"L1": r.scale.L1, "L2": r.scale.L2,
                                                           "L": r.scale.L, "C": r.scale.C,
                                                           "inputs": r.scale.inputs}}
        return RunResult("veryweak existence", verdicts, details,
                         ["solution_net.csv", "coefficient_slopes.csv"], _eig_summary(E),
                         blowup=bool(np.any(n.blowup)))
    p = cfg.build_profile()
    if experiment == "uniqueness":
        alt = cf.Mollifier(beta=vb["alt_beta"]) if vb["alt_beta"] else None
        r = vw.uniqueness_experiment(E, p, data, cfg.s, eps, None, alt, _perturbation(vb["perturbation"]),
                                     cfg.cfl, vb["q_max"], threads=threads)
        write_csv(out / "uniqueness.csv", ["eps", "hypothesis_norm", "difference_norm", "floor"],
                  zip(r.eps, r.hypothesis_norms, r.difference_norms, r.floor))
        verdicts = {"unique": r.passed}
        details = {"verdict": r.verdict, "hypothesis": r.hypothesis.verdict,
                   "difference": r.difference.verdict, "certified_q": r.difference.certified_q}
        blow = not bool(np.all(np.isfinite(r.difference_norms)))
        return RunResult("veryweak uniqueness", verdicts, details, ["uniqueness.csv"], _eig_summary(E), blow)
    r = vw.consistency_experiment(E, p, data, cfg.s, eps, None, cfg.cfl, vb["tol"], threads=threads)
    rel = r.differences / r.reference_norm if r.reference_norm > 0 else r.differences
    write_csv(out / "consistency.csv", ["eps", "difference", "relative"], zip(r.eps, r.differences, rel))
    verdicts = {"tail_decreasing": r.tail_decreasing, "final_relative": r.final_relative <= r.tol}
    details = {"order": r.order, "final_relative": r.final_relative, "reference_norm": r.reference_norm}
    blow = not bool(np.all(np.isfinite(r.differences)))
    return RunResult("veryweak consistency", verdicts, details, ["consistency.csv"], _eig_summary(E), blow)


def run(cfg: ExperimentConfig, command: str, out: Path, case: int | None = None,
        experiment: str | None = None, threads: int = 1) -> RunResult:
    """Run one pipeline, write its CSVs and ``report.json`` into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if command == "spectrum":
        res = run_spectrum(cfg, out, threads)
    elif command == "transform-check":
        res = run_transform(cfg, out, threads)
    elif command == "solve":
        res = run_solve(cfg, out, threads)
    elif command == "verify":
        case = case if case is not None else cfg.case
        if case is None:
            raise ConfigError([f"case: verify needs a case selector; valid: {list(CASES)}"])
        res = run_verify(cfg, out, case, threads)
    elif command == "veryweak":
        if experiment not in EXPERIMENTS:
            raise ConfigError([f"experiment: {experiment!r} is not one of {list(EXPERIMENTS)}"])
        res = run_veryweak(cfg, out, experiment, threads)
    else:
        raise ConfigError([f"command: {command!r} is not one of {list(COMMANDS)}"])
    report = {
        "header": {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                   "version": __version__, "wall_time_s": time.perf_counter() - t0},
        "command": res.command,
        "config": cfg.echo(),
        "eigensystem": res.eigensystem,
        "verdicts": res.verdicts,
        "passed": res.passed,
        "exit_code": res.exit_code,
        "details": res.details,
        "files": res.files,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return res


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="TOML config path, or builtin:<name> for a reference config")
    common.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for ε families")
    parser = argparse.ArgumentParser(prog="nhwave", description="Mode-by-mode wave experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="eigenvalues, residuals, refinement drift")
    sub.add_parser("transform-check", parents=[common], help="Plancherel and round-trip checks")
    sub.add_parser("solve", parents=[common], help="integrate every mode and dump traces")
    v = sub.add_parser("verify", parents=[common], help="check an energy estimate")
    v.add_argument("--case", default=None, help="1, 2, 3 or 4 (overrides the config)")
    w = sub.add_parser("veryweak", parents=[common], help="very weak solution experiments")
    w.add_argument("experiment", choices=EXPERIMENTS)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        case = None
        if args.command == "verify" and args.case is not None:
            case = _case_index(args.case)
            if case is None:
                raise ConfigError([f"--case: unknown case selector {args.case!r}; valid: {list(CASES)}"])
        if args.threads < 1:
            raise ConfigError([f"--threads: must be >= 1, got {args.threads}"])
        out = Path(args.out or cfg.out or "out")
        res = run(cfg, args.command, out, case, getattr(args, "experiment", None), args.threads)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for k, ok in res.verdicts.items():
        print(f"{k}: {'pass' if ok else 'FAIL'}")
    for k in ("verdict", "classification"):
        if k in res.details:
            print(f"{k}: {res.details[k]}")
    print(f"wrote {', '.join(res.files)} and report.json to {out}")
    return res.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
