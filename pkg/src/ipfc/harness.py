"""Experiment drivers: configuration files, initial conditions, the
convergence / evolution / multi-scale studies, and every file output.

Config files are flat key/value text with typed sections::

    # comment
    [section]
    key = value

Scalars are decimal text, lists are whitespace-separated, matrices separate
rows with ';'.  Unknown sections or keys are rejected.  See the README for
the full grammar and the per-section key tables.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .field import (
    SpectralField,
    dump_field,
    enforce_hermitian,
    load_field,
    norm_ap,
    project_mean,
    zeros_field,
)
from .lattice import IndexGrid, OperatorSymbol, ProjectionSpec, build_grid, build_symbol, sample_real_space
from .model import ModelParams, energy
from .sav_cn import StepReport, evolve, init_state, modified_energy
from .sdc import sdc_solve

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "serialize_config",
    "dodecagonal_projection",
    "ring_star_modes",
    "build_initial",
    "run_evolution",
    "run_convergence",
    "run_scales_study",
    "spectrum_report",
    "classify_fold",
    "render_field",
    "write_pgm",
    "ENERGY_HEADER",
]

ENERGY_HEADER = "step,t,tau,original_energy,modified_energy,R,w_norm_sq"
SPECTRUM_HEADER = "kx,ky,amplitude"
RATES_HEADER = "scheme,NT,error,rate"

_REQUIRED = object()


def dodecagonal_projection() -> np.ndarray:
    """Projection matrix for 12-fold planar symmetry in a 4-d embedding:
    columns are unit vectors at 0, 30, 60 and 90 degrees."""
    c = math.cos
    s = math.sin
    return np.array(
        [
            [1.0, c(math.pi / 6), c(math.pi / 3), 0.0],
            [0.0, s(math.pi / 6), s(math.pi / 3), 1.0],
        ]
    )


# -- config value converters --------------------------------------------------


def _c_int(v: str) -> int:
    try:
        return int(v)
    except ValueError as exc:
        raise ConfigError(f"expected integer, got {v!r}") from exc


def _c_float(v: str) -> float:
    try:
        return float(v)
    except ValueError as exc:
        raise ConfigError(f"expected number, got {v!r}") from exc


def _c_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in {"1", "true", "yes", "on"}:
        return True
    if low in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"expected boolean, got {v!r}")


def _c_ints(v: str) -> Tuple[int, ...]:
    return tuple(_c_int(t) for t in v.split())


def _c_floats(v: str) -> Tuple[float, ...]:
    return tuple(_c_float(t) for t in v.split())


def _c_str(v: str) -> str:
    return v


def _c_strs(v: str) -> Tuple[str, ...]:
    return tuple(v.split())


def _c_matrix(v: str) -> np.ndarray:
    rows = [r.strip() for r in v.split(";")]
    data = [[_c_float(t) for t in r.split()] for r in rows if r]
    if not data:
        raise ConfigError("empty matrix value")
    width = len(data[0])
    if any(len(r) != width for r in data):
        raise ConfigError("matrix rows have unequal lengths")
    return np.array(data, dtype=float)


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_matrix(m: np.ndarray) -> str:
    return " ; ".join(" ".join(_fmt_float(v) for v in row) for row in np.atleast_2d(m))


# -- config sections -----------------------------------------------------------


@dataclass
class ProjectionCfg:
    d: int
    n: int
    P: np.ndarray
    B: np.ndarray
    sizes: Tuple[int, ...]


@dataclass
class ModelCfg:
    eps: float
    alpha: float
    q: Optional[Tuple[float, ...]] = None
    c1: float = 1e16
    dealias: bool = False


@dataclass
class TimeCfg:
    T: float
    nt: int
    scheme: str = "sav_cn"
    sweeps: int = 1
    block: int = 4096


@dataclass
class InitialCfg:
    kind: str
    amplitude: float = 1.0
    modes: Optional[List[Tuple[Tuple[int, ...], float, float]]] = None
    file: Optional[str] = None


@dataclass
class OutputCfg:
    dir: str = "."
    energy_csv: str = "energy.csv"
    dump_times: Tuple[float, ...] = ()
    dump_prefix: str = "state"


@dataclass
class RenderCfg:
    window: Tuple[float, ...]
    resolution: Tuple[int, ...]
    floor_rel: float = 1e-8


@dataclass
class SpectrumCfg:
    threshold_rel: float = 0.1


@dataclass
class ConvergenceCfg:
    nt_list: Tuple[int, ...]
    reference_nt: int
    schemes: Tuple[str, ...] = ("sav_cn", "sav_cn_sdc")
    csv: str = "rates.csv"


@dataclass
class ScalesCfg:
    m_list: Tuple[int, ...]
    s: float = 2.0 * math.cos(math.pi / 12.0)
    amplitude: float = 0.3
    jitter: float = 0.0
    noise: float = 0.0
    seed: int = 0
    ring_tol: float = 1e-8


@dataclass
class ExperimentConfig:
    projection: ProjectionCfg
    model: ModelCfg
    time: Optional[TimeCfg] = None
    initial: Optional[InitialCfg] = None
    output: OutputCfg = dc_field(default_factory=OutputCfg)
    render: Optional[RenderCfg] = None
    spectrum: SpectrumCfg = dc_field(default_factory=SpectrumCfg)
    convergence: Optional[ConvergenceCfg] = None
    scales: Optional[ScalesCfg] = None

    # -- builders ------------------------------------------------------------

    def build_spec(self) -> ProjectionSpec:
        p = self.projection
        try:
            return ProjectionSpec(d=p.d, n=p.n, P=p.P, B=p.B)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_grid(self, spec: Optional[ProjectionSpec] = None) -> IndexGrid:
        spec = spec or self.build_spec()
        try:
            return build_grid(spec, self.projection.sizes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_params(self, q: Optional[Sequence[float]] = None) -> ModelParams:
        m = self.model
        q = tuple(q) if q is not None else m.q
        if q is None:
            raise ConfigError("[model] q is required for this command")
        try:
            return ModelParams(q=q, eps=m.eps, alpha=m.alpha, c1=m.c1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _parse_sections(text: str) -> dict:
    sections: dict = {}
    current = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {ln}: malformed section header {raw.strip()!r}")
            name = line[1:-1].strip()
            if name in sections:
                raise ConfigError(f"line {ln}: duplicate section [{name}]")
            sections[name] = {}
            current = name
        else:
            if current is None:
                raise ConfigError(f"line {ln}: key outside any section")
            if "=" not in line:
                raise ConfigError(f"line {ln}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in sections[current]:
                raise ConfigError(f"line {ln}: duplicate key {key!r} in [{current}]")
            sections[current][key] = value
    return sections


def _take(section: str, raw: dict, key: str, conv, default=_REQUIRED):
    if key in raw:
        value = raw.pop(key)
        try:
            return conv(value)
        except ConfigError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    if default is _REQUIRED:
        raise ConfigError(f"[{section}] missing required key {key!r}")
    return default


def _reject_leftover(section: str, raw: dict) -> None:
    if raw:
        raise ConfigError(f"[{section}] unknown keys: {sorted(raw)}")


def _parse_modes(value: str, n: int) -> List[Tuple[Tuple[int, ...], float, float]]:
    modes = []
    for row in value.split(";"):
        row = row.strip()
        if not row:
            continue
        tokens = row.split()
        if len(tokens) != n + 2:
            raise ConfigError(
                f"mode rows need {n} indices, amplitude and phase; got {row!r}"
            )
        h = tuple(_c_int(t) for t in tokens[:n])
        modes.append((h, _c_float(tokens[n]), _c_float(tokens[n + 1])))
    if not modes:
        raise ConfigError("mode list is empty")
    return modes


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError on any problem."""
    sections = _parse_sections(text)

    known = {
        "projection",
        "model",
        "time",
        "initial",
        "output",
        "render",
        "spectrum",
        "convergence",
        "scales",
    }
    unknown = set(sections) - known
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    if "projection" not in sections:
        raise ConfigError("missing required section [projection]")
    if "model" not in sections:
        raise ConfigError("missing required section [model]")

    raw = dict(sections["projection"])
    d = _take("projection", raw, "d", _c_int)
    n = _take("projection", raw, "n", _c_int)

    def mat(value: str) -> np.ndarray:
        if value.strip().lower() == "identity":
            if d != n:
                raise ConfigError("'identity' projections need d == n")
            return np.eye(n)
        return _c_matrix(value)

    P = _take("projection", raw, "P", mat)
    B = _take("projection", raw, "B", lambda v: np.eye(n) if v.strip().lower() == "identity" else _c_matrix(v))
    sizes = _take("projection", raw, "sizes", _c_ints)
    _reject_leftover("projection", raw)
    projection = ProjectionCfg(d=d, n=n, P=P, B=B, sizes=sizes)

    raw = dict(sections["model"])
    model = ModelCfg(
        q=_take("model", raw, "q", _c_floats, None),
        eps=_take("model", raw, "eps", _c_float),
        alpha=_take("model", raw, "alpha", _c_float),
        c1=_take("model", raw, "c1", _c_float, 1e16),
        dealias=_take("model", raw, "dealias", _c_bool, False),
    )
    _reject_leftover("model", raw)

    time_cfg = None
    if "time" in sections:
        raw = dict(sections["time"])
        time_cfg = TimeCfg(
            T=_take("time", raw, "T", _c_float),
            nt=_take("time", raw, "nt", _c_int),
            scheme=_take("time", raw, "scheme", _c_str, "sav_cn"),
            sweeps=_take("time", raw, "sweeps", _c_int, 1),
            block=_take("time", raw, "block", _c_int, 4096),
        )
        _reject_leftover("time", raw)
        if time_cfg.scheme not in {"sav_cn", "sav_cn_sdc"}:
            raise ConfigError(f"[time] scheme must be sav_cn or sav_cn_sdc, got {time_cfg.scheme!r}")
        if time_cfg.T <= 0 or time_cfg.nt < 1:
            raise ConfigError("[time] needs T > 0 and nt >= 1")

    initial = None
    if "initial" in sections:
        raw = dict(sections["initial"])
        kind = _take("initial", raw, "kind", _c_str)
        if kind not in {"sine", "mode_list", "field_file"}:
            raise ConfigError(f"[initial] kind must be sine, mode_list or field_file, got {kind!r}")
        initial = InitialCfg(
            kind=kind,
            amplitude=_take("initial", raw, "amplitude", _c_float, 1.0),
            modes=_take("initial", raw, "modes", lambda v: _parse_modes(v, n), None),
            file=_take("initial", raw, "file", _c_str, None),
        )
        _reject_leftover("initial", raw)
        if kind == "mode_list" and initial.modes is None:
            raise ConfigError("[initial] mode_list needs a 'modes' key")
        if kind == "field_file" and initial.file is None:
            raise ConfigError("[initial] field_file needs a 'file' key")

    raw = dict(sections.get("output", {}))
    output = OutputCfg(
        dir=_take("output", raw, "dir", _c_str, "."),
        energy_csv=_take("output", raw, "energy_csv", _c_str, "energy.csv"),
        dump_times=_take("output", raw, "dump_times", _c_floats, ()),
        dump_prefix=_take("output", raw, "dump_prefix", _c_str, "state"),
    )
    _reject_leftover("output", raw)

    render = None
    if "render" in sections:
        raw = dict(sections["render"])
        render = RenderCfg(
            window=_take("render", raw, "window", _c_floats),
            resolution=_take("render", raw, "resolution", _c_ints),
            floor_rel=_take("render", raw, "floor_rel", _c_float, 1e-8),
        )
        _reject_leftover("render", raw)
        if len(render.window) != 2 * d or len(render.resolution) != d:
            raise ConfigError(f"[render] window needs {2 * d} numbers and resolution {d}")

    raw = dict(sections.get("spectrum", {}))
    spectrum = SpectrumCfg(threshold_rel=_take("spectrum", raw, "threshold_rel", _c_float, 0.1))
    _reject_leftover("spectrum", raw)
    if not spectrum.threshold_rel > 0:
        raise ConfigError("[spectrum] threshold_rel must be positive")

    convergence = None
    if "convergence" in sections:
        raw = dict(sections["convergence"])
        convergence = ConvergenceCfg(
            nt_list=_take("convergence", raw, "nt_list", _c_ints),
            reference_nt=_take("convergence", raw, "reference_nt", _c_int),
            schemes=_take("convergence", raw, "schemes", _c_strs, ("sav_cn", "sav_cn_sdc")),
            csv=_take("convergence", raw, "csv", _c_str, "rates.csv"),
        )
        _reject_leftover("convergence", raw)
        bad = [s for s in convergence.schemes if s not in {"sav_cn", "sav_cn_sdc"}]
        if bad:
            raise ConfigError(f"[convergence] unknown schemes {bad}")
        if not convergence.nt_list:
            raise ConfigError("[convergence] nt_list is empty")
        if convergence.reference_nt <= max(convergence.nt_list):
            raise ConfigError("[convergence] reference_nt must exceed every tested nt")

    scales = None
    if "scales" in sections:
        raw = dict(sections["scales"])
        scales = ScalesCfg(
            m_list=_take("scales", raw, "m_list", _c_ints),
            s=_take("scales", raw, "s", _c_float, 2.0 * math.cos(math.pi / 12.0)),
            amplitude=_take("scales", raw, "amplitude", _c_float, 0.3),
            jitter=_take("scales", raw, "jitter", _c_float, 0.0),
            noise=_take("scales", raw, "noise", _c_float, 0.0),
            seed=_take("scales", raw, "seed", _c_int, 0),
            ring_tol=_take("scales", raw, "ring_tol", _c_float, 1e-8),
        )
        _reject_leftover("scales", raw)
        if any(m < 1 for m in scales.m_list):
            raise ConfigError("[scales] m_list entries must be >= 1")

    return ExperimentConfig(
        projection=projection,
        model=model,
        time=time_cfg,
        initial=initial,
        output=output,
        render=render,
        spectrum=spectrum,
        convergence=convergence,
        scales=scales,
    )


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(parse(text))) == parse(text)."""
    out = []
    p = cfg.projection
    out.append("[projection]")
    out.append(f"d = {p.d}")
    out.append(f"n = {p.n}")
    out.append(f"P = {_fmt_matrix(p.P)}")
    out.append(f"B = {_fmt_matrix(p.B)}")
    out.append("sizes = " + " ".join(str(s) for s in p.sizes))

    m = cfg.model
    out.append("")
    out.append("[model]")
    if m.q is not None:
        out.append("q = " + " ".join(_fmt_float(v) for v in m.q))
    out.append(f"eps = {_fmt_float(m.eps)}")
    out.append(f"alpha = {_fmt_float(m.alpha)}")
    out.append(f"c1 = {_fmt_float(m.c1)}")
    out.append(f"dealias = {'true' if m.dealias else 'false'}")

    if cfg.time is not None:
        t = cfg.time
        out.append("")
        out.append("[time]")
        out.append(f"T = {_fmt_float(t.T)}")
        out.append(f"nt = {t.nt}")
        out.append(f"scheme = {t.scheme}")
        out.append(f"sweeps = {t.sweeps}")
        out.append(f"block = {t.block}")

    if cfg.initial is not None:
        i = cfg.initial
        out.append("")
        out.append("[initial]")
        out.append(f"kind = {i.kind}")
        out.append(f"amplitude = {_fmt_float(i.amplitude)}")
        if i.modes is not None:
            rows = " ; ".join(
                " ".join(str(v) for v in h) + f" {_fmt_float(a)} {_fmt_float(ph)}"
                for h, a, ph in i.modes
            )
            out.append(f"modes = {rows}")
        if i.file is not None:
            out.append(f"file = {i.file}")

    o = cfg.output
    out.append("")
    out.append("[output]")
    out.append(f"dir = {o.dir}")
    out.append(f"energy_csv = {o.energy_csv}")
    if o.dump_times:
        out.append("dump_times = " + " ".join(_fmt_float(v) for v in o.dump_times))
    out.append(f"dump_prefix = {o.dump_prefix}")

    if cfg.render is not None:
        r = cfg.render
        out.append("")
        out.append("[render]")
        out.append("window = " + " ".join(_fmt_float(v) for v in r.window))
        out.append("resolution = " + " ".join(str(v) for v in r.resolution))
        out.append(f"floor_rel = {_fmt_float(r.floor_rel)}")

    out.append("")
    out.append("[spectrum]")
    out.append(f"threshold_rel = {_fmt_float(cfg.spectrum.threshold_rel)}")

    if cfg.convergence is not None:
        c = cfg.convergence
        out.append("")
        out.append("[convergence]")
        out.append("nt_list = " + " ".join(str(v) for v in c.nt_list))
        out.append(f"reference_nt = {c.reference_nt}")
        out.append("schemes = " + " ".join(c.schemes))
        out.append(f"csv = {c.csv}")

    if cfg.scales is not None:
        s = cfg.scales
        out.append("")
        out.append("[scales]")
        out.append("m_list = " + " ".join(str(v) for v in s.m_list))
        out.append(f"s = {_fmt_float(s.s)}")
        out.append(f"amplitude = {_fmt_float(s.amplitude)}")
        out.append(f"jitter = {_fmt_float(s.jitter)}")
        out.append(f"noise = {_fmt_float(s.noise)}")
        out.append(f"seed = {s.seed}")
        out.append(f"ring_tol = {_fmt_float(s.ring_tol)}")

    return "\n".join(out) + "\n"


# -- initial conditions --------------------------------------------------------


def ring_star_modes(
    grid: IndexGrid,
    radii: Sequence[float],
    amplitude: float,
    jitter: float = 0.0,
    seed: int = 0,
    tol: float = 1e-8,
) -> List[Tuple[Tuple[int, ...], float, float]]:
    """Mode list with equal (optionally jittered) amplitudes at every grid
    mode whose wavevector lies on one of the given circles.

    Jitter perturbs each conjugate pair by the same deterministic factor so
    the resulting field stays real; it is the knob that breaks exact
    rotational degeneracy when the relaxed state must pick an orientation.
    """
    kabs = np.sqrt((grid.kvec**2).sum(axis=1))
    sel = np.zeros(grid.total, dtype=bool)
    for r in radii:
        sel |= np.abs(kabs - float(r)) <= tol
    sel[grid.zero_index] = False
    sel &= grid.live_mask.ravel()
    flats = np.flatnonzero(sel)
    pair_keys = sorted({int(min(i, grid.neg_flat[i])) for i in flats})
    rng = np.random.default_rng(seed)
    modes: List[Tuple[Tuple[int, ...], float, float]] = []
    for key in pair_keys:
        amp = amplitude * (1.0 + jitter * (2.0 * rng.random() - 1.0)) if jitter else amplitude
        partner = int(grid.neg_flat[key])
        modes.append((tuple(int(v) for v in grid.h_matrix[key]), amp, 0.0))
        if partner != key:
            modes.append((tuple(int(v) for v in grid.h_matrix[partner]), amp, 0.0))
    return modes


def field_from_modes(grid: IndexGrid, modes) -> SpectralField:
    """Accumulate amplitude * exp(i phase) at each listed mode, then
    symmetrize and project out the mean."""
    f = zeros_field(grid)
    flat = f.coeffs.ravel()
    for h, amp, phase in modes:
        flat[grid.flat_index(h)] += amp * np.exp(1j * phase)
    return project_mean(enforce_hermitian(f))


def banded_noise_field(
    grid: IndexGrid, symbol: OperatorSymbol, scale: float, seed: int, g2_max: float = 25.0
) -> SpectralField:
    """Deterministic conjugate-symmetric noise restricted to the dynamically
    active shells where the operator symbol is small.

    Strongly damped modes are excluded: the midpoint stepper rings on their
    content instead of removing it, which would swamp the energy diagnostics.
    """
    rng = np.random.default_rng(seed)
    c = scale * (rng.standard_normal(grid.sizes) + 1j * rng.standard_normal(grid.sizes))
    f = SpectralField(grid, c * (symbol.g2 <= g2_max))
    return project_mean(enforce_hermitian(f))


def build_initial(cfg: ExperimentConfig, grid: IndexGrid, base_dir: str = ".") -> SpectralField:
    if cfg.initial is None:
        raise ConfigError("missing required section [initial]")
    icfg = cfg.initial
    if icfg.kind == "sine":
        e1 = tuple([1] + [0] * (len(grid.sizes) - 1))
        f = zeros_field(grid)
        flat = f.coeffs.ravel()
        try:
            flat[grid.flat_index(e1)] = -0.5j * icfg.amplitude
            flat[grid.flat_index(tuple(-v for v in e1))] = 0.5j * icfg.amplitude
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return f
    if icfg.kind == "mode_list":
        try:
            return field_from_modes(grid, icfg.modes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    path = os.path.join(base_dir, icfg.file)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            f = load_field(fh, grid)
    except OSError as exc:
        raise ConfigError(f"cannot read initial field file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return project_mean(enforce_hermitian(f))


# -- spectra and rasters ---------------------------------------------------------


def classify_fold(kvecs: np.ndarray, amps: np.ndarray) -> int:
    """Largest s in {12, 6, 4, 2} under which the peak set is invariant
    (rotation by 2 pi / s), else 1.  Peak matching uses the angular and
    radial tolerance 1e-6 and a 5% relative amplitude tolerance."""
    radii = np.hypot(kvecs[:, 0], kvecs[:, 1])
    angles = np.arctan2(kvecs[:, 1], kvecs[:, 0])
    for s in (12, 6, 4, 2):
        dtheta = 2.0 * math.pi / s
        if _invariant_under(radii, angles, amps, dtheta):
            return s
    return 1


def _invariant_under(radii, angles, amps, dtheta) -> bool:
    for i in range(radii.size):
        if radii[i] <= 1e-12:
            continue  # the origin is rotation-invariant
        target = angles[i] + dtheta
        dr = np.abs(radii - radii[i])
        da = np.abs((angles - target + math.pi) % (2.0 * math.pi) - math.pi)
        damp = np.abs(amps - amps[i]) <= 0.05 * np.maximum(amps, amps[i])
        ok = (dr <= max(1e-6, 1e-6 * radii[i])) & (da <= 1e-6) & damp
        if not ok.any():
            return False
    return True


def spectrum_report(fld: SpectralField, grid: IndexGrid, threshold_rel: float):
    """Peaks above threshold_rel * max amplitude and the symmetry verdict.

    Returns (kxy, amps, verdict): kxy is (n, 2) with a zero second column for
    one-dimensional fields, rows sorted lexicographically for deterministic
    output.
    """
    if threshold_rel <= 0:
        raise ValueError("threshold must be positive")
    flat = np.abs(fld.coeffs.ravel())
    mx = float(flat.max()) if flat.size else 0.0
    if mx <= 0.0:
        raise ValueError("empty spectrum: the field is identically zero")
    mask = flat > threshold_rel * mx
    kv = grid.kvec[mask]
    amps = flat[mask]
    d = kv.shape[1]
    if d == 1:
        kxy = np.column_stack([kv[:, 0], np.zeros(kv.shape[0])])
    elif d == 2:
        kxy = kv.copy()
    else:
        raise ValueError("symmetry classification supports d <= 2 only")
    order = np.lexsort((kxy[:, 1], kxy[:, 0]))
    kxy = kxy[order]
    amps = amps[order]
    fold = classify_fold(kxy, amps)
    return kxy, amps, f"{fold}-fold"


def write_spectrum_csv(path: str, kxy: np.ndarray, amps: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SPECTRUM_HEADER + "\n")
        for (kx, ky), a in zip(kxy, amps):
            fh.write(f"{_fmt_float(kx)},{_fmt_float(ky)},{_fmt_float(a)}\n")


def render_field(
    fld: SpectralField,
    spec: ProjectionSpec,
    grid: IndexGrid,
    window,
    resolution,
    floor_rel: float = 1e-8,
) -> np.ndarray:
    """Grayscale raster of the field over the window: linear map of the
    sampled range onto 0..255, a degenerate range maps to uniform 128."""
    cmax = float(np.abs(fld.coeffs).max()) if fld.grid.total else 0.0
    floor = floor_rel * cmax
    raster = sample_real_space(spec, grid, fld, window, resolution, amplitude_floor=floor)
    lo = float(raster.min())
    hi = float(raster.max())
    if hi - lo <= 1e-12 * max(1.0, abs(hi), abs(lo)):
        return np.full(raster.shape, 128, dtype=np.uint8)
    img = np.rint((raster - lo) / (hi - lo) * 255.0)
    return img.astype(np.uint8)


def write_pgm(path: str, raster: np.ndarray) -> None:
    """Binary P5 graymap.  For 2-d rasters the first raster axis becomes the
    image column so a field varying along the first window axis renders as
    vertical stripes; 1-d rasters become a single-row strip."""
    img = raster.T if raster.ndim == 2 else raster.reshape(1, -1)
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


# -- drivers ---------------------------------------------------------------------


def _energy_row(step: int, t: float, tau: float, rep: StepReport) -> str:
    return (
        f"{step},{_fmt_float(t)},{_fmt_float(tau)},{_fmt_float(rep.original_energy)},"
        f"{_fmt_float(rep.modified_energy)},{_fmt_float(rep.r_value)},{_fmt_float(rep.w_norm_sq)}"
    )


def _initial_report(phi0, symbol, params, dealias) -> StepReport:
    state = init_state(phi0, symbol, params, dealias=dealias)
    e_mod = modified_energy(state, symbol, params)
    e_orig = energy(phi0, symbol, params, dealias=dealias)
    return StepReport(
        modified_energy=e_mod, original_energy=e_orig, r_value=state.r, w_norm_sq=0.0
    )


class _DumpSchedule:
    """Snap requested dump times to the first node at or past each of them."""

    def __init__(self, times: Sequence[float], horizon: float):
        self.pending = sorted(float(t) for t in times)
        self.tol = 1e-9 * max(1.0, horizon)

    def due(self, t: float) -> bool:
        if self.pending and t >= self.pending[0] - self.tol:
            while self.pending and t >= self.pending[0] - self.tol:
                self.pending.pop(0)
            return True
        return False


def run_evolution(cfg: ExperimentConfig, base_dir: str = ".") -> dict:
    """Drive one evolution run: energy CSV, optional dumps and rasters."""
    if cfg.time is None:
        raise ConfigError("missing required section [time]")
    spec = cfg.build_spec()
    grid = cfg.build_grid(spec)
    params = cfg.build_params()
    symbol = build_symbol(spec, grid, params.q)
    phi0 = build_initial(cfg, grid, base_dir)
    dealias = cfg.model.dealias
    tcfg = cfg.time

    out_dir = os.path.join(base_dir, cfg.output.dir)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, cfg.output.energy_csv)
    dumps: List[str] = []
    schedule = _DumpSchedule(cfg.output.dump_times, tcfg.T)

    def dump(t: float, fld: SpectralField) -> None:
        path = os.path.join(out_dir, f"{cfg.output.dump_prefix}_t{t:.6f}.field")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            dump_field(fld, fh)
        dumps.append(path)
        if cfg.render is not None:
            img = render_field(
                fld, spec, grid, cfg.render.window, cfg.render.resolution, cfg.render.floor_rel
            )
            write_pgm(path[: -len(".field")] + ".pgm", img)

    rows = [_energy_row(0, 0.0, 0.0, _initial_report(phi0, symbol, params, dealias))]
    if schedule.due(0.0):
        dump(0.0, phi0)

    if tcfg.scheme == "sav_cn":
        times = np.linspace(0.0, tcfg.T, tcfg.nt + 1)
        state = init_state(phi0, symbol, params, dealias=dealias)

        def on_step(i, st, rep):
            rows.append(_energy_row(i, st.t, float(times[i] - times[i - 1]), rep))
            if schedule.due(st.t):
                dump(st.t, st.phi)

        state, _ = evolve(state, times, symbol, params, dealias=dealias, on_step=on_step)
        final = state.phi
    else:

        def node_hook(t, fld):
            if t > 0.0 and schedule.due(t):
                dump(t, fld)

        final, records = sdc_solve(
            phi0,
            tcfg.T,
            tcfg.nt,
            symbol,
            params,
            sweeps=tcfg.sweeps,
            block=tcfg.block,
            dealias=dealias,
            node_hook=node_hook,
        )
        for i, (t, tau, rep) in enumerate(records[1:], start=1):
            rows.append(_energy_row(i, t, tau, rep))

    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ENERGY_HEADER + "\n")
        fh.write("\n".join(rows) + "\n")
    return {"csv": csv_path, "dumps": dumps, "final": final, "grid": grid, "spec": spec}


def _final_field(scheme, phi0, T, nt, symbol, params, dealias, sweeps, block) -> SpectralField:
    if scheme == "sav_cn":
        state = init_state(phi0, symbol, params, dealias=dealias)
        times = np.linspace(0.0, T, nt + 1)
        state, _ = evolve(state, times, symbol, params, dealias=dealias)
        return state.phi
    final, _ = sdc_solve(
        phi0, T, nt, symbol, params, sweeps=sweeps, block=block, dealias=dealias
    )
    return final


def run_convergence(cfg: ExperimentConfig, base_dir: str = ".") -> List[dict]:
    """Temporal refinement study against a self-generated reference.

    The reference is the corrected (deferred-correction) solution at
    reference_nt, stepped in blocks; errors are coefficient 2-norms at the
    final time and rates compare each nt against the previous halving.
    """
    if cfg.time is None or cfg.convergence is None:
        raise ConfigError("convergence runs need [time] and [convergence] sections")
    spec = cfg.build_spec()
    grid = cfg.build_grid(spec)
    params = cfg.build_params()
    symbol = build_symbol(spec, grid, params.q)
    phi0 = build_initial(cfg, grid, base_dir)
    dealias = cfg.model.dealias
    tcfg = cfg.time
    ccfg = cfg.convergence

    reference = _final_field(
        "sav_cn_sdc", phi0, tcfg.T, ccfg.reference_nt, symbol, params, dealias,
        tcfg.sweeps if tcfg.sweeps >= 1 else 1, tcfg.block,
    )

    rows: List[dict] = []
    for scheme in ccfg.schemes:
        prev_err = None
        for nt in ccfg.nt_list:
            final = _final_field(
                scheme, phi0, tcfg.T, nt, symbol, params, dealias, tcfg.sweeps, tcfg.block
            )
            err = norm_ap(final - reference)
            rate = math.log2(prev_err / err) if (prev_err is not None and err > 0) else None
            rows.append({"scheme": scheme, "nt": nt, "error": err, "rate": rate})
            prev_err = err

    out_dir = os.path.join(base_dir, cfg.output.dir)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, ccfg.csv)
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RATES_HEADER + "\n")
        for row in rows:
            rate = "" if row["rate"] is None else _fmt_float(row["rate"])
            fh.write(f"{row['scheme']},{row['nt']},{_fmt_float(row['error'])},{rate}\n")
    return rows


def run_scales_study(cfg: ExperimentConfig, base_dir: str = ".") -> List[dict]:
    """Evolve the ring-seeded state under potentials with m = 1..m length
    scales and classify the final spectra."""
    if cfg.time is None or cfg.scales is None:
        raise ConfigError("scale studies need [time] and [scales] sections")
    spec = cfg.build_spec()
    grid = cfg.build_grid(spec)
    dealias = cfg.model.dealias
    tcfg = cfg.time
    scfg = cfg.scales

    out_dir = os.path.join(base_dir, cfg.output.dir)
    os.makedirs(out_dir, exist_ok=True)

    results: List[dict] = []
    for m in scfg.m_list:
        qs = tuple(scfg.s**j for j in range(m))
        params = cfg.build_params(q=qs)
        symbol = build_symbol(spec, grid, qs)
        modes = ring_star_modes(
            grid, qs, scfg.amplitude, jitter=scfg.jitter, seed=scfg.seed, tol=scfg.ring_tol
        )
        if not modes:
            raise ConfigError(f"no grid modes found on the m={m} rings")
        phi0 = field_from_modes(grid, modes)
        if scfg.noise > 0.0:
            # orientation tie-breaker: a perfectly symmetric star can freeze
            # in mixed local minima, so the relaxed state never picks an
            # orientation
            phi0 = phi0 + banded_noise_field(grid, symbol, scfg.noise, scfg.seed)

        rows = [_energy_row(0, 0.0, 0.0, _initial_report(phi0, symbol, params, dealias))]
        if tcfg.scheme == "sav_cn":
            state = init_state(phi0, symbol, params, dealias=dealias)
            times = np.linspace(0.0, tcfg.T, tcfg.nt + 1)

            def on_step(i, st, rep):
                rows.append(_energy_row(i, st.t, float(times[i] - times[i - 1]), rep))

            state, _ = evolve(state, times, symbol, params, dealias=dealias, on_step=on_step)
            final = state.phi
        else:
            final, records = sdc_solve(
                phi0, tcfg.T, tcfg.nt, symbol, params,
                sweeps=tcfg.sweeps, block=tcfg.block, dealias=dealias,
            )
            for i, (t, tau, rep) in enumerate(records[1:], start=1):
                rows.append(_energy_row(i, t, tau, rep))

        csv_path = os.path.join(out_dir, f"energy_m{m}.csv")
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(ENERGY_HEADER + "\n")
            fh.write("\n".join(rows) + "\n")

        kxy, amps, verdict = spectrum_report(final, grid, cfg.spectrum.threshold_rel)
        write_spectrum_csv(os.path.join(out_dir, f"spectrum_m{m}.csv"), kxy, amps)
        results.append(
            {
                "m": m,
                "verdict": verdict,
                "n_peaks": int(len(amps)),
                "n_seed_modes": len(modes),
                "final": final,
                "energy_csv": csv_path,
            }
        )

    with open(os.path.join(out_dir, "verdicts.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("m,verdict,n_peaks,n_seed_modes\n")
        for r in results:
            fh.write(f"{r['m']},{r['verdict']},{r['n_peaks']},{r['n_seed_modes']}\n")
    return results
