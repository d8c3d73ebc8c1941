"""Command-line front end.

    nanoring <command> [--config FILE] [--out DIR] [--threads K] [--cache PATH|off]

Commands: modes, scan-wavelength, scan-separation, pattern, two-ring-blocks.
The configuration is a TOML file with the tables [fiber], [ring],
[second_ring], [wavelength], [numerics], [pattern] and [outputs]; every key
is optional and unknown keys are rejected.  Lengths are in units of the
fiber radius a, wavelengths in units of the ring spacing d, rates in gamma0.

Exit codes: 0 success, 2 configuration error, 3 numerical convergence error.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import io
import json
import logging
import os
import re
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import tomli

from . import __version__
from .collective import ORIENTATIONS, RingSpec, build_hamiltonian, rem_indices, rem_state, scan_wavelength
from .fiber_modes import DispersionCache, FiberSpec, dispersion_table, wavenumber
from .fields import intensity_map
from .green import GreenConfig
from .quadrature import ConvergenceError
from .tworing import (block_structure, coupling_nu, oscillation_analysis, scan_separation,
                      write_scan_csv)

log = logging.getLogger("nanoring")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3
EXTRA_TABLES = ("oscillation",)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class FiberSection:
    n_fiber: float = 1.45


@dataclass
class RingSection:
    n_atoms: int = 5
    rho_over_a: float = 1.1
    orientation: str = "orthoradial"
    rem: int = 1


@dataclass
class SecondRingSection:
    enabled: bool = False
    dz_over_a: float = 4.15
    dz_grid: list = field(default_factory=lambda: [0.5, 30.0, 600])


@dataclass
class WavelengthSection:
    lambda0_over_d: float = 3.4
    grid: list = field(default_factory=lambda: [1.2, 4.0, 150])


@dataclass
class NumericsSection:
    nu_max: int = 7
    panels: int = 8
    nodes_per_panel: int = 64
    tol: float = 1e-3
    max_doublings: int = 4
    l_max: int = 8
    shifts: bool = True
    scat_tol: float = 1e-5
    scat_nodes: int = 16


@dataclass
class PatternSection:
    plane: str = "xy"
    offset_over_rho: float = 20.0
    environment: str = "fiber"
    resolution: int = 201
    half_width_over_rho: float = 10.0


@dataclass
class OutputsSection:
    directory: str = "out"
    tables: list = field(default_factory=list)


@dataclass
class ScenarioConfig:
    fiber: FiberSection = field(default_factory=FiberSection)
    ring: RingSection = field(default_factory=RingSection)
    second_ring: SecondRingSection = field(default_factory=SecondRingSection)
    wavelength: WavelengthSection = field(default_factory=WavelengthSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    pattern: PatternSection = field(default_factory=PatternSection)
    outputs: OutputsSection = field(default_factory=OutputsSection)

    # -- derived objects -----------------------------------------------------
    def fiber_spec(self) -> FiberSpec:
        return FiberSpec(self.fiber.n_fiber)

    def ring_spec(self, z0: float = 0.0) -> RingSpec:
        return RingSpec(self.ring.n_atoms, self.ring.rho_over_a, z0, self.ring.orientation)

    def green_config(self) -> GreenConfig:
        n = self.numerics
        return GreenConfig(nu_max=n.nu_max, panels=n.panels, nodes_per_panel=n.nodes_per_panel, tol=n.tol,
                           max_doublings=n.max_doublings, l_max=n.l_max, shifts=n.shifts,
                           scat_tol=n.scat_tol, scat_nodes=n.scat_nodes)

    def k0(self) -> float:
        return wavenumber(self.wavelength.lambda0_over_d, self.ring.rho_over_a, self.ring.n_atoms)

    def digest(self) -> str:
        text = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _key_lines(text):
    """(table, key) -> line number, for diagnostics."""
    out, table = {}, ""
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            table = m.group(1).strip()
            out.setdefault((table, None), i)
            continue
        m = re.match(r"\s*([A-Za-z0-9_\-]+)\s*=", line)
        if m:
            out.setdefault((table, m.group(1)), i)
    return out


def _where(lines, table, key=None):
    ln = lines.get((table, key))
    return f" (line {ln})" if ln else ""


def _coerce(value, default, name, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}{where}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}{where}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}{where}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}{where}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}{where}")
        return value
    raise ConfigError(f"{name}: unsupported value{where}")


def _grid(spec, name, where):
    if len(spec) != 3 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in spec):
        raise ConfigError(f"{name}: expected [start, stop, points]{where}")
    start, stop, points = float(spec[0]), float(spec[1]), spec[2]
    if not isinstance(points, int) or points < 1 or (points > 1 and not stop > start):
        raise ConfigError(f"{name}: need stop > start and an integer number of points >= 1{where}")
    return start, stop, int(points)


def parse_config(text: str) -> ScenarioConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"TOML syntax error: {err}") from err
    lines = _key_lines(text)
    cfg = ScenarioConfig()
    sections = {f.name: f for f in fields(ScenarioConfig)}
    for table, body in raw.items():
        if table not in sections:
            raise ConfigError(f"unknown table [{table}]{_where(lines, table)}")
        if not isinstance(body, dict):
            raise ConfigError(f"'{table}' must be a table{_where(lines, '', table)}")
        section = getattr(cfg, table)
        known = {f.name for f in fields(section)}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"unknown key '{table}.{key}'{_where(lines, table, key)}")
            default = getattr(section, key)
            setattr(section, key, _coerce(value, default, f"{table}.{key}", _where(lines, table, key)))
    _validate(cfg, lines)
    return cfg


def _validate(cfg: ScenarioConfig, lines):
    def fail(table, key, msg):
        raise ConfigError(f"{table}.{key}: {msg}{_where(lines, table, key)}")

    if not cfg.fiber.n_fiber > 1.0:
        fail("fiber", "n_fiber", "must exceed 1")
    if cfg.ring.n_atoms < 2:
        fail("ring", "n_atoms", "need at least two atoms")
    if not cfg.ring.rho_over_a > 1.0:
        fail("ring", "rho_over_a", "the ring must lie outside the fiber (rho > a)")
    if cfg.ring.orientation not in ORIENTATIONS:
        fail("ring", "orientation", f"must be one of {sorted(ORIENTATIONS)}")
    if cfg.ring.rem not in rem_indices(cfg.ring.n_atoms):
        fail("ring", "rem", f"must be one of {rem_indices(cfg.ring.n_atoms)}")
    if not cfg.second_ring.dz_over_a > 0:
        fail("second_ring", "dz_over_a", "must be positive")
    start, _, _ = _grid(cfg.second_ring.dz_grid, "second_ring.dz_grid", _where(lines, "second_ring", "dz_grid"))
    if not start > 0:
        fail("second_ring", "dz_grid", "separations must be positive")
    if not cfg.wavelength.lambda0_over_d > 0:
        fail("wavelength", "lambda0_over_d", "must be positive")
    start, _, _ = _grid(cfg.wavelength.grid, "wavelength.grid", _where(lines, "wavelength", "grid"))
    if not start > 0:
        fail("wavelength", "grid", "wavelengths must be positive")
    try:
        cfg.green_config()
    except ValueError as err:
        raise ConfigError(f"numerics: {err}{_where(lines, 'numerics')}") from err
    if cfg.numerics.scat_nodes < 2:
        fail("numerics", "scat_nodes", "need at least two nodes")
    p = cfg.pattern
    if p.plane not in ("xz", "xy"):
        fail("pattern", "plane", "must be 'xz' or 'xy'")
    if p.environment not in ("fiber", "free"):
        fail("pattern", "environment", "must be 'fiber' or 'free'")
    if p.resolution < 2:
        fail("pattern", "resolution", "need at least 2 samples per axis")
    if not p.half_width_over_rho > 0:
        fail("pattern", "half_width_over_rho", "must be positive")
    for t in cfg.outputs.tables:
        if t not in EXTRA_TABLES:
            fail("outputs", "tables", f"unknown table {t!r} (known: {list(EXTRA_TABLES)})")


def load_config(path) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text)


def _linspace(spec):
    start, stop, points = float(spec[0]), float(spec[1]), int(spec[2])
    return np.linspace(start, stop, points)


# ---------------------------------------------------------------------------
# output helpers


def provenance(cfg: ScenarioConfig, command: str) -> dict:
    return {
        "tool": "nanoring",
        "version": __version__,
        "command": command,
        "config_sha256": cfg.digest(),
        "tolerances": asdict(cfg.numerics),
    }


def header_line(cfg, command) -> str:
    return "# " + json.dumps(provenance(cfg, command), sort_keys=True)


@contextlib.contextmanager
def atomic_outputs(directory, names):
    """Yield text buffers for ``names``; files appear only if the block succeeds."""
    os.makedirs(directory, exist_ok=True)
    buffers = {n: io.StringIO() for n in names}
    yield buffers
    temps = []
    try:
        for n, buf in buffers.items():
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{n}.", suffix=".tmp")
            temps.append((tmp, os.path.join(directory, n)))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(buf.getvalue())
            os.chmod(tmp, 0o644)
        for tmp, final in temps:
            os.replace(tmp, final)
    finally:
        for tmp, _ in temps:
            if os.path.exists(tmp):
                os.remove(tmp)


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_modes(cfg: ScenarioConfig, out: str, threads: int = 1, cache=None) -> list[str]:
    grid = _linspace(cfg.wavelength.grid)
    rows = dispersion_table(cfg.fiber_spec(), grid, cfg.ring.rho_over_a, cfg.ring.n_atoms,
                            cfg.numerics.l_max, cache)
    d = cfg.ring_spec().spacing
    with atomic_outputs(out, ["dispersion.csv"]) as files:
        fh = files["dispersion.csv"]
        fh.write(header_line(cfg, "modes") + "\n")
        fh.write("lambda0_over_d,mode,beta_over_k0,lambda0_over_a\n")
        for x, label, b in rows:
            fh.write(f"{x:.12g},{label},{b:.12g},{x * d:.12g}\n")
    return ["dispersion.csv"]


def cmd_scan_wavelength(cfg, out, threads=1, cache=None):
    table = scan_wavelength(cfg.ring_spec(), cfg.fiber_spec(), _linspace(cfg.wavelength.grid),
                            cfg.green_config(), threads, cache)
    with atomic_outputs(out, ["scan_wavelength.csv"]) as files:
        table.write_csv(files["scan_wavelength.csv"], header_line(cfg, "scan-wavelength"))
    return ["scan_wavelength.csv"]


def cmd_scan_separation(cfg, out, threads=1, cache=None):
    grid = _linspace(cfg.second_ring.dz_grid)
    gcfg = replace(cfg.green_config(), shifts=False)
    ring = cfg.ring_spec()
    try:
        results = scan_separation(ring, cfg.fiber_spec(), cfg.k0(), grid, gcfg, cache=cache)
    except ConvergenceError as err:
        raise ConvergenceError(f"lambda0/d={cfg.wavelength.lambda0_over_d:.6g}: {err}", err.residual) from err
    names = ["scan_separation.csv"]
    if "oscillation" in cfg.outputs.tables:
        names.append("oscillation.json")
    with atomic_outputs(out, names) as files:
        write_scan_csv(results, files["scan_separation.csv"], header_line(cfg, "scan-separation"))
        if "oscillation.json" in files:
            reports = {}
            for n in rem_indices(ring.n_atoms):
                entry = {}
                for env in ("fiber", "free"):
                    try:
                        rep = oscillation_analysis(results, n, environment=env)
                    except ValueError as err:
                        entry[env] = {"error": str(err)}
                        continue
                    entry[env] = {
                        "period_over_a": rep.period, "method": rep.method,
                        "classification": rep.classification,
                        "components": [asdict(c) for c in rep.components],
                        "beat": [asdict(c) for c in rep.beat] if rep.beat else None,
                    }
                reports[str(n)] = entry
            files["oscillation.json"].write(_json({"provenance": provenance(cfg, "scan-separation"),
                                                   "reports": reports}))
    return names


def cmd_pattern(cfg, out, threads=1, cache=None):
    p = cfg.pattern
    ring = cfg.ring_spec()
    rings = [ring]
    amps = rem_state(cfg.ring.rem, ring.n_atoms)
    if cfg.second_ring.enabled:
        rings.append(cfg.ring_spec(cfg.second_ring.dz_over_a))
        amps = np.concatenate([amps, amps]) / np.sqrt(2.0)
    rho = ring.rho
    ext = (-p.half_width_over_rho * rho, p.half_width_over_rho * rho)
    grid = intensity_map(p.plane, amps, rings, p.environment, cfg.fiber_spec(), cfg.k0(),
                         p.offset_over_rho * rho, p.resolution, ext, ext, cfg.green_config(), threads)
    grid.meta = {"provenance": provenance(cfg, "pattern"), "rem": cfg.ring.rem,
                 "lambda0_over_d": cfg.wavelength.lambda0_over_d}
    with atomic_outputs(out, ["pattern.json", "pattern.csv"]) as files:
        grid.write(files["pattern.json"], files["pattern.csv"])
    return ["pattern.json", "pattern.csv"]


def cmd_two_ring_blocks(cfg, out, threads=1, cache=None):
    ring = cfg.ring_spec()
    dz = cfg.second_ring.dz_over_a
    h = build_hamiltonian([ring, ring.shifted(dz)], cfg.fiber_spec(), cfg.k0(), cfg.green_config(), cache=cache)
    bs = block_structure(h)
    nus = {}
    for n in rem_indices(ring.n_atoms):
        c = coupling_nu(h, n)
        nus[str(n)] = {
            "nu": [c["total"].real, c["total"].imag],
            "nu_free": [c["free"].real, c["free"].imag],
            "nu_guided": {k: [v.real, v.imag] for k, v in c["guided"].items()},
            "nu_radiation": {str(k): [v.real, v.imag] for k, v in c["radiation"].items()},
        }
    doc = {"provenance": provenance(cfg, "two-ring-blocks"), "dz_over_a": dz,
           "lambda0_over_d": cfg.wavelength.lambda0_over_d, **bs.to_json(), "couplings": nus,
           "hamiltonian_row_major": [[float(v.real), float(v.imag)] for v in h.matrix.ravel()]}
    with atomic_outputs(out, ["blocks.json"]) as files:
        files["blocks.json"].write(_json(doc))
    return ["blocks.json"]


COMMANDS = {
    "modes": cmd_modes,
    "scan-wavelength": cmd_scan_wavelength,
    "scan-separation": cmd_scan_separation,
    "pattern": cmd_pattern,
    "two-ring-blocks": cmd_two_ring_blocks,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nanoring", description="Collective emission of atomic nanorings "
                                 "around an optical nanofiber.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="TOML scenario file (defaults reproduce the baseline ring)")
    ap.add_argument("--out", help="output directory (overrides outputs.directory)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for scans and maps")
    ap.add_argument("--cache", default=None,
                    help="dispersion cache file, or 'off' (default: <out>/dispersion_cache.json)")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as err:
        print(f"nanoring: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.outputs.directory
    if args.cache == "off":
        cache = DispersionCache()
    else:
        cache = DispersionCache(args.cache or os.path.join(out, "dispersion_cache.json"))
    try:
        written = COMMANDS[args.command](cfg, out, args.threads, cache)
    except ConvergenceError as err:
        print(f"nanoring: convergence error: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    cache.save()
    for name in written:
        log.info("wrote %s", os.path.join(out, name))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
