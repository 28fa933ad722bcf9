"""``fso-irs-lab`` command line: scenario runs, figure reproduction, oracle checks.

Every command writes CSV files whose first lines are ``#``-prefixed manifest
entries (resolved parameters, version, seed, timestamp) followed by a single
header row.  Apart from the timestamp line, output is a deterministic
function of the inputs and the seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__, defaults
from . import experiments as ex
from .errors import FsoIrsError, ScenarioError
from .geometry import BeamParams, IrsConfig, LensConfig, LinkGeometry, Profile
from .placement import PLATEAU_TOL
from .scenario import Scenario, load_scenario
from .turbulence_channel import PARAMETERIZATION, ChannelParams, outage_sweep, snr_for_outage

log = logging.getLogger("fso_irs_lab")

FIGURES = ("fig3", "fig4", "fig5a", "fig5b", "fig6a", "fig6b")
OUT_ENV = "FSO_IRS_LAB_OUT"


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------
def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.10e}"
    return str(v)


class Output:
    """Output directory plus the manifest shared by all files of one command."""

    def __init__(self, root: Path, name: str, manifest: dict):
        self.dir = root / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = {"tool": f"fso-irs-lab {__version__}",
                         "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                         **manifest}
        self.files: list[Path] = []

    def csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence],
            extra: dict | None = None) -> Path:
        path = self.dir / filename
        with open(path, "w", newline="") as fh:
            for key, value in {**self.manifest, **(extra or {})}.items():
                fh.write(f"# {key}: {value}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(path)
        return path

    def finish(self, summary: dict | None = None) -> None:
        data = {**self.manifest, "files": [p.name for p in self.files], "summary": summary or {}}
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _out_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "fso_irs_lab_out")


def _base_manifest(args, **kw) -> dict:
    return {"seed": args.seed,
            "gamma_gamma": PARAMETERIZATION, **kw}


# --------------------------------------------------------------------------
# Experiment writers
# --------------------------------------------------------------------------
def _write_map(out: Output, m: ex.RegimeMap, filename: str = "regime_map.csv") -> dict:
    rows = []
    for i, sl in enumerate(m.sigma_lens):
        for j, si in enumerate(m.sigma_irs):
            e = m.errors[i, j]
            rows.append((sl, si, *e, ex.REGIME_LABELS[int(np.argmin(e))]))
    summary = {"fraction_min_E_le_0.05": m.fraction_within(0.05), "ordered": m.ordered(),
               "components": m.components(), "oracle_failures": m.failures}
    out.csv(filename, ("Sigma_lens", "Sigma_irs", "E1", "E2", "E3", "best_regime"), rows,
            {"summary": json.dumps(summary, sort_keys=True)})
    return summary


def _write_gml(out: Output, rows: Sequence[ex.GmlRow], filename: str, extra: dict | None = None):
    out.csv(filename, ("L_m", "profile", "gml_numerical", "gml_piecewise", "regime", "G1", "G2", "G3"),
            [(r.length, r.profile, r.numerical, r.piecewise, r.regime, r.g1, r.g2, r.g3) for r in rows],
            extra)


def _write_outage(out: Output, filename: str, lm: ex.LinkModel, snr_db: np.ndarray) -> dict:
    rows = outage_sweep(snr_db, lm.irs_budget, lm.irs_params, lm.relay_budgets, lm.relay_params,
                        lm.threshold)
    gi, gr = lm.gains_irs(), lm.gains_relay()
    summary = {"h_gml_irs": lm.irs_budget.h_gml, "D_irs": gi.diversity, "C_irs": gi.coding,
               "D_rel": gr.diversity, "C_rel": gr.coding,
               "snr_db_at_pout_1e-2_irs": snr_for_outage(1e-2, lm.pout_irs),
               "snr_db_at_pout_1e-2_relay": snr_for_outage(1e-2, lm.pout_relay),
               "crossover_snr_db": ex.crossover_snr_db(lm)}
    out.csv(filename, ("snr_db", "pout_irs", "pout_relay", "pout_irs_asym", "pout_relay_asym"),
            [(r.snr_db, r.pout_irs, r.pout_relay, r.pout_irs_asym, r.pout_relay_asym) for r in rows],
            {"summary": json.dumps(summary, sort_keys=True)})
    return summary


def _write_positions(out: Output, filename: str, rows: Sequence[ex.PositionRow]) -> dict:
    pout = np.array([r.pout for r in rows])
    best = pout.min()
    # optimal cells: outage within the plateau tolerance of the minimum
    opt = pout <= best * (1 + PLATEAU_TOL)
    xs = np.array([r.x for r in rows])
    out.csv(filename, ("x_m", "d1_m", "objective", "pout", "regime", "is_optimal"),
            [(r.x, r.d1, r.gml, r.pout, r.regime, o) for r, o in zip(rows, opt)])
    return {"x_opt": float(xs[int(np.argmin(pout))]), "optimal_x_range": [float(xs[opt].min()),
                                                                          float(xs[opt].max())],
            "pout_min": float(best)}


# --------------------------------------------------------------------------
# Figure reproduction
# --------------------------------------------------------------------------
def repro_fig3(out: Output, fast: bool, jobs: int) -> dict:
    n = 20 if fast else 40
    return _write_map(out, ex.default_regime_map(n, jobs))


def repro_fig4(out: Output, fast: bool, jobs: int) -> dict:
    lengths = np.logspace(-4, math.log10(3.0), 19 if fast else 91)
    bounds = ex.boundary_table()
    extra = {f"S_{p}": f"S1={b.s1:.6e} S2={b.s2:.6e} S3={b.s3:.6e} G3={b.g3:.6e} "
                       f"three_regime={b.three_regime}" for p, b in bounds.items()}
    rows = ex.gml_vs_size(lengths)
    _write_gml(out, rows, "gml_vs_size.csv", extra)
    return {"G3": {p: b.g3 for p, b in bounds.items()}}


def _outage_figure(out: Output, fast: bool, configs) -> dict:
    g = LinkGeometry.reference()
    beam = BeamParams()
    snr = ex.snr_grid(fast)
    summary = {"diversity_ratio": ex.diversity_ratio(g, beam)}
    for label, irs in configs:
        lm = ex.link_model(g, beam, irs)
        summary[label] = _write_outage(out, f"outage_{label}.csv", lm, snr)
    return summary


def repro_fig5a(out: Output, fast: bool, jobs: int) -> dict:
    s = _outage_figure(out, fast, [(f"LP_L{L:g}m", IrsConfig.square(L)) for L in (0.01, 0.07, 1.0)])
    at = {k: v["snr_db_at_pout_1e-2_irs"] for k, v in s.items() if isinstance(v, dict)}
    s["gain_1cm_to_7cm_db"] = at["LP_L0.01m"] - at["LP_L0.07m"]
    s["gain_7cm_to_1m_db"] = at["LP_L0.07m"] - at["LP_L1m"]
    return s


def repro_fig5b(out: Output, fast: bool, jobs: int) -> dict:
    f = defaults.END_TO_END / 4
    return _outage_figure(out, fast, [("LP_L1m", IrsConfig.square(1.0)),
                                      ("QP_L1m", IrsConfig.square(1.0, "QP", f)),
                                      ("FP_L1m", IrsConfig.square(1.0, "FP"))])


def _position_figure(out: Output, fast: bool, jobs: int, beam: BeamParams, configs) -> dict:
    xs = ex.position_grid(fast)
    summary = {}
    for label, irs, channel, models in configs:
        for model in models:
            rows = ex.outage_vs_position(xs, beam, irs, channel=channel, model=model, jobs=jobs)
            name = label if irs is None else f"{label}_{model}"
            summary[name] = _write_positions(out, f"position_{name}.csv", rows)
    return summary


def repro_fig6a(out: Output, fast: bool, jobs: int) -> dict:
    beam = BeamParams(waist=7e-3)
    both = ("analytical", "numerical")
    low = ChannelParams().with_threshold_db(-85.0)
    return _position_figure(out, fast, jobs, beam, [
        ("LP_L0.001m_th-85dB", IrsConfig.square(1e-3), low, both),
        ("LP_L0.03m", IrsConfig.square(0.03), ChannelParams(), both),
        ("LP_L1m", IrsConfig.square(1.0), ChannelParams(), both),
        ("relay", None, ChannelParams(), ("analytical",)),
    ])


def repro_fig6b(out: Output, fast: bool, jobs: int) -> dict:
    f = defaults.END_TO_END / 5
    both = ("analytical", "numerical")
    ch = ChannelParams()
    return _position_figure(out, fast, jobs, BeamParams(), [
        ("LP_L1m", IrsConfig.square(1.0), ch, both),
        ("QP_L1m", IrsConfig.square(1.0, "QP", f), ch, both),
        ("FP_L1m", IrsConfig.square(1.0, "FP"), ch, both),
        ("mir_L1m", IrsConfig.square(1.0, "mir"), ch, both),
        ("relay", None, ch, ("analytical",)),
    ])


REPRO = {"fig3": repro_fig3, "fig4": repro_fig4, "fig5a": repro_fig5a, "fig5b": repro_fig5b,
         "fig6a": repro_fig6a, "fig6b": repro_fig6b}


# --------------------------------------------------------------------------
# Scenario runs
# --------------------------------------------------------------------------
def run_scenario(sc: Scenario, out: Output, jobs: int, seed: int) -> dict:
    kind = sc.experiment
    if kind == "gml_vs_size":
        sw = sc.sweeps["sweep"]
        if sw.variable not in ("side", "L"):
            raise ScenarioError("gml_vs_size sweeps the surface side ('side')")
        rows = ex.gml_vs_size(sw.values(), (sc.irs.profile.value,), sc.geometry, sc.beam, sc.lens,
                              sc.irs.focal or defaults.END_TO_END / 4)
        _write_gml(out, rows, "gml_vs_size.csv")
        return {"points": len(rows)}
    if kind == "outage_vs_snr":
        sw = sc.sweeps["sweep"]
        if sw.variable != "snr_db":
            raise ScenarioError("outage_vs_snr sweeps 'snr_db'")
        lm = ex.link_model(sc.geometry, sc.beam, sc.irs, sc.lens, sc.channel,
                           model=sc.oracle.get("model", "numerical"))
        return _write_outage(out, "outage.csv", lm, sw.values())
    if kind == "outage_vs_position":
        sw = sc.sweeps["sweep"]
        if sw.variable != "x":
            raise ScenarioError("outage_vs_position sweeps 'x'")
        model = sc.oracle.get("model", "numerical")
        s = {"irs": _write_positions(out, "position_irs.csv", ex.outage_vs_position(
            sw.values(), sc.beam, sc.irs, sc.lens, sc.channel, model, sc.geometry.l_tr,
            sc.geometry.d3, jobs))}
        s["relay"] = _write_positions(out, "position_relay.csv", ex.outage_vs_position(
            sw.values(), sc.beam, None, sc.lens, sc.channel, model, sc.geometry.l_tr,
            sc.geometry.d3, jobs))
        return s
    if kind == "regime_map":
        m = ex.regime_map(sc.sweeps["sweep_lens"].values(), sc.sweeps["sweep_irs"].values(),
                          sc.geometry, sc.beam, sc.irs.profile, sc.irs.focal, jobs)
        return _write_map(out, m)
    # oracle_validation
    case = ex.OracleCase(sc.name, sc.irs.lx, sc.irs.profile.value, sc.beam.wavelength, sc.irs.focal)
    rep = ex.oracle_agreement(case, int(sc.oracle.get("points", 50)), seed, sc.geometry, sc.lens)
    _write_oracle(out, [rep])
    return {"rms": rep.rms}


def _write_oracle(out: Output, reports) -> None:
    out.csv("oracle_cases.csv", ("case", "n_points", "rms_rel", "max_phase_rad"),
            [(r.case.name, r.n_points, r.rms, r.max_phase) for r in reports])


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------
def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled lens points")
    common.add_argument("--out", default=None,
                        help=f"output root (default: ${OUT_ENV} or ./fso_irs_lab_out)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="fso-irs-lab", parents=[common],
                                description="Power scaling, outage and placement of "
                                            "reflecting-surface-assisted FSO links.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run a scenario file")
    r.add_argument("scenario")
    f = sub.add_parser("repro", parents=[common], help="reproduce a figure")
    f.add_argument("figure", choices=FIGURES)
    f.add_argument("--fast", action="store_true", help="reduced resolution")
    v = sub.add_parser("validate-oracle", parents=[common],
                       help="regime map and quadrature-vs-erf cross-check")
    v.add_argument("--grid", type=int, default=40, help="regime-map resolution per axis")
    v.add_argument("--points", type=int, default=50, help="lens points per configuration")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    root = _out_root(args.out)
    try:
        if args.command == "run":
            sc = load_scenario(args.scenario)
            out = Output(root, sc.name, _base_manifest(args, **sc.resolved()))
            summary = run_scenario(sc, out, args.jobs, args.seed)
        elif args.command == "repro":
            name = args.figure + ("_fast" if args.fast else "")
            out = Output(root, name, _base_manifest(args, figure=args.figure, fast=args.fast))
            summary = REPRO[args.figure](out, args.fast, args.jobs)
        else:
            if args.grid < 1:
                raise ScenarioError("--grid must be at least 1")
            out = Output(root, "validate_oracle", _base_manifest(
                args, grid=args.grid, points=args.points,
                sigma_lens=ex.MAP_SIGMA_LENS, sigma_irs=ex.MAP_SIGMA_IRS))
            m = ex.default_regime_map(args.grid, args.jobs)
            summary = _write_map(out, m)
            reports = [ex.oracle_agreement(c, args.points, args.seed) for c in ex.ORACLE_CASES]
            _write_oracle(out, reports)
            summary["oracle_rms"] = {r.case.name: r.rms for r in reports}
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FsoIrsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    out.finish(summary)
    print(json.dumps({"output": str(out.dir), **summary}, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
