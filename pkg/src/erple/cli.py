"""Command-line interface: ``erple <command> [options]``.

Every option can also come from a JSON file given with ``--config``; flags
override the file, which overrides the defaults.  The merged configuration is
written next to each primary output as ``<output>.config.json``.

Exit codes: 0 success, 1 bad configuration or input, 2 analysis failure,
3 ``reproduce`` found a failing acceptance criterion.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np

from . import cavity, dynamics, model, synth
from .fit import FitError

log = logging.getLogger("erple")

EXIT_CONFIG = 1
EXIT_ANALYSIS = 2
EXIT_ACCEPTANCE = 3


class ConfigError(Exception):
    pass


def default_threads():
    try:
        return max(1, int(os.environ.get("ERPLE_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# option tables: (flag, dest, type, default, help)

PROTOCOL_OPTS = [
    ("--start-nm", "start_nm", float, 1516.0, "scan start wavelength"),
    ("--stop-nm", "stop_nm", float, 1550.0, "scan stop wavelength"),
    ("--step-hz", "step_hz", float, 50e6, "laser step"),
    ("--fm-hz", "fm_broadening_hz", float, 60e6, "FM broadening (full width)"),
    ("--repetitions", "repetitions", int, 1000, "pulses per step"),
]
DETECTOR_OPTS = [
    ("--efficiency", "efficiency", float, 0.6627, "system detection efficiency"),
    ("--dark-rate-hz", "dark_count_rate_hz", float, 20.0, "dark count rate"),
    ("--background-fast", "background_fast_amplitude", float, 0.06, "fast background photons per pulse"),
    ("--background-slow", "background_slow_amplitude", float, 0.06, "slow background photons per pulse"),
]
HOLE_OPTS = [
    ("--pump-us", "pump_duration_us", float, 20.0, "pump duration"),
    ("--probe-us", "probe_duration_us", float, None, "probe duration (default: pump)"),
    ("--delay-us", "delay_us", float, 0.0, "pump-probe delay"),
    ("--period-ms", "repetition_period_ms", float, 3.0, "repetition period"),
    ("--window-ms", "detection_window_ms", float, 1.0, "post-probe detection window"),
    ("--pump-rate-hz", "pump_rate_hz", float, 50.0, "peak pump rate R0"),
    ("--gamma-hz", "homogeneous_fwhm_hz", float, 0.75e6, "homogeneous FWHM"),
    ("--lifetime-ms", "lifetime_ms", float, 0.764, "optical lifetime"),
    ("--span-hz", "detuning_span_hz", float, None, "half-span of the detuning grid"),
    ("--points", "detuning_points", int, 401, "detuning grid points"),
]


def _add(p, opts):
    for flag, dest, typ, default, hlp in opts:
        p.add_argument(flag, dest=dest, type=typ, default=None,
                       help=f"{hlp} (default {default})" if default is not None else hlp)


def _defaults(opts):
    return {dest: default for _, dest, _, default, _ in opts}


def _flag(p, *names, **kw):
    default = kw.pop("default", None)
    kw.setdefault("default", None)
    a = p.add_argument(*names, **kw)
    a.config_default = default
    return a


def build_parser():
    parser = argparse.ArgumentParser(prog="erple", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default=None, help="JSON file with option values")
        p.set_defaults(_opts=[])
        return p

    p = command("simulate-spectrum", "synthesize survey counts from a catalog")
    _flag(p, "--catalog", help="catalog CSV (default: bundled survey catalog)")
    _flag(p, "--seed", type=int, help="RNG seed (required unless --expected)")
    _flag(p, "--expected", action="store_const", const=True, help="write expected counts, no sampling")
    _flag(p, "-o", "--output", default="spectrum.csv")
    _add(p, PROTOCOL_OPTS + DETECTOR_OPTS)
    p.set_defaults(_opts=PROTOCOL_OPTS + DETECTOR_OPTS)

    p = command("simulate-decay", "synthesize on- and off-resonant decay traces")
    _flag(p, "--catalog")
    _flag(p, "--wavelength-nm", type=float, help="catalog line to use")
    _flag(p, "--detuning-hz", type=float, help="off-resonant offset (default: tabulated partner or 2 FWHM)")
    _flag(p, "--second-lifetime-ms", type=float, help="inject a second decay component")
    _flag(p, "--second-fraction", type=float)
    _flag(p, "--duration-ms", type=float, default=5.0)
    _flag(p, "--bin-us", type=float, default=10.0)
    _flag(p, "--seed", type=int)
    _flag(p, "--expected", action="store_const", const=True)
    _flag(p, "--reference-statistics", action="store_const", const=True,
          help="use the repetitions calibrated to the tabulated fit error")
    _flag(p, "-o", "--output", default="on.csv")
    _flag(p, "--off-output", default="off.csv")
    _add(p, PROTOCOL_OPTS + DETECTOR_OPTS)
    p.set_defaults(_opts=PROTOCOL_OPTS + DETECTOR_OPTS)

    p = command("simulate-hole", "rate-equation spectral hole profile")
    _flag(p, "--single-shot", action="store_const", const=True, help="no periodic steady state")
    _flag(p, "--noise", type=float, default=0.0, help="white noise added to the normalized profile")
    _flag(p, "--seed", type=int)
    _flag(p, "-o", "--output", default="hole.csv")
    _add(p, HOLE_OPTS)
    p.set_defaults(_opts=HOLE_OPTS)

    p = command("zeeman", "Zeeman line positions and intensities")
    _flag(p, "--site", help="ZeemanSite JSON")
    _flag(p, "--example", choices=["single", "six-line", "two-arm"], default="single")
    _flag(p, "--field-t", type=float, default=0.05)
    _flag(p, "--polarization-deg", type=float, default=0.0)
    _flag(p, "--reverse", action="store_const", const=True, help="also list lines at -B")
    _flag(p, "--format", choices=["json", "csv"], default="json")
    _flag(p, "-o", "--output")

    p = command("analyze-spectrum", "detect and fit survey lines")
    p.add_argument("input", nargs="?", help="spectrum CSV")
    _flag(p, "--min-prominence", type=float, default=0.15)
    _flag(p, "--min-significance", type=float, default=5.0)
    _flag(p, "-o", "--output", default="catalog.csv")
    _flag(p, "--report", help="per-line JSON report (default: <output>.report.json)")

    p = command("analyze-lifetime", "lifetime from on- and off-resonant traces")
    _flag(p, "--on", help="on-resonant trace CSV")
    _flag(p, "--off", nargs="+", help="off-resonant trace CSV (six for --study)")
    _flag(p, "--study", action="store_const", const=True, help="background-choice study over six traces")
    _flag(p, "--weighting", choices=["poisson", "uniform"], default="poisson")
    _flag(p, "--threads", type=int, default=default_threads())
    _flag(p, "--format", choices=["json", "csv"], default="json")
    _flag(p, "-o", "--output")

    p = command("analyze-hole", "hole profile to homogeneous linewidth bound")
    p.add_argument("input", nargs="?", help="hole CSV")
    _flag(p, "--fixture", choices=["1.5", "2.8"], help="use a bundled fixture (MHz)")
    _flag(p, "--expected-fwhm-hz", type=float)
    _flag(p, "--format", choices=["json", "csv"], default="json")
    _flag(p, "-o", "--output")

    p = command("match", "match optical lines to electrical resonances")
    _flag(p, "--optical", help="catalog CSV (default: bundled survey catalog)")
    _flag(p, "--electrical", help="CSV with frequency_hz or wavelength_nm column")
    _flag(p, "--tolerance-hz", type=float, default=1e9)
    _flag(p, "--format", choices=["json", "csv"], default="json")
    _flag(p, "-o", "--output")

    p = command("purcell", "cavity design for a target Purcell factor")
    _flag(p, "--F", dest="purcell_factor", type=float, default=1e6)
    _flag(p, "--Q", dest="quality_factor", type=float, help="derive F from a quality factor instead")
    _flag(p, "--gamma-bulk", dest="gamma_bulk_hz", type=float, default=1e3)
    _flag(p, "--lambda-nm", dest="wavelength_nm", type=float, default=1540.0)
    _flag(p, "--n", dest="refractive_index", type=float, default=cavity.SILICON_INDEX)
    _flag(p, "-o", "--output")

    p = command("reproduce", "run the acceptance checks")
    _flag(p, "--only", type=int, nargs="+", help="criterion numbers")
    _flag(p, "-o", "--output", default="acceptance_report.json")
    return parser


# ---------------------------------------------------------------------------
# configuration merging


def _option_actions(subparser):
    return {a.dest: a for a in subparser._actions
            if a.dest not in ("help", "config", "_opts") and a.option_strings}


def merge_config(subparser, args):
    """Flags over config file over defaults; unknown config keys are an error."""
    actions = _option_actions(subparser)
    table = {dest: default for dest, default in _defaults(args._opts).items()}
    cfg = {dest: getattr(a, "config_default", table.get(dest)) for dest, a in actions.items()}
    if "input" in vars(args):
        cfg["input"] = None
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            a = actions.get(k)
            if a is not None and a.type is not None and v is not None:
                try:
                    v = [a.type(x) for x in v] if isinstance(v, list) else a.type(v)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"config key {k!r}: {exc}") from exc
            if a is not None and a.choices is not None and v is not None and v not in a.choices:
                raise ConfigError(f"config key {k!r}: {v!r} not in {list(a.choices)}")
            cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _pick(cfg, opts):
    return {dest: cfg[dest] for _, dest, _, _, _ in opts}


def protocol_from(cfg):
    return model.ScanProtocol(**_pick(cfg, PROTOCOL_OPTS))


def detector_from(cfg):
    return model.DetectorModel(**_pick(cfg, DETECTOR_OPTS))


def write_effective_config(output, command, cfg):
    if output is None:
        return
    doc = {"command": command, **{k: v for k, v in cfg.items()}}
    model.atomic_write_text(f"{output}.config.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    log.info("effective config written to %s.config.json", output)


def _emit(text, output):
    if output:
        model.atomic_write_text(output, text)
        log.info("wrote %s", output)
    else:
        sys.stdout.write(text)


def _load_catalog(path):
    return model.table1_catalog() if path is None else model.load_catalog(path)


def _need_seed(cfg):
    if not cfg.get("expected") and cfg.get("seed") is None:
        raise ConfigError("a seed is required for sampled output (or pass --expected)")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate_spectrum(cfg):
    _need_seed(cfg)
    exp = synth.expected_spectrum(_load_catalog(cfg["catalog"]), protocol_from(cfg), detector_from(cfg))
    out = exp if cfg["expected"] else synth.sample_spectrum(exp, cfg["seed"])
    synth.write_spectrum(out, cfg["output"])
    print(f"wrote {cfg['output']} ({len(out)} points)")
    return [cfg["output"]]


def cmd_simulate_decay(cfg):
    from .analysis import offresonant_detuning_hz, reference_statistics_repetitions

    _need_seed(cfg)
    cat = _load_catalog(cfg["catalog"])
    if cfg["wavelength_nm"] is None:
        raise ConfigError("--wavelength-nm is required")
    site = cat.nearest(cfg["wavelength_nm"])
    if abs(site.wavelength_nm - cfg["wavelength_nm"]) > 0.01:
        raise ConfigError(f"no catalog line near {cfg['wavelength_nm']} nm")
    if (cfg["second_lifetime_ms"] is None) != (cfg["second_fraction"] is None):
        raise ConfigError("--second-lifetime-ms and --second-fraction go together")
    if cfg["second_lifetime_ms"] is not None:
        site = site.with_second_component(cfg["second_lifetime_ms"] * 1e-3, cfg["second_fraction"])
    if cfg["reference_statistics"]:
        cfg["repetitions"] = reference_statistics_repetitions()
    proto, det = protocol_from(cfg), detector_from(cfg)
    detune = offresonant_detuning_hz(site) if cfg["detuning_hz"] is None else cfg["detuning_hz"]
    cfg["detuning_hz"] = detune
    kw = dict(duration_s=cfg["duration_ms"] * 1e-3, bin_width_s=cfg["bin_us"] * 1e-6)
    on = dynamics.decay_trace(site, det, proto, **kw)
    off = dynamics.decay_trace(site, det, proto, detuning_hz=detune, **kw)
    if not cfg["expected"]:
        # independent child streams for the two traces
        s_on, s_off = np.random.SeedSequence(cfg["seed"]).generate_state(2)
        on, off = dynamics.sample_trace(on, int(s_on)), dynamics.sample_trace(off, int(s_off))
    dynamics.write_trace(on, cfg["output"])
    dynamics.write_trace(off, cfg["off_output"])
    print(f"wrote {cfg['output']} and {cfg['off_output']} (off-resonant offset {detune / 1e9:+.3f} GHz)")
    return [cfg["output"], cfg["off_output"]]


def hole_config_from(cfg):
    probe = cfg["probe_duration_us"]
    return dynamics.HoleBurnConfig(
        pump_duration_s=cfg["pump_duration_us"] * 1e-6,
        probe_duration_s=None if probe is None else probe * 1e-6,
        delay_s=cfg["delay_us"] * 1e-6,
        repetition_period_s=cfg["repetition_period_ms"] * 1e-3,
        detection_window_s=cfg["detection_window_ms"] * 1e-3,
        pump_rate_hz=cfg["pump_rate_hz"],
        homogeneous_fwhm_hz=cfg["homogeneous_fwhm_hz"],
        lifetime_s=cfg["lifetime_ms"] * 1e-3,
        detuning_span_hz=cfg["detuning_span_hz"],
        detuning_points=cfg["detuning_points"],
        periodic=not cfg["single_shot"],
    )


def cmd_simulate_hole(cfg):
    if cfg["noise"] and cfg["seed"] is None:
        raise ConfigError("a seed is required when --noise is set")
    prof = dynamics.simulate_hole(hole_config_from(cfg))
    if cfg["noise"]:
        prof = dynamics.noisy_hole(prof, cfg["noise"], cfg["seed"])
    dynamics.write_hole(prof, cfg["output"])
    dynamics.write_json(f"{cfg['output']}.meta.json", prof.meta)
    m = prof.meta
    print(f"wrote {cfg['output']}; far-detuned occupation {m['far_occupation']:.6g} vs reference "
          f"{m['reference_far']:.6g} (relative discrepancy {m['far_discrepancy']:+.3g})")
    return [cfg["output"]]


def cmd_zeeman(cfg):
    if cfg["site"]:
        with open(cfg["site"], encoding="utf-8") as fh:
            site = dynamics.ZeemanSite.from_dict(json.load(fh))
    else:
        site = {"single": dynamics.ZeemanSite(),
                "six-line": dynamics.six_line_example_site(),
                "two-arm": dynamics.two_arm_example_site()}[cfg["example"]]
    b, pol = cfg["field_t"], cfg["polarization_deg"]
    sets = {"plus": dynamics.zeeman_lines(site, b, pol)}
    if cfg["reverse"]:
        sets["minus"] = dynamics.zeeman_lines(site, -b, pol)
    if cfg["format"] == "json":
        doc = {"field_t": b, "polarization_deg": pol,
               **{k: [{"offset_hz": o, "intensity": w} for o, w in v] for k, v in sets.items()}}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        buf.write("field_t,offset_hz,intensity\n")
        for k, v in sets.items():
            for o, w in v:
                buf.write(f"{b if k == 'plus' else -b:g},{o:.6f},{w:.12g}\n")
        text = buf.getvalue()
    _emit(text, cfg["output"])
    return [cfg["output"]] if cfg["output"] else []


def cmd_analyze_spectrum(cfg):
    from .analysis import survey_pipeline

    if not cfg["input"]:
        raise ConfigError("an input spectrum CSV is required")
    spec = synth.read_spectrum(cfg["input"])
    res = survey_pipeline(spec, cfg["min_prominence"], cfg["min_significance"])
    model.write_catalog(res.catalog, cfg["output"])
    report = cfg["report"] or f"{cfg['output']}.report.json"
    model.atomic_write_text(report, json.dumps(res.as_dict(), indent=2, sort_keys=True) + "\n")
    errors = sum(1 for ln in res.lines if ln.error)
    print(f"{len(res.lines)} lines accepted, {len(res.rejected)} components below threshold"
          + (f", {errors} with fit warnings" if errors else ""))
    return [cfg["output"]]


def cmd_analyze_lifetime(cfg):
    from .analysis import background_choice_study, extract_lifetime

    if not cfg["on"] or not cfg["off"]:
        raise ConfigError("--on and --off are required")
    on = dynamics.read_trace(cfg["on"])
    offs = [dynamics.read_trace(p) for p in cfg["off"]]
    if cfg["study"]:
        if len(offs) != 6:
            raise ConfigError("--study needs six --off traces")
        study = background_choice_study(on, offs)
        doc = study.as_dict()
        rows = [(f"{o / 1e9:+.1f}", e) for o, e in zip(study.offsets_hz, study.entries)]
    else:
        with ThreadPoolExecutor(max_workers=cfg["threads"]) as ex:
            res = list(ex.map(lambda off: extract_lifetime(on, off, cfg["weighting"]), offs))
        doc = res[0].as_dict() if len(res) == 1 else {"results": [r.as_dict() for r in res]}
        rows = list(zip(cfg["off"], res))
        if all(r.model == "failed" for r in res):
            _emit(_json(doc), cfg["output"])
            raise FitError("; ".join(w for r in res for w in r.warnings))
    if cfg["format"] == "json":
        text = _json(doc)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["background", "model", "lifetime_s", "lifetime_error_s", "no_signal", "warnings"])
        for key, r in rows:
            w.writerow([key, r.model, f"{r.lifetime_s:.8g}", f"{r.lifetime_error_s:.8g}", r.no_signal,
                        " | ".join(r.warnings)])
        text = buf.getvalue()
    _emit(text, cfg["output"])
    return [cfg["output"]] if cfg["output"] else []


def _json(doc):
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def fixture_path(name):
    return resources.files("erple") / "data" / name


def cmd_analyze_hole(cfg):
    from .analysis import hole_to_homogeneous

    if cfg["fixture"]:
        src = fixture_path({"1.5": "hole_1p5mhz.csv", "2.8": "hole_2p8mhz.csv"}[cfg["fixture"]])
    elif cfg["input"]:
        src = cfg["input"]
    else:
        raise ConfigError("an input hole CSV or --fixture is required")
    prof = dynamics.read_hole(src)
    res = hole_to_homogeneous(prof.detuning_hz, prof.signal, cfg["expected_fwhm_hz"])
    if cfg["format"] == "json":
        text = _json(res.as_dict())
    else:
        text = ("hole_fwhm_hz,hole_fwhm_error_hz,homogeneous_bound_hz\n"
                f"{res.hole_fwhm_hz:.6f},{res.hole_fwhm_error_hz:.6f},{res.homogeneous_bound_hz:.6f}\n")
    _emit(text, cfg["output"])
    print(f"hole FWHM {res.hole_fwhm_hz / 1e6:.3f} MHz -> homogeneous linewidth bound "
          f"{res.homogeneous_bound_hz / 1e6:.2f} MHz", file=sys.stderr if not cfg["output"] else sys.stdout)
    return [cfg["output"]] if cfg["output"] else []


def _read_electrical(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no rows")
    if "frequency_hz" in rows[0]:
        return np.array([float(r["frequency_hz"]) for r in rows])
    if "wavelength_nm" in rows[0]:
        return model.wavelength_to_frequency([float(r["wavelength_nm"]) for r in rows])
    raise ConfigError(f"{path}: need a frequency_hz or wavelength_nm column")


def cmd_match(cfg):
    from .analysis import match_resonances

    if not cfg["electrical"]:
        raise ConfigError("--electrical is required")
    rep = match_resonances(_load_catalog(cfg["optical"]), _read_electrical(cfg["electrical"]),
                           cfg["tolerance_hz"])
    if cfg["format"] == "json":
        text = _json(rep.as_dict())
    else:
        buf = io.StringIO()
        buf.write("optical_hz,electrical_hz,abs_df_hz\n")
        for o, e, d in rep.pairs:
            buf.write(f"{o:.1f},{e:.1f},{d:.1f}\n")
        text = buf.getvalue()
    _emit(text, cfg["output"])
    print(f"matched fraction {rep.matched_fraction:.3f} ({len(rep.pairs)}/{rep.n_optical})",
          file=sys.stderr if not cfg["output"] else sys.stdout)
    return [cfg["output"]] if cfg["output"] else []


def cmd_purcell(cfg):
    if cfg["quality_factor"] is not None:
        d = cavity.CavityDesign.from_quality_factor(cfg["quality_factor"], cfg["wavelength_nm"],
                                                    cfg["refractive_index"], cfg["gamma_bulk_hz"])
    else:
        d = cavity.CavityDesign(cfg["wavelength_nm"], cfg["refractive_index"], cfg["gamma_bulk_hz"],
                                cfg["purcell_factor"])
    _emit(_json(d.as_dict()), cfg["output"])
    return [cfg["output"]] if cfg["output"] else []


def cmd_reproduce(cfg):
    from .acceptance import run_all

    results = run_all(cfg["only"])
    for r in results:
        print(r.line())
    doc = {"all_passed": all(r.passed for r in results), "criteria": [r.as_dict() for r in results]}
    model.atomic_write_text(cfg["output"], _json(doc))
    if not doc["all_passed"]:
        raise AcceptanceFailure(", ".join(str(r.number) for r in results if not r.passed))
    return [cfg["output"]]


class AcceptanceFailure(Exception):
    pass


COMMANDS = {
    "simulate-spectrum": cmd_simulate_spectrum,
    "simulate-decay": cmd_simulate_decay,
    "simulate-hole": cmd_simulate_hole,
    "zeeman": cmd_zeeman,
    "analyze-spectrum": cmd_analyze_spectrum,
    "analyze-lifetime": cmd_analyze_lifetime,
    "analyze-hole": cmd_analyze_hole,
    "match": cmd_match,
    "purcell": cmd_purcell,
    "reproduce": cmd_reproduce,
}


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    try:
        cfg = merge_config(subparser, args)
        outputs = COMMANDS[args.command](cfg)
        for out in outputs:
            write_effective_config(out, args.command, cfg)
    except ConfigError as exc:
        print(f"erple: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"erple: analysis failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except AcceptanceFailure as exc:
        print(f"erple: acceptance criteria failed: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (OSError, ValueError, model.CatalogParseError) as exc:
        print(f"erple: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
