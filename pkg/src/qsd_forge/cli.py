#!/usr/bin/env python3
# 🌀 Eidosian Command Center
"""
QSD Forge command line.

One subcommand per pipeline stage: classify, eigen, spectrum, simulate,
verdict and lebras. Every run writes its artifacts and a ``manifest.json``
into ``--out`` and prints a one-screen summary.

Exit codes:
    0  success
    2  the model file or a setting was rejected
    3  a numerical stage failed (bracketing, integration, quadrature,
       simulation, normalization)
    4  the verdict is Ambiguous and ``--strict`` was given
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from colorama import Fore, Style
from colorama import init as colorama_init

from .eigen import (
    PrincipalEigenvalue,
    QsdDensity,
    find_lambda_lower,
    interior_zero_count,
    qsd_density,
    spectrum_eigenfunction,
    truncated_spectrum,
)
from .errors import ConfigError, NotNormalizableError, NumericalError, QsdForgeError, SimulationError
from .global_info import get_config
from .lebras import LeBrasParams, lebras_lambda_lower
from .manifest import RunManifest, config_hash
from .mc import (
    EnsembleResult,
    PointMass,
    SimConfig,
    estimate_akr,
    estimate_omega,
    simulate_ensemble,
)
from .model import (
    DiffusionSpec,
    Side,
    UnitDiffusionModel,
    check_gb,
    check_lp_prime,
    classify_boundary,
    load_model,
    to_unit_diffusion,
)
from .utils.paths import ensure_dir, output_file
from .utils.tables import write_csv, write_json
from .verdict import (
    DichotomyVerdict,
    Mode,
    compare_mc_to_qsd,
    decide,
    detect_kappa_limit,
    resolve_with_mc,
)
from .version import get_version_string

logger = logging.getLogger("qsd_forge.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_AMBIGUOUS = 4

# flags that feed the numerical settings rather than a single stage
SETTING_FLAGS = {"lambda_tol": "lambda_tol", "x_max": "x_max_schedule", "workers": "workers", "bins": "histogram_bins"}
UNHASHED_FLAGS = ("out", "debug", "settings", "command", "config")

MODE_COLORS = {Mode.CONVERGES: Fore.GREEN, Mode.ESCAPES: Fore.RED, Mode.AMBIGUOUS: Fore.YELLOW}


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🧰 Run context
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


@dataclass
class RunContext:
    """Everything a command handler needs: settings, model and artifact sink."""

    args: argparse.Namespace
    config: Dict[str, Any]
    out_dir: Path
    manifest: RunManifest
    spec: Optional[DiffusionSpec] = None
    model: Optional[UnitDiffusionModel] = None
    summary: List[Tuple[str, Any]] = field(default_factory=list)

    @property
    def seed(self) -> Optional[int]:
        return self.manifest.master_seed

    def csv(self, name: str, columns: Dict[str, Sequence[Any]]) -> Path:
        path = write_csv(output_file(self.out_dir, name), columns, self.manifest.config_hash, self.seed)
        return self.manifest.record(path)

    def json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = write_json(output_file(self.out_dir, name), payload, self.manifest.config_hash, self.seed)
        return self.manifest.record(path)

    def note(self, key: str, value: Any) -> None:
        self.summary.append((key, value))


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, flag) for flag, key in SETTING_FLAGS.items() if getattr(args, flag, None) is not None}


def _hashed_arguments(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in UNHASHED_FLAGS}


def _prepare(args: argparse.Namespace, text: Optional[str] = None) -> RunContext:
    """Resolve settings, read the model and open the manifest."""
    config = get_config(getattr(args, "settings", None), _overrides(args))
    spec = model = None
    if text is None:
        spec, text = load_model(args.config, config)
        model = to_unit_diffusion(spec, printed_drift=getattr(args, "printed_drift", False), config=config)
    hashed = dict(config)
    hashed["arguments"] = _hashed_arguments(args)
    digest = config_hash(text, hashed)
    manifest = RunManifest(digest, args.command, getattr(args, "seed", None), settings=hashed)
    out_dir = ensure_dir(args.out)
    logger.info(f"🔍 {args.command}: config hash {digest}, output in {out_dir}")
    return RunContext(args, config, out_dir, manifest, spec, model)


def _execute(args: argparse.Namespace, body: Callable[[RunContext], int], text: Optional[str] = None) -> int:
    """Run a handler body, translating library errors into exit codes."""
    context: Optional[RunContext] = None
    try:
        context = _prepare(args, text)
        code = body(context)
    except ConfigError as e:
        logger.error(f"❌ Configuration error: {e}")
        code = EXIT_CONFIG
    except (NumericalError, SimulationError, NotNormalizableError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        code = EXIT_NUMERICAL
    except QsdForgeError as e:
        logger.error(f"❌ {e}")
        code = EXIT_NUMERICAL

    if context is not None:
        context.manifest.finish(context.out_dir, code)
        _print_summary(args.command, context.summary, code)
    return code


def _print_summary(title: str, rows: Sequence[Tuple[str, Any]], code: int) -> None:
    color = Fore.GREEN if code == EXIT_OK else (Fore.YELLOW if code == EXIT_AMBIGUOUS else Fore.RED)
    print(f"{Style.BRIGHT}{Fore.CYAN}🌀 qsd-forge {title}{Style.RESET_ALL}")
    for key, value in rows:
        shown = f"{value:.10g}" if isinstance(value, float) else str(value)
        print(f"  {key:<24} {shown}")
    print(f"  {'exit':<24} {color}{code}{Style.RESET_ALL}")


def _z_display(qsd: QsdDensity, level: float = 0.999) -> float:
    """Point below which the QSD has mass ``level``."""
    cdf = qsd.cdf()
    return float(np.interp(level * cdf[-1], cdf, qsd.grid))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📝 Artifact writers
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _lambda_payload(pe: PrincipalEigenvalue) -> Dict[str, Any]:
    return {
        "lambda_lower": pe.value,
        "raw_value": pe.raw_value,
        "bracket": list(pe.bracket),
        "x_max": pe.x_max,
        "truncation_history": [list(entry) for entry in pe.truncation_history],
        "extrapolated": pe.extrapolated,
        "integrable": pe.integrable,
        "mass": pe.mass,
        "separation_point": pe.separation_point,
        "warnings": list(pe.warnings),
    }


def _write_qsd(context: RunContext, qsd: QsdDensity) -> None:
    """QSD tables on the unit scale (y) and in original coordinates (x)."""
    context.csv("qsd_y.csv", {"y": qsd.grid, "density": qsd.density})
    spec, model = context.spec, context.model
    if spec is None or model is None:
        return
    with np.errstate(all="ignore"):
        x = np.asarray(model.inverse(qsd.grid), dtype=float)
        density = qsd.density / np.asarray(spec.sigma(x), dtype=float)
    keep = np.isfinite(x) & np.isfinite(density)
    context.csv("qsd_x.csv", {"x": x[keep], "density": density[keep]})


def _write_ensemble(context: RunContext, result: EnsembleResult) -> None:
    curve = result.curve
    context.csv("survival.csv", {"t": curve.times, "alive": curve.alive, "fraction": curve.fraction})
    if not result.histograms:
        return
    t, lo, hi, prob = [], [], [], []
    for histogram in result.histograms:
        edges = histogram.bin_edges
        t.append(np.full(edges.size - 1, histogram.t))
        lo.append(edges[:-1])
        hi.append(edges[1:])
        prob.append(histogram.probs)
    context.csv(
        "histogram.csv",
        {"t": np.concatenate(t), "bin_lo": np.concatenate(lo), "bin_hi": np.concatenate(hi), "prob": np.concatenate(prob)},
    )


def _sim_config(args: argparse.Namespace) -> SimConfig:
    return SimConfig(
        dt=args.dt,
        t_max=args.tmax,
        n_paths=args.paths,
        master_seed=args.seed,
        initial=PointMass(args.start),
        workers=args.workers,
    )


def _fit_window(args: argparse.Namespace) -> Tuple[float, float]:
    if args.fit_window:
        return float(args.fit_window[0]), float(args.fit_window[1])
    return args.tmax / 3.0, args.tmax


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📋 Command implementations
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def cmd_classify(args: argparse.Namespace) -> int:
    """Feller classes of both endpoints plus the growth and limit-point checks."""

    def body(context: RunContext) -> int:
        model, config = context.model, context.config
        assert model is not None and context.spec is not None
        payload: Dict[str, Any] = {
            "name": model.name,
            "expressions": context.spec.expressions(),
            "unit_domain": [model.left, model.right],
            "p0": model.p0,
            "pr": model.pr,
            "boundaries": {},
        }
        for side in (Side.LEFT, Side.RIGHT):
            result = classify_boundary(model, side, config)
            payload["boundaries"][side.value] = {
                "class": result.boundary_class.value,
                "sigma_integral": result.sigma_integral,
                "n_integral": result.n_integral,
                "windows_used": result.windows_used,
            }
            context.note(f"{side.value} boundary", result.boundary_class.value)

        if math.isinf(model.right):
            lp = check_lp_prime(model, config=config)
            report = check_gb(model, config=config)
            limit = detect_kappa_limit(model, config=config)
            payload["lp_prime"] = {"holds": lp.holds, "z_min": lp.z_min, "value_min": lp.value_min, "reason": lp.reason}
            payload["growth_condition"] = {
                "variant": report.gb_variant.value,
                "kappa_star": report.kappa_star,
                "b_star": report.b_star,
                "b_starstar": report.b_starstar,
                "beta": report.beta_exponent,
            }
            payload["kappa_limit"] = {"status": limit.status.value, "value": limit.value}
            context.note("LP'", lp.holds)
            context.note("growth condition", report.gb_variant.value)
            context.note("K", limit.value if limit.value is not None else limit.status.value)
        context.json("classify.json", payload)
        return EXIT_OK

    return _execute(args, body)


def cmd_eigen(args: argparse.Namespace) -> int:
    """λ̲, the eigenfunction table and, when it exists, the QSD."""

    def body(context: RunContext) -> int:
        assert context.model is not None
        pe = find_lambda_lower(context.model, config=context.config)
        context.json("lambda_lower.json", _lambda_payload(pe))
        if pe.solution is not None:
            sol = pe.solution
            context.csv("phi.csv", {"x": sol.grid, "phi": sol.phi, "psi": sol.psi, "dphi": sol.dphi})
        context.note("lambda_lower", pe.value)
        context.note("bracket", f"[{pe.bracket[0]:.12g}, {pe.bracket[1]:.12g}]")
        context.note("integrable", pe.integrable)
        if pe.integrable:
            _write_qsd(context, qsd_density(pe))
        for message in pe.warnings:
            context.note("warning", message)
        return EXIT_OK

    return _execute(args, body)


def cmd_spectrum(args: argparse.Namespace) -> int:
    """Lowest eigenvalues of the problem truncated to (0, r)."""

    def body(context: RunContext) -> int:
        model = context.model
        assert model is not None
        r = args.r if args.r is not None else model.right
        if not math.isfinite(r):
            raise ConfigError("the domain is unbounded; pass --r to truncate it")
        pr = args.pr if args.pr is not None else model.pr
        spectrum = truncated_spectrum(model, r, args.n, pr=pr, entrance=args.entrance, config=context.config)
        zeros = [
            interior_zero_count(spectrum_eigenfunction(model, spectrum, k, context.config))
            for k in range(len(spectrum.eigenvalues))
        ]
        context.csv(
            "spectrum.csv",
            {
                "k": np.arange(len(spectrum.eigenvalues), dtype=np.int64),
                "lambda": np.asarray(spectrum.eigenvalues),
                "interior_zeros": np.asarray(zeros, dtype=np.int64),
            },
        )
        context.note("r", r)
        context.note("boundary", spectrum.boundary if spectrum.boundary == "entrance" else f"pr={spectrum.pr}")
        for k, value in enumerate(spectrum.eigenvalues):
            context.note(f"lambda_{k}", value)
        return EXIT_OK

    return _execute(args, body)


def cmd_simulate(args: argparse.Namespace) -> int:
    """Monte Carlo survival curve, conditional histograms and ω table."""

    def body(context: RunContext) -> int:
        model, config = context.model, context.config
        assert model is not None
        cfg = _sim_config(args)
        snapshots = args.snapshots or [args.tmax]
        result = simulate_ensemble(model, cfg, snapshot_times=snapshots, z_display=args.z_display, config=config)
        _write_ensemble(context, result)
        curve = result.curve
        context.note("paths", cfg.n_paths)
        context.note(f"survival at t={curve.times[-1]:g}", float(curve.fraction[-1]))

        if args.fit_window:
            akr = estimate_akr(curve, _fit_window(args), seed=args.seed, config=config)
            context.json(
                "killing_rate.json",
                {"fit_window": list(_fit_window(args)), "eta": akr.value, "se": akr.se, "ci": [akr.ci_low, akr.ci_high]},
            )
            context.note("killing rate", f"{akr.value:.6g} [{akr.ci_low:.6g}, {akr.ci_high:.6g}]")

        if args.omega_x:
            table = estimate_omega(model, cfg, args.omega_x, snapshots, args.omega_ref, config)
            rows = table.rows()
            context.csv(
                "omega.csv",
                {
                    "x": [row[0] for row in rows],
                    "t": [row[1] for row in rows],
                    "omega": [row[2] for row in rows],
                    "se": [row[3] for row in rows],
                },
            )
            context.note("omega points", len(rows))
        for message in result.warnings:
            context.note("warning", message)
        return EXIT_OK

    return _execute(args, body)


def _mc_evidence(
    context: RunContext,
    verdict: DichotomyVerdict,
    qsd: Optional[QsdDensity],
) -> DichotomyVerdict:
    """Run the simulation stage of ``verdict`` and fold its evidence in."""
    args, model, config = context.args, context.model, context.config
    assert model is not None
    cfg = _sim_config(args)
    snapshots = args.snapshots or [args.tmax / 2.0, args.tmax]
    z_display = args.z_display or (_z_display(qsd) if qsd is not None else None)
    try:
        result = simulate_ensemble(model, cfg, snapshot_times=snapshots, z_display=z_display, config=config)
    except SimulationError as e:
        logger.warning(f"⚠️ Simulation stage skipped: {e}")
        evidence = dict(verdict.evidence, mc_error=str(e))
        return replace(verdict, evidence=evidence)
    _write_ensemble(context, result)

    if verdict.mode is Mode.AMBIGUOUS:
        return resolve_with_mc(verdict, result.curve, result.histograms, qsd, _fit_window(args), args.seed, config)

    evidence = dict(verdict.evidence)
    try:
        akr = estimate_akr(result.curve, _fit_window(args), seed=args.seed, config=config)
        evidence["mc_eta"] = {"value": akr.value, "ci": [akr.ci_low, akr.ci_high]}
    except SimulationError as e:
        evidence["mc_eta_error"] = str(e)
    last = next((h for h in reversed(result.histograms) if not h.empty), None)
    if last is not None and qsd is not None:
        comparison = compare_mc_to_qsd(last, qsd)
        evidence["mc_tv_distance"] = comparison.tv_distance
        evidence["mc_tv_noise"] = comparison.noise_tv
        evidence["mc_ks_distance"] = comparison.ks_distance
    return replace(verdict, evidence=evidence)


def cmd_verdict(args: argparse.Namespace) -> int:
    """Analytic dichotomy verdict, settled by simulation when it is Ambiguous."""

    def body(context: RunContext) -> int:
        model, config = context.model, context.config
        assert model is not None
        pe = find_lambda_lower(model, config=config)
        limit = detect_kappa_limit(model, config=config)
        conditions = check_gb(model, config=config) if math.isinf(model.right) else None
        verdict = decide(pe, limit, conditions, config)
        qsd = qsd_density(pe) if pe.integrable else None

        if verdict.mode is Mode.AMBIGUOUS or args.with_mc:
            verdict = _mc_evidence(context, verdict, qsd)

        context.json("verdict.json", verdict.to_json())
        color = MODE_COLORS[verdict.mode]
        context.note("mode", f"{color}{verdict.mode.value}{Style.RESET_ALL}")
        context.note("eta", verdict.eta)
        context.note("lambda_lower", verdict.lambda_lower)
        context.note("K", verdict.K)
        context.note("rationale", ", ".join(verdict.rationale))
        if verdict.mode is Mode.AMBIGUOUS and args.strict:
            return EXIT_AMBIGUOUS
        return EXIT_OK

    return _execute(args, body)


def cmd_lebras(args: argparse.Namespace) -> int:
    """λ̲ and QSD of the geometric killing model from its Bessel representation."""
    text = f"sigma={args.sigma!r} b={args.b!r} k={args.k!r}"

    def body(context: RunContext) -> int:
        params = LeBrasParams(args.sigma, args.b, args.k)
        result = lebras_lambda_lower(params, printed_boundary=args.printed_boundary, config=context.config)
        payload = result.summary()
        if args.cross_check:
            pe = find_lambda_lower(params.unit_model(), config=context.config)
            relative = abs(pe.value - result.lambda_lower) / max(abs(result.lambda_lower), 1e-300)
            payload["eigen_lambda_lower"] = pe.value
            payload["relative_difference"] = relative
            context.note("eigen cross-check", f"{pe.value:.10g} (rel. diff {relative:.2e})")
        context.json("lebras.json", payload)
        context.csv("qsd_x.csv", {"x": result.x_grid, "xi": result.xi})
        context.csv("qsd_y.csv", {"y": result.y_grid, "phi": result.phi})
        context.note("x0", params.x0)
        context.note("y_tilde", result.y_tilde)
        context.note("lambda_lower", result.lambda_lower)
        context.note("tail exponent", f"{result.tail_exponent_fit:.6g} (expected {result.tail_exponent:.6g})")
        for message in result.warnings:
            context.note("warning", message)
        return EXIT_OK

    return _execute(args, body, text=text)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🎛️ Argument parsing
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _add_simulation_flags(parser: argparse.ArgumentParser, paths: int, tmax: float, bins: Optional[int] = None) -> None:
    parser.add_argument("--paths", type=int, default=paths, help="Number of simulated paths")
    parser.add_argument("--dt", type=float, default=1e-3, help="Time step")
    parser.add_argument("--tmax", type=float, default=tmax, help="Simulation horizon")
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads for path blocks")
    parser.add_argument("--start", type=float, default=1.0, help="Starting point on the unit scale")
    parser.add_argument("--snapshots", type=float, nargs="+", default=None, help="Histogram snapshot times")
    parser.add_argument("--z-display", type=float, default=None, help="Upper edge of the histogram bins")
    parser.add_argument("--bins", type=int, default=bins, help="Number of histogram bins")
    parser.add_argument("--fit-window", type=float, nargs=2, metavar=("T1", "T2"), help="Killing-rate fit window")


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsd-forge",
        description="Quasistationary distributions and survival dichotomies for killed diffusions",
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--version", action="version", version=f"qsd_forge {get_version_string()}")
    parser.add_argument("--settings", default=None, help="YAML file with numerical settings")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    model_args = argparse.ArgumentParser(add_help=False)
    model_args.add_argument("config", help="Model file (key = value, or YAML)")
    model_args.add_argument("--out", default="qsd_out", help="Output directory")
    model_args.add_argument("--printed-drift", action="store_true", help="Use the drift b/σ − σ′ on the unit scale")

    eigen_args = argparse.ArgumentParser(add_help=False)
    eigen_args.add_argument("--lambda-tol", type=float, default=None, help="Relative bisection tolerance")
    eigen_args.add_argument("--x-max", type=float, nargs="+", default=None, help="Truncation schedule")

    subparsers.add_parser("classify", parents=[model_args], help="Classify boundaries and growth conditions")
    subparsers.add_parser("eigen", parents=[model_args, eigen_args], help="Principal eigenvalue and QSD")

    spectrum_parser = subparsers.add_parser("spectrum", parents=[model_args, eigen_args], help="Truncated spectrum")
    spectrum_parser.add_argument("--n", type=int, default=3, help="Number of eigenvalues")
    spectrum_parser.add_argument("--r", type=float, default=None, help="Right endpoint on the unit scale")
    spectrum_parser.add_argument("--pr", type=float, default=None, help="Boundary parameter at r")
    spectrum_parser.add_argument("--entrance", action="store_true", help="Zero-flux condition at r")

    simulate_parser = subparsers.add_parser("simulate", parents=[model_args], help="Monte Carlo simulation")
    _add_simulation_flags(simulate_parser, paths=10000, tmax=10.0)
    simulate_parser.add_argument("--omega-x", type=float, nargs="+", default=None, help="Points for the ω table")
    simulate_parser.add_argument("--omega-ref", type=float, default=1.0, help="Reference point of the ω table")

    verdict_parser = subparsers.add_parser("verdict", parents=[model_args, eigen_args], help="Survival dichotomy verdict")
    _add_simulation_flags(verdict_parser, paths=20000, tmax=4.0, bins=32)
    verdict_parser.add_argument("--with-mc", action="store_true", help="Simulate even when the verdict is decided")
    verdict_parser.add_argument("--strict", action="store_true", help="Exit with 4 when the verdict stays Ambiguous")

    lebras_parser = subparsers.add_parser("lebras", parents=[eigen_args], help="Geometric killing model")
    lebras_parser.add_argument("--sigma", type=float, required=True, help="Volatility σ")
    lebras_parser.add_argument("--b", type=float, required=True, help="Drift b (> σ²/2)")
    lebras_parser.add_argument("--k", type=float, required=True, help="Killing scale k")
    lebras_parser.add_argument("--out", default="qsd_out", help="Output directory")
    lebras_parser.add_argument("--printed-boundary", action="store_true", help="Impose K′ = 0 at x₀")
    lebras_parser.add_argument("--cross-check", action="store_true", help="Also solve the transformed model by shooting")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    colorama_init()
    parser = create_parser()
    args = parser.parse_args(argv)

    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)
        logger.debug("Debug logging enabled")

    if args.command == "classify":
        return cmd_classify(args)
    elif args.command == "eigen":
        return cmd_eigen(args)
    elif args.command == "spectrum":
        return cmd_spectrum(args)
    elif args.command == "simulate":
        return cmd_simulate(args)
    elif args.command == "verdict":
        return cmd_verdict(args)
    elif args.command == "lebras":
        return cmd_lebras(args)
    else:
        parser.print_help()
        return 1


if __name__ == "__main__":
    sys.exit(main())
