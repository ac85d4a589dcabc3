"""Command-line interface: dataset analysis, simulation grids, benchmarks.

Subcommands
-----------
analyze    coefficient table (signed effect sizes, Wald CIs) and Type-II
           ANOVA table (unsigned effect sizes, truncated CIs) for a CSV
           dataset, with optional bootstrap comparison intervals.
simulate   run a scenario grid file and emit one CSV row per cell.
benchmark  time the asymptotic intervals against the bootstrap on a
           synthetic dataset shaped like the small/large applications.

Term specification strings are comma separated: ``name`` (numeric),
``name:binary``, ``name:spline:DF``, and ``a*b`` for the interaction of
two previously declared terms (named ``a:b``).

Grid files are flat key-value text: optional global ``replicates``,
``seed``, ``alpha`` and ``workers`` lines, then one or more blocks between
``scenario`` and ``end`` lines with keys ``family``, ``error`` (linear) or
``eta`` (logistic), ``s``, ``n``, ``cov`` and ``variant``. Multi-valued
keys (space separated) expand to their cross product in listed-key order.
"""
import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
import pandas as pd

from . import simlab
from .design import (
    ContrastMatrix,
    DesignMatrix,
    TermSpec,
    build_design,
    contrast_for_terms,
)
from .errors import ConfigError, ParameterError, ResikitError
from .intervals import bootstrap_statistics, signed_ci, truncated_ci
from .models import (
    LINEAR,
    LOGISTIC,
    MODEL_BASED,
    ROBUST,
    ModelFamily,
    covariance,
    fit,
)
from .resi import resi_estimate, resi_f, resi_unsigned, wald_statistics
from .simlab import Scenario, run_grid
from .special import chi2_sf, normal_sf


_COV_CHOICES = ("hc0", "hc3", "model")


@dataclass(frozen=True)
class AnalysisConfig:
    """Validated options for the analyze pipeline."""

    input_path: str
    outcome: str
    family: str
    terms: tuple[TermSpec, ...]
    cov: str = "hc3"
    alpha: float = 0.05
    n_boot: int = 0  # 0 disables the bootstrap
    seed: int = 0
    out_format: str = "table"
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must be in (0,1), got {self.alpha}")
        if self.n_boot and self.n_boot < 100:
            raise ParameterError(f"bootstrap needs B >= 100, got {self.n_boot}")
        if self.family not in (LINEAR, LOGISTIC):
            raise ConfigError(f"family must be linear or logistic, got {self.family!r}")
        if self.cov not in _COV_CHOICES:
            raise ConfigError(f"cov must be one of {_COV_CHOICES}, got {self.cov!r}")
        if self.out_format not in ("table", "json", "csv"):
            raise ConfigError(f"unknown output format {self.out_format!r}")

    @property
    def cov_mode(self) -> str:
        return MODEL_BASED if self.cov == "model" else ROBUST

    @property
    def flavor(self) -> str | None:
        return None if self.cov == "model" else self.cov


def parse_terms(spec: str) -> tuple[TermSpec, ...]:
    """Parse a term specification string into TermSpec objects."""
    terms: list[TermSpec] = []
    declared: set[str] = set()
    for raw in spec.split(","):
        piece = raw.strip()
        if not piece:
            continue
        if "*" in piece:
            parts = [p.strip() for p in piece.split("*")]
            if len(parts) != 2 or not all(parts):
                raise ConfigError(f"interaction must be 'a*b', got {piece!r}")
            a, b = parts
            if a not in declared or b not in declared:
                raise ConfigError(
                    f"interaction {piece!r} references terms not yet declared"
                )
            terms.append(TermSpec(f"{a}:{b}", "interaction", of=(a, b)))
            declared.add(f"{a}:{b}")
            continue
        fields = [f.strip() for f in piece.split(":")]
        name = fields[0]
        kind = fields[1] if len(fields) > 1 else "numeric"
        if kind == "spline":
            if len(fields) != 3:
                raise ConfigError(f"spline term must be 'name:spline:df', got {piece!r}")
            try:
                df = int(fields[2])
            except ValueError:
                raise ConfigError(f"spline df must be an integer, got {fields[2]!r}")
            terms.append(TermSpec(name, "spline", df=df))
        elif kind in ("numeric", "binary") and len(fields) <= 2:
            terms.append(TermSpec(name, kind))
        else:
            raise ConfigError(f"cannot parse term {piece!r}")
        declared.add(name)
    if not terms:
        raise ConfigError(f"no terms parsed from {spec!r}")
    return tuple(terms)


def _coef_labels(design: DesignMatrix) -> list[str]:
    sizes: dict[str, int] = {}
    for name in design.column_terms:
        sizes[name] = sizes.get(name, 0) + 1
    labels, counts = [], {}
    for name in design.column_terms:
        if sizes[name] == 1:
            labels.append(name)
        else:
            counts[name] = counts.get(name, 0) + 1
            labels.append(f"{name}.{counts[name]}")
    return labels


def _anova_plan(design: DesignMatrix):
    """Type-II plan: for each term, the interaction terms dropped before testing."""
    interactions = [t for t in design.terms if t.kind == "interaction"]
    plan = []
    for term in design.terms:
        if term.kind == "interaction":
            dropped = frozenset()
        else:
            dropped = frozenset(it.name for it in interactions if term.name in it.of)
        plan.append((term.name, dropped))
    return plan


def _fit_for(config: AnalysisConfig, design: DesignMatrix, y):
    return fit(ModelFamily(config.family), design, y,
               cov_mode=config.cov_mode, flavor=config.flavor)


def _signed_points(config: AnalysisConfig, model) -> np.ndarray:
    """Per-coefficient signed point estimates (t-based linear, Z-based logistic)."""
    mc = model.n_coef
    n = model.n
    sigma = covariance(model).sigma_theta[:mc, :mc]
    z = model.coef / np.sqrt(np.diag(sigma) / n)
    if config.family == LINEAR:
        factor = (math.sqrt(2.0)
                  * math.exp(math.lgamma((n - mc) / 2.0) - math.lgamma((n - mc - 1) / 2.0))
                  / math.sqrt(n * (n - mc)))
        return z * factor
    return z / math.sqrt(n)


def _unsigned_point(config: AnalysisConfig, model, L) -> float:
    stats = wald_statistics(model, covariance(model), L)
    if config.family == LINEAR:
        return resi_f(stats).value
    return resi_unsigned(stats).value


def analyze(config: AnalysisConfig, data=None) -> dict:
    """Coefficient and Type-II ANOVA tables with effect-size intervals."""
    if data is None:
        try:
            data = pd.read_csv(config.input_path)
        except OSError as exc:
            raise ConfigError(f"cannot read input {config.input_path!r}: {exc}")
    if config.outcome not in data:
        raise ConfigError(f"outcome column {config.outcome!r} missing from input data")
    y = np.asarray(data[config.outcome], dtype=float)
    design = build_design(data, config.terms)
    full = _fit_for(config, design, y)
    labels = _coef_labels(design)
    cov_full = covariance(full)

    coef_rows = []
    for j in range(design.m):
        L = ContrastMatrix(L=np.eye(design.m)[j:j + 1])
        est = resi_estimate(full, L, signed=True)
        ci = signed_ci(est, config.alpha)
        stats = wald_statistics(full, cov_full, L)
        coef_rows.append({
            "term": labels[j],
            "estimate": float(full.coef[j]),
            "resi": est.value,
            "se": est.se,
            "ci_lower": ci.lower,
            "ci_upper": ci.upper,
            "p_value": 2.0 * normal_sf(abs(stats.z)),
        })

    plan = _anova_plan(design)
    anova_rows = []
    reduced_fits: dict[frozenset, object] = {frozenset(): full}
    for term, dropped in plan:
        if dropped not in reduced_fits:
            reduced_fits[dropped] = _fit_for(config, design.drop_terms(set(dropped)), y)
        model = reduced_fits[dropped]
        L = contrast_for_terms(model.design, {term})
        est = resi_estimate(model, L, signed=False)
        ci = truncated_ci(est, config.alpha)
        stats = wald_statistics(model, covariance(model), L)
        anova_rows.append({
            "term": term,
            "df": L.m1,
            "resi": est.value,
            "se": est.se,
            "ci_lower": ci.lower,
            "ci_upper": ci.upper,
            "branch": ci.branch,
            "p_value": chi2_sf(stats.t_squared, L.m1),
        })

    report = {
        "config": {
            "family": config.family, "outcome": config.outcome, "cov": config.cov,
            "alpha": config.alpha, "n_boot": config.n_boot, "seed": config.seed,
        },
        "coefficients": coef_rows,
        "anova": anova_rows,
    }
    if config.n_boot:
        _attach_bootstrap(config, design, y, plan, report)
    return report


def _attach_bootstrap(config: AnalysisConfig, design: DesignMatrix, y, plan, report):
    """One case-resampling loop recomputing every table row per replicate."""
    m = design.m

    def stat(design_b: DesignMatrix, y_b):
        full_b = _fit_for(config, design_b, y_b)
        values = list(_signed_points(config, full_b))
        cache = {frozenset(): full_b}
        for term, dropped in plan:
            if dropped not in cache:
                cache[dropped] = _fit_for(config, design_b.drop_terms(set(dropped)), y_b)
            model_b = cache[dropped]
            L = contrast_for_terms(model_b.design, {term})
            values.append(_unsigned_point(config, model_b, L))
        return np.array(values)

    values, failures = bootstrap_statistics(design, y, stat, config.n_boot,
                                            config.seed, config.workers)
    lower = np.quantile(values, config.alpha / 2.0, axis=0)
    upper = np.quantile(values, 1.0 - config.alpha / 2.0, axis=0)
    for j, row in enumerate(report["coefficients"]):
        row["boot_lower"] = float(lower[j])
        row["boot_upper"] = float(upper[j])
    for k, row in enumerate(report["anova"]):
        row["boot_lower"] = float(lower[m + k])
        row["boot_upper"] = float(upper[m + k])
    report["bootstrap"] = {"n_boot": config.n_boot, "failures": failures}


# ---------------------------------------------------------------------------
# Grid files


def parse_grid_text(text: str):
    """Parse a grid file into (globals dict, list of Scenario)."""
    globals_: dict[str, float] = {"replicates": 1000, "seed": 0, "alpha": 0.05,
                                  "workers": 1}
    scenarios: list[Scenario] = []
    block: dict[str, list[str]] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "scenario":
            if block is not None:
                raise ConfigError(f"line {lineno}: nested scenario block")
            block = {}
            continue
        if line == "end":
            if block is None:
                raise ConfigError(f"line {lineno}: 'end' outside a scenario block")
            scenarios.extend(_expand_block(block, int(globals_["seed"])))
            block = None
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if block is None:
            if key not in globals_:
                raise ConfigError(f"line {lineno}: unknown global key {key!r}")
            try:
                globals_[key] = float(value) if key == "alpha" else int(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value {value!r} for {key!r}")
        else:
            block[key] = value.split()
    if block is not None:
        raise ConfigError("unterminated scenario block (missing 'end')")
    if not scenarios:
        raise ConfigError("grid file declares no scenarios")
    return globals_, scenarios


_COV_TOKEN = {"robust": (ROBUST, None), "model": (MODEL_BASED, None),
              "hc0": (ROBUST, "hc0"), "hc3": (ROBUST, "hc3")}


def _expand_block(block: dict[str, list[str]], seed: int) -> list[Scenario]:
    known = {"family", "error", "eta", "s", "n", "cov", "variant"}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
    family_values = block.get("family", [])
    if len(family_values) != 1:
        raise ConfigError("scenario block needs exactly one 'family'")
    family = family_values[0]
    if family == LINEAR:
        details = block.get("error", [])
        if not details:
            raise ConfigError("linear scenario block needs 'error'")
    elif family == LOGISTIC:
        details = block.get("eta", [])
        if not details:
            raise ConfigError("logistic scenario block needs 'eta'")
    else:
        raise ConfigError(f"unknown family {family!r}")
    try:
        s_values = [float(v) for v in block.get("s", [])]
        n_values = [int(v) for v in block.get("n", [])]
    except ValueError as exc:
        raise ConfigError(f"bad numeric value in scenario block: {exc}")
    if not s_values or not n_values:
        raise ConfigError("scenario block needs 's' and 'n'")
    cov_tokens = block.get("cov", ["robust"])
    variants = block.get("variant", [simlab.UNSIGNED])
    out = []
    for detail in details:
        for s in s_values:
            for n in n_values:
                for cov in cov_tokens:
                    if cov not in _COV_TOKEN:
                        raise ConfigError(f"unknown cov token {cov!r}")
                    cov_mode, flavor = _COV_TOKEN[cov]
                    for variant in variants:
                        kwargs = dict(family=family, target_s=s, n=n,
                                      cov_mode=cov_mode, flavor=flavor,
                                      variant=variant, seed=seed)
                        if family == LINEAR:
                            kwargs["error_kind"] = detail
                        else:
                            try:
                                kwargs["eta"] = float(detail)
                            except ValueError:
                                raise ConfigError(f"bad eta value {detail!r}")
                        out.append(Scenario(**kwargs))
    return out


def load_grid(path: str):
    """Load a grid file from disk, or a bundled one by bare name."""
    bundled = {"paper-linear", "paper-logistic"}
    if path in bundled:
        text = resources.files("resikit.grids").joinpath(f"{path}.grid").read_text()
    else:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read grid file {path!r}: {exc}")
    return parse_grid_text(text)


# ---------------------------------------------------------------------------
# Benchmark presets


def preset_dataset(preset: str, seed: int = 0):
    """Synthetic dataset mirroring the application shapes.

    ``small``: n=245 linear outcome on group/sex/spline(age)/group:age.
    ``large``: n=20000 logistic outcome on sex/spline(age)/sex:age.
    Returns (DataFrame, outcome name, family, term spec string).
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    if preset == "small":
        n = 245
        age = rng.uniform(10.0, 13.9, size=n)
        group = rng.binomial(1, 0.57, size=n).astype(float)
        sex = rng.binomial(1, 0.33, size=n).astype(float)
        trend = 2.4 * np.sin((age - 10.0) / 3.9 * math.pi)
        wiggle = 1.5 * (age - 12.0)
        y = (48.0 + 8.5 * group + 3.2 * sex + trend + 0.9 * group * wiggle
             + rng.normal(0.0, 9.0, size=n))
        frame = pd.DataFrame({"cdi": y, "group": group, "sex": sex, "age": age})
        return frame, "cdi", LINEAR, "group:binary,sex:binary,age:spline:3,group*age"
    if preset == "large":
        n = 20000
        age = rng.uniform(6.0, 17.0, size=n)
        sex = rng.binomial(1, 0.25, size=n).astype(float)
        arc = np.sin((age - 6.0) / 11.0 * math.pi)
        lp = 0.35 - 0.45 * sex + 0.9 * arc + 0.8 * sex * (age - 11.5) / 5.5
        prob = 1.0 / (1.0 + np.exp(-lp))
        y = rng.binomial(1, prob).astype(float)
        frame = pd.DataFrame({"severe": y, "sex": sex, "age": age})
        return frame, "severe", LOGISTIC, "sex:binary,age:spline:3,sex*age"
    raise ConfigError(f"unknown preset {preset!r} (use small or large)")


def benchmark(preset: str, n_boot: int = 1000, seed: int = 0, workers: int = 1) -> dict:
    """Time analyze without and with the bootstrap on a preset dataset."""
    frame, outcome, family, terms = preset_dataset(preset, seed)
    cov = "hc3" if family == LINEAR else "hc0"
    base = AnalysisConfig(input_path="<synthetic>", outcome=outcome, family=family,
                          terms=parse_terms(terms), cov=cov, seed=seed,
                          workers=workers)
    t0 = time.perf_counter()
    analyze(base, data=frame)
    seconds_asymptotic = time.perf_counter() - t0

    with_boot = replace(base, n_boot=n_boot)
    t0 = time.perf_counter()
    report = analyze(with_boot, data=frame)
    seconds_bootstrap = time.perf_counter() - t0

    gaps = []
    for row in report["coefficients"] + report["anova"]:
        gaps.append(abs(row["ci_lower"] - row["boot_lower"]))
        gaps.append(abs(row["ci_upper"] - row["boot_upper"]))
    return {
        "preset": preset,
        "family": family,
        "n": int(frame.shape[0]),
        "n_boot": n_boot,
        "seconds_asymptotic": seconds_asymptotic,
        "seconds_bootstrap": seconds_bootstrap,
        "speedup": seconds_bootstrap / seconds_asymptotic,
        "max_endpoint_gap": max(gaps),
    }


# ---------------------------------------------------------------------------
# Output formatting


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _table_lines(title: str, rows: list[dict]) -> list[str]:
    if not rows:
        return []
    headers = list(rows[0].keys())
    cells = [[_fmt(row[h]) for h in headers] for row in rows]
    widths = [max(len(h), *(len(row[i]) for row in cells)) for i, h in enumerate(headers)]
    lines = [title, "  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in cells:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return lines


def render_analysis(report: dict, out_format: str) -> str:
    if out_format == "json":
        return json.dumps(report, indent=2) + "\n"
    if out_format == "csv":
        lines = []
        coef_headers = list(report["coefficients"][0].keys())
        lines.append(",".join(["table"] + coef_headers))
        for row in report["coefficients"]:
            lines.append(",".join(["coefficients"] + [repr(row[h]) if isinstance(row[h], float)
                                                      else str(row[h]) for h in coef_headers]))
        anova_headers = list(report["anova"][0].keys())
        lines.append(",".join(["table"] + anova_headers))
        for row in report["anova"]:
            lines.append(",".join(["anova"] + [repr(row[h]) if isinstance(row[h], float)
                                               else str(row[h]) for h in anova_headers]))
        return "\n".join(lines) + "\n"
    lines = _table_lines("Coefficients (signed effect sizes)", report["coefficients"])
    lines.append("")
    lines.extend(_table_lines("Type-II ANOVA (unsigned effect sizes)", report["anova"]))
    if "bootstrap" in report:
        lines.append("")
        lines.append(f"bootstrap: B={report['bootstrap']['n_boot']} "
                     f"failures={report['bootstrap']['failures']}")
    return "\n".join(lines) + "\n"


def _write_output(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Entry points


def _add_shared(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--format", choices=("table", "json", "csv"), default="table")
    parser.add_argument("--out", default=None, help="write output to a file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resikit",
                                     description="Robust effect size estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="effect-size tables for a CSV dataset")
    p_an.add_argument("--input", required=True, help="CSV file with a header row")
    p_an.add_argument("--outcome", required=True)
    p_an.add_argument("--family", choices=(LINEAR, LOGISTIC), required=True)
    p_an.add_argument("--terms", required=True)
    p_an.add_argument("--cov", choices=_COV_CHOICES, default=None,
                      help="hc3 (linear default), hc0 (logistic default) or model")
    p_an.add_argument("--alpha", type=float, default=0.05)
    p_an.add_argument("--bootstrap", type=int, default=0, metavar="B",
                      help="add percentile bootstrap intervals with B replicates")
    _add_shared(p_an)

    p_sim = sub.add_parser("simulate", help="run a scenario grid")
    p_sim.add_argument("--grid", required=True,
                       help="grid file path, or bundled name: paper-linear, paper-logistic")
    p_sim.add_argument("--replicates", type=int, default=None)
    p_sim.add_argument("--alpha", type=float, default=None)
    p_sim.add_argument("--dry-run", action="store_true",
                       help="print the expanded cell count and exit")
    _add_shared(p_sim)

    p_b = sub.add_parser("benchmark", help="asymptotic vs bootstrap timing")
    p_b.add_argument("--preset", choices=("small", "large"), required=True)
    p_b.add_argument("--bootstrap", type=int, default=1000, metavar="B")
    _add_shared(p_b)
    return parser


def _cmd_analyze(args) -> int:
    cov = args.cov or ("hc3" if args.family == LINEAR else "hc0")
    config = AnalysisConfig(
        input_path=args.input, outcome=args.outcome, family=args.family,
        terms=parse_terms(args.terms), cov=cov, alpha=args.alpha,
        n_boot=args.bootstrap, seed=args.seed, out_format=args.format,
        workers=args.workers,
    )
    report = analyze(config)
    _write_output(render_analysis(report, args.format), args.out)
    return 0


def _cmd_simulate(args) -> int:
    globals_, scenarios = load_grid(args.grid)
    if args.seed:
        scenarios = [replace(sc, seed=args.seed) for sc in scenarios]
    replicates = args.replicates or int(globals_["replicates"])
    alpha = args.alpha if args.alpha is not None else float(globals_["alpha"])
    workers = args.workers if args.workers != 1 else int(globals_["workers"])
    if args.dry_run:
        _write_output(f"{len(scenarios)} cells x {replicates} replicates\n", args.out)
        return 0
    reports = run_grid(scenarios, replicates, alpha=alpha, workers=workers)
    if args.format == "json":
        payload = [dict(cell=rep.scenario.label, bias=rep.bias, coverage=rep.coverage,
                        mean_width=rep.mean_width, replicates=rep.replicates,
                        failures=rep.failures) for rep in reports]
        _write_output(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        _write_output("\n".join(simlab.report_rows(reports)) + "\n", args.out)
    return 0


def _cmd_benchmark(args) -> int:
    result = benchmark(args.preset, n_boot=args.bootstrap, seed=args.seed,
                       workers=args.workers)
    if args.format == "json":
        _write_output(json.dumps(result, indent=2) + "\n", args.out)
    else:
        lines = [f"{key}: {_fmt(value)}" for key, value in result.items()]
        _write_output("\n".join(lines) + "\n", args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"analyze": _cmd_analyze, "simulate": _cmd_simulate,
               "benchmark": _cmd_benchmark}[args.command]
    try:
        return handler(args)
    except ResikitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
