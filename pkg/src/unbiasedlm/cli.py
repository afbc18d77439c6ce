"""Command-line front end.

Exit codes: 0 success, 1 checked and false, 2 precondition violated, 3 input
could not be parsed, 4 inputs parse but are semantically inconsistent.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import analysis, dist, koopmann
from .estimator import IdentificationError, LPQEstimator, gls, ols, variance_under
from .model import DesignMatrix, ModelFamily, MomentConstraintSet

EXIT_OK, EXIT_FALSE, EXIT_PRECONDITION, EXIT_PARSE, EXIT_SEMANTIC = 0, 1, 2, 3, 4


class CliFailure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def parse_failure(message: str) -> CliFailure:
    return CliFailure(message, EXIT_PARSE)


# ---------------------------------------------------------------------------
# config


def _load_json(text_or_path, what: str):
    """Inline JSON, or the contents of a JSON file."""
    if not isinstance(text_or_path, str):
        return text_or_path
    path = Path(text_or_path)
    try:
        if path.is_file():
            return json.loads(path.read_text())
        if text_or_path.lstrip()[:1] not in ("[", "{", "-") and not text_or_path.strip()[:1].isdigit():
            raise parse_failure(f"cannot parse {what}: no such file {text_or_path!r}")
        return json.loads(text_or_path)
    except (json.JSONDecodeError, OSError) as exc:
        raise parse_failure(f"cannot parse {what}: {exc}") from None


def _matrix(value, what: str) -> np.ndarray:
    data = _load_json(value, what)
    if isinstance(data, dict) and "x" in data:
        data = data["x"]
    try:
        m = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise parse_failure(f"{what} is not a numeric matrix: {exc}") from None
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise parse_failure(f"{what} must be a 2-d matrix")
    return m


@dataclass
class ExperimentConfig:
    design: np.ndarray | None = None
    sigma: np.ndarray | None = None
    betas: list = field(default_factory=list)
    covariances: list = field(default_factory=list)
    seed: int = 0
    output_path: str | None = None
    format: str = "csv"
    tol: float = 1e-10
    extra: dict = field(default_factory=dict)

    def require_design(self) -> DesignMatrix:
        if self.design is None:
            raise parse_failure("no design given (use --design or the config's 'design')")
        try:
            return DesignMatrix(self.design)
        except ValueError as exc:
            raise CliFailure(str(exc), EXIT_PRECONDITION) from None

    def sigma_or_identity(self, n: int) -> np.ndarray:
        s = np.eye(n) if self.sigma is None else self.sigma
        if s.shape != (n, n):
            raise CliFailure(f"sigma must be {n}x{n}", EXIT_SEMANTIC)
        return s


KNOWN_KEYS = {"design", "sigma", "betas", "covariances", "seed", "output_path", "format", "tol"}


def build_config(config_path, design, sigma, tol, seed, out, fmt) -> ExperimentConfig:
    raw = {}
    if config_path is not None:
        raw = _load_json(config_path, "config")
        if not isinstance(raw, dict):
            raise parse_failure("config must be a JSON object")
    cfg = ExperimentConfig(extra={k: v for k, v in raw.items() if k not in KNOWN_KEYS})
    if raw.get("design") is not None:
        cfg.design = _matrix(raw["design"], "design")
    if raw.get("sigma") is not None:
        cfg.sigma = _matrix(raw["sigma"], "sigma")
    try:
        cfg.betas = [np.asarray(b, dtype=float).ravel() for b in raw.get("betas", [])]
        cfg.covariances = [_matrix(c, "covariance") for c in raw.get("covariances", [])]
        cfg.seed = int(raw.get("seed", 0))
        cfg.tol = float(raw.get("tol", 1e-10))
    except (TypeError, ValueError) as exc:
        raise parse_failure(f"bad config value: {exc}") from None
    cfg.output_path = raw.get("output_path")
    cfg.format = raw.get("format", "csv")
    # flags override the file
    if design is not None:
        cfg.design = _matrix(design, "design")
    if sigma is not None:
        cfg.sigma = _matrix(sigma, "sigma")
    if tol is not None:
        cfg.tol = tol
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.output_path = out
    if fmt is not None:
        cfg.format = fmt
    if cfg.format not in ("csv", "json"):
        raise parse_failure(f"unknown format {cfg.format!r}")
    return cfg


def common_options(f):
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
                     help="Table/report format (default csv).")(f)
    f = click.option("--out", default=None, help="Write the main result here instead of stdout.")(f)
    f = click.option("--seed", type=int, default=None, help="Seed for randomized suites.")(f)
    f = click.option("--tol", type=float, default=None, help="Tolerance (default 1e-10).")(f)
    f = click.option("--sigma", default=None, help="Covariance shape: JSON path or inline matrix.")(f)
    f = click.option("--design", default=None, help="Design matrix: JSON path or inline matrix.")(f)
    f = click.option("--config", "config_path", default=None, help="JSON config file.")(f)
    return f


def _emit(text: str, path: str | None):
    if path is None:
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _distribution(spec, design: DesignMatrix | None, what: str = "distribution"):
    """A law from ``{"atoms", "weights"}``, a JSON path, or an iid error recipe.

    Recipes look like ``{"errors": "skewed" | "rademacher", "beta": [...]}``:
    iid reference errors in every coordinate shifted to mean ``X beta``.
    """
    data = _load_json(spec, what)
    if not isinstance(data, dict):
        raise parse_failure(f"{what} must be a JSON object")
    if "errors" in data:
        if design is None:
            raise parse_failure(f"{what} recipe needs a design")
        kinds = {"skewed": dist.skewed_two_point, "rademacher": dist.rademacher}
        if data["errors"] not in kinds:
            raise parse_failure(f"unknown error law {data['errors']!r}")
        f = dist.product([kinds[data["errors"]]()] * design.n)
        beta = data.get("beta", [0.0] * design.k)
        try:
            loc = design.mean(beta)
        except ValueError as exc:
            raise CliFailure(f"bad beta in {what}: {exc}", EXIT_SEMANTIC) from None
        return dist.shift(f, loc)
    try:
        return dist.DiscreteDistribution.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise parse_failure(f"bad {what}: {exc}") from None


def _estimator(spec, what: str) -> LPQEstimator:
    data = _load_json(spec, what)
    if not isinstance(data, dict):
        raise parse_failure(f"{what} must be a JSON object")
    try:
        return LPQEstimator.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise parse_failure(f"bad {what}: {exc}") from None


# ---------------------------------------------------------------------------
# commands


@click.group()
def cli():
    """Construct, verify and optimize unbiased estimators for fixed-design linear models."""


@cli.command("construct-ub")
@common_options
def construct_ub(config_path, design, sigma, tol, seed, out, fmt):
    """Least squares plus a zero-diagonal quadratic null (requires n >= max(k+2, 4))."""
    cfg = build_config(config_path, design, sigma, tol, seed, out, fmt)
    d = cfg.require_design()
    try:
        b = koopmann.construct_quadratic_null(d)
    except koopmann.PreconditionError as exc:
        raise CliFailure(str(exc), EXIT_PRECONDITION) from None
    if cfg.sigma is None:
        u = koopmann.make_ub_estimator(d, b, tol=cfg.tol)
        res = koopmann.quadratic_null_residuals(d, b)
    else:
        try:
            u = koopmann.whitened_ub_estimator(d, cfg.sigma_or_identity(d.n))
        except np.linalg.LinAlgError as exc:
            raise CliFailure(str(exc), EXIT_PRECONDITION) from None
        w = koopmann.whitener(cfg.sigma)
        res = koopmann.quadratic_null_residuals(w @ d.x, koopmann.construct_quadratic_null(w @ d.x))
    _emit(json.dumps(u.to_dict(), indent=2) + "\n", cfg.output_path)
    for name, value in res.items():
        click.echo(f"{name}: {value!r}")


@cli.command("check-koopmann")
@click.argument("estimator_file")
@click.option("--diagonal-family", is_flag=True,
              help="Require zero mean under every diagonal covariance (diag(B_j) = 0).")
@common_options
def check_koopmann(estimator_file, diagonal_family, config_path, design, sigma, tol, seed, out, fmt):
    """Check membership in the Koopmann class and print per-constraint residuals."""
    cfg = build_config(config_path, design, sigma, tol, seed, out, fmt)
    u = _estimator(estimator_file, "estimator")
    d = cfg.require_design()
    if (u.n, u.k) != (d.n, d.k):
        raise CliFailure(f"estimator is {u.n}x{u.k} but design is {d.n}x{d.k}", EXIT_SEMANTIC)
    c = koopmann.build_constraints(d, cfg.sigma_or_identity(d.n))
    m = koopmann.is_member(u, c, tol=cfg.tol)
    residuals = m.residuals()
    if diagonal_family:
        residuals["trace"] = float(max(np.abs(np.diag(b)).max() for b in u.kernels))
    for name, value in residuals.items():
        click.echo(f"{name}: {value!r}")
    ok = all(v < cfg.tol for v in residuals.values())
    click.echo("member" if ok else "not a member")
    sys.exit(EXIT_OK if ok else EXIT_FALSE)


@cli.command("min-variance")
@click.option("--direction", default=None, help="Inline JSON k-vector (default e_1).")
@common_options
def min_variance(direction, config_path, design, sigma, tol, seed, out, fmt):
    """Minimum-variance member of the Koopmann class under one distribution."""
    cfg = build_config(config_path, design, sigma, tol, seed, out, fmt)
    d = cfg.require_design()
    if "distribution" not in cfg.extra:
        raise parse_failure("config needs a 'distribution'")
    f = _distribution(cfg.extra["distribution"], d)
    raw_dir = direction if direction is not None else cfg.extra.get("direction")
    if raw_dir is None:
        vec = np.eye(d.k)[0]
    else:
        try:
            vec = np.asarray(_load_json(raw_dir, "direction"), dtype=float).reshape(d.k)
        except (TypeError, ValueError) as exc:
            raise parse_failure(f"bad direction: {exc}") from None
    if not np.any(vec):
        raise CliFailure("direction must be nonzero", EXIT_PRECONDITION)
    s = cfg.sigma_or_identity(d.n)
    c = koopmann.build_constraints(d, s)
    try:
        best, var = analysis.min_variance_member(c, f, vec)
        base = gls(d, s)
    except analysis.MomentMismatchError as exc:
        raise CliFailure(str(exc), EXIT_SEMANTIC) from None
    except IdentificationError:
        base = ols(d)
    gls_var = float(vec @ variance_under(base, f) @ vec)
    improvement = (gls_var - var) / gls_var if gls_var > 0 else 0.0
    if cfg.format == "json":
        text = json.dumps({"gls_variance": gls_var, "optimal_variance": var,
                           "relative_improvement": improvement,
                           "estimator": best.to_dict()}, indent=2) + "\n"
    else:
        text = ("gls_variance,optimal_variance,relative_improvement\r\n"
                f"{_fmt(gls_var)},{_fmt(var)},{_fmt(improvement)}\r\n")
    _emit(text, cfg.output_path)


@cli.command("verify-representation")
@common_options
def verify_representation(config_path, design, sigma, tol, seed, out, fmt):
    """Compare zero-unbiased functions on finite atoms with the predicted representation.

    The config gives ``betas`` (and optionally ``covariances``) plus either
    ``atoms`` or ``grid`` (values whose n-th Cartesian power are the atoms).
    With a ``witness`` law the single-constraint-set oracle runs instead, using
    the first beta and covariance.
    """
    cfg = build_config(config_path, design, sigma, tol, seed, out, fmt)
    d = cfg.require_design()
    ex = cfg.extra
    if "atoms" in ex:
        atoms = _matrix(ex["atoms"], "atoms")
    elif "grid" in ex:
        atoms = analysis.grid_atoms(ex["grid"], d.n)
    else:
        raise parse_failure("config needs 'atoms' or 'grid'")
    if not cfg.betas:
        raise parse_failure("config needs at least one beta")
    subspace_tol = float(ex.get("subspace_tol", analysis.SUBSPACE_TOL))
    try:
        if "witness" in ex:
            witness = _distribution(ex["witness"], d, "witness")
            lam = cfg.covariances[0] if cfg.covariances else None
            g = MomentConstraintSet(d, cfg.betas[0], lam)
            rep = analysis.representation_oracle(atoms, g, witness, tol=subspace_tol)
            label = "LPQ representation confirmed" if lam is not None else "linear representation confirmed"
            text = (
                f"{label if rep.equal else 'representation mismatch'}\n"
                f"atoms: {atoms.shape[0]}\n"
                f"dim span_g: {rep.span_g.dim}\n"
                f"dim unbiased_zero: {rep.unbiased_zero.dim}\n"
                f"max principal angle: {rep.max_principal_angle!r}\n"
            )
            equal = rep.equal
        else:
            family = ModelFamily(d, tuple(cfg.betas), tuple(cfg.covariances))
            rep = analysis.family_representation(family, atoms, tol=subspace_tol)
            text, equal = rep.summary(), rep.equal
    except analysis.InfeasibleWitnessError as exc:
        raise CliFailure(str(exc), EXIT_SEMANTIC) from None
    except ValueError as exc:
        raise CliFailure(str(exc), EXIT_SEMANTIC) from None
    _emit(text, cfg.output_path)
    sys.exit(EXIT_OK if equal else EXIT_FALSE)


@cli.command("witness")
@click.option("--kind", type=click.Choice(["mean0", "mean", "mean-cov", "composite"]),
              default="mean", show_default=True)
@click.option("--beta", default=None, help="Inline JSON k-vector (default: first config beta).")
@click.option("--lam", default=None, help="Covariance for mean-cov (JSON path or inline).")
@click.option("--y", "y_point", default=None, help="Support point for the composite witness.")
@common_options
def witness(kind, beta, lam, y_point, config_path, design, sigma, tol, seed, out, fmt):
    """Emit a discrete witness law as JSON."""
    cfg = build_config(config_path, design, sigma, tol, seed, out, fmt)
    d = cfg.require_design()
    try:
        if beta is not None:
            b = np.asarray(_load_json(beta, "beta"), dtype=float).reshape(d.k)
        elif cfg.betas:
            b = cfg.betas[0].reshape(d.k)
        else:
            b = np.zeros(d.k)
    except (TypeError, ValueError) as exc:
        raise parse_failure(f"bad beta: {exc}") from None
    try:
        if kind in ("mean0", "mean"):
            f = dist.make_witness_mean(d, b)[0 if kind == "mean0" else 1]
        elif kind == "mean-cov":
            target = _matrix(lam, "lam") if lam is not None else (
                cfg.covariances[0] if cfg.covariances else cfg.sigma_or_identity(d.n))
            f = dist.make_witness_mean_cov(d, b, target)
        else:
            if y_point is None:
                raise parse_failure("composite witness needs --y")
            y = np.asarray(_load_json(y_point, "y"), dtype=float)
            betas = tuple(cfg.betas) if cfg.betas else (b,)
            family = ModelFamily(d, betas, tuple(cfg.covariances))
            f = dist.make_composite_witness(family, y)
    except dist.WitnessError as exc:
        raise CliFailure(str(exc), EXIT_PRECONDITION) from None
    except ValueError as exc:
        raise CliFailure(str(exc), EXIT_SEMANTIC) from None
    _emit(json.dumps(f.to_dict(), indent=2) + "\n", cfg.output_path)


@cli.command("table")
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallel cell workers.")
@common_options
def table(jobs, config_path, design, sigma, tol, seed, out, fmt):
    """Exact variance comparison table.

    ``estimators`` maps names to estimator JSON or to "ols" / "gls" (built from
    the design and sigma); ``distributions`` maps names to laws or recipes.
    """
    cfg = build_config(config_path, design, sigma, tol, seed, out, fmt)
    ex = cfg.extra
    if "estimators" not in ex or "distributions" not in ex:
        raise parse_failure("config needs 'estimators' and 'distributions'")
    d = cfg.require_design() if cfg.design is not None else None
    estimators = {}
    for name, spec in ex["estimators"].items():
        if spec in ("ols", "gls"):
            if d is None:
                raise parse_failure(f"estimator {name!r} needs a design")
            estimators[name] = ols(d) if spec == "ols" else gls(d, cfg.sigma_or_identity(d.n))
        else:
            estimators[name] = _estimator(spec, f"estimator {name!r}")
    fs = {name: _distribution(spec, d, f"distribution {name!r}")
          for name, spec in ex["distributions"].items()}
    rows = analysis.variance_comparison_table(estimators, fs, n_jobs=jobs)
    text = analysis.table_to_json(rows) if cfg.format == "json" else analysis.table_to_csv(rows)
    _emit(text, cfg.output_path)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="unbiasedlm", standalone_mode=False)
    except CliFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_PARSE
    except click.exceptions.Abort:
        return EXIT_PARSE
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
