"""Experiment runner: simulate | stability | perturb | verify.

Every subcommand is driven by a JSON config (except ``verify``), writes its
artifacts into the configured output directory, and records a manifest with the
config echo, the artifact list, per-trial statuses, and the wall time.  Trajectory
CSVs carry full double precision so reruns with the same seeds are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ExperimentConfig,
    ManifestWriter,
    PerturbRequest,
    StabilityRequest,
    load_json,
    parse_experiment_config,
    parse_perturb_request,
    parse_stability_request,
)
from .dynamics import random_unit_vector, run_chain, run_stage
from .exceptions import ConfigError, CoupledPcaError
from .stability import (
    SpectrumReport,
    arbitrary_spectrum,
    bordered_hessian_matrix,
    bordered_hessian_spectrum,
    classify_eigenvalues,
    cross_jacobian_matrix,
    eigenvalues_general,
    exact_hessian_cross_spectrum,
    match_eigenvalue_sets,
    numeric_jacobian,
    packed_stage_rhs,
    perturbation_probe,
    principal_spectrum,
)
from .linmodel import model_from_spectrum, model_to_dict
from .rules import stage_rhs
from .verify import report_dict, run_checks

CSV_HEADER = "step,stage,vec_err,val_err,w_norm,l"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_trajectories(path: Path, records) -> None:
    lines = [CSV_HEADER]
    for record in records:
        for step, stage, vec_err, val_err, w_norm, l in record.rows():
            lines.append(
                f"{step},{stage},{_fmt(vec_err)},{_fmt(val_err)},{_fmt(w_norm)},{_fmt(l)}"
            )
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _run_trial(config: ExperimentConfig, model, trial: int):
    seed = config.base_seed + trial
    rng = np.random.default_rng(seed)
    if config.rule == "principal" or config.pin_previous:
        p = 1 if config.rule == "principal" else config.p
        w0 = random_unit_vector(model.n, rng)
        l0 = config.init.draw_l(rng)
        known = [] if p == 1 else [
            (model.eigenvectors[:, i], model.eigenvalues[i]) for i in range(p - 1)
        ]
        rule = "principal" if config.rule == "principal" else config.rule
        record = run_stage(model, rule, p, config.integrator,
                           known=known, w0=w0, l0=l0)
        return [record], [record.status]
    if config.init.l_mode == "fixed":
        l0 = config.init.l_fixed
    else:
        l0 = config.init.l_range
    result = run_chain(model, config.rule, config.m, config.scheme,
                       config.integrator, seed=seed, l0=l0)
    return result.records, [rec.status for rec in result.records]


def cmd_simulate(config_path: str, out_override: str | None, seed_override: int | None) -> int:
    config = parse_experiment_config(load_json(config_path))
    if out_override is not None:
        config = dataclasses.replace(config, output_dir=out_override)
    if seed_override is not None:
        config = dataclasses.replace(config, base_seed=seed_override)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out, config.to_dict())
    try:
        model = config.model.build()
        _write_json(out / "model.json", model_to_dict(model))
        manifest.add_artifact("model.json")
        per_trial = []
        for trial in range(config.trials):
            records, statuses = _run_trial(config, model, trial)
            name = f"trial_{trial:03d}.csv"
            _write_trajectories(out / name, records)
            manifest.add_artifact(name)
            manifest.statuses.append(statuses)
            per_trial.append({
                "trial": trial,
                "seed": config.base_seed + trial,
                "statuses": statuses,
                "final_vec_err": [rec.final_vec_err for rec in records],
                "final_val_err": [rec.final_val_err for rec in records],
                "final_l": [rec.final.l for rec in records],
                "steps_taken": [rec.steps_taken for rec in records],
            })
        converged_trials = sum(
            1 for entry in per_trial if all(s == "converged" for s in entry["statuses"])
        )
        summary = {
            "trials": config.trials,
            "fully_converged_trials": converged_trials,
            "status_counts": _status_counts(per_trial),
            "per_trial": per_trial,
        }
        _write_json(out / "summary.json", summary)
        manifest.add_artifact("summary.json")
    except Exception as exc:
        manifest.error = f"{type(exc).__name__}: {exc}"
        manifest.write()
        raise
    manifest.write()
    return 0


def _status_counts(per_trial) -> dict:
    counts: dict[str, int] = {}
    for entry in per_trial:
        for status in entry["statuses"]:
            counts[status] = counts.get(status, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------


def _numeric_flow_spectrum(request: StabilityRequest):
    """FD-Jacobian spectrum of the matching flow at the requested fixed point."""
    model = model_from_spectrum(list(request.spectrum), request.seed)
    if request.selector == "principal":
        p, q = 1, request.q
        rhs = stage_rhs(model.covariance, "principal")
    else:
        p, q = request.p, request.q
        known = [(model.eigenvectors[:, i], model.eigenvalues[i]) for i in range(p - 1)]
        rhs = stage_rhs(model.covariance, "arbitrary", known)
    x = np.append(model.eigenvectors[:, q - 1], model.eigenvalues[q - 1])
    J = numeric_jacobian(packed_stage_rhs(rhs), x, 1e-6)
    return eigenvalues_general(J)


def _stability_payload(request: StabilityRequest) -> dict:
    spectrum = list(request.spectrum)
    if request.selector == "principal":
        analytic = principal_spectrum(spectrum, request.q)
        numeric = _numeric_flow_spectrum(request)
    elif request.selector == "arbitrary":
        analytic = arbitrary_spectrum(spectrum, request.p, request.q)
        numeric = None
        if request.q >= request.p:
            numeric = _numeric_flow_spectrum(request)
    elif request.selector == "exact-cross":
        analytic = exact_hessian_cross_spectrum(spectrum, request.i, request.j)
        numeric = eigenvalues_general(cross_jacobian_matrix(spectrum, request.i, request.j))
    else:
        analytic = bordered_hessian_spectrum(spectrum, request.p)
        numeric = eigenvalues_general(bordered_hessian_matrix(spectrum, request.p))

    payload = {"request": request.to_dict(), "analytic": analytic.to_dict()}
    if numeric is None:
        payload["numeric"] = None
        payload["pairing"] = None
    else:
        numeric_report = SpectrumReport(
            eigenvalues=tuple(complex(z) for z in numeric),
            classification=classify_eigenvalues(numeric),
            source="numeric",
        )
        payload["numeric"] = numeric_report.to_dict()
        residual = match_eigenvalue_sets(numeric, analytic.eigenvalues) \
            if analytic.eigenvalues else None
        payload["pairing"] = {"max_residual": residual}
    return payload


def cmd_stability(config_path: str, out_override: str | None) -> int:
    request = parse_stability_request(load_json(config_path))
    if out_override is not None:
        request = dataclasses.replace(request, output_dir=out_override)
    out = Path(request.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out, request.to_dict())
    try:
        payload = _stability_payload(request)
        _write_json(out / "spectrum.json", payload)
        manifest.add_artifact("spectrum.json")
        manifest.statuses.append(payload["analytic"]["classification"])
    except Exception as exc:
        manifest.error = f"{type(exc).__name__}: {exc}"
        manifest.write()
        raise
    manifest.write()
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# perturb
# ---------------------------------------------------------------------------


def cmd_perturb(config_path: str, out_override: str | None, seed_override: int | None) -> int:
    request = parse_perturb_request(load_json(config_path))
    if out_override is not None:
        request = dataclasses.replace(request, output_dir=out_override)
    if seed_override is not None:
        request = dataclasses.replace(request, base_seed=seed_override)
    out = Path(request.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out, request.to_dict())
    try:
        model = request.model.build()
        report = perturbation_probe(model, request.rule, request.p, request.q,
                                    request.trials, request.eps_scale,
                                    seed=request.base_seed)
        payload = {"request": request.to_dict(), "report": report.to_dict()}
        _write_json(out / "perturbation.json", payload)
        manifest.add_artifact("perturbation.json")
        manifest.statuses.append(
            "stable" if report.positive_count == 0 else "unstable"
        )
    except Exception as exc:
        manifest.error = f"{type(exc).__name__}: {exc}"
        manifest.write()
        raise
    manifest.write()
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(out_dir: str | None, inject_fault: bool) -> int:
    results = run_checks(inject_fault=inject_fault)
    payload = report_dict(results)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(text + "\n")
    print(text)
    return 0 if payload["passed"] else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coupledpca",
        description="Coupled eigenpair learning-rule experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate learning rules and record trajectories")
    sim.add_argument("--config", required=True, help="JSON experiment config")
    sim.add_argument("--out", default=None, help="override the configured output directory")
    sim.add_argument("--seed", type=int, default=None, help="override base_seed")

    stab = sub.add_parser("stability", help="analytic and numeric fixed-point spectra")
    stab.add_argument("--config", required=True, help="JSON spectrum/selector request")
    stab.add_argument("--out", default=None, help="override the configured output directory")

    pert = sub.add_parser("perturb", help="random perturbation probe around a fixed point")
    pert.add_argument("--config", required=True, help="JSON probe request")
    pert.add_argument("--out", default=None, help="override the configured output directory")
    pert.add_argument("--seed", type=int, default=None, help="override base_seed")

    ver = sub.add_parser("verify", help="run the built-in invariant suite")
    ver.add_argument("--out", default=None, help="directory for verify.json")
    ver.add_argument("--inject-fault", action="store_true",
                     help="sabotage one flow to self-test the harness")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.seed)
        if args.command == "stability":
            return cmd_stability(args.config, args.out)
        if args.command == "perturb":
            return cmd_perturb(args.config, args.out, args.seed)
        return cmd_verify(args.out, args.inject_fault)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CoupledPcaError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
