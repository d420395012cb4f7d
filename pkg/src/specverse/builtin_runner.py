"""Built-in analysis runners served over the line-JSON protocol.

Registered names: ``glm`` (IRLS fit) and ``bayes_mh`` (random-walk Metropolis).
Both consume the merged option payloads of a request; documented keys:

    data        path to a headered numeric CSV (relative paths resolve
                against the process working directory)
    outcome     outcome column name
    predictor   focal covariate column name (its coefficient is the estimate)
    covariates  optional extra covariate column names (list)
    family      gaussian | poisson | negative_binomial (default gaussian)
    link        identity | log (defaults to the family's canonical link)
    dispersion  fixed dispersion (negative_binomial; gaussian MH variance)
    prior_mean, prior_sd, draws, burnin, proposal_sd, seed   (bayes_mh only;
                seed defaults to the request's derived trial seed)

Payloads merge shallowly in request key order; later decisions override
earlier keys. Responses carry null-model information criteria under the
well-known diagnostic keys so IC filter rules work from a document alone.
"""

from __future__ import annotations

import csv
import sys

import numpy as np

from .errors import SpecverseError
from .protocol import (
    AnalysisResponse,
    ProtocolError,
    decode_request,
    encode_response,
)
from .stats.bayes import PriorSpec, fit_bayes_mh
from .stats.glm import Dataset, GlmSpec, fit_glm_irls, information_criteria, wald_ci

BUILTIN_RUNNERS = ("glm", "bayes_mh")


def load_csv_columns(path: str) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(cell) for cell in row] for row in reader if row]
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(header):
        raise SpecverseError(f"csv {path!r} is ragged or empty")
    return {name: matrix[:, i] for i, name in enumerate(header)}


def merge_payloads(payloads: dict[str, dict]) -> dict:
    merged: dict = {}
    for payload in payloads.values():
        if isinstance(payload, dict):
            merged.update(payload)
    return merged


def _build_dataset(config: dict) -> tuple[Dataset, str]:
    for key in ("data", "outcome", "predictor"):
        if key not in config:
            raise SpecverseError(f"payload is missing required key {key!r}")
    columns = load_csv_columns(config["data"])
    for name in (config["outcome"], config["predictor"], *config.get("covariates", [])):
        if name not in columns:
            raise SpecverseError(f"column {name!r} not in {sorted(columns)}")
    predictor = config["predictor"]
    covariates = {predictor: columns[predictor]}
    for name in config.get("covariates", []):
        covariates[name] = columns[name]
    return Dataset(outcome=columns[config["outcome"]], covariates=covariates), predictor


def _glm_spec(config: dict) -> GlmSpec:
    return GlmSpec(
        family=config.get("family", "gaussian"),
        link=config.get("link"),
        dispersion=config.get("dispersion"),
    )


def run_glm(request) -> AnalysisResponse:
    config = merge_payloads(request.payloads)
    data, predictor = _build_dataset(config)
    spec = _glm_spec(config)
    fit = fit_glm_irls(data, spec)
    null_fit = fit_glm_irls(Dataset(outcome=data.outcome), spec)
    estimate, _, lower, upper = fit.coefficient(predictor)
    warnings = []
    if not fit.converged:
        warnings.append(f"IRLS did not converge in {fit.iterations} iterations")
    return AnalysisResponse(
        universe_id=request.universe_id,
        trial_index=request.trial_index,
        status="ok",
        estimate=estimate,
        interval=(lower, upper, fit.interval_level),
        loglik=fit.loglik,
        n_params=fit.n_params,
        n_obs=fit.n_obs,
        diagnostics={
            "final_aic": fit.aic,
            "final_bic": fit.bic,
            "null_aic": null_fit.aic,
            "null_bic": null_fit.bic,
        },
        warnings=tuple(warnings),
    )


def run_bayes_mh(request) -> AnalysisResponse:
    config = merge_payloads(request.payloads)
    data, predictor = _build_dataset(config)
    spec = _glm_spec(config)
    summary = fit_bayes_mh(
        data,
        spec,
        PriorSpec(mean=config.get("prior_mean", 0.0), sd=config.get("prior_sd", 1.0)),
        draws=int(config.get("draws", 4000)),
        burnin=int(config.get("burnin", 1000)),
        proposal_sd=config.get("proposal_sd", 0.1),
        seed=int(config.get("seed", request.seed)),
    )
    focal = summary.names.index(predictor)
    median, lower, upper = summary.coefficient(predictor)
    # Information criteria from an IRLS fit of the same model, so IC filter
    # rules have something to chew on for Bayesian universes too.
    diagnostics = {
        "geweke_p": summary.geweke_p,
        "acceptance_rate": summary.acceptance_rate,
    }
    try:
        fit = fit_glm_irls(data, spec)
        null_fit = fit_glm_irls(Dataset(outcome=data.outcome), spec)
        diagnostics.update(
            final_aic=fit.aic, final_bic=fit.bic, null_aic=null_fit.aic, null_bic=null_fit.bic
        )
    except SpecverseError:
        pass
    return AnalysisResponse(
        universe_id=request.universe_id,
        trial_index=request.trial_index,
        status="ok",
        estimate=median,
        interval=(lower, upper, summary.cri_level),
        samples=[float(s) for s in summary.samples[:, focal]],
        n_obs=int(data.outcome.shape[0]),
        diagnostics=diagnostics,
    )


_HANDLERS = {"glm": run_glm, "bayes_mh": run_bayes_mh}


def handle_line(name: str, line: bytes) -> bytes:
    try:
        request = decode_request(line)
    except ProtocolError as exc:
        return encode_response(
            AnalysisResponse(
                universe_id=-1,
                trial_index=-1,
                status="error",
                error_message=f"protocol: {exc}",
            )
        )
    try:
        response = _HANDLERS[name](request)
    except Exception as exc:  # any analysis failure is data, not a crash
        response = AnalysisResponse(
            universe_id=request.universe_id,
            trial_index=request.trial_index,
            status="error",
            error_message=f"{type(exc).__name__}: {exc}",
        )
    return encode_response(response)


def serve(name: str, stdin=None, stdout=None) -> None:
    """Blocking request loop: one response line per request line, until EOF."""
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(handle_line(name, line))
        stdout.flush()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1 or argv[0] not in _HANDLERS:
        print(f"usage: python -m specverse.builtin_runner {{{'|'.join(BUILTIN_RUNNERS)}}}",
              file=sys.stderr)
        return 2
    serve(argv[0])
    return 0


if __name__ == "__main__":
    sys.exit(main())
