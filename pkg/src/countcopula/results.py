"""Machine-readable result documents.

A result document is a single self-describing JSON file with an explicit
``schema`` section; readers reject unknown major versions.  Everything needed
to reconstruct the fitted model (bases, design, packed parameters) is stored,
so downstream commands can run from the document alone.  Writes go through a
temporary file and an atomic rename.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .bases import BernsteinBasis, HarmonicDesign
from .errors import InputError
from .estimation import FitResult, ModelSpec
from .model import COVARIATE, JointModel, LambdaParams, LambdaSpec, MarginalParams

SCHEMA_NAME = "countcopula-result"
SCHEMA_VERSION = "1.0.0"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_document(path, payload: dict):
    """Atomically write a result document with the schema header."""
    doc = {"schema": {"name": SCHEMA_NAME, "version": SCHEMA_VERSION}}
    doc.update(_jsonable(payload))
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_document(path):
    """Read a result document, enforcing the schema major version."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    schema = doc.get("schema", {})
    if schema.get("name") != SCHEMA_NAME:
        raise InputError(f"not a {SCHEMA_NAME} document: {path}")
    version = str(schema.get("version", ""))
    major = version.split(".")[0]
    ours = SCHEMA_VERSION.split(".")[0]
    if major != ours:
        raise InputError(
            f"unsupported document major version {version!r} (expected {ours}.x)"
        )
    return doc


def model_to_dict(model: JointModel):
    return {
        "species_names": list(model.species_names),
        "link": model.link,
        "design": {"n_freq": model.design.n_freq, "years": list(model.design.years)},
        "bases": [
            {"num_coef": b.num_coef, "lo": b.lo, "hi": b.hi} for b in model.bases
        ],
        "lambda_mode": model.lambda_spec.mode,
        "pair_design_width": model.lambda_spec.pair_design_width,
        "theta_packed": model.pack(),
    }


def model_from_dict(d) -> JointModel:
    design = HarmonicDesign(n_freq=int(d["design"]["n_freq"]), years=tuple(d["design"]["years"]))
    bases = tuple(
        BernsteinBasis(num_coef=int(b["num_coef"]), lo=float(b["lo"]), hi=float(b["hi"]))
        for b in d["bases"]
    )
    names = tuple(d["species_names"])
    J = len(names)
    lspec = LambdaSpec(d["lambda_mode"], J, pair_design_width=int(d["pair_design_width"]))
    if lspec.mode == COVARIATE:
        lparams = LambdaParams(
            tau=np.zeros(lspec.n_pairs),
            zeta=np.zeros((lspec.n_pairs, lspec.pair_design_width)),
        )
    else:
        lparams = LambdaParams(tau=np.zeros(lspec.n_pairs))
    marginals = tuple(
        MarginalParams(theta=np.zeros(b.num_coef) + np.arange(b.num_coef) * 1e-6,
                       beta=np.zeros(design.width))
        for b in bases
    )
    skeleton = JointModel(
        species_names=names,
        bases=bases,
        design=design,
        marginals=marginals,
        lambda_spec=lspec,
        lambda_params=lparams,
        link=d["link"],
    )
    return skeleton.unpack(np.asarray(d["theta_packed"], dtype=float))


def fit_to_dict(fit: FitResult):
    return {
        "model": model_to_dict(fit.model),
        "theta_hat": fit.theta_hat,
        "loglik": fit.loglik,
        "vcov": fit.vcov if fit.vcov is not None else None,
        "hessian_pd": fit.hessian_pd,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "gradient_norm_at_opt": fit.gradient_norm_at_opt,
        "likelihood_kind": fit.likelihood_kind,
        "n_obs": fit.n_obs,
        "spec": {
            "num_coef": list(fit.spec.coef_counts(fit.model.n_species)),
            "n_freq": fit.spec.n_freq,
            "lambda_mode": fit.spec.lambda_mode,
            "link": fit.spec.link,
        },
    }


def fit_from_dict(d) -> FitResult:
    model = model_from_dict(d["model"])
    spec = ModelSpec(
        num_coef=tuple(d["spec"]["num_coef"]),
        n_freq=int(d["spec"]["n_freq"]),
        lambda_mode=d["spec"]["lambda_mode"],
        link=d["spec"]["link"],
    )
    vcov = d.get("vcov")
    return FitResult(
        model=model,
        theta_hat=np.asarray(d["theta_hat"], dtype=float),
        loglik=float(d["loglik"]),
        vcov=np.asarray(vcov, dtype=float) if vcov is not None else None,
        hessian_pd=bool(d["hessian_pd"]),
        iterations=int(d["iterations"]),
        converged=bool(d["converged"]),
        gradient_norm_at_opt=float(d["gradient_norm_at_opt"]),
        likelihood_kind=d["likelihood_kind"],
        spec=spec,
        n_obs=int(d["n_obs"]),
    )
