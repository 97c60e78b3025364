"""Versioned JSON persistence for environments, learned models, policies and hypothesis classes.

Floats are written with ``repr`` precision, so a save/load round trip is exact.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DomainError
from .features import feature_map_from_dict
from .mdp import LowRankMDP, ModelEstimate
from .policies import Policy, policy_from_dict

SCHEMA_VERSION = 1


def _dump(obj: dict, path=None) -> str:
    text = json.dumps(obj, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def _load(src) -> dict:
    if isinstance(src, dict):
        return src
    if isinstance(src, str) and src.lstrip().startswith("{"):
        return json.loads(src)
    with open(src) as fh:
        return json.load(fh)


def _check(data: dict, schema: str) -> None:
    if data.get("schema") != schema:
        raise DomainError(f"expected a {schema!r} document, got {data.get('schema')!r}")
    if data.get("version") != SCHEMA_VERSION:
        raise DomainError(f"unsupported schema version {data.get('version')!r}")


def mdp_to_dict(mdp: LowRankMDP) -> dict:
    body = mdp.to_dict()
    body.update(schema="lowrank_mdp", version=SCHEMA_VERSION,
                kind="ModelEstimate" if isinstance(mdp, ModelEstimate) else "LowRankMDP")
    return body


def mdp_from_dict(data: dict) -> LowRankMDP:
    _check(data, "lowrank_mdp")
    phis = [feature_map_from_dict(f) for f in data["phi"]]
    psis = [np.asarray(p, dtype=float) for p in data["psi"]]
    # restore sharing so time-homogeneous models stay recognisable
    phis = [next(g for g in phis if g == f) for f in phis]
    psis = [next(q for q in psis if np.array_equal(q, p)) for p in psis]
    if data.get("kind") == "ModelEstimate":
        return ModelEstimate(phis, psis, data["rho"], data["H"], data.get("phi_idx"), data.get("psi_idx"),
                             data.get("iteration", 0), data.get("dataset_sizes"))
    return LowRankMDP(phis, psis, data["rho"], data["H"])


def save_mdp(mdp: LowRankMDP, path=None) -> str:
    return _dump(mdp_to_dict(mdp), path)


def load_mdp(src) -> LowRankMDP:
    return mdp_from_dict(_load(src))


def save_policy(policy: Policy, path=None) -> str:
    return _dump({"schema": "policy", "version": SCHEMA_VERSION, "policy": policy.to_dict()}, path)


def load_policy(src) -> Policy:
    data = _load(src)
    _check(data, "policy")
    return policy_from_dict(data["policy"])


def save_hypothesis_class(hc, path=None) -> str:
    body = {
        "schema": "hypothesis_class", "version": SCHEMA_VERSION,
        "Phi": [f.to_dict() for f in hc.Phi], "Psi": [p.tolist() for p in hc.Psi],
        "true_phi_idx": list(map(int, hc.true_phi_idx)), "true_psi_idx": list(map(int, hc.true_psi_idx)),
        "probes_s": hc.probes_s.tolist(), "probes_a": hc.probes_a.tolist(),
        "separations": [[k[0], int(k[1]), v] for k, v in sorted(hc.separations.items())],
    }
    return _dump(body, path)


def load_hypothesis_class(src):
    from .factory import HypothesisClass

    data = _load(src)
    _check(data, "hypothesis_class")
    return HypothesisClass(
        [feature_map_from_dict(f) for f in data["Phi"]], [np.asarray(p, dtype=float) for p in data["Psi"]],
        data["true_phi_idx"], data["true_psi_idx"], np.asarray(data["probes_s"], dtype=int),
        np.asarray(data["probes_a"], dtype=float), {(k, i): v for k, i, v in data["separations"]},
    )
