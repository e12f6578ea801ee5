"""Dataset, model, and config persistence.

CSV datasets carry prices at 6 decimal places (sub-tick for a 0.01 tick,
so round-trips never change a pricing decision). Models persist as JSON
with full-precision floats, which round-trip exactly through Python's
repr, so a loaded model predicts identically to the saved one. All writes
go through a temp file and an atomic rename.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .bnt import BntModel
from .features import StandardizationStats
from .linear_models import LassoLogisticModel, NextMidModel
from .market_sim import RfqRecord, SimConfig, StatusCoeffs
from .pipeline import FittedClassifier, FittedEnsemble

SCHEMA_VERSION = 1
DATASET_HEADER = [
    "Time", "Bond", "Side", "Notional", "CounterParty", "MidPrice",
    "QuotedPrice", "Competition", "Status", "NextMidPrice", "Live",
]
_CATEGORICAL_RANGES = {
    "Side": (0, 1),
    "CounterParty": (0, 3),
    "Competition": (1, 4),
    "Status": (0, 1),
    "Live": (0, 1),
}


class DataFormatError(ValueError):
    """Malformed dataset or model file; message names the offending spot."""


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ----------------------------------------------------------------- datasets

def format_dataset(records: list[RfqRecord]) -> str:
    lines = [",".join(DATASET_HEADER)]
    for r in records:
        lines.append(
            f"{r.time},{r.bond},{r.side},{r.notional},{r.counterparty},"
            f"{r.mid_price:.6f},{r.quoted_price:.6f},{r.competition},"
            f"{r.status},{r.next_mid_price:.6f},{r.live}"
        )
    return "\n".join(lines) + "\n"


def write_dataset(path: str | Path, records: list[RfqRecord]) -> None:
    write_atomic(path, format_dataset(records))


def _parse_cell(raw: str, column: str, row: int, kind):
    try:
        return kind(raw)
    except ValueError:
        raise DataFormatError(
            f"non-numeric value {raw!r} in column {column} at data row {row}"
        ) from None


def read_dataset(path: str | Path) -> list[RfqRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty dataset file") from None
        if header != DATASET_HEADER:
            bad = next((h for h, e in zip(header, DATASET_HEADER) if h != e), "<missing>")
            raise DataFormatError(f"unexpected dataset header column {bad!r}")
        records = []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(DATASET_HEADER):
                raise DataFormatError(f"wrong cell count at data row {i}")
            cells = dict(zip(DATASET_HEADER, row))
            ints = {
                col: _parse_cell(cells[col], col, i, int)
                for col in ("Time", "Bond", "Side", "Notional", "CounterParty",
                            "Competition", "Status", "Live")
            }
            for col, (lo, hi) in _CATEGORICAL_RANGES.items():
                if not lo <= ints[col] <= hi:
                    raise DataFormatError(
                        f"value {ints[col]} out of range [{lo},{hi}] in column {col} at data row {i}"
                    )
            records.append(RfqRecord(
                time=ints["Time"], bond=ints["Bond"], side=ints["Side"],
                notional=ints["Notional"], counterparty=ints["CounterParty"],
                mid_price=_parse_cell(cells["MidPrice"], "MidPrice", i, float),
                quoted_price=_parse_cell(cells["QuotedPrice"], "QuotedPrice", i, float),
                competition=ints["Competition"], status=ints["Status"],
                next_mid_price=_parse_cell(cells["NextMidPrice"], "NextMidPrice", i, float),
                live=ints["Live"],
            ))
    return records


# ------------------------------------------------------------------- models

def _stats_to_dict(stats: StandardizationStats | None) -> dict | None:
    if stats is None:
        return None
    return {
        "names": list(stats.names),
        "center": [float(v) for v in stats.center],
        "scale": [float(v) for v in stats.scale],
        "dropped": list(stats.dropped),
    }


def _stats_from_dict(payload: dict | None) -> StandardizationStats | None:
    if payload is None:
        return None
    return StandardizationStats(
        names=list(payload["names"]),
        center=np.array(payload["center"], dtype=float),
        scale=np.array(payload["scale"], dtype=float),
        dropped=list(payload["dropped"]),
    )


def _envelope(kind: str, params: dict, classifier: FittedClassifier | None = None,
              seed: int = 0, fingerprint: str = "") -> dict:
    feature_schema = None
    stats = None
    if classifier is not None:
        feature_schema = {"raw_names": classifier.raw_names, "one_hot": classifier.one_hot}
        stats = _stats_to_dict(classifier.stats)
        seed = classifier.seed
        fingerprint = classifier.fingerprint
    return {
        "schema_version": SCHEMA_VERSION,
        "model_kind": kind,
        "feature_schema": feature_schema,
        "standardization": stats,
        "params": params,
        "seed": seed,
        "training_fingerprint": fingerprint,
    }


def save_model(path: str | Path, model) -> None:
    if isinstance(model, FittedClassifier):
        if model.kind == "bnt":
            payload = _envelope("bnt", model.model.to_dict(), model)
        elif model.kind == "lasso_logistic":
            lm: LassoLogisticModel = model.model
            payload = _envelope("lasso_logistic", {
                "coef": [float(v) for v in lm.coef],
                "intercept": float(lm.intercept),
                "lam": float(lm.lam),
                "n_iter_run": lm.n_iter_run,
                "converged": lm.converged,
                "final_change": float(lm.final_change),
            }, model)
        else:
            raise DataFormatError(f"unknown classifier kind {model.kind!r}")
    elif isinstance(model, NextMidModel):
        payload = _envelope("next_mid", {
            "intercept": model.intercept,
            "coef_mid": model.coef_mid,
            "coef_side": model.coef_side,
            "adj_r2": model.adj_r2,
            "n_train": model.n_train,
            "n_val": model.n_val,
        })
    else:
        raise DataFormatError(f"cannot persist object of type {type(model).__name__}")
    write_atomic(path, json.dumps(payload, indent=2) + "\n")


def save_ensemble(path: str | Path, member_paths: list[str], vote_mode: str = "soft",
                  threshold: float = 0.5) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "model_kind": "ensemble",
        "params": {
            "members": list(member_paths),
            "vote_mode": vote_mode,
            "threshold": threshold,
        },
    }
    write_atomic(path, json.dumps(payload, indent=2) + "\n")


def load_model(path: str | Path, expect_kind: str | None = None):
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid model JSON in {path.name}: {exc}") from None

    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported schema_version {version!r} in {path.name}")
    kind = payload.get("model_kind")
    if expect_kind is not None and kind != expect_kind:
        raise DataFormatError(f"expected a {expect_kind} model, found {kind!r} in {path.name}")

    params = payload.get("params", {})
    if kind == "bnt":
        try:
            tree = BntModel.from_dict(params)
        except (KeyError, RuntimeError, TypeError) as exc:
            raise DataFormatError(f"corrupt bnt model in {path.name}: {exc}") from None
        return _classifier_from_payload(payload, "bnt", tree)
    if kind == "lasso_logistic":
        lm = LassoLogisticModel(
            coef=np.array(params["coef"], dtype=float),
            intercept=float(params["intercept"]),
            lam=float(params["lam"]),
            n_iter_run=int(params["n_iter_run"]),
            converged=bool(params["converged"]),
            final_change=float(params["final_change"]),
        )
        return _classifier_from_payload(payload, "lasso_logistic", lm)
    if kind == "next_mid":
        return NextMidModel(
            intercept=float(params["intercept"]),
            coef_mid=float(params["coef_mid"]),
            coef_side=float(params["coef_side"]),
            adj_r2=float(params["adj_r2"]),
            n_train=int(params["n_train"]),
            n_val=int(params["n_val"]),
        )
    if kind == "ensemble":
        members = []
        for member in params["members"]:
            member_path = Path(member)
            if not member_path.is_absolute():
                member_path = path.parent / member_path
            if not member_path.exists():
                raise DataFormatError(f"ensemble member file not found: {member}")
            members.append(load_model(member_path))
        return FittedEnsemble(
            members=members,
            vote_mode=params.get("vote_mode", "soft"),
            threshold=float(params.get("threshold", 0.5)),
        )
    raise DataFormatError(f"unknown model_kind {kind!r} in {path.name}")


def _classifier_from_payload(payload: dict, kind: str, model) -> FittedClassifier:
    schema = payload.get("feature_schema") or {}
    stats = _stats_from_dict(payload.get("standardization"))
    if stats is None:
        raise DataFormatError(f"{kind} model is missing standardization stats")
    return FittedClassifier(
        kind=kind,
        model=model,
        stats=stats,
        raw_names=list(schema.get("raw_names", [])),
        one_hot=bool(schema.get("one_hot", False)),
        fingerprint=payload.get("training_fingerprint", ""),
        seed=int(payload.get("seed", 0)),
    )


# ------------------------------------------------------------------- config

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False,
                "yes": True, "no": False}

# Pipeline keys that are not SimConfig/BntHyperparams fields.
_PIPELINE_KEYS = {
    "test_fraction": float,
    "one_hot": bool,
    "lam": float,
    "n_bins": int,
    "stiffness": float,
    "vote_mode": str,
}


def parse_config(path: str | Path) -> dict[str, str]:
    """Flat `key = value` file; '#' starts a comment; unknown keys rejected."""
    known = {f.name for f in dataclass_fields(SimConfig)} - {"status_coeffs"}
    known |= {f.name for f in dataclass_fields(StatusCoeffs)}
    from .bnt import BntHyperparams
    known |= {f.name for f in dataclass_fields(BntHyperparams)}
    known |= set(_PIPELINE_KEYS)

    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataFormatError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise DataFormatError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def coerce(value: str, kind):
    if kind is bool:
        lowered = value.lower()
        if lowered not in _BOOL_VALUES:
            raise DataFormatError(f"expected a boolean, got {value!r}")
        return _BOOL_VALUES[lowered]
    return kind(value)


def apply_config(instance, config: dict[str, str]):
    """Overlay string config values onto a dataclass, coercing per field type."""
    kinds = {f.name: type(getattr(instance, f.name)) for f in dataclass_fields(instance)}
    for key, value in config.items():
        if key in kinds and kinds[key] in (int, float, str, bool):
            setattr(instance, key, coerce(value, kinds[key]))
    return instance


def pipeline_options(config: dict[str, str]) -> dict:
    return {k: coerce(v, _PIPELINE_KEYS[k]) for k, v in config.items() if k in _PIPELINE_KEYS}
